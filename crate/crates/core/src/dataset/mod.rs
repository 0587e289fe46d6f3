//! Clip records, datasets, manifest I/O, validation and synthetic data.

mod labels;
mod manifest;
mod synth;
mod validate;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use labels::{majority_vote, Behavior, ChannelKind, Emotion, EmotionVector, Label};
pub use manifest::{load_manifest, save_manifest, DescriptorFile, MANIFEST_HEADER};
pub use synth::{synthesize_dataset, SynthConfig};
pub use validate::{validate_dataset, ValidationReport, Violation};

/// Local descriptors of one channel of a clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptorChannel {
    pub kind: ChannelKind,
    pub dim: usize,
    pub descriptors: Vec<Vec<f64>>,
}

impl DescriptorChannel {
    pub fn new(kind: ChannelKind, dim: usize, descriptors: Vec<Vec<f64>>) -> Self {
        DescriptorChannel { kind, dim, descriptors }
    }
}

/// One video clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub clip_id: String,
    pub sequence_id: String,
    pub behavior: Behavior,
    /// Raw annotator labels, one per annotator.
    pub emotion_annotations: Vec<Emotion>,
    /// Aggregated ground-truth emotion.
    pub emotion: EmotionVector,
    pub channels: Vec<DescriptorChannel>,
    /// Encoded clip-level feature, when available.
    pub feature: Option<Vec<f64>>,
}

impl ClipRecord {
    pub fn channel(&self, kind: ChannelKind) -> Option<&DescriptorChannel> {
        self.channels.iter().find(|c| c.kind == kind)
    }

    pub fn descriptor_count(&self) -> usize {
        self.channels.iter().map(|c| c.descriptors.len()).sum()
    }
}

/// An immutable collection of clips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub clips: Vec<ClipRecord>,
    pub sequences: BTreeSet<String>,
}

impl Dataset {
    pub const NUM_EMOTIONS: usize = Emotion::COUNT;
    pub const NUM_BEHAVIORS: usize = Behavior::COUNT;

    pub fn new(clips: Vec<ClipRecord>) -> Self {
        let sequences = clips.iter().map(|c| c.sequence_id.clone()).collect();
        Dataset { clips, sequences }
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    /// Clips whose sequence satisfies `keep`, in original order.
    pub fn filter_sequences(&self, mut keep: impl FnMut(&str) -> bool) -> Dataset {
        Dataset::new(self.clips.iter().filter(|c| keep(&c.sequence_id)).cloned().collect())
    }

    /// Channels present in every clip, in fixed channel order.
    pub fn common_channels(&self) -> Vec<ChannelKind> {
        ChannelKind::ALL
            .iter()
            .copied()
            .filter(|&k| !self.clips.is_empty() && self.clips.iter().all(|c| c.channel(k).is_some()))
            .collect()
    }

    pub fn features(&self) -> crate::Result<Vec<&[f64]>> {
        self.clips
            .iter()
            .map(|c| {
                c.feature
                    .as_deref()
                    .ok_or_else(|| crate::Error::InvalidInput(format!("clip `{}` is not encoded", c.clip_id)))
            })
            .collect()
    }

    pub fn behaviors(&self) -> Vec<Behavior> {
        self.clips.iter().map(|c| c.behavior).collect()
    }

    pub fn emotions(&self) -> Vec<EmotionVector> {
        self.clips.iter().map(|c| c.emotion).collect()
    }
}
