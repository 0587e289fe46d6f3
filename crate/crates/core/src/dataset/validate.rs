use serde::{Deserialize, Serialize};

use super::{Dataset, Emotion};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub clip_id: Option<String>,
    pub channel: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, clip: Option<&str>, channel: Option<&str>, message: impl Into<String>) {
        self.violations.push(Violation {
            clip_id: clip.map(str::to_string),
            channel: channel.map(str::to_string),
            message: message.into(),
        });
    }
}

/// Lists every invariant violation in `ds`. An empty report means valid.
pub fn validate_dataset(ds: &Dataset) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut feature_dim: Option<usize> = None;
    let mut channel_dims = std::collections::BTreeMap::new();

    for clip in &ds.clips {
        let id = Some(clip.clip_id.as_str());
        if clip.sequence_id.is_empty() {
            report.push(id, None, "empty sequence id");
        } else if !ds.sequences.contains(&clip.sequence_id) {
            report.push(id, None, format!("sequence `{}` not in dataset", clip.sequence_id));
        }
        if clip.emotion_annotations.is_empty() {
            report.push(id, None, "no annotator labels");
        }
        if clip.emotion.len() != Emotion::COUNT || clip.emotion.count_ones() != 1 {
            report.push(
                id,
                None,
                format!(
                    "ground-truth emotion {} is not one-hot over {} emotions",
                    clip.emotion,
                    Emotion::COUNT
                ),
            );
        }
        if clip.channels.is_empty() && clip.feature.is_none() {
            report.push(id, None, "neither descriptors nor an encoded feature");
        }

        for ch in &clip.channels {
            let name = Some(ch.kind.name());
            if ch.dim == 0 {
                report.push(id, name, "zero descriptor dimension");
            }
            if ch.descriptors.iter().any(|d| d.len() != ch.dim) {
                report.push(id, name, format!("descriptor length differs from dim {}", ch.dim));
            }
            if ch.descriptors.iter().flatten().any(|v| !v.is_finite()) {
                report.push(id, name, "non-finite descriptor entry");
            }
            let expected = *channel_dims.entry(ch.kind).or_insert(ch.dim);
            if expected != ch.dim {
                report.push(
                    id,
                    name,
                    format!("dim {} differs from {} in other clips", ch.dim, expected),
                );
            }
        }

        if let Some(f) = &clip.feature {
            if f.iter().any(|v| !v.is_finite()) {
                report.push(id, None, "non-finite feature entry");
            }
            let expected = *feature_dim.get_or_insert(f.len());
            if expected != f.len() {
                report.push(id, None, format!("feature dim {} differs from {}", f.len(), expected));
            }
        }
    }

    for seq in &ds.sequences {
        if !ds.clips.iter().any(|c| &c.sequence_id == seq) {
            report.push(None, None, format!("sequence `{seq}` has no clips"));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synthesize_dataset, EmotionVector, SynthConfig};

    fn small() -> Dataset {
        let cfg = SynthConfig {
            n_sequences: 3,
            clips_per_sequence: 5,
            descriptors_per_clip: 4,
            ..SynthConfig::emotion_mediated(2)
        };
        synthesize_dataset(&cfg).unwrap()
    }

    #[test]
    fn synthetic_is_valid() {
        assert!(validate_dataset(&small()).is_valid());
    }

    #[test]
    fn two_hot_emotion_flagged_once() {
        let mut ds = small();
        ds.clips[3].emotion = EmotionVector::from_bits(&[1, 1, 0, 0, 0, 0]).unwrap();
        let report = validate_dataset(&ds);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(
            report.violations[0].clip_id.as_deref(),
            Some(ds.clips[3].clip_id.as_str())
        );
    }

    #[test]
    fn nan_descriptor_names_clip_and_channel() {
        let mut ds = small();
        ds.clips[1].channels[0].descriptors[2][0] = f64::NAN;
        ds.clips[1].channels[0].descriptors[3][1] = f64::INFINITY;
        let report = validate_dataset(&ds);
        assert_eq!(report.violations.len(), 1);
        let v = &report.violations[0];
        assert_eq!(v.clip_id.as_deref(), Some(ds.clips[1].clip_id.as_str()));
        assert_eq!(v.channel.as_deref(), Some("generic"));
    }

    #[test]
    fn validation_does_not_mutate() {
        let mut ds = small();
        ds.clips[0].sequence_id.clear();
        let before = ds.clone();
        let report = validate_dataset(&ds);
        assert!(!report.is_valid());
        assert_eq!(ds, before);
    }
}
