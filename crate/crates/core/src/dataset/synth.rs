//! Synthetic clips drawn from a behavior → emotion → descriptor chain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Behavior, ChannelKind, ClipRecord, Dataset, DescriptorChannel, Emotion, EmotionVector};
use crate::error::{Error, Result};

/// Generator parameters. Field names double as the JSON config schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n_sequences: usize,
    pub clips_per_sequence: usize,
    /// `B × K` row-stochastic table of `p(emotion | behavior)`.
    pub behavior_to_emotion: Vec<Vec<f64>>,
    /// `K` descriptor-space means, one per emotion.
    pub emotion_to_mean: Vec<Vec<f64>>,
    pub noise_scale: f64,
    pub descriptor_dim: usize,
    pub descriptors_per_clip: usize,
    pub seed: u64,
}

const MEANS_STREAM: u64 = u64::MAX;

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_sequences == 0 || self.clips_per_sequence == 0 {
            return bad("n_sequences and clips_per_sequence must be positive".into());
        }
        if self.descriptor_dim == 0 {
            return bad("descriptor_dim must be positive".into());
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return bad(format!("noise_scale must be positive, got {}", self.noise_scale));
        }
        if self.behavior_to_emotion.len() != Behavior::COUNT {
            return bad(format!(
                "behavior_to_emotion has {} rows, expected {}",
                self.behavior_to_emotion.len(),
                Behavior::COUNT
            ));
        }
        for (b, row) in self.behavior_to_emotion.iter().enumerate() {
            if row.len() != Emotion::COUNT {
                return bad(format!("behavior_to_emotion row {b} has {} entries", row.len()));
            }
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return bad(format!(
                    "behavior_to_emotion row {b} has a negative or non-finite entry"
                ));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return bad(format!("behavior_to_emotion row {b} sums to {sum}"));
            }
        }
        if self.emotion_to_mean.len() != Emotion::COUNT {
            return bad(format!(
                "emotion_to_mean has {} entries, expected {}",
                self.emotion_to_mean.len(),
                Emotion::COUNT
            ));
        }
        for (k, mean) in self.emotion_to_mean.iter().enumerate() {
            if mean.len() != self.descriptor_dim {
                return bad(format!(
                    "emotion_to_mean[{k}] has dimension {}, expected {}",
                    mean.len(),
                    self.descriptor_dim
                ));
            }
            if mean.iter().any(|v| !v.is_finite()) {
                return bad(format!("emotion_to_mean[{k}] is not finite"));
            }
        }
        Ok(())
    }

    /// Emotion-mediated data in the suite's standard shape: 31 sequences of
    /// 50 clips, 32-dim descriptors. Each behavior has one dominant emotion;
    /// the emotion means are drawn from `seed`.
    pub fn emotion_mediated(seed: u64) -> Self {
        SynthConfig {
            n_sequences: 31,
            clips_per_sequence: 50,
            behavior_to_emotion: mediated_table(),
            emotion_to_mean: random_means(seed, 32, 1.0),
            noise_scale: 6.0,
            descriptor_dim: 32,
            descriptors_per_clip: 20,
            seed,
        }
    }

    /// Same shape as [`SynthConfig::emotion_mediated`] but every behavior
    /// draws its emotion uniformly, so emotion carries no behavior
    /// information.
    pub fn uniform_control(seed: u64) -> Self {
        SynthConfig {
            behavior_to_emotion: vec![vec![1.0 / Emotion::COUNT as f64; Emotion::COUNT]; Behavior::COUNT],
            ..Self::emotion_mediated(seed)
        }
    }

    /// Each behavior maps to a distinct emotion with probability one.
    pub fn bijective(seed: u64) -> Self {
        SynthConfig {
            behavior_to_emotion: bijective_table(),
            ..Self::emotion_mediated(seed)
        }
    }
}

/// Behavior rows over (angry, happy, excited, scared, sad, neutral).
fn mediated_table() -> Vec<Vec<f64>> {
    vec![
        vec![0.05, 0.00, 0.05, 0.80, 0.10, 0.00], // panic
        vec![0.80, 0.00, 0.10, 0.05, 0.05, 0.00], // fight
        vec![0.05, 0.80, 0.10, 0.00, 0.00, 0.05], // congestion
        vec![0.05, 0.05, 0.80, 0.05, 0.05, 0.00], // obstacle
        vec![0.00, 0.05, 0.00, 0.00, 0.15, 0.80], // neutral
    ]
}

/// panic → scared, fight → angry, congestion → happy, obstacle → excited,
/// neutral → neutral.
fn bijective_table() -> Vec<Vec<f64>> {
    let target = [
        Emotion::Scared,
        Emotion::Angry,
        Emotion::Happy,
        Emotion::Excited,
        Emotion::Neutral,
    ];
    target
        .iter()
        .map(|e| {
            let mut row = vec![0.0; Emotion::COUNT];
            row[e.index()] = 1.0;
            row
        })
        .collect()
}

fn random_means(seed: u64, dim: usize, scale: f64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(MEANS_STREAM);
    (0..Emotion::COUNT)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                })
                .collect()
        })
        .collect()
}

fn sample_row(row: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave `acc` a hair below 1; fall back to the last
    // category with non-zero mass.
    row.iter().rposition(|&p| p > 0.0).unwrap_or(row.len() - 1)
}

/// Generates a dataset. Clip `i` belongs to sequence `i / clips_per_sequence`
/// and has behavior `i mod B`, so behaviors are balanced within one. Every
/// clip draws from its own ChaCha stream keyed by `(seed, i)`.
pub fn synthesize_dataset(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let n = cfg.n_sequences * cfg.clips_per_sequence;
    let width = (cfg.n_sequences.max(2) - 1).to_string().len();
    let clips = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            let behavior = Behavior::ALL[i % Behavior::COUNT];
            let emotion = Emotion::ALL[sample_row(&cfg.behavior_to_emotion[behavior.index()], &mut rng)];
            let mean = &cfg.emotion_to_mean[emotion.index()];
            let descriptors = (0..cfg.descriptors_per_clip)
                .map(|_| {
                    mean.iter()
                        .map(|m| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            m + cfg.noise_scale * z
                        })
                        .collect()
                })
                .collect();
            let seq = i / cfg.clips_per_sequence;
            ClipRecord {
                clip_id: format!("s{seq:0width$}_c{i:06}"),
                sequence_id: format!("s{seq:0width$}"),
                behavior,
                emotion_annotations: vec![emotion],
                emotion: EmotionVector::one_hot(emotion),
                channels: vec![DescriptorChannel::new(
                    ChannelKind::Generic,
                    cfg.descriptor_dim,
                    descriptors,
                )],
                feature: None,
            }
        })
        .collect();
    Ok(Dataset::new(clips))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> SynthConfig {
        SynthConfig {
            n_sequences: 4,
            clips_per_sequence: 10,
            descriptors_per_clip: 5,
            ..SynthConfig::emotion_mediated(seed)
        }
    }

    #[test]
    fn presets_are_valid() {
        SynthConfig::emotion_mediated(1).validate().unwrap();
        SynthConfig::uniform_control(1).validate().unwrap();
        SynthConfig::bijective(1).validate().unwrap();
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = small(0);
        cfg.noise_scale = 0.0;
        assert!(synthesize_dataset(&cfg).is_err());

        let mut cfg = small(0);
        cfg.behavior_to_emotion[2][0] += 0.01;
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));

        let mut cfg = small(0);
        cfg.emotion_to_mean[3].pop();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn shape_and_balance() {
        let ds = synthesize_dataset(&small(3)).unwrap();
        assert_eq!(ds.len(), 40);
        assert_eq!(ds.sequences.len(), 4);
        let mut counts = [0usize; Behavior::COUNT];
        for c in &ds.clips {
            counts[c.behavior.index()] += 1;
            assert_eq!(c.emotion.count_ones(), 1);
            assert_eq!(c.channels[0].descriptors.len(), 5);
        }
        let (lo, hi) = (counts.iter().min().unwrap(), counts.iter().max().unwrap());
        assert!(hi - lo <= 1);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = synthesize_dataset(&small(9)).unwrap();
        let b = synthesize_dataset(&small(9)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let mut other = small(9);
        other.seed = 10;
        let c = synthesize_dataset(&other).unwrap();
        assert_ne!(a.clips[0].channels[0].descriptors, c.clips[0].channels[0].descriptors);
    }

    #[test]
    fn degenerate_noise_collapses_to_means() {
        let mut cfg = SynthConfig::bijective(5);
        cfg.n_sequences = 2;
        cfg.noise_scale = 1e-12;
        let ds = synthesize_dataset(&cfg).unwrap();
        for b in Behavior::ALL {
            let clips: Vec<_> = ds.clips.iter().filter(|c| c.behavior == *b).collect();
            let e = clips[0].emotion;
            let first = &clips[0].channels[0].descriptors[0];
            for c in &clips {
                assert_eq!(c.emotion, e);
                for d in &c.channels[0].descriptors {
                    for (x, y) in d.iter().zip(first) {
                        assert!((x - y).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
