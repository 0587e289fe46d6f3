//! Emotion attributes as a mid-level representation.
//!
//! A bank of `K` binary emotion classifiers maps a clip feature `f` to the
//! vector of their confidence scores `φ(x) = [s_1(x), ..., s_K(x)]`; a
//! one-vs-all behavior classifier over `φ` completes the composition
//! `H = B(E(f))`. The emotion-aware baseline instead feeds ground-truth
//! one-hot emotion vectors to the behavior classifier.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{Behavior, Dataset, Emotion, EmotionVector};
use crate::error::{Error, Result};
use crate::svm::{self, Degenerate, LinearModel, MultiClassModel, TrainConfig};

pub const PIPELINE_SCHEMA: u32 = 1;

/// One binary classifier per emotion, in fixed emotion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionClassifierBank {
    pub classifiers: Vec<LinearModel>,
}

impl EmotionClassifierBank {
    pub fn new(classifiers: Vec<LinearModel>) -> Result<Self> {
        let bank = EmotionClassifierBank { classifiers };
        bank.check()?;
        Ok(bank)
    }

    fn check(&self) -> Result<()> {
        if self.classifiers.is_empty() {
            return Err(Error::InvalidInput("empty emotion bank".into()));
        }
        let dim = self.dim();
        for c in &self.classifiers {
            Error::check_dim(dim, c.dim())?;
        }
        Ok(())
    }

    /// Number of emotions `K`.
    pub fn len(&self) -> usize {
        self.classifiers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classifiers.is_empty()
    }

    /// Feature dimension the bank consumes.
    pub fn dim(&self) -> usize {
        self.classifiers[0].dim()
    }

    /// Emotions whose classifier fell back to a constant decision.
    pub fn warnings(&self) -> Vec<(usize, Degenerate)> {
        self.classifiers
            .iter()
            .enumerate()
            .filter_map(|(k, c)| c.fit.degenerate.map(|d| (k, d)))
            .collect()
    }
}

/// Trains classifier `k` with every example whose `e_k = 1` as positive and
/// all others negative, pooled over behaviors.
pub fn train_emotion_bank_on<X: AsRef<[f64]> + Sync>(
    features: &[X],
    emotions: &[EmotionVector],
    cfg: &TrainConfig,
) -> Result<EmotionClassifierBank> {
    if emotions.len() != features.len() {
        return Err(Error::InvalidInput(format!(
            "{} emotion vectors for {} examples",
            emotions.len(),
            features.len()
        )));
    }
    let k = emotions.first().map_or(Emotion::COUNT, |e| e.len());
    if emotions.iter().any(|e| e.len() != k) {
        return Err(Error::InvalidInput("emotion vectors of differing length".into()));
    }
    let label_sets: Vec<Vec<f64>> = (0..k)
        .map(|l| emotions.iter().map(|e| if e.get(l) { 1.0 } else { -1.0 }).collect())
        .collect();
    let bank = EmotionClassifierBank::new(svm::train_binary_many(features, &label_sets, cfg)?)?;
    for (l, kind) in bank.warnings() {
        let name = Emotion::from_index(l).map_or_else(|| l.to_string(), |e| e.to_string());
        log::warn!("emotion classifier `{name}` is degenerate ({kind:?})");
    }
    Ok(bank)
}

pub fn train_emotion_bank(train: &Dataset, cfg: &TrainConfig) -> Result<EmotionClassifierBank> {
    train_emotion_bank_on(&train.features()?, &train.emotions(), cfg)
}

/// `φ(x)`: raw signed margins of every emotion classifier.
pub fn emotion_representation(x: &[f64], bank: &EmotionClassifierBank) -> Result<Vec<f64>> {
    bank.classifiers.iter().map(|c| svm::score(c, x)).collect()
}

/// The full behavior classifier `H = B(E(f))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmotionPipeline {
    pub schema: u32,
    pub bank: EmotionClassifierBank,
    pub behavior_model: MultiClassModel<Behavior>,
}

impl EmotionPipeline {
    pub fn new(bank: EmotionClassifierBank, behavior_model: MultiClassModel<Behavior>) -> Result<Self> {
        Error::check_dim(bank.len(), behavior_model.dim())?;
        Ok(EmotionPipeline {
            schema: PIPELINE_SCHEMA,
            bank,
            behavior_model,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let p: EmotionPipeline = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if p.schema != PIPELINE_SCHEMA {
            return Err(Error::InvalidInput(format!("unsupported pipeline schema {}", p.schema)));
        }
        EmotionPipeline::new(p.bank, p.behavior_model)
    }
}

pub fn train_behavior_on_emotion_with<X: AsRef<[f64]> + Sync>(
    features: &[X],
    behaviors: &[Behavior],
    bank: EmotionClassifierBank,
    cfg: &TrainConfig,
) -> Result<EmotionPipeline> {
    let reps = features
        .iter()
        .map(|x| emotion_representation(x.as_ref(), &bank))
        .collect::<Result<Vec<_>>>()?;
    let behavior_model = svm::train_one_vs_all(&reps, behaviors, Behavior::ALL, cfg)?;
    EmotionPipeline::new(bank, behavior_model)
}

/// Fits the behavior classifier on `φ(x)` of the training clips.
pub fn train_behavior_on_emotion(
    train: &Dataset,
    bank: EmotionClassifierBank,
    cfg: &TrainConfig,
) -> Result<EmotionPipeline> {
    train_behavior_on_emotion_with(&train.features()?, &train.behaviors(), bank, cfg)
}

/// Exactly `predict(behavior_model, φ(x))`.
pub fn classify(pipeline: &EmotionPipeline, x: &[f64]) -> Result<(Behavior, Vec<f64>)> {
    let phi = emotion_representation(x, &pipeline.bank)?;
    svm::predict(&pipeline.behavior_model, &phi)
}

/// Ground-truth emotion as a real one-hot vector, e.g. happy →
/// `(0, 1, 0, 0, 0, 0)`.
pub fn emotion_aware_feature(e: &EmotionVector) -> Result<Vec<f64>> {
    if e.count_ones() != 1 {
        return Err(Error::InvalidInput(format!(
            "ground-truth emotion {e} must have exactly one active entry"
        )));
    }
    Ok(e.to_f64())
}

/// Behavior classifier over ground-truth one-hot emotion features.
pub fn train_emotion_aware(train: &Dataset, cfg: &TrainConfig) -> Result<MultiClassModel<Behavior>> {
    let features = train
        .clips
        .iter()
        .map(|c| emotion_aware_feature(&c.emotion))
        .collect::<Result<Vec<_>>>()?;
    svm::train_one_vs_all(&features, &train.behaviors(), Behavior::ALL, cfg)
}
