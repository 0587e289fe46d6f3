//! Leave-one-sequence-out experiments, accuracy and confusion metrics, and
//! inter-annotator agreement.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::hash::{DefaultHasher, Hash, Hasher};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bow::{self, Codebook};
use crate::dataset::{Behavior, Dataset, EmotionVector, Label};
use crate::emotion::{self, EmotionPipeline};
use crate::error::{Error, Result};
use crate::latent::{self, ClassTrace, LatentConfig, LatentModelSet};
use crate::svm::{self, MultiClassModel, TrainConfig};

pub const REPORT_SCHEMA: u32 = 1;

/// One fold per sequence: train on every other sequence, test on it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub test: String,
}

/// Folds in sequence-id order.
pub fn loso_splits(ds: &Dataset) -> Result<FoldPlan> {
    let sequences: Vec<&String> = ds.sequences.iter().collect();
    if sequences.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "leave-one-sequence-out needs at least 2 sequences, found {}",
            sequences.len()
        )));
    }
    let folds = sequences
        .iter()
        .map(|&test| Fold {
            train: sequences
                .iter()
                .filter(|&&s| s != test)
                .map(|s| s.to_string())
                .collect(),
            test: test.clone(),
        })
        .collect();
    Ok(FoldPlan { folds })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix<C> {
    pub labels: Vec<C>,
    /// `counts[i][j]`: clips of true class `i` predicted as `j`.
    pub counts: Vec<Vec<u64>>,
    /// Counts as a percentage of their row; empty rows are all zero.
    pub row_percent: Vec<Vec<f64>>,
}

impl<C: Label> ConfusionMatrix<C> {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Long-format CSV: `truth,predicted,count,row_percent`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("truth,predicted,count,row_percent\n");
        for (i, t) in self.labels.iter().enumerate() {
            for (j, p) in self.labels.iter().enumerate() {
                let _ = writeln!(out, "{t},{p},{},{:.6}", self.counts[i][j], self.row_percent[i][j]);
            }
        }
        out
    }

    /// Row percentages as a fixed-width table.
    pub fn to_text(&self) -> String {
        let width = self
            .labels
            .iter()
            .map(|l| l.to_string().len())
            .max()
            .unwrap_or(0)
            .max(7);
        let mut out = format!("{:width$}", "");
        for l in &self.labels {
            let _ = write!(out, " {:>width$}", l.to_string());
        }
        out.push('\n');
        for (i, l) in self.labels.iter().enumerate() {
            let _ = write!(out, "{:width$}", l.to_string());
            for v in &self.row_percent[i] {
                let _ = write!(out, " {:>width$.1}", v);
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion_matrix<C: Label>(truth: &[C], pred: &[C], order: &[C]) -> Result<ConfusionMatrix<C>> {
    if truth.len() != pred.len() {
        return Err(Error::InvalidInput(format!(
            "{} true labels but {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    let index: HashMap<C, usize> = order.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let lookup = |c: &C| {
        index.get(c).copied().ok_or_else(|| Error::UnknownLabel {
            kind: "class",
            value: c.to_string(),
        })
    };
    let b = order.len();
    let mut counts = vec![vec![0u64; b]; b];
    for (t, p) in truth.iter().zip(pred) {
        counts[lookup(t)?][lookup(p)?] += 1;
    }
    let row_percent = counts
        .iter()
        .map(|row| {
            let n: u64 = row.iter().sum();
            row.iter()
                .map(|&c| if n == 0 { 0.0 } else { 100.0 * c as f64 / n as f64 })
                .collect()
        })
        .collect();
    Ok(ConfusionMatrix {
        labels: order.to_vec(),
        counts,
        row_percent,
    })
}

/// Recall of each class present in `truth`, in label order.
pub fn per_class_recall<C: Label>(truth: &[C], pred: &[C]) -> Result<BTreeMap<C, f64>> {
    if truth.is_empty() {
        return Err(Error::InvalidInput("no predictions to score".into()));
    }
    if truth.len() != pred.len() {
        return Err(Error::InvalidInput(format!(
            "{} true labels but {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    let mut tally: BTreeMap<C, (usize, usize)> = BTreeMap::new();
    for (t, p) in truth.iter().zip(pred) {
        let e = tally.entry(*t).or_default();
        e.0 += (t == p) as usize;
        e.1 += 1;
    }
    Ok(tally
        .into_iter()
        .map(|(c, (hit, n))| (c, hit as f64 / n as f64))
        .collect())
}

/// Class-averaged accuracy: the unweighted mean of per-class recall over
/// the classes present in `truth`.
pub fn average_accuracy<C: Label>(truth: &[C], pred: &[C]) -> Result<f64> {
    let recall = per_class_recall(truth, pred)?;
    Ok(recall.values().sum::<f64>() / recall.len() as f64)
}

/// Fraction of exact matches.
pub fn micro_accuracy<C: Label>(truth: &[C], pred: &[C]) -> Result<f64> {
    if truth.is_empty() || truth.len() != pred.len() {
        return Err(Error::InvalidInput(
            "micro accuracy needs equal non-empty inputs".into(),
        ));
    }
    Ok(truth.iter().zip(pred).filter(|(t, p)| t == p).count() as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaKind {
    Cohen,
    Fleiss,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    /// Mean raw agreement over all annotator pairs and clips.
    pub overall_agreement: f64,
    pub kappa: f64,
    pub kind: KappaKind,
    /// Observed agreement entering the kappa formula.
    pub p_o: f64,
    /// Chance agreement entering the kappa formula.
    pub p_e: f64,
}

fn check_annotations<C>(annotations: &[Vec<C>]) -> Result<usize> {
    let m = annotations.first().map_or(0, Vec::len);
    if annotations.is_empty() {
        return Err(Error::InvalidInput("no annotated clips".into()));
    }
    if m < 2 {
        return Err(Error::InvalidInput(format!(
            "agreement needs at least 2 annotators, found {m}"
        )));
    }
    if annotations.iter().any(|a| a.len() != m) {
        return Err(Error::InvalidInput("clips have differing annotator counts".into()));
    }
    Ok(m)
}

/// Raw agreement and kappa for `N` clips each labeled by the same `M`
/// annotators. Cohen's kappa for two annotators, Fleiss' otherwise.
pub fn agreement<C: Label>(annotations: &[Vec<C>]) -> Result<Agreement> {
    let m = check_annotations(annotations)?;
    let n = annotations.len() as f64;

    let pairs = (m * (m - 1) / 2) as f64;
    let overall_agreement = annotations
        .iter()
        .map(|a| {
            let mut same = 0usize;
            for i in 0..m {
                for j in i + 1..m {
                    same += (a[i] == a[j]) as usize;
                }
            }
            same as f64 / pairs
        })
        .sum::<f64>()
        / n;

    let (kind, p_o, p_e) = if m == 2 {
        let mut first: BTreeMap<C, f64> = BTreeMap::new();
        let mut second: BTreeMap<C, f64> = BTreeMap::new();
        for a in annotations {
            *first.entry(a[0]).or_default() += 1.0;
            *second.entry(a[1]).or_default() += 1.0;
        }
        let p_e = first
            .iter()
            .map(|(c, f)| f / n * second.get(c).copied().unwrap_or(0.0) / n)
            .sum();
        (KappaKind::Cohen, overall_agreement, p_e)
    } else {
        let mut totals: BTreeMap<C, f64> = BTreeMap::new();
        for a in annotations {
            for c in a {
                *totals.entry(*c).or_default() += 1.0;
            }
        }
        let ratings = n * m as f64;
        let p_e = totals.values().map(|t| (t / ratings).powi(2)).sum();
        // Fleiss' per-item agreement equals the pairwise agreement rate.
        (KappaKind::Fleiss, overall_agreement, p_e)
    };
    let kappa = if p_o == 1.0 { 1.0 } else { (p_o - p_e) / (1.0 - p_e) };
    Ok(Agreement {
        overall_agreement,
        kappa,
        kind,
        p_o,
        p_e,
    })
}

/// For each unordered pair of observed labels, the fraction of annotator-pair
/// disagreements that involve exactly that pair. All zero when nobody
/// disagrees.
pub fn pairwise_confusability<C: Label>(annotations: &[Vec<C>]) -> Result<BTreeMap<(C, C), f64>> {
    let m = check_annotations(annotations)?;
    let labels: BTreeSet<C> = annotations.iter().flatten().copied().collect();
    let mut counts: BTreeMap<(C, C), usize> = BTreeMap::new();
    for (i, a) in labels.iter().enumerate() {
        for b in labels.iter().skip(i + 1) {
            counts.insert((*a, *b), 0);
        }
    }
    let mut total = 0usize;
    for a in annotations {
        for i in 0..m {
            for j in i + 1..m {
                if a[i] != a[j] {
                    let key = if a[i] < a[j] { (a[i], a[j]) } else { (a[j], a[i]) };
                    *counts.get_mut(&key).expect("pair of observed labels") += 1;
                    total += 1;
                }
            }
        }
    }
    Ok(counts
        .into_iter()
        .map(|(k, c)| (k, if total == 0 { 0.0 } else { c as f64 / total as f64 }))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// One-vs-all SVM on bag-of-words features.
    Lowlevel,
    /// SVM on ground-truth one-hot emotions.
    Aware,
    /// SVM on emotion-classifier scores.
    Emotion,
    /// Latent emotion configurations.
    Latent,
}

impl Method {
    pub const ALL: &'static [Method] = &[Method::Lowlevel, Method::Aware, Method::Emotion, Method::Latent];

    pub fn flag(self) -> &'static str {
        match self {
            Method::Lowlevel => "lowlevel",
            Method::Aware => "aware",
            Method::Emotion => "emotion",
            Method::Latent => "latent",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Method::Lowlevel => "low-level",
            Method::Aware => "emotion-aware",
            Method::Emotion => "emotion-based",
            Method::Latent => "latent",
        }
    }

    fn needs_bow(self) -> bool {
        self != Method::Aware
    }

    fn needs_bank(self) -> bool {
        matches!(self, Method::Emotion | Method::Latent)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.flag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.flag() == s || m.title() == s)
            .ok_or_else(|| Error::UnknownLabel {
                kind: "method",
                value: s.to_string(),
            })
    }
}

/// Everything an experiment depends on besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub codebook_size: usize,
    /// Fraction of training descriptors sampled for k-means.
    pub sample_fraction: f64,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    /// L1-normalize histograms. Off by default: normalized histograms have
    /// tiny norms, which leaves every SVM at the default `λ` dominated by
    /// the regularizer.
    pub normalize: bool,
    /// SVMs on bag-of-words features: the low-level classifier and the
    /// emotion bank.
    pub svm: TrainConfig,
    /// SVMs on 6-dim emotion inputs: the behavior classifier over emotion
    /// scores and the emotion-aware classifier.
    pub behavior_svm: TrainConfig,
    /// Latent training. Its `lambda` is per training clip: a fold with `n`
    /// training clips minimizes `n·λ‖W‖² + Σ hinge`, matching the SVMs'
    /// `λ‖w‖² + mean hinge`.
    pub latent: LatentConfig,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            codebook_size: 64,
            sample_fraction: 0.1,
            kmeans_max_iter: 50,
            kmeans_tol: 1e-6,
            normalize: false,
            svm: TrainConfig::default(),
            behavior_svm: TrainConfig::default(),
            latent: LatentConfig::default(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.codebook_size == 0 {
            return Err(Error::InvalidConfig("codebook_size must be positive".into()));
        }
        if !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "sample_fraction must be in (0, 1], got {}",
                self.sample_fraction
            )));
        }
        if self.kmeans_max_iter == 0 {
            return Err(Error::InvalidConfig("kmeans_max_iter must be positive".into()));
        }
        self.svm.validate()?;
        self.behavior_svm.validate()?;
        self.latent.validate()
    }
}

/// Deterministic seed for one fold.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (fold as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Everything fitted on one fold's training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldModels {
    pub codebooks: Vec<Codebook>,
    pub lowlevel: Option<MultiClassModel<Behavior>>,
    pub aware: Option<MultiClassModel<Behavior>>,
    pub emotion: Option<EmotionPipeline>,
    pub latent: Option<LatentModelSet>,
    pub latent_traces: Vec<ClassTrace>,
}

impl FoldModels {
    /// Hash of the serialized models.
    pub fn fingerprint(&self) -> u64 {
        let text = serde_json::to_string(self).expect("fold models serialize");
        let mut h = DefaultHasher::new();
        text.hash(&mut h);
        h.finish()
    }

    fn encode(&self, ds: &Dataset, cfg: &ExperimentConfig) -> Result<Dataset> {
        bow::encode_dataset(ds, &self.codebooks, true, cfg.normalize)
    }
}

/// Fits every component the requested methods need, on `train` alone.
pub fn fit_fold(train: &Dataset, methods: &[Method], cfg: &ExperimentConfig, seed: u64) -> Result<FoldModels> {
    let svm_cfg = TrainConfig { seed, ..cfg.svm };
    let behavior_cfg = TrainConfig {
        seed,
        ..cfg.behavior_svm
    };
    let mut models = FoldModels {
        codebooks: Vec::new(),
        lowlevel: None,
        aware: None,
        emotion: None,
        latent: None,
        latent_traces: Vec::new(),
    };

    if methods.contains(&Method::Aware) {
        models.aware = Some(emotion::train_emotion_aware(train, &behavior_cfg)?);
    }
    if !methods.iter().any(|m| m.needs_bow()) {
        return Ok(models);
    }

    let channels = train.common_channels();
    if channels.is_empty() {
        return Err(Error::InvalidInput("training clips share no descriptor channel".into()));
    }
    models.codebooks = bow::fit_codebooks(
        train,
        &channels,
        cfg.codebook_size,
        cfg.sample_fraction,
        seed,
        cfg.kmeans_max_iter,
        cfg.kmeans_tol,
    )?;
    let encoded = models.encode(train, cfg)?;
    let features = encoded.features()?;
    let behaviors = encoded.behaviors();

    if methods.contains(&Method::Lowlevel) {
        models.lowlevel = Some(svm::train_one_vs_all(&features, &behaviors, Behavior::ALL, &svm_cfg)?);
    }
    if methods.iter().any(|m| m.needs_bank()) {
        let bank = emotion::train_emotion_bank_on(&features, &encoded.emotions(), &svm_cfg)?;
        if methods.contains(&Method::Latent) {
            let latent_cfg = LatentConfig {
                lambda: cfg.latent.lambda * features.len() as f64,
                inner: TrainConfig {
                    seed,
                    ..cfg.latent.inner
                },
                ..cfg.latent
            };
            let trained = latent::train_latent_on(&features, &behaviors, &encoded.emotions(), &bank, &latent_cfg)?;
            models.latent = Some(trained.models);
            models.latent_traces = trained.traces;
        }
        if methods.contains(&Method::Emotion) {
            models.emotion = Some(emotion::train_behavior_on_emotion_with(
                &features,
                &behaviors,
                bank,
                &behavior_cfg,
            )?);
        }
    }
    Ok(models)
}

/// Fits fold `fold` of `plan` as the experiment harness does: the held-out
/// sequence is dropped before anything is fitted.
pub fn fit_planned_fold(
    ds: &Dataset,
    plan: &FoldPlan,
    fold: usize,
    methods: &[Method],
    cfg: &ExperimentConfig,
) -> Result<FoldModels> {
    let f = plan
        .folds
        .get(fold)
        .ok_or_else(|| Error::InvalidInput(format!("fold {fold} out of range")))?;
    let train = ds.filter_sequences(|s| s != f.test);
    fit_fold(&train, methods, cfg, fold_seed(cfg.seed, fold))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipPrediction {
    pub clip_id: String,
    pub sequence_id: String,
    pub truth: Behavior,
    pub predicted: Behavior,
    /// Latent method only: the configuration chosen by the true class's
    /// model.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub latent_config: Option<EmotionVector>,
}

fn predict_fold(
    models: &FoldModels,
    test: &Dataset,
    method: Method,
    cfg: &ExperimentConfig,
) -> Result<Vec<ClipPrediction>> {
    let encoded = if method.needs_bow() {
        Some(models.encode(test, cfg)?)
    } else {
        None
    };
    test.clips
        .iter()
        .enumerate()
        .map(|(i, clip)| {
            let x = || {
                encoded.as_ref().expect("encoded test set").clips[i]
                    .feature
                    .as_deref()
                    .expect("encoded clip")
            };
            let missing = || Error::InvalidInput(format!("no {} model was fitted", method.title()));
            let (predicted, latent_config) = match method {
                Method::Lowlevel => (
                    svm::predict(models.lowlevel.as_ref().ok_or_else(missing)?, x())?.0,
                    None,
                ),
                Method::Aware => {
                    let f = emotion::emotion_aware_feature(&clip.emotion)?;
                    (svm::predict(models.aware.as_ref().ok_or_else(missing)?, &f)?.0, None)
                }
                Method::Emotion => (
                    emotion::classify(models.emotion.as_ref().ok_or_else(missing)?, x())?.0,
                    None,
                ),
                Method::Latent => {
                    let set = models.latent.as_ref().ok_or_else(missing)?;
                    let p = latent::predict_latent(set, x())?;
                    (p.behavior, Some(p.configs[clip.behavior.index()]))
                }
            };
            Ok(ClipPrediction {
                clip_id: clip.clip_id.clone(),
                sequence_id: clip.sequence_id.clone(),
                truth: clip.behavior,
                predicted,
                latent_config,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub test_sequence: String,
    pub n_test: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRecall {
    pub class: Behavior,
    pub support: usize,
    pub recall: f64,
}

/// Configurations chosen for the test clips of one true class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentClassStats {
    pub class: Behavior,
    pub clips: usize,
    pub mean_active_emotions: f64,
    /// Configuration (as a 0/1 string over the emotions) → clip count.
    pub configurations: BTreeMap<String, usize>,
    pub most_common: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentSummary {
    pub per_class: Vec<LatentClassStats>,
    pub mean_outer_iterations: f64,
    pub mean_inner_passes: f64,
    pub converged_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema: u32,
    pub method: Method,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub n_clips: usize,
    pub n_sequences: usize,
    /// Class-averaged recall over the pooled test predictions of all folds.
    pub average_accuracy: f64,
    /// Fraction of all test clips classified correctly.
    pub micro_accuracy: f64,
    /// Unweighted mean of the per-fold accuracies.
    pub mean_fold_accuracy: f64,
    pub per_class: Vec<ClassRecall>,
    pub folds: Vec<FoldOutcome>,
    pub confusion: ConfusionMatrix<Behavior>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub latent: Option<LatentSummary>,
    pub predictions: Vec<ClipPrediction>,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "method            {}", self.method.title());
        let _ = writeln!(out, "seed              {}", self.seed);
        let _ = writeln!(out, "clips / sequences {} / {}", self.n_clips, self.n_sequences);
        let _ = writeln!(out, "average accuracy  {:.2}%", 100.0 * self.average_accuracy);
        let _ = writeln!(out, "micro accuracy    {:.2}%", 100.0 * self.micro_accuracy);
        let _ = writeln!(out, "mean fold acc.    {:.2}%", 100.0 * self.mean_fold_accuracy);
        out.push_str("\nper-class recall\n");
        for c in &self.per_class {
            let _ = writeln!(
                out,
                "  {:<12} {:>7.2}%  (n={})",
                c.class.to_string(),
                100.0 * c.recall,
                c.support
            );
        }
        out.push_str("\nconfusion (row %)\n");
        out.push_str(&self.confusion.to_text());
        if let Some(latent) = &self.latent {
            out.push_str("\nlatent configurations of the true class\n");
            for s in &latent.per_class {
                let _ = writeln!(
                    out,
                    "  {:<12} most common {}  mean active {:.2}",
                    s.class.to_string(),
                    s.most_common,
                    s.mean_active_emotions
                );
            }
        }
        out.push_str("\nfolds\n");
        for f in &self.folds {
            let _ = writeln!(
                out,
                "  {:>3} {:<16} {:>7.2}%  ({}/{})",
                f.fold,
                f.test_sequence,
                100.0 * f.accuracy,
                f.correct,
                f.n_test
            );
        }
        out
    }

    /// Writes `report.json`, `report.txt` and `confusion.csv` into `dir`.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, text) in [
            ("report.json", self.to_json()),
            ("report.txt", self.to_text()),
            ("confusion.csv", self.confusion.to_csv()),
        ] {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let report: ExperimentReport = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if report.schema != REPORT_SCHEMA {
            return Err(Error::InvalidInput(format!(
                "unsupported report schema {}",
                report.schema
            )));
        }
        Ok(report)
    }
}

pub fn run_experiment(ds: &Dataset, method: Method, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    Ok(run_experiments(ds, &[method], cfg)?.remove(0))
}

/// Runs several methods over the same folds. Per fold, shared components
/// (codebooks, emotion bank) are fitted once.
pub fn run_experiments(ds: &Dataset, methods: &[Method], cfg: &ExperimentConfig) -> Result<Vec<ExperimentReport>> {
    cfg.validate()?;
    if methods.is_empty() {
        return Err(Error::InvalidInput("no methods requested".into()));
    }
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    let plan = loso_splits(ds)?;

    let per_fold: Vec<(Vec<Vec<ClipPrediction>>, Vec<ClassTrace>)> = plan
        .folds
        .par_iter()
        .enumerate()
        .map(|(i, fold)| {
            let wrap = |e: Error| Error::Fold {
                fold: i,
                sequence: fold.test.clone(),
                source: Box::new(e),
            };
            let test = ds.filter_sequences(|s| s == fold.test);
            let models = fit_planned_fold(ds, &plan, i, &methods, cfg).map_err(wrap)?;
            let preds = methods
                .iter()
                .map(|&m| predict_fold(&models, &test, m, cfg))
                .collect::<Result<Vec<_>>>()
                .map_err(wrap)?;
            Ok((preds, models.latent_traces))
        })
        .collect::<Result<Vec<_>>>()?;

    methods
        .iter()
        .enumerate()
        .map(|(mi, &method)| {
            let fold_preds: Vec<&Vec<ClipPrediction>> = per_fold.iter().map(|(p, _)| &p[mi]).collect();
            let traces: Vec<&ClassTrace> = if method == Method::Latent {
                per_fold.iter().flat_map(|(_, t)| t).collect()
            } else {
                Vec::new()
            };
            assemble(ds, method, cfg, &plan, &fold_preds, &traces)
        })
        .collect()
}

fn assemble(
    ds: &Dataset,
    method: Method,
    cfg: &ExperimentConfig,
    plan: &FoldPlan,
    fold_preds: &[&Vec<ClipPrediction>],
    traces: &[&ClassTrace],
) -> Result<ExperimentReport> {
    let folds: Vec<FoldOutcome> = plan
        .folds
        .iter()
        .zip(fold_preds)
        .enumerate()
        .map(|(i, (fold, preds))| {
            let correct = preds.iter().filter(|p| p.truth == p.predicted).count();
            FoldOutcome {
                fold: i,
                test_sequence: fold.test.clone(),
                n_test: preds.len(),
                correct,
                accuracy: if preds.is_empty() {
                    0.0
                } else {
                    correct as f64 / preds.len() as f64
                },
            }
        })
        .collect();
    let predictions: Vec<ClipPrediction> = fold_preds.iter().flat_map(|p| p.iter().cloned()).collect();
    let truth: Vec<Behavior> = predictions.iter().map(|p| p.truth).collect();
    let pred: Vec<Behavior> = predictions.iter().map(|p| p.predicted).collect();
    let recall = per_class_recall(&truth, &pred)?;
    let per_class = recall
        .iter()
        .map(|(&class, &r)| ClassRecall {
            class,
            support: truth.iter().filter(|&&t| t == class).count(),
            recall: r,
        })
        .collect();

    let latent = (method == Method::Latent).then(|| latent_summary(&predictions, traces));
    Ok(ExperimentReport {
        schema: REPORT_SCHEMA,
        method,
        seed: cfg.seed,
        config: cfg.clone(),
        n_clips: ds.len(),
        n_sequences: ds.sequences.len(),
        average_accuracy: average_accuracy(&truth, &pred)?,
        micro_accuracy: micro_accuracy(&truth, &pred)?,
        mean_fold_accuracy: folds.iter().map(|f| f.accuracy).sum::<f64>() / folds.len() as f64,
        per_class,
        folds,
        confusion: confusion_matrix(&truth, &pred, Behavior::ALL)?,
        latent,
        predictions,
    })
}

fn latent_summary(predictions: &[ClipPrediction], traces: &[&ClassTrace]) -> LatentSummary {
    let per_class = Behavior::ALL
        .iter()
        .filter_map(|&class| {
            let configs: Vec<EmotionVector> = predictions
                .iter()
                .filter(|p| p.truth == class)
                .filter_map(|p| p.latent_config)
                .collect();
            if configs.is_empty() {
                return None;
            }
            let mut configurations: BTreeMap<String, usize> = BTreeMap::new();
            for e in &configs {
                *configurations.entry(e.to_string()).or_default() += 1;
            }
            // Highest count; ties to the lexicographically smallest string.
            let most_common = configurations
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
                .map(|(k, _)| k.clone())
                .unwrap_or_default();
            Some(LatentClassStats {
                class,
                clips: configs.len(),
                mean_active_emotions: configs.iter().map(|e| e.count_ones() as f64).sum::<f64>() / configs.len() as f64,
                configurations,
                most_common,
            })
        })
        .collect();
    let n = traces.len().max(1) as f64;
    LatentSummary {
        per_class,
        mean_outer_iterations: traces.iter().map(|t| t.inner_passes.len() as f64).sum::<f64>() / n,
        mean_inner_passes: traces.iter().flat_map(|t| &t.inner_passes).sum::<usize>() as f64
            / traces.iter().map(|t| t.inner_passes.len()).sum::<usize>().max(1) as f64,
        converged_fraction: traces.iter().filter(|t| t.converged).count() as f64 / n,
    }
}
