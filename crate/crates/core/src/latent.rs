//! Latent-emotion behavior model.
//!
//! For one behavior class the score of a clip `x` under an emotion
//! configuration `e ∈ {0,1}^K` is
//!
//! ```text
//! W·Ψ(x, e) = W_x·x + Σ_l W_{e_l}·e_l[s_l(x), 1] + Σ_{l<m} W_{e_l,e_m}[state(e_l, e_m)]
//! ```
//!
//! where `s_l(x)` is the score of the `l`-th emotion classifier and the
//! pairwise table holds one weight per joint state `00, 01, 10, 11`. A class
//! scores a clip by `f_W(x) = max_e W·Ψ(x, e)`; the maximization is exact over
//! all `2^K` configurations.
//!
//! Training is one-vs-all. Per class, coordinate descent alternates between
//! fixing the configuration of every positive clip and minimizing
//! `λ‖W‖² + Σ_j max(0, 1 − y_j f_W(x_j))` with negatives keeping the inner
//! max. The inner problem is convex and is solved in the dual, one clip at a
//! time, with inference over configurations in the loop.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::{Behavior, EmotionVector};
use crate::emotion::{emotion_representation, EmotionClassifierBank};
use crate::error::{Error, Result};
use crate::linalg::{argmax, axpy, dot};
use crate::svm::TrainConfig;

pub const LATENT_SCHEMA: u32 = 1;
/// Exhaustive inference is limited to this many emotions.
pub const MAX_EMOTIONS: usize = 20;

/// Number of unordered emotion pairs `l < m`.
pub fn pair_count(k: usize) -> usize {
    k * k.saturating_sub(1) / 2
}

/// Position of the pair `(l, m)`, `l < m`, in lexicographic pair order.
pub fn pair_index(k: usize, l: usize, m: usize) -> usize {
    debug_assert!(l < m && m < k);
    l * (2 * k - l - 1) / 2 + (m - l - 1)
}

/// Joint state of a pair: `00 → 0`, `01 → 1`, `10 → 2`, `11 → 3`.
pub fn pair_state(el: bool, em: bool) -> usize {
    2 * el as usize + em as usize
}

/// Weights `W = {W_x; W_{e_l}; W_{e_l,e_m}}` of one behavior class.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentWeights {
    pub w_x: Vec<f64>,
    /// Per emotion, weights over `[s_l(x), 1]`.
    pub w_e: Vec<[f64; 2]>,
    /// Per pair `l < m` in [`pair_index`] order, weights over the four
    /// joint states.
    pub w_pair: Vec<[f64; 4]>,
}

impl LatentWeights {
    pub fn zeros(dim: usize, k: usize) -> Self {
        LatentWeights {
            w_x: vec![0.0; dim],
            w_e: vec![[0.0; 2]; k],
            w_pair: vec![[0.0; 4]; pair_count(k)],
        }
    }

    pub fn dim(&self) -> usize {
        self.w_x.len()
    }

    pub fn num_emotions(&self) -> usize {
        self.w_e.len()
    }

    pub fn pair(&self, l: usize, m: usize) -> &[f64; 4] {
        &self.w_pair[pair_index(self.num_emotions(), l, m)]
    }

    pub fn sq_norm(&self) -> f64 {
        dot(&self.w_x, &self.w_x)
            + self.w_e.iter().map(|w| w[0] * w[0] + w[1] * w[1]).sum::<f64>()
            + self.w_pair.iter().flatten().map(|v| v * v).sum::<f64>()
    }

    /// Flat parameter vector `[w_x | w_e | w_pair]`, matching
    /// [`JointFeature::flatten`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.w_x.clone();
        out.extend(self.w_e.iter().flatten());
        out.extend(self.w_pair.iter().flatten());
        out
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &LatentWeights, b: f64) -> LatentWeights {
        let mix = |x: f64, y: f64| a * x + b * y;
        LatentWeights {
            w_x: self.w_x.iter().zip(&other.w_x).map(|(x, y)| mix(*x, *y)).collect(),
            w_e: self
                .w_e
                .iter()
                .zip(&other.w_e)
                .map(|(x, y)| [mix(x[0], y[0]), mix(x[1], y[1])])
                .collect(),
            w_pair: self
                .w_pair
                .iter()
                .zip(&other.w_pair)
                .map(|(x, y)| std::array::from_fn(|s| mix(x[s], y[s])))
                .collect(),
        }
    }

    fn check(&self) -> Result<()> {
        let k = self.num_emotions();
        if k == 0 || k > MAX_EMOTIONS {
            return Err(Error::InvalidInput(format!(
                "latent model over {k} emotions (supported: 1..={MAX_EMOTIONS})"
            )));
        }
        Error::check_dim(pair_count(k), self.w_pair.len())?;
        let finite = self
            .w_x
            .iter()
            .chain(self.w_e.iter().flatten())
            .chain(self.w_pair.iter().flatten());
        if finite.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("latent weights".into()));
        }
        Ok(())
    }

    /// `w_e[l]·[s_l, 1]` for every emotion.
    fn unary(&self, scores: &[f64]) -> Vec<f64> {
        self.w_e.iter().zip(scores).map(|(w, s)| w[0] * s + w[1]).collect()
    }

    /// Adds `eta·Ψ(x, e)`.
    fn add_feature(&mut self, eta: f64, ex: &Example<'_>, e: u32, pairs: bool) {
        axpy(eta, ex.x, &mut self.w_x);
        let k = self.num_emotions();
        for l in 0..k {
            if bit(e, l) {
                self.w_e[l][0] += eta * ex.scores[l];
                self.w_e[l][1] += eta;
            }
        }
        if pairs {
            for l in 0..k {
                for m in l + 1..k {
                    self.w_pair[pair_index(k, l, m)][pair_state(bit(e, l), bit(e, m))] += eta;
                }
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct LatentWeightsRepr {
    w_x: Vec<f64>,
    w_e: Vec<[f64; 2]>,
    w_pair: BTreeMap<String, [f64; 4]>,
}

impl Serialize for LatentWeights {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let k = self.num_emotions();
        let mut w_pair = BTreeMap::new();
        for l in 0..k {
            for m in l + 1..k {
                w_pair.insert(format!("{l},{m}"), *self.pair(l, m));
            }
        }
        LatentWeightsRepr {
            w_x: self.w_x.clone(),
            w_e: self.w_e.clone(),
            w_pair,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for LatentWeights {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = LatentWeightsRepr::deserialize(deserializer)?;
        let k = repr.w_e.len();
        let mut w = LatentWeights::zeros(repr.w_x.len(), k);
        w.w_x = repr.w_x;
        w.w_e = repr.w_e;
        if repr.w_pair.len() != pair_count(k) {
            return Err(D::Error::custom(format!(
                "expected {} pair tables, found {}",
                pair_count(k),
                repr.w_pair.len()
            )));
        }
        for (key, table) in repr.w_pair {
            let parsed = key
                .split_once(',')
                .and_then(|(l, m)| Some((l.trim().parse::<usize>().ok()?, m.trim().parse::<usize>().ok()?)));
            match parsed {
                Some((l, m)) if l < m && m < k => w.w_pair[pair_index(k, l, m)] = table,
                _ => return Err(D::Error::custom(format!("bad pair key `{key}`"))),
            }
        }
        Ok(w)
    }
}

#[inline]
fn bit(mask: u32, l: usize) -> bool {
    (mask >> l) & 1 == 1
}

/// `Ψ(x, e)` split into its three blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct JointFeature {
    /// `ψ₁(x) = x`
    pub psi1: Vec<f64>,
    /// `ψ₂(x, e_l) = e_l·[s_l(x), 1]`
    pub psi2: Vec<[f64; 2]>,
    /// `ψ₃(e_l, e_m)`: one-hot over the four joint states, per pair.
    pub psi3: Vec<[f64; 4]>,
}

impl JointFeature {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = self.psi1.clone();
        out.extend(self.psi2.iter().flatten());
        out.extend(self.psi3.iter().flatten());
        out
    }

    pub fn dot(&self, w: &LatentWeights) -> f64 {
        dot(&w.w_x, &self.psi1)
            + w.w_e
                .iter()
                .zip(&self.psi2)
                .map(|(a, b)| a[0] * b[0] + a[1] * b[1])
                .sum::<f64>()
            + w.w_pair
                .iter()
                .zip(&self.psi3)
                .map(|(a, b)| a.iter().zip(b).map(|(u, v)| u * v).sum::<f64>())
                .sum::<f64>()
    }
}

fn emotion_scores(x: &[f64], bank: &EmotionClassifierBank) -> Result<Vec<f64>> {
    emotion_representation(x, bank)
}

/// Joint feature from precomputed emotion scores.
pub fn joint_feature_from_scores(x: &[f64], e: &EmotionVector, scores: &[f64]) -> Result<JointFeature> {
    let k = scores.len();
    Error::check_dim(k, e.len())?;
    let psi2 = (0..k)
        .map(|l| if e.get(l) { [scores[l], 1.0] } else { [0.0, 0.0] })
        .collect();
    let mut psi3 = vec![[0.0; 4]; pair_count(k)];
    for l in 0..k {
        for m in l + 1..k {
            psi3[pair_index(k, l, m)][pair_state(e.get(l), e.get(m))] = 1.0;
        }
    }
    Ok(JointFeature {
        psi1: x.to_vec(),
        psi2,
        psi3,
    })
}

pub fn joint_feature(x: &[f64], e: &EmotionVector, bank: &EmotionClassifierBank) -> Result<JointFeature> {
    joint_feature_from_scores(x, e, &emotion_scores(x, bank)?)
}

fn check_model_inputs(w: &LatentWeights, x: &[f64], bank: &EmotionClassifierBank) -> Result<()> {
    Error::check_dim(w.dim(), x.len())?;
    Error::check_dim(bank.dim(), x.len())?;
    Error::check_dim(w.num_emotions(), bank.len())
}

/// `W·Ψ(x, e)`, summed term by term.
pub fn score_configuration(
    w: &LatentWeights,
    x: &[f64],
    e: &EmotionVector,
    bank: &EmotionClassifierBank,
) -> Result<f64> {
    check_model_inputs(w, x, bank)?;
    Error::check_dim(w.num_emotions(), e.len())?;
    let scores = emotion_scores(x, bank)?;
    Ok(score_with_scores(w, x, e.mask(), &scores))
}

fn score_with_scores(w: &LatentWeights, x: &[f64], e: u32, scores: &[f64]) -> f64 {
    let k = w.num_emotions();
    let raw = dot(&w.w_x, x);
    let mut unary = 0.0;
    for (l, (we, s)) in w.w_e.iter().zip(scores).enumerate() {
        if bit(e, l) {
            unary += we[0] * s + we[1];
        }
    }
    let mut pairwise = 0.0;
    for l in 0..k {
        for m in l + 1..k {
            pairwise += w.w_pair[pair_index(k, l, m)][pair_state(bit(e, l), bit(e, m))];
        }
    }
    raw + unary + pairwise
}

/// Pairwise term `Σ_{l<m} P_lm[state(e_l, e_m)]` of every configuration,
/// indexed by mask.
fn pair_totals(pairs: &[[f64; 4]], k: usize, use_pairs: bool) -> Vec<f64> {
    let mut totals = vec![0.0; 1 << k];
    if use_pairs {
        for (mask, t) in totals.iter_mut().enumerate() {
            let mask = mask as u32;
            for l in 0..k {
                for m in l + 1..k {
                    *t += pairs[pair_index(k, l, m)][pair_state(bit(mask, l), bit(mask, m))];
                }
            }
        }
    }
    totals
}

/// All masks in lexicographic order of `(e_1, e_2, ...)`, which is the order
/// of the bit-reversed mask.
fn lex_order(k: usize) -> Vec<u32> {
    let mut order: Vec<u32> = (0..1u32 << k).collect();
    order.sort_by_key(|m| m.reverse_bits());
    order
}

/// Maximizes `Σ_l e_l u_l + T[e]` over all configurations given the pairwise
/// totals `T`. Scanning in lexicographic order and keeping only strict
/// improvements returns the lexicographically smallest maximizer.
fn best_configuration(unary: &[f64], totals: &[f64], order: &[u32]) -> (u32, f64) {
    let mut sums = vec![0.0; totals.len()];
    for mask in 1..totals.len() {
        sums[mask] = sums[mask & (mask - 1)] + unary[mask.trailing_zeros() as usize];
    }
    let mut best = (0, f64::NEG_INFINITY);
    for &m in order {
        let v = sums[m as usize] + totals[m as usize];
        if v > best.1 {
            best = (m, v);
        }
    }
    best
}

/// `argmax_e W·Ψ(x, e)` over all `2^K` configurations with the maximal score.
/// Ties go to the lexicographically smallest configuration.
pub fn infer_best_emotions(w: &LatentWeights, x: &[f64], bank: &EmotionClassifierBank) -> Result<(EmotionVector, f64)> {
    check_model_inputs(w, x, bank)?;
    w.check()?;
    let scores = emotion_scores(x, bank)?;
    Ok(infer_with_scores(w, x, &scores))
}

fn infer_with_scores(w: &LatentWeights, x: &[f64], scores: &[f64]) -> (EmotionVector, f64) {
    let k = w.num_emotions();
    let (mask, value) = best_configuration(&w.unary(scores), &pair_totals(&w.w_pair, k, true), &lex_order(k));
    (EmotionVector::from_mask(w.num_emotions(), mask), dot(&w.w_x, x) + value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Positives start from their ground-truth emotion vector.
    BehaviorInherited,
    /// Positives start from the thresholded bank scores `s_l(x) > 0`.
    BankPredicted,
}

/// How `e` is chosen when scoring a clip at test time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InferenceMode {
    /// Maximize over all configurations.
    Max,
    /// Use the thresholded bank prediction `s_l(x) > 0` as is.
    BankFixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentConfig {
    pub lambda: f64,
    pub outer_iters: usize,
    /// Inner dual solver: `epochs` caps the passes over the data, `tol` is
    /// the duality gap relative to the primal, `seed` orders the passes.
    /// Its `lambda` is unused.
    pub inner: TrainConfig,
    pub init_mode: InitMode,
    /// Keep the pairwise weights at zero.
    #[serde(default)]
    pub freeze_pairwise: bool,
    /// Fix every clip's configuration (negatives included) at its ground
    /// truth; training reduces to one convex problem.
    #[serde(default)]
    pub clamp_latent: bool,
}

impl Default for LatentConfig {
    fn default() -> Self {
        LatentConfig {
            lambda: 0.01,
            outer_iters: 10,
            inner: TrainConfig {
                lambda: 0.01,
                epochs: 100,
                tol: 1e-2,
                seed: 0,
            },
            init_mode: InitMode::BehaviorInherited,
            freeze_pairwise: false,
            clamp_latent: false,
        }
    }
}

impl LatentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "latent lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.outer_iters == 0 || self.inner.epochs == 0 {
            return Err(Error::InvalidConfig("latent iteration counts must be positive".into()));
        }
        if self.inner.tol.is_nan() || self.inner.tol <= 0.0 {
            return Err(Error::InvalidConfig("latent inner tol must be positive".into()));
        }
        Ok(())
    }
}

/// Per-class latent models sharing one emotion bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentModelSet {
    pub schema: u32,
    pub lambda: f64,
    pub class_order: Vec<Behavior>,
    pub models: Vec<LatentWeights>,
    pub bank: EmotionClassifierBank,
}

impl LatentModelSet {
    pub fn new(lambda: f64, models: Vec<LatentWeights>, bank: EmotionClassifierBank) -> Result<Self> {
        let set = LatentModelSet {
            schema: LATENT_SCHEMA,
            lambda,
            class_order: Behavior::ALL.to_vec(),
            models,
            bank,
        };
        set.check()?;
        Ok(set)
    }

    fn check(&self) -> Result<()> {
        Error::check_dim(self.class_order.len(), self.models.len())?;
        for m in &self.models {
            m.check()?;
            Error::check_dim(self.bank.dim(), m.dim())?;
            Error::check_dim(self.bank.len(), m.num_emotions())?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.bank.dim()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let set: LatentModelSet = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if set.schema != LATENT_SCHEMA {
            return Err(Error::InvalidInput(format!("unsupported latent schema {}", set.schema)));
        }
        set.check()?;
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentPrediction {
    pub behavior: Behavior,
    /// Per class in `class_order`.
    pub scores: Vec<f64>,
    /// Per class, the configuration achieving its score.
    pub configs: Vec<EmotionVector>,
}

pub fn predict_latent(models: &LatentModelSet, x: &[f64]) -> Result<LatentPrediction> {
    predict_latent_with(models, x, InferenceMode::Max)
}

pub fn predict_latent_with(models: &LatentModelSet, x: &[f64], mode: InferenceMode) -> Result<LatentPrediction> {
    Error::check_dim(models.dim(), x.len())?;
    let scores = emotion_scores(x, &models.bank)?;
    let (configs, class_scores): (Vec<_>, Vec<_>) = models
        .models
        .iter()
        .map(|w| match mode {
            InferenceMode::Max => infer_with_scores(w, x, &scores),
            InferenceMode::BankFixed => {
                let e = threshold(&scores);
                (
                    EmotionVector::from_mask(w.num_emotions(), e),
                    score_with_scores(w, x, e, &scores),
                )
            }
        })
        .unzip();
    Ok(LatentPrediction {
        behavior: models.class_order[argmax(&class_scores)],
        scores: class_scores,
        configs,
    })
}

fn threshold(scores: &[f64]) -> u32 {
    scores
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > 0.0)
        .fold(0, |m, (l, _)| m | (1 << l))
}

/// Training trace of one behavior class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTrace {
    pub class: Behavior,
    /// Objective at `W = 0`, then after every outer iteration.
    pub objective_history: Vec<f64>,
    /// Inner dual passes used by each outer iteration.
    pub inner_passes: Vec<usize>,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct LatentTraining {
    pub models: LatentModelSet,
    pub traces: Vec<ClassTrace>,
}

struct Example<'a> {
    x: &'a [f64],
    scores: Vec<f64>,
    xx: f64,
    /// `s_l² + 1` per emotion.
    unary_norm: Vec<f64>,
}

impl Example<'_> {
    fn unary_sq(&self, e: u32) -> f64 {
        (0..self.scores.len())
            .filter(|&l| bit(e, l))
            .map(|l| self.unary_norm[l])
            .sum()
    }
}

/// Dual variables of one clip.
#[derive(Debug, Clone)]
enum Slot {
    /// Configuration fixed: a single box-constrained variable.
    Fixed { e: u32, alpha: f64 },
    /// Negative with the max over configurations: variables sharing one
    /// budget, kept for the configurations found so far.
    Max { set: Vec<(u32, f64)> },
}

struct ClassProblem<'a> {
    examples: &'a [Example<'a>],
    y: Vec<f64>,
    k: usize,
    lambda: f64,
    use_pairs: bool,
    order: Vec<u32>,
    /// Pairs on which two configurations at Hamming distance `d` share a
    /// state, indexed by `d`.
    agree: Vec<f64>,
}

impl<'a> ClassProblem<'a> {
    fn new(examples: &'a [Example<'a>], y: Vec<f64>, k: usize, lambda: f64, use_pairs: bool) -> Self {
        let agree = (0..=k)
            .map(|d| if use_pairs { pair_count(k - d) as f64 } else { 0.0 })
            .collect();
        ClassProblem {
            examples,
            y,
            k,
            lambda,
            use_pairs,
            order: lex_order(k),
            agree,
        }
    }

    fn totals(&self, w: &LatentWeights) -> Vec<f64> {
        pair_totals(&w.w_pair, self.k, self.use_pairs)
    }

    fn score(&self, w: &LatentWeights, totals: &[f64], j: usize, e: u32) -> f64 {
        let ex = &self.examples[j];
        let mut v = dot(&w.w_x, ex.x) + totals[e as usize];
        for l in 0..self.k {
            if bit(e, l) {
                v += w.w_e[l][0] * ex.scores[l] + w.w_e[l][1];
            }
        }
        v
    }

    fn best(&self, w: &LatentWeights, totals: &[f64], j: usize) -> (u32, f64) {
        let ex = &self.examples[j];
        let (mask, v) = best_configuration(&w.unary(&ex.scores), totals, &self.order);
        (mask, dot(&w.w_x, ex.x) + v)
    }

    /// `Ψ(x, a)·Ψ(x, b)` for the same clip.
    fn cross(&self, j: usize, a: u32, b: u32) -> f64 {
        let ex = &self.examples[j];
        ex.xx + ex.unary_sq(a & b) + self.agree[(a ^ b).count_ones() as usize]
    }

    /// Adds `eta·Ψ(x_j, e)` to `w` and keeps the pairwise totals in step.
    fn add(&self, w: &mut LatentWeights, totals: &mut [f64], eta: f64, j: usize, e: u32) {
        w.add_feature(eta, &self.examples[j], e, self.use_pairs);
        if self.use_pairs {
            for (mask, t) in totals.iter_mut().enumerate() {
                *t += eta * self.agree[(mask as u32 ^ e).count_ones() as usize];
            }
        }
    }

    /// Objective with every slot's configuration rule applied.
    fn objective(&self, w: &LatentWeights, slots: &[Slot]) -> f64 {
        let totals = self.totals(w);
        let loss: f64 = slots
            .iter()
            .enumerate()
            .map(|(j, slot)| {
                let s = match slot {
                    Slot::Fixed { e, .. } => self.score(w, &totals, j, *e),
                    Slot::Max { .. } => self.best(w, &totals, j).1,
                };
                (1.0 - self.y[j] * s).max(0.0)
            })
            .sum();
        self.lambda * w.sq_norm() + loss
    }

    /// Objective with every clip maximized over configurations.
    fn latent_objective(&self, w: &LatentWeights) -> f64 {
        let totals = self.totals(w);
        let loss: f64 = (0..self.examples.len())
            .map(|j| (1.0 - self.y[j] * self.best(w, &totals, j).1).max(0.0))
            .sum();
        self.lambda * w.sq_norm() + loss
    }

    fn rebuild(&self, slots: &[Slot], dim: usize) -> LatentWeights {
        let mut w = LatentWeights::zeros(dim, self.k);
        for (j, slot) in slots.iter().enumerate() {
            match slot {
                Slot::Fixed { e, alpha } if *alpha != 0.0 => {
                    w.add_feature(alpha * self.y[j], &self.examples[j], *e, self.use_pairs)
                }
                Slot::Max { set } => {
                    for (e, alpha) in set {
                        if *alpha != 0.0 {
                            w.add_feature(alpha * self.y[j], &self.examples[j], *e, self.use_pairs);
                        }
                    }
                }
                _ => {}
            }
        }
        w
    }

    fn dual(&self, w: &LatentWeights, slots: &[Slot]) -> f64 {
        let alpha_sum: f64 = slots
            .iter()
            .map(|s| match s {
                Slot::Fixed { alpha, .. } => *alpha,
                Slot::Max { set } => set.iter().map(|(_, a)| a).sum(),
            })
            .sum();
        2.0 * self.lambda * (alpha_sum - 0.5 * w.sq_norm())
    }

    /// Dual coordinate ascent until the relative duality gap drops below
    /// `tol`. Returns the best primal iterate and the passes used.
    fn solve(&self, slots: &mut [Slot], dim: usize, cfg: &TrainConfig, seed: u64) -> (LatentWeights, f64, usize) {
        let c = 1.0 / (2.0 * self.lambda);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..slots.len()).collect();
        let mut w = self.rebuild(slots, dim);
        let mut totals = self.totals(&w);
        let mut best_w = w.clone();
        let mut best_obj = self.objective(&w, slots);
        let mut passes = 0;

        for pass in 1..=cfg.epochs {
            passes = pass;
            order.shuffle(&mut rng);
            for &j in &order {
                match &mut slots[j] {
                    Slot::Fixed { e, alpha } => {
                        let q = self.cross(j, *e, *e);
                        if q <= 0.0 {
                            continue;
                        }
                        let g = 1.0 - self.y[j] * self.score(&w, &totals, j, *e);
                        let next = (*alpha + g / q).clamp(0.0, c);
                        let delta = next - *alpha;
                        if delta != 0.0 {
                            *alpha = next;
                            self.add(&mut w, &mut totals, delta * self.y[j], j, *e);
                        }
                    }
                    Slot::Max { set } => {
                        let (found, _) = self.best(&w, &totals, j);
                        if !set.iter().any(|(e, _)| *e == found) {
                            set.push((found, 0.0));
                        }
                        self.update_block(&mut w, &mut totals, j, set, c);
                        set.retain(|(_, a)| *a > 0.0);
                    }
                }
            }

            // Refresh W from α so round-off does not accumulate.
            w = self.rebuild(slots, dim);
            totals = self.totals(&w);
            let primal = self.objective(&w, slots);
            if primal < best_obj {
                best_obj = primal;
                best_w = w.clone();
            }
            let gap = best_obj - self.dual(&w, slots);
            if gap <= cfg.tol * best_obj.abs().max(1.0) {
                break;
            }
        }
        (best_w, best_obj, passes)
    }

    /// A few ascent steps on the variables of one max-negative. The block's
    /// variables share the budget `Σ α ≤ C`; the gradient of variable `e` is
    /// `1 + W·Ψ(x, e)`.
    fn update_block(&self, w: &mut LatentWeights, totals: &mut [f64], j: usize, set: &mut [(u32, f64)], c: f64) {
        let mut grad: Vec<f64> = set.iter().map(|(e, _)| 1.0 + self.score(w, totals, j, *e)).collect();
        let budget_eps = 1e-12 * c;

        for _ in 0..4 {
            let used: f64 = set.iter().map(|(_, a)| a).sum();
            let up = argmax(&grad);
            let down = (0..set.len())
                .filter(|&i| set[i].1 > 0.0)
                .min_by(|&a, &b| grad[a].total_cmp(&grad[b]));

            // (index, delta) moves; W changes by −delta·Ψ.
            let moves: [(usize, f64); 2] = if used < c - budget_eps && grad[up] > 0.0 {
                let q = self.cross(j, set[up].0, set[up].0);
                [(up, (grad[up] / q).min(c - used)), (up, 0.0)]
            } else if let Some(d) = down.filter(|&d| grad[d] < 0.0) {
                let q = self.cross(j, set[d].0, set[d].0);
                [(d, (grad[d] / q).max(-set[d].1)), (d, 0.0)]
            } else if let Some(d) = down.filter(|&d| d != up && grad[up] > grad[d]) {
                let (a, b) = (set[up].0, set[d].0);
                let q = self.cross(j, a, a) + self.cross(j, b, b) - 2.0 * self.cross(j, a, b);
                if q <= 0.0 {
                    break;
                }
                let delta = ((grad[up] - grad[d]) / q).min(set[d].1);
                [(up, delta), (d, -delta)]
            } else {
                break;
            };

            for (i, delta) in moves {
                if delta == 0.0 {
                    continue;
                }
                set[i].1 = (set[i].1 + delta).max(0.0);
                self.add(w, totals, -delta, j, set[i].0);
                for (g, (e, _)) in grad.iter_mut().zip(set.iter()) {
                    *g -= delta * self.cross(j, set[i].0, *e);
                }
            }
        }
    }
}

/// Trains one latent model per behavior class.
///
/// `emotions` are the ground-truth vectors, used to initialize positives in
/// [`InitMode::BehaviorInherited`] and for every clip when
/// [`LatentConfig::clamp_latent`] is set.
pub fn train_latent_on<X: AsRef<[f64]> + Sync>(
    features: &[X],
    behaviors: &[Behavior],
    emotions: &[EmotionVector],
    bank: &EmotionClassifierBank,
    cfg: &LatentConfig,
) -> Result<LatentTraining> {
    cfg.validate()?;
    let n = features.len();
    if n == 0 {
        return Err(Error::InvalidInput("no training examples".into()));
    }
    if behaviors.len() != n || emotions.len() != n {
        return Err(Error::InvalidInput(
            "features, behaviors and emotions differ in length".into(),
        ));
    }
    let k = bank.len();
    if k > MAX_EMOTIONS {
        return Err(Error::InvalidInput(format!(
            "{k} emotions exceed the exhaustive-inference limit"
        )));
    }
    let dim = bank.dim();
    let examples = features
        .iter()
        .map(|x| {
            let x = x.as_ref();
            Error::check_dim(dim, x.len())?;
            let scores = emotion_scores(x, bank)?;
            Ok(Example {
                x,
                xx: dot(x, x),
                unary_norm: scores.iter().map(|s| s * s + 1.0).collect(),
                scores,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for e in emotions {
        Error::check_dim(k, e.len())?;
    }

    let results = Behavior::ALL
        .par_iter()
        .enumerate()
        .map(|(ci, &class)| train_class(&examples, behaviors, emotions, class, ci, dim, k, cfg))
        .collect::<Result<Vec<_>>>()?;
    let (models, traces) = results.into_iter().unzip();
    Ok(LatentTraining {
        models: LatentModelSet::new(cfg.lambda, models, bank.clone())?,
        traces,
    })
}

#[allow(clippy::too_many_arguments)]
fn train_class(
    examples: &[Example<'_>],
    behaviors: &[Behavior],
    emotions: &[EmotionVector],
    class: Behavior,
    class_index: usize,
    dim: usize,
    k: usize,
    cfg: &LatentConfig,
) -> Result<(LatentWeights, ClassTrace)> {
    let y: Vec<f64> = behaviors.iter().map(|&b| if b == class { 1.0 } else { -1.0 }).collect();
    if !y.iter().any(|&v| v > 0.0) {
        return Err(Error::InvalidInput(format!("behavior `{class}` has no training clips")));
    }
    let problem = ClassProblem::new(examples, y, k, cfg.lambda, !cfg.freeze_pairwise);

    let mut slots: Vec<Slot> = (0..examples.len())
        .map(|j| {
            if problem.y[j] > 0.0 {
                let e = match cfg.init_mode {
                    InitMode::BehaviorInherited => emotions[j].mask(),
                    InitMode::BankPredicted => threshold(&examples[j].scores),
                };
                Slot::Fixed { e, alpha: 0.0 }
            } else if cfg.clamp_latent {
                Slot::Fixed {
                    e: emotions[j].mask(),
                    alpha: 0.0,
                }
            } else {
                Slot::Max { set: Vec::new() }
            }
        })
        .collect();

    let full_objective = |w: &LatentWeights, slots: &[Slot]| {
        if cfg.clamp_latent {
            problem.objective(w, slots)
        } else {
            problem.latent_objective(w)
        }
    };

    let mut current = LatentWeights::zeros(dim, k);
    let mut history = vec![full_objective(&current, &slots)];
    let mut inner_passes = Vec::new();
    let mut converged = false;

    for outer in 0..cfg.outer_iters {
        let seed = cfg.inner.seed ^ ((class_index as u64) << 32) ^ outer as u64;
        let (candidate, candidate_obj, passes) = problem.solve(&mut slots, dim, &cfg.inner, seed);
        inner_passes.push(passes);
        // The previous weights are feasible for this subproblem too; never
        // accept a worse point.
        if problem.objective(&current, &slots) >= candidate_obj {
            current = candidate;
        }

        let obj = full_objective(&current, &slots);
        if !obj.is_finite() {
            return Err(Error::NonFinite(format!(
                "latent objective for `{class}` at outer iteration {}",
                outer + 1
            )));
        }
        history.push(obj);

        if cfg.clamp_latent {
            converged = true;
            break;
        }
        let totals = problem.totals(&current);
        let mut changed = false;
        for (j, slot) in slots.iter_mut().enumerate() {
            if let Slot::Fixed { e, .. } = slot {
                let (best, _) = problem.best(&current, &totals, j);
                if best != *e {
                    *e = best;
                    changed = true;
                }
            }
        }
        if !changed {
            converged = true;
            break;
        }
    }

    Ok((
        current,
        ClassTrace {
            class,
            objective_history: history,
            inner_passes,
            converged,
        },
    ))
}
