//! Linear SVMs trained from scratch.
//!
//! The binary problem is
//!
//! ```text
//! min_{w,b}  λ‖w‖² + (1/n) Σ max(0, 1 − y_i (w·x_i + b))
//! ```
//!
//! with an unregularized bias. It is solved in the dual by SMO with
//! second-order working-set selection; the bias is recovered exactly as the
//! minimizer of the hinge term for the current `w`. Training stops once the
//! duality gap falls below `tol`.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::linalg::{argmax, axpy, dot};

const TAU: f64 = 1e-12;
/// Above this many Gram entries the kernel is evaluated on demand.
const GRAM_ENTRY_LIMIT: usize = 6_500_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub tol: f64,
    /// Kept in the config snapshot; SMO itself is deterministic.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.01,
            epochs: 200,
            tol: 1e-6,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be positive".into()));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::InvalidConfig(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Why a model fell back to a constant decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Degenerate {
    /// Every training label was +1.
    AllPositive,
    /// Every training label was −1, or the class had no examples.
    AllNegative,
}

/// Solver diagnostics; not persisted.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FitInfo {
    /// Best primal objective seen after each epoch.
    pub objective_history: Vec<f64>,
    pub objective: f64,
    pub duality_gap: f64,
    pub epochs: usize,
    pub degenerate: Option<Degenerate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub lambda: f64,
    #[serde(skip)]
    pub fit: FitInfo,
}

impl LinearModel {
    pub fn new(w: Vec<f64>, b: f64, lambda: f64) -> Self {
        LinearModel {
            w,
            b,
            lambda,
            fit: FitInfo::default(),
        }
    }

    pub fn zeros(dim: usize, lambda: f64) -> Self {
        Self::new(vec![0.0; dim], 0.0, lambda)
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn is_degenerate(&self) -> bool {
        self.fit.degenerate.is_some()
    }
}

/// Signed margin `w·x + b`.
pub fn score(m: &LinearModel, x: &[f64]) -> Result<f64> {
    Error::check_dim(m.dim(), x.len())?;
    Ok(dot(&m.w, x) + m.b)
}

/// The training objective `λ‖w‖² + (1/n) Σ hinge`.
pub fn objective<X: AsRef<[f64]>>(features: &[X], labels: &[f64], w: &[f64], b: f64, lambda: f64) -> f64 {
    let n = features.len() as f64;
    let loss: f64 = features
        .iter()
        .zip(labels)
        .map(|(x, y)| (1.0 - y * (dot(w, x.as_ref()) + b)).max(0.0))
        .sum();
    lambda * dot(w, w) + loss / n
}

fn check_features<X: AsRef<[f64]>>(features: &[X]) -> Result<usize> {
    let first = features
        .first()
        .ok_or_else(|| Error::InvalidInput("no training examples".into()))?;
    let dim = first.as_ref().len();
    for x in features {
        Error::check_dim(dim, x.as_ref().len())?;
        if x.as_ref().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite feature value".into()));
        }
    }
    Ok(dim)
}

/// Gram matrix, materialized when small enough.
struct Kernel<'a, X> {
    features: &'a [X],
    gram: Option<Vec<f64>>,
    diag: Vec<f64>,
}

impl<'a, X: AsRef<[f64]> + Sync> Kernel<'a, X> {
    fn new(features: &'a [X]) -> Self {
        let n = features.len();
        let diag = features.iter().map(|x| dot(x.as_ref(), x.as_ref())).collect();
        let gram = (n * n <= GRAM_ENTRY_LIMIT).then(|| {
            let mut g = vec![0.0; n * n];
            g.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
                let xi = features[i].as_ref();
                for (j, v) in row.iter_mut().enumerate() {
                    *v = dot(xi, features[j].as_ref());
                }
            });
            g
        });
        Kernel { features, gram, diag }
    }

    fn column(&self, i: usize, out: &mut [f64]) {
        let n = self.features.len();
        match &self.gram {
            Some(g) => out.copy_from_slice(&g[i * n..(i + 1) * n]),
            None => {
                let xi = self.features[i].as_ref();
                for (v, xj) in out.iter_mut().zip(self.features) {
                    *v = dot(xi, xj.as_ref());
                }
            }
        }
    }
}

/// Bias minimizing `Σ max(0, 1 − y_i (m_i + b))` for fixed margins `m`.
///
/// The hinge sum is piecewise linear in `b` with breakpoints `y_i − m_i`;
/// its slope rises by one at each breakpoint starting from `−#positives`, so
/// the flat minimum lies between the P-th and (P+1)-th smallest breakpoint.
/// The midpoint of that interval is returned.
pub(crate) fn optimal_bias(margins: &[f64], labels: &[f64]) -> f64 {
    let positives = labels.iter().filter(|&&y| y > 0.0).count();
    let mut breaks: Vec<f64> = margins.iter().zip(labels).map(|(m, y)| y - m).collect();
    breaks.sort_by(f64::total_cmp);
    match positives {
        0 => breaks[0] - 1.0,
        p if p == breaks.len() => breaks[p - 1] + 1.0,
        p => 0.5 * (breaks[p - 1] + breaks[p]),
    }
}

/// Trains a binary model on labels in {−1, +1}.
///
/// Single-class input yields `w = 0` with `b = ±1` (the present class) and
/// sets [`FitInfo::degenerate`].
pub fn train_binary<X: AsRef<[f64]> + Sync>(features: &[X], labels: &[f64], cfg: &TrainConfig) -> Result<LinearModel> {
    cfg.validate()?;
    check_features(features)?;
    check_labels(features.len(), labels)?;
    let kernel = Kernel::new(features);
    Ok(solve(&kernel, labels, cfg))
}

fn check_labels(n: usize, labels: &[f64]) -> Result<()> {
    if labels.len() != n {
        return Err(Error::InvalidInput(format!(
            "{} labels for {} examples",
            labels.len(),
            n
        )));
    }
    if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
        return Err(Error::InvalidInput("binary labels must be +1 or -1".into()));
    }
    Ok(())
}

fn degenerate_model(dim: usize, lambda: f64, sign: f64, n: usize) -> LinearModel {
    let kind = if sign > 0.0 {
        Degenerate::AllPositive
    } else {
        Degenerate::AllNegative
    };
    log::warn!("single-class training set ({n} examples): constant {kind:?} decision");
    let mut m = LinearModel::new(vec![0.0; dim], sign, lambda);
    m.fit = FitInfo {
        objective_history: vec![0.0],
        objective: 0.0,
        duality_gap: 0.0,
        epochs: 0,
        degenerate: Some(kind),
    };
    m
}

fn solve<X: AsRef<[f64]> + Sync>(kernel: &Kernel<'_, X>, y: &[f64], cfg: &TrainConfig) -> LinearModel {
    let xs = kernel.features;
    let n = xs.len();
    let dim = xs[0].as_ref().len();
    let lambda = cfg.lambda;

    let positives = y.iter().filter(|&&v| v > 0.0).count();
    if positives == 0 || positives == n {
        return degenerate_model(dim, lambda, y[0], n);
    }

    // ½‖w‖² + C Σ ξ with C = 1/(2λn) is the primal divided by 2λ.
    let c = 1.0 / (2.0 * lambda * n as f64);
    let scale = 2.0 * lambda;

    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let mut col_i = vec![0.0; n];
    let mut col_j = vec![0.0; n];

    let mut best_w = vec![0.0; dim];
    let mut best_b = optimal_bias(&vec![0.0; n], y);
    let mut best_obj = objective(xs, y, &best_w, best_b, lambda);
    let mut history = Vec::new();
    let mut gap = f64::INFINITY;
    let mut epochs = 0;

    'outer: for epoch in 1..=cfg.epochs {
        epochs = epoch;
        let mut optimal = false;
        for _ in 0..n {
            let Some((i, j)) = select_pair(kernel, &alpha, &grad, y, c, &mut col_i) else {
                optimal = true;
                break;
            };
            kernel.column(j, &mut col_j);
            let (old_i, old_j) = (alpha[i], alpha[j]);
            update_pair(&mut alpha, &grad, y, c, i, j, kernel.diag[i], kernel.diag[j], col_i[j]);
            let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
            if di == 0.0 && dj == 0.0 {
                optimal = true;
                break;
            }
            let (yi, yj) = (y[i], y[j]);
            for k in 0..n {
                grad[k] += y[k] * (yi * col_i[k] * di + yj * col_j[k] * dj);
            }
        }

        // Rebuild w and the gradient from α to keep round-off from drifting.
        let mut w = vec![0.0; dim];
        for (k, x) in xs.iter().enumerate() {
            if alpha[k] != 0.0 {
                axpy(alpha[k] * y[k], x.as_ref(), &mut w);
            }
        }
        let margins: Vec<f64> = xs.iter().map(|x| dot(&w, x.as_ref())).collect();
        for k in 0..n {
            grad[k] = y[k] * margins[k] - 1.0;
        }
        let b = optimal_bias(&margins, y);
        let primal = objective(xs, y, &w, b, lambda);
        let dual = scale * (alpha.iter().sum::<f64>() - 0.5 * dot(&w, &w));
        if primal < best_obj {
            best_obj = primal;
            best_w = w;
            best_b = b;
        }
        gap = best_obj - dual;
        history.push(best_obj);
        if gap <= cfg.tol || optimal {
            break 'outer;
        }
    }

    if !best_obj.is_finite() {
        log::error!("non-finite SVM objective");
    }
    let mut m = LinearModel::new(best_w, best_b, lambda);
    m.fit = FitInfo {
        objective_history: history,
        objective: best_obj,
        duality_gap: gap.max(0.0),
        epochs,
        degenerate: None,
    };
    m
}

/// Trains `min λ‖w‖² + (1/n) Σ max(0, 1 − y_i w·x_i)` without a bias term
/// by dual coordinate descent. Coordinates are visited in a fresh
/// permutation each epoch, drawn from `cfg.seed`.
pub fn train_binary_unbiased<X: AsRef<[f64]> + Sync>(
    features: &[X],
    labels: &[f64],
    cfg: &TrainConfig,
) -> Result<LinearModel> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    cfg.validate()?;
    let dim = check_features(features)?;
    check_labels(features.len(), labels)?;
    let n = features.len();
    let lambda = cfg.lambda;
    let c = 1.0 / (2.0 * lambda * n as f64);
    let scale = 2.0 * lambda;
    let diag: Vec<f64> = features.iter().map(|x| dot(x.as_ref(), x.as_ref())).collect();

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let mut alpha = vec![0.0; n];
    let mut w = vec![0.0; dim];
    let mut best_w = w.clone();
    let mut best_obj = objective(features, labels, &w, 0.0, lambda);
    let mut history = Vec::new();
    let mut gap = f64::INFINITY;
    let mut epochs = 0;

    for epoch in 1..=cfg.epochs {
        epochs = epoch;
        order.shuffle(&mut rng);
        for &i in &order {
            if diag[i] == 0.0 {
                continue;
            }
            let x = features[i].as_ref();
            let g = labels[i] * dot(&w, x) - 1.0;
            let next = (alpha[i] - g / diag[i]).clamp(0.0, c);
            let delta = next - alpha[i];
            if delta != 0.0 {
                alpha[i] = next;
                axpy(delta * labels[i], x, &mut w);
            }
        }
        let primal = objective(features, labels, &w, 0.0, lambda);
        let dual = scale * (alpha.iter().sum::<f64>() - 0.5 * dot(&w, &w));
        if primal < best_obj {
            best_obj = primal;
            best_w.clone_from(&w);
        }
        gap = best_obj - dual;
        history.push(best_obj);
        if gap <= cfg.tol {
            break;
        }
    }

    let mut m = LinearModel::new(best_w, 0.0, lambda);
    m.fit = FitInfo {
        objective_history: history,
        objective: best_obj,
        duality_gap: gap.max(0.0),
        epochs,
        degenerate: None,
    };
    Ok(m)
}

/// Second-order working-set selection. Returns `None` at optimality.
fn select_pair<X: AsRef<[f64]> + Sync>(
    kernel: &Kernel<'_, X>,
    alpha: &[f64],
    grad: &[f64],
    y: &[f64],
    c: f64,
    col_i: &mut [f64],
) -> Option<(usize, usize)> {
    let n = alpha.len();
    let mut gmax = f64::NEG_INFINITY;
    let mut i = usize::MAX;
    for t in 0..n {
        let in_up = if y[t] > 0.0 { alpha[t] < c } else { alpha[t] > 0.0 };
        if in_up {
            let v = -y[t] * grad[t];
            if v > gmax {
                gmax = v;
                i = t;
            }
        }
    }
    if i == usize::MAX {
        return None;
    }
    kernel.column(i, col_i);

    let mut gmin = f64::INFINITY;
    let mut best = f64::INFINITY;
    let mut j = usize::MAX;
    for t in 0..n {
        let in_low = if y[t] > 0.0 { alpha[t] > 0.0 } else { alpha[t] < c };
        if !in_low {
            continue;
        }
        let v = -y[t] * grad[t];
        gmin = gmin.min(v);
        let diff = gmax - v;
        if diff > 0.0 {
            let quad = (kernel.diag[i] + kernel.diag[t] - 2.0 * col_i[t]).max(TAU);
            let obj = -diff * diff / quad;
            if obj < best {
                best = obj;
                j = t;
            }
        }
    }
    // Stop on a numerically negligible KKT violation.
    if j == usize::MAX || gmax - gmin < 1e-12 {
        None
    } else {
        Some((i, j))
    }
}

#[allow(clippy::too_many_arguments)]
fn update_pair(alpha: &mut [f64], grad: &[f64], y: &[f64], c: f64, i: usize, j: usize, kii: f64, kjj: f64, kij: f64) {
    let (ai, aj) = (alpha[i], alpha[j]);
    let (mut ni, mut nj);
    if y[i] != y[j] {
        let quad = (kii + kjj - 2.0 * kij).max(TAU);
        let delta = (-grad[i] - grad[j]) / quad;
        let diff = ai - aj;
        ni = ai + delta;
        nj = aj + delta;
        if diff > 0.0 {
            if nj < 0.0 {
                nj = 0.0;
                ni = diff;
            }
        } else if ni < 0.0 {
            ni = 0.0;
            nj = -diff;
        }
        if diff > 0.0 {
            if ni > c {
                ni = c;
                nj = c - diff;
            }
        } else if nj > c {
            nj = c;
            ni = c + diff;
        }
    } else {
        let quad = (kii + kjj - 2.0 * kij).max(TAU);
        let delta = (grad[i] - grad[j]) / quad;
        let sum = ai + aj;
        ni = ai - delta;
        nj = aj + delta;
        if sum > c {
            if ni > c {
                ni = c;
                nj = sum - c;
            }
            if nj > c {
                nj = c;
                ni = sum - c;
            }
        } else {
            if nj < 0.0 {
                nj = 0.0;
                ni = sum;
            }
            if ni < 0.0 {
                ni = 0.0;
                nj = sum;
            }
        }
    }
    alpha[i] = ni.clamp(0.0, c);
    alpha[j] = nj.clamp(0.0, c);
}

/// One-vs-all bank over a fixed class order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "C: Label"))]
pub struct MultiClassModel<C: Label> {
    pub class_order: Vec<C>,
    pub models: Vec<LinearModel>,
}

impl<C: Label> MultiClassModel<C> {
    pub fn new(class_order: Vec<C>, models: Vec<LinearModel>) -> Result<Self> {
        let m = MultiClassModel { class_order, models };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        if self.class_order.len() != self.models.len() || self.models.is_empty() {
            return Err(Error::InvalidInput(format!(
                "{} classes but {} models",
                self.class_order.len(),
                self.models.len()
            )));
        }
        let mut sorted = self.class_order.clone();
        sorted.sort();
        sorted.dedup();
        if sorted.len() != self.class_order.len() {
            return Err(Error::InvalidInput("duplicate class in class order".into()));
        }
        let dim = self.models[0].dim();
        for m in &self.models {
            Error::check_dim(dim, m.dim())?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.models[0].dim()
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.models.iter().map(|m| score(m, x)).collect()
    }

    pub fn degenerate_classes(&self) -> Vec<C> {
        self.class_order
            .iter()
            .zip(&self.models)
            .filter(|(_, m)| m.is_degenerate())
            .map(|(c, _)| *c)
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        m.check()?;
        Ok(m)
    }
}

/// Trains one binary model per entry of `class_order`, that class positive
/// and every other example negative. Classes without examples get a
/// constant-negative model.
pub fn train_one_vs_all<C: Label, X: AsRef<[f64]> + Sync>(
    features: &[X],
    labels: &[C],
    class_order: &[C],
    cfg: &TrainConfig,
) -> Result<MultiClassModel<C>> {
    cfg.validate()?;
    check_features(features)?;
    if labels.len() != features.len() {
        return Err(Error::InvalidInput(format!(
            "{} labels for {} examples",
            labels.len(),
            features.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|l| !class_order.contains(l)) {
        return Err(Error::InvalidInput(format!("label `{bad}` not in class order")));
    }
    let mut distinct = labels.to_vec();
    distinct.sort();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "one-vs-all needs at least 2 classes, found {}",
            distinct.len()
        )));
    }
    let kernel = Kernel::new(features);
    let models = class_order
        .par_iter()
        .map(|class| {
            let y: Vec<f64> = labels.iter().map(|l| if l == class { 1.0 } else { -1.0 }).collect();
            solve(&kernel, &y, cfg)
        })
        .collect();
    MultiClassModel::new(class_order.to_vec(), models)
}

/// Trains one binary problem per label vector over shared features, reusing
/// a single Gram matrix.
pub fn train_binary_many<X: AsRef<[f64]> + Sync>(
    features: &[X],
    label_sets: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<Vec<LinearModel>> {
    cfg.validate()?;
    check_features(features)?;
    for y in label_sets {
        check_labels(features.len(), y)?;
    }
    let kernel = Kernel::new(features);
    Ok(label_sets.par_iter().map(|y| solve(&kernel, y, cfg)).collect())
}

/// Highest-scoring class (ties to the earliest class) and all scores.
pub fn predict<C: Label>(m: &MultiClassModel<C>, x: &[f64]) -> Result<(C, Vec<f64>)> {
    let scores = m.scores(x)?;
    Ok((m.class_order[argmax(&scores)], scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(lambda: f64) -> TrainConfig {
        TrainConfig {
            lambda,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn two_separable_points() {
        let m = train_binary(&[vec![-1.0], vec![1.0]], &[-1.0, 1.0], &cfg(0.01)).unwrap();
        assert!(m.w[0] > 0.0);
        assert!(score(&m, &[-1.0]).unwrap() < 0.0);
        assert!(score(&m, &[1.0]).unwrap() > 0.0);
        assert!(m.fit.duality_gap <= 1e-6);
    }

    #[test]
    fn xor_is_not_separable() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let y = [1.0, 1.0, -1.0, -1.0];
        let m = train_binary(&x, &y, &cfg(0.01)).unwrap();
        let correct = x
            .iter()
            .zip(&y)
            .filter(|(xi, yi)| score(&m, xi).unwrap() * **yi > 0.0)
            .count();
        assert!(correct <= 3);
    }

    #[test]
    fn single_class_is_degenerate() {
        let x = vec![vec![1.0], vec![2.0]];
        let m = train_binary(&x, &[1.0, 1.0], &cfg(0.1)).unwrap();
        assert_eq!(m.fit.degenerate, Some(Degenerate::AllPositive));
        assert_eq!(m.w, vec![0.0]);
        assert!(score(&m, &[5.0]).unwrap() > 0.0);
        let m = train_binary(&x, &[-1.0, -1.0], &cfg(0.1)).unwrap();
        assert_eq!(m.fit.degenerate, Some(Degenerate::AllNegative));
        assert!(score(&m, &[5.0]).unwrap() < 0.0);
    }

    #[test]
    fn input_errors() {
        let empty: Vec<Vec<f64>> = vec![];
        assert!(train_binary(&empty, &[], &cfg(0.1)).is_err());
        assert!(train_binary(&[vec![1.0], vec![1.0, 2.0]], &[1.0, -1.0], &cfg(0.1)).is_err());
        assert!(train_binary(&[vec![1.0]], &[0.5], &cfg(0.1)).is_err());
        assert!(train_binary(&[vec![1.0]], &[1.0], &cfg(0.0)).is_err());
        assert!(train_one_vs_all(&[vec![1.0], vec![2.0]], &[0usize, 0], &[0, 1], &cfg(0.1)).is_err());
    }

    #[test]
    fn score_arithmetic() {
        let m = LinearModel::new(vec![1.0, 0.0], 1.0, 0.01);
        assert_eq!(score(&m, &[2.0, 5.0]).unwrap(), 3.0);
        assert_eq!(score(&LinearModel::zeros(3, 0.01), &[4.0, -2.0, 9.0]).unwrap(), 0.0);
        assert!(matches!(score(&m, &[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn optimal_bias_is_flat_minimum() {
        let margins = [0.3, -0.2, 1.5, -2.0, 0.1];
        let labels = [1.0, -1.0, 1.0, -1.0, -1.0];
        let b = optimal_bias(&margins, &labels);
        let h = |b: f64| -> f64 {
            margins
                .iter()
                .zip(&labels)
                .map(|(m, y)| (1.0 - y * (m + b)).max(0.0))
                .sum()
        };
        for k in -400..=400 {
            let probe = k as f64 * 0.01;
            assert!(h(b) <= h(probe) + 1e-12, "b={b} probe={probe}");
        }
    }

    #[test]
    fn simplex_corners() {
        let x = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        let m = train_one_vs_all(&x, &[0usize, 1, 2], &[0, 1, 2], &cfg(0.01)).unwrap();
        assert_eq!(m.class_order, vec![0, 1, 2]);
        for (i, xi) in x.iter().enumerate() {
            assert_eq!(predict(&m, xi).unwrap().0, i);
        }
    }

    #[test]
    fn predict_ties_and_argmax() {
        let zero = MultiClassModel::new(vec![7usize, 3, 5], vec![LinearModel::zeros(2, 0.1); 3]).unwrap();
        assert_eq!(predict(&zero, &[1.0, 2.0]).unwrap().0, 7);
        let m = MultiClassModel::new(
            vec![0usize, 1, 2],
            vec![
                LinearModel::new(vec![0.0], 0.2, 0.1),
                LinearModel::new(vec![0.0], 0.9, 0.1),
                LinearModel::new(vec![0.0], -1.0, 0.1),
            ],
        )
        .unwrap();
        let (c, s) = predict(&m, &[3.0]).unwrap();
        assert_eq!(c, 1);
        assert_eq!(s, vec![0.2, 0.9, -1.0]);
        assert!(MultiClassModel::new(vec![0usize, 0], vec![LinearModel::zeros(1, 0.1); 2]).is_err());
    }

    #[test]
    fn model_json_shape() {
        let m = MultiClassModel::new(
            vec![crate::dataset::Behavior::Panic, crate::dataset::Behavior::Fight],
            vec![LinearModel::new(vec![1.0], 0.5, 0.01), LinearModel::zeros(1, 0.01)],
        )
        .unwrap();
        let v = serde_json::to_value(&m).unwrap();
        assert_eq!(v["class_order"][1], "fight");
        assert_eq!(v["models"][0]["b"], 0.5);
        assert_eq!(v["models"][0]["lambda"], 0.01);
    }
}
