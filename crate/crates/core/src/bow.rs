//! Vector quantization: k-means codebooks and bag-of-visual-words
//! histograms, one codebook per descriptor channel.

use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{ChannelKind, ClipRecord, Dataset};
use crate::error::{Error, Result};
use crate::linalg::sq_dist;

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Descriptors drawn from one channel of a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorSample {
    pub channel: ChannelKind,
    pub dim: usize,
    pub vectors: Vec<Vec<f64>>,
    /// Positions of the drawn descriptors in canonical order (clip order,
    /// then descriptor order within a clip).
    pub indices: Vec<usize>,
}

/// Draws `⌈fraction × total⌉` descriptors of `channel` uniformly without
/// replacement. The result is sorted in canonical order.
pub fn sample_descriptors(ds: &Dataset, channel: ChannelKind, fraction: f64, seed: u64) -> Result<DescriptorSample> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "sample fraction {fraction} not in (0, 1]"
        )));
    }
    if ds.is_empty() {
        return Err(Error::InvalidInput(
            "cannot sample descriptors from an empty dataset".into(),
        ));
    }
    let mut pool: Vec<&[f64]> = Vec::new();
    let mut dim = None;
    for clip in &ds.clips {
        let ch = clip.channel(channel).ok_or_else(|| Error::MissingChannel {
            clip: clip.clip_id.clone(),
            channel: channel.to_string(),
        })?;
        let expected = *dim.get_or_insert(ch.dim);
        Error::check_dim(expected, ch.dim)?;
        pool.extend(ch.descriptors.iter().map(Vec::as_slice));
    }
    let total = pool.len();
    if total == 0 {
        return Err(Error::InvalidInput(format!("no `{channel}` descriptors to sample")));
    }
    let k = ((fraction * total as f64).ceil() as usize).clamp(1, total);
    let mut indices: Vec<usize> = if k == total {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        index::sample(&mut rng, total, k).into_vec()
    };
    indices.sort_unstable();
    Ok(DescriptorSample {
        channel,
        dim: dim.unwrap_or(0),
        vectors: indices.iter().map(|&i| pool[i].to_vec()).collect(),
        indices,
    })
}

/// `d` visual words for one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub channel: ChannelKind,
    pub d: usize,
    pub centroids: Vec<Vec<f64>>,
}

impl Codebook {
    pub fn new(channel: ChannelKind, centroids: Vec<Vec<f64>>) -> Result<Self> {
        let cb = Codebook {
            channel,
            d: centroids.len(),
            centroids,
        };
        cb.check()?;
        Ok(cb)
    }

    fn check(&self) -> Result<()> {
        if self.d == 0 || self.centroids.len() != self.d {
            return Err(Error::InvalidInput(format!(
                "codebook declares {} words but has {} centroids",
                self.d,
                self.centroids.len()
            )));
        }
        let dim = self.dim();
        for c in &self.centroids {
            Error::check_dim(dim, c.len())?;
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("non-finite centroid".into()));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    /// Index of the nearest centroid; ties go to the lowest index.
    pub fn nearest(&self, x: &[f64]) -> usize {
        nearest(&self.centroids, x).0
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cb: Codebook = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cb.check()?;
        Ok(cb)
    }
}

fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub d: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl KMeansParams {
    pub fn new(d: usize, seed: u64) -> Self {
        KMeansParams {
            d,
            seed,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub codebook: Codebook,
    /// Total squared distance after every assignment step.
    pub distortion_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Lloyd's algorithm with k-means++ seeding. Empty clusters are reseeded on
/// the point farthest from its centroid.
pub fn kmeans(sample: &DescriptorSample, params: KMeansParams) -> Result<KMeansFit> {
    let points = &sample.vectors;
    let k = params.d;
    if k == 0 {
        return Err(Error::InvalidConfig("codebook size must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::InvalidInput(format!(
            "{} sample descriptors cannot seed {k} words",
            points.len()
        )));
    }
    let dim = sample.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = kmeans_pp(points, k, &mut rng);

    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut assign: Vec<(usize, f64)> = points.par_iter().map(|p| nearest(&centroids, p)).collect();
    history.push(assign.iter().map(|a| a.1).sum());

    while iterations < params.max_iter {
        iterations += 1;

        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &(j, _)) in points.iter().zip(&assign) {
            counts[j] += 1;
            for (s, v) in sums[j].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut updated = centroids.clone();
        for j in 0..k {
            if counts[j] > 0 {
                let inv = 1.0 / counts[j] as f64;
                updated[j] = sums[j].iter().map(|s| s * inv).collect();
            }
        }

        // Reseed empty clusters on the currently worst-served points.
        let empty: Vec<usize> = (0..k).filter(|&j| counts[j] == 0).collect();
        if !empty.is_empty() {
            let mut cost: Vec<f64> = points
                .iter()
                .zip(&assign)
                .map(|(p, &(j, _))| sq_dist(p, &updated[j]))
                .collect();
            for j in empty {
                let far = crate::linalg::argmax(&cost);
                if cost[far] <= 0.0 {
                    break;
                }
                updated[j] = points[far].clone();
                cost[far] = 0.0;
            }
        }

        let movement = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;

        assign = points.par_iter().map(|p| nearest(&centroids, p)).collect();
        history.push(assign.iter().map(|a| a.1).sum());

        if movement < params.tol {
            converged = true;
            break;
        }
    }

    Ok(KMeansFit {
        codebook: Codebook::new(sample.channel, centroids)?,
        distortion_history: history,
        iterations,
        converged,
    })
}

fn kmeans_pp(points: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)].clone());
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = Some(i);
                    break;
                }
            }
            chosen.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap_or(0))
        } else {
            // Every point coincides with a chosen centroid.
            rng.random_range(0..n)
        };
        let c = points[pick].clone();
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

pub fn build_codebook(sample: &DescriptorSample, d: usize, seed: u64, max_iter: usize, tol: f64) -> Result<Codebook> {
    kmeans(sample, KMeansParams { d, seed, max_iter, tol }).map(|fit| fit.codebook)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BowHistogram {
    pub counts: Vec<f64>,
    pub normalized: bool,
}

/// Word index of every descriptor in the clip's channel.
pub fn assign_words(clip: &ClipRecord, cb: &Codebook) -> Result<Vec<usize>> {
    let ch = clip.channel(cb.channel).ok_or_else(|| Error::MissingChannel {
        clip: clip.clip_id.clone(),
        channel: cb.channel.to_string(),
    })?;
    Error::check_dim(cb.dim(), ch.dim)?;
    ch.descriptors
        .iter()
        .map(|d| {
            Error::check_dim(cb.dim(), d.len())?;
            Ok(cb.nearest(d))
        })
        .collect()
}

/// Bag-of-words histogram of one clip. A clip without descriptors maps to
/// the zero histogram, normalized or not.
pub fn quantize(clip: &ClipRecord, cb: &Codebook, normalize: bool) -> Result<BowHistogram> {
    let words = assign_words(clip, cb)?;
    let mut counts = vec![0.0; cb.d];
    for w in &words {
        counts[*w] += 1.0;
    }
    if normalize && !words.is_empty() {
        let inv = 1.0 / words.len() as f64;
        counts.iter_mut().for_each(|c| *c *= inv);
    }
    Ok(BowHistogram {
        counts,
        normalized: normalize,
    })
}

/// Sets every clip's `feature` to its bag-of-words encoding.
///
/// With `combine`, the feature is the concatenation of one histogram per
/// codebook in fixed channel order; otherwise exactly one codebook must be
/// given.
pub fn encode_dataset(ds: &Dataset, codebooks: &[Codebook], combine: bool, normalize: bool) -> Result<Dataset> {
    if codebooks.is_empty() {
        return Err(Error::InvalidInput("no codebooks to encode with".into()));
    }
    if !combine && codebooks.len() != 1 {
        return Err(Error::InvalidInput(format!(
            "{} codebooks given without `combine`",
            codebooks.len()
        )));
    }
    let mut ordered: Vec<&Codebook> = codebooks.iter().collect();
    ordered.sort_by_key(|cb| cb.channel);
    if ordered.windows(2).any(|w| w[0].channel == w[1].channel) {
        return Err(Error::InvalidInput("duplicate codebook channel".into()));
    }

    let clips = ds
        .clips
        .par_iter()
        .map(|clip| {
            let mut feature = Vec::with_capacity(ordered.iter().map(|cb| cb.d).sum());
            for cb in &ordered {
                if clip.channel(cb.channel).is_none() {
                    return Err(Error::MissingChannel {
                        clip: clip.clip_id.clone(),
                        channel: cb.channel.to_string(),
                    });
                }
                feature.extend(quantize(clip, cb, normalize)?.counts);
            }
            let mut out = clip.clone();
            out.feature = Some(feature);
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset::new(clips))
}

/// Builds one codebook per channel from `ds` and encodes it.
pub fn fit_codebooks(
    ds: &Dataset,
    channels: &[ChannelKind],
    d: usize,
    fraction: f64,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<Vec<Codebook>> {
    channels
        .iter()
        .enumerate()
        .map(|(i, &ch)| {
            let s = seed.wrapping_add(i as u64);
            let sample = sample_descriptors(ds, ch, fraction, s)?;
            build_codebook(&sample, d, s, max_iter, tol)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Behavior, DescriptorChannel, Emotion, EmotionVector};

    fn clip(id: &str, kind: ChannelKind, descriptors: Vec<Vec<f64>>) -> ClipRecord {
        let dim = descriptors.first().map_or(2, Vec::len);
        ClipRecord {
            clip_id: id.into(),
            sequence_id: "s".into(),
            behavior: Behavior::Panic,
            emotion_annotations: vec![Emotion::Angry],
            emotion: EmotionVector::one_hot(Emotion::Angry),
            channels: vec![DescriptorChannel::new(kind, dim, descriptors)],
            feature: None,
        }
    }

    fn sample_of(vectors: Vec<Vec<f64>>) -> DescriptorSample {
        DescriptorSample {
            channel: ChannelKind::Generic,
            dim: vectors[0].len(),
            indices: (0..vectors.len()).collect(),
            vectors,
        }
    }

    #[test]
    fn full_fraction_keeps_canonical_order() {
        let ds = Dataset::new(vec![
            clip("a", ChannelKind::Hog, vec![vec![1.0, 0.0], vec![2.0, 0.0]]),
            clip("b", ChannelKind::Hog, vec![vec![3.0, 0.0]]),
        ]);
        let s = sample_descriptors(&ds, ChannelKind::Hog, 1.0, 7).unwrap();
        assert_eq!(s.vectors, vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![3.0, 0.0]]);
        assert!(matches!(
            sample_descriptors(&ds, ChannelKind::Mbh, 1.0, 7),
            Err(Error::MissingChannel { .. })
        ));
        assert!(sample_descriptors(&ds, ChannelKind::Hog, 0.0, 7).is_err());
        assert!(sample_descriptors(&Dataset::new(vec![]), ChannelKind::Hog, 0.5, 7).is_err());
    }

    #[test]
    fn half_fraction_exact_count_no_duplicates() {
        let descriptors = (0..100).map(|i| vec![i as f64]).collect();
        let ds = Dataset::new(vec![clip("a", ChannelKind::Generic, descriptors)]);
        let s = sample_descriptors(&ds, ChannelKind::Generic, 0.5, 1).unwrap();
        assert_eq!(s.vectors.len(), 50);
        let mut seen: Vec<usize> = s.indices.clone();
        seen.dedup();
        assert_eq!(seen.len(), 50);
        assert!(s.indices.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn single_word_is_the_mean() {
        let s = sample_of(vec![vec![0.0, 1.0], vec![2.0, 3.0], vec![4.0, -1.0]]);
        let cb = build_codebook(&s, 1, 0, 100, 1e-9).unwrap();
        assert!((cb.centroids[0][0] - 2.0).abs() < 1e-9);
        assert!((cb.centroids[0][1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn d_equal_distinct_points_has_zero_distortion() {
        let s = sample_of(vec![
            vec![0.0, 0.0],
            vec![5.0, 5.0],
            vec![0.0, 0.0],
            vec![-3.0, 2.0],
            vec![5.0, 5.0],
        ]);
        let fit = kmeans(&s, KMeansParams::new(3, 11)).unwrap();
        assert_eq!(*fit.distortion_history.last().unwrap(), 0.0);
    }

    #[test]
    fn too_small_sample_is_an_error() {
        let s = sample_of(vec![vec![0.0], vec![1.0]]);
        assert!(build_codebook(&s, 3, 0, 10, 1e-6).is_err());
        assert!(build_codebook(&s, 0, 0, 10, 1e-6).is_err());
    }

    #[test]
    fn centroids_as_descriptors_give_one_count_each() {
        let cb = Codebook::new(
            ChannelKind::Generic,
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
        )
        .unwrap();
        let c = clip("a", ChannelKind::Generic, cb.centroids.clone());
        let h = quantize(&c, &cb, false).unwrap();
        assert_eq!(h.counts, vec![1.0, 1.0, 1.0]);
        let h = quantize(&c, &cb, true).unwrap();
        assert!((h.counts.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_clip_is_zero_histogram() {
        let cb = Codebook::new(ChannelKind::Generic, vec![vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap();
        let mut c = clip("a", ChannelKind::Generic, vec![]);
        c.channels[0].dim = 2;
        assert_eq!(quantize(&c, &cb, true).unwrap().counts, vec![0.0, 0.0]);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let cb = Codebook::new(ChannelKind::Generic, vec![vec![-1.0], vec![1.0]]).unwrap();
        assert_eq!(cb.nearest(&[0.0]), 0);
    }

    #[test]
    fn quantize_errors() {
        let cb = Codebook::new(ChannelKind::Hog, vec![vec![0.0, 0.0]]).unwrap();
        let c = clip("a", ChannelKind::Hof, vec![vec![1.0, 1.0]]);
        assert!(matches!(quantize(&c, &cb, true), Err(Error::MissingChannel { .. })));
        let c = clip("a", ChannelKind::Hog, vec![vec![1.0, 1.0, 1.0]]);
        assert!(matches!(quantize(&c, &cb, true), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn encode_dims_and_block_order() {
        let mut a = clip("a", ChannelKind::Mbh, vec![vec![0.0; 3]]);
        a.channels
            .push(DescriptorChannel::new(ChannelKind::Hog, 2, vec![vec![9.0, 9.0]]));
        let ds = Dataset::new(vec![a]);
        let hog = Codebook::new(
            ChannelKind::Hog,
            (0..4).map(|i| vec![i as f64 * 3.0, i as f64 * 3.0]).collect(),
        )
        .unwrap();
        let mbh = Codebook::new(ChannelKind::Mbh, (0..8).map(|i| vec![i as f64; 3]).collect()).unwrap();

        let single = encode_dataset(&ds, std::slice::from_ref(&mbh), false, false).unwrap();
        assert_eq!(single.clips[0].feature.as_ref().unwrap().len(), 8);

        // Codebooks passed out of order still land as [hog | mbh].
        let both = encode_dataset(&ds, &[mbh.clone(), hog.clone()], true, false).unwrap();
        let f = both.clips[0].feature.as_ref().unwrap();
        assert_eq!(f.len(), 12);
        assert_eq!(&f[..4], &[0.0, 0.0, 0.0, 1.0]);
        assert_eq!(f[4], 1.0);

        assert!(encode_dataset(&ds, &[mbh.clone(), hog], false, false).is_err());
        let traj = Codebook::new(ChannelKind::Trajectory, vec![vec![0.0]]).unwrap();
        assert!(matches!(
            encode_dataset(&ds, &[mbh, traj], true, false),
            Err(Error::MissingChannel { .. })
        ));
    }

    #[test]
    fn codebook_json_shape() {
        let cb = Codebook::new(ChannelKind::Hof, vec![vec![1.5, 2.0]]).unwrap();
        let v: serde_json::Value = serde_json::to_value(&cb).unwrap();
        assert_eq!(v["channel"], "hof");
        assert_eq!(v["d"], 1);
        assert_eq!(v["centroids"][0][1], 2.0);
    }
}
