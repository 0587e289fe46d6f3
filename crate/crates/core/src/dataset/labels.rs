use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Anything usable as a class label by the classifiers and metrics.
pub trait Label:
    Copy + Eq + Ord + Hash + fmt::Debug + fmt::Display + Serialize + DeserializeOwned + Send + Sync
{
}

impl<T> Label for T where
    T: Copy + Eq + Ord + Hash + fmt::Debug + fmt::Display + Serialize + DeserializeOwned + Send + Sync
{
}

macro_rules! label_enum {
    ($(#[$meta:meta])* $name:ident, $kind:literal, [$($variant:ident => $text:literal),+ $(,)?]) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
            pub const COUNT: usize = Self::ALL.len();

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_index(index: usize) -> Option<Self> {
                Self::ALL.get(index).copied()
            }

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    _ => Err(Error::UnknownLabel {
                        kind: $kind,
                        value: s.to_string(),
                    }),
                }
            }
        }
    };
}

label_enum!(
    /// Crowd behavior classes, in the fixed order used for tie-breaking and
    /// matrix indexing.
    Behavior,
    "behavior",
    [
        Panic => "panic",
        Fight => "fight",
        Congestion => "congestion",
        Obstacle => "obstacle",
        Neutral => "neutral",
    ]
);

label_enum!(
    /// Basic crowd emotions, in fixed order.
    Emotion,
    "emotion",
    [
        Angry => "angry",
        Happy => "happy",
        Excited => "excited",
        Scared => "scared",
        Sad => "sad",
        Neutral => "neutral",
    ]
);

/// Descriptor channel of a clip. `Generic` is used by synthetic data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Trajectory,
    Hog,
    Hof,
    Mbh,
    Generic,
}

impl ChannelKind {
    pub const ALL: &'static [ChannelKind] = &[
        ChannelKind::Trajectory,
        ChannelKind::Hog,
        ChannelKind::Hof,
        ChannelKind::Mbh,
        ChannelKind::Generic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Trajectory => "trajectory",
            ChannelKind::Hog => "hog",
            ChannelKind::Hof => "hof",
            ChannelKind::Mbh => "mbh",
            ChannelKind::Generic => "generic",
        }
    }
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ChannelKind::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::UnknownLabel {
                kind: "channel",
                value: s.to_string(),
            })
    }
}

/// Binary emotion configuration `e = (e_1, ..., e_K)`.
///
/// Ground-truth vectors are one-hot; latent configurations may take any of
/// the `2^K` patterns. Ordering is lexicographic on `(e_1, ..., e_K)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EmotionVector {
    mask: u32,
    len: u8,
}

impl EmotionVector {
    pub const MAX_LEN: usize = 31;

    pub fn zeros(len: usize) -> Self {
        assert!(len <= Self::MAX_LEN, "emotion vector too long");
        EmotionVector {
            mask: 0,
            len: len as u8,
        }
    }

    pub fn one_hot(emotion: Emotion) -> Self {
        let mut e = Self::zeros(Emotion::COUNT);
        e.set(emotion.index(), true);
        e
    }

    /// Builds a vector from its bitmask, bit `l` holding `e_l`.
    pub fn from_mask(len: usize, mask: u32) -> Self {
        assert!(len <= Self::MAX_LEN, "emotion vector too long");
        EmotionVector {
            mask: mask & ((1u32 << len) - 1),
            len: len as u8,
        }
    }

    /// The `rank`-th vector in lexicographic order.
    pub fn from_lex_rank(len: usize, rank: u32) -> Self {
        let mut e = Self::zeros(len);
        for l in 0..len {
            e.set(l, (rank >> (len - 1 - l)) & 1 == 1);
        }
        e
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self> {
        if bits.len() > Self::MAX_LEN {
            return Err(Error::InvalidInput(format!(
                "emotion vector of length {} exceeds {}",
                bits.len(),
                Self::MAX_LEN
            )));
        }
        let mut e = Self::zeros(bits.len());
        for (l, &b) in bits.iter().enumerate() {
            match b {
                0 => {}
                1 => e.set(l, true),
                other => {
                    return Err(Error::InvalidInput(format!(
                        "emotion entry {l} is {other}, expected 0 or 1"
                    )))
                }
            }
        }
        Ok(e)
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn mask(&self) -> u32 {
        self.mask
    }

    pub fn get(&self, l: usize) -> bool {
        assert!(l < self.len());
        (self.mask >> l) & 1 == 1
    }

    pub fn set(&mut self, l: usize, on: bool) {
        assert!(l < self.len());
        if on {
            self.mask |= 1 << l;
        } else {
            self.mask &= !(1 << l);
        }
    }

    /// `‖e‖₀`
    pub fn count_ones(&self) -> usize {
        self.mask.count_ones() as usize
    }

    pub fn lex_rank(&self) -> u32 {
        (0..self.len())
            .filter(|&l| self.get(l))
            .map(|l| 1u32 << (self.len() - 1 - l))
            .sum()
    }

    /// The single active emotion of a one-hot vector over the standard
    /// taxonomy.
    pub fn single(&self) -> Option<Emotion> {
        if self.len() == Emotion::COUNT && self.count_ones() == 1 {
            Emotion::from_index(self.mask.trailing_zeros() as usize)
        } else {
            None
        }
    }

    pub fn bits(&self) -> Vec<u8> {
        (0..self.len()).map(|l| self.get(l) as u8).collect()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        (0..self.len()).map(|l| if self.get(l) { 1.0 } else { 0.0 }).collect()
    }
}

impl PartialOrd for EmotionVector {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for EmotionVector {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.bits().cmp(&other.bits())
    }
}

impl fmt::Display for EmotionVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits() {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl Serialize for EmotionVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.bits().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for EmotionVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let bits = Vec::<u8>::deserialize(deserializer)?;
        EmotionVector::from_bits(&bits).map_err(serde::de::Error::custom)
    }
}

/// Aggregates annotator labels by majority; ties go to the emotion that
/// comes first in the fixed order.
pub fn majority_vote(annotations: &[Emotion]) -> Result<Emotion> {
    if annotations.is_empty() {
        return Err(Error::InvalidInput(
            "majority vote over an empty annotation list".into(),
        ));
    }
    let mut counts = [0usize; Emotion::COUNT];
    for e in annotations {
        counts[e.index()] += 1;
    }
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    Ok(Emotion::ALL[best])
}
