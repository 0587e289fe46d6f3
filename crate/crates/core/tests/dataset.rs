use std::collections::BTreeMap;

use crowd_emotion::dataset::{
    load_manifest, majority_vote, save_manifest, synthesize_dataset, validate_dataset, Behavior, ChannelKind,
    ClipRecord, Dataset, DescriptorChannel, Emotion, EmotionVector, SynthConfig, MANIFEST_HEADER,
};
use crowd_emotion::Error;
use proptest::prelude::*;

fn small(seed: u64) -> SynthConfig {
    SynthConfig {
        n_sequences: 6,
        clips_per_sequence: 10,
        descriptors_per_clip: 4,
        descriptor_dim: 5,
        emotion_to_mean: SynthConfig::emotion_mediated(seed)
            .emotion_to_mean
            .iter()
            .map(|m| m[..5].to_vec())
            .collect(),
        ..SynthConfig::emotion_mediated(seed)
    }
}

#[test]
fn majority_vote_examples() {
    use Emotion::*;
    assert_eq!(majority_vote(&[Happy, Happy, Excited]).unwrap(), Happy);
    assert_eq!(majority_vote(&[Angry]).unwrap(), Angry);
    assert_eq!(majority_vote(&[Happy, Excited]).unwrap(), Happy);
    assert_eq!(majority_vote(&[Excited, Happy]).unwrap(), Happy);
    assert_eq!(majority_vote(&[Sad, Neutral, Neutral, Sad]).unwrap(), Sad);
    assert!(majority_vote(&[]).is_err());
}

fn emotion_strategy() -> impl Strategy<Value = Emotion> {
    (0..Emotion::COUNT).prop_map(|i| Emotion::ALL[i])
}

proptest! {
    #[test]
    fn majority_vote_is_permutation_invariant(
        votes in prop::collection::vec(emotion_strategy(), 1..12),
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = votes.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(majority_vote(&votes).unwrap(), majority_vote(&shuffled).unwrap());
    }

    #[test]
    fn majority_vote_matches_count_oracle(votes in prop::collection::vec(emotion_strategy(), 1..12)) {
        let mut counts = [0usize; 6];
        for v in &votes {
            counts[v.index()] += 1;
        }
        let best = *counts.iter().max().unwrap();
        let expected = Emotion::ALL[counts.iter().position(|&c| c == best).unwrap()];
        prop_assert_eq!(majority_vote(&votes).unwrap(), expected);
    }
}

#[test]
fn synthetic_is_deterministic_and_seed_sensitive() {
    let a = synthesize_dataset(&small(3)).unwrap();
    let b = synthesize_dataset(&small(3)).unwrap();
    assert_eq!(a, b);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let mut other = small(3);
    other.seed = 4;
    let c = synthesize_dataset(&other).unwrap();
    assert_ne!(a.clips[0].channels[0].descriptors, c.clips[0].channels[0].descriptors);
}

#[test]
fn synthetic_shape_and_balance() {
    let ds = synthesize_dataset(&SynthConfig::emotion_mediated(0)).unwrap();
    assert_eq!(ds.len(), 31 * 50);
    assert_eq!(ds.sequences.len(), 31);
    let mut counts = BTreeMap::new();
    for c in &ds.clips {
        *counts.entry(c.behavior).or_insert(0usize) += 1;
        assert_eq!(c.emotion.count_ones(), 1);
        assert_eq!(c.channels[0].dim, 32);
    }
    let (lo, hi) = (counts.values().min().unwrap(), counts.values().max().unwrap());
    assert_eq!(counts.len(), 5);
    assert!(hi - lo <= 1, "{counts:?}");
    assert!(validate_dataset(&ds).is_valid());
}

#[test]
fn deterministic_map_with_tiny_noise() {
    let mut cfg = SynthConfig::bijective(2);
    cfg.noise_scale = 1e-9;
    cfg.n_sequences = 3;
    let ds = synthesize_dataset(&cfg).unwrap();
    let mut seen: BTreeMap<Behavior, (Emotion, Vec<f64>)> = BTreeMap::new();
    for c in &ds.clips {
        let e = c.emotion.single().unwrap();
        let d = &c.channels[0].descriptors[0];
        let (e0, d0) = seen.entry(c.behavior).or_insert((e, d.clone()));
        assert_eq!(*e0, e);
        assert!(d.iter().zip(d0.iter()).all(|(a, b)| (a - b).abs() < 1e-7));
    }
}

/// Per-behavior emotion frequencies under a uniform table: every cell within
/// 3σ of its binomial expectation, and the Pearson statistic below the 0.999
/// quantile of χ² with 5 degrees of freedom.
#[test]
fn uniform_table_gives_uniform_emotions() {
    let ds = synthesize_dataset(&SynthConfig::uniform_control(11)).unwrap();
    let mut counts = [[0usize; 6]; 5];
    for c in &ds.clips {
        counts[c.behavior.index()][c.emotion.single().unwrap().index()] += 1;
    }
    for row in counts {
        let n: usize = row.iter().sum();
        let p = 1.0 / 6.0;
        let expected = n as f64 * p;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        let mut chi2 = 0.0;
        for &c in &row {
            assert!((c as f64 - expected).abs() <= 3.0 * sigma, "{row:?}");
            chi2 += (c as f64 - expected).powi(2) / expected;
        }
        assert!(chi2 < 20.515, "chi2 {chi2} for {row:?}");
    }
}

#[test]
fn invalid_synth_configs() {
    let mut cfg = small(0);
    cfg.behavior_to_emotion[0][0] += 0.1;
    assert!(matches!(synthesize_dataset(&cfg), Err(Error::InvalidConfig(_))));
    let mut cfg = small(0);
    cfg.noise_scale = -1.0;
    assert!(synthesize_dataset(&cfg).is_err());
    let mut cfg = small(0);
    cfg.behavior_to_emotion.pop();
    assert!(synthesize_dataset(&cfg).is_err());
    let json = serde_json::to_string(&small(0)).unwrap().replace("\"seed\"", "\"sed\"");
    assert!(serde_json::from_str::<SynthConfig>(&json).is_err());
}

#[test]
fn manifest_round_trip() {
    let ds = synthesize_dataset(&small(5)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = save_manifest(&ds, dir.path()).unwrap();
    let back = load_manifest(&path).unwrap();
    assert_eq!(back, ds);
}

fn write_manifest(dir: &std::path::Path, rows: &[&str]) -> std::path::PathBuf {
    std::fs::write(
        dir.join("d.json"),
        r#"{"channels": [{"name": "hog", "dim": 2, "vectors": [[0.5, 1.0], [2.0, -1.0]]}]}"#,
    )
    .unwrap();
    let mut text = MANIFEST_HEADER.join(",") + "\n";
    for r in rows {
        text.push_str(r);
        text.push('\n');
    }
    let path = dir.join("manifest.csv");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn manifest_two_clips() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_manifest(
        dir.path(),
        &[
            "a,seq1,panic,happy;happy;excited,d.json",
            "b,seq2,fight,excited;happy,d.json",
        ],
    );
    let ds = load_manifest(&path).unwrap();
    assert_eq!(ds.len(), 2);
    assert_eq!(ds.sequences.len(), 2);
    assert_eq!(ds.clips[0].behavior, Behavior::Panic);
    assert_eq!(ds.clips[0].emotion, EmotionVector::one_hot(Emotion::Happy));
    assert_eq!(ds.clips[1].emotion, EmotionVector::one_hot(Emotion::Happy));
    assert_eq!(ds.clips[1].channel(ChannelKind::Hog).unwrap().descriptors.len(), 2);
}

#[test]
fn manifest_errors_name_row_and_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_manifest(dir.path(), &["a,seq1,panic,happy,d.json", "b,seq1,riot,happy,d.json"]);
    match load_manifest(&path) {
        Err(Error::Manifest { row, field, .. }) => assert_eq!((row, field), (2, "behavior")),
        other => panic!("unexpected {other:?}"),
    }
    let path = write_manifest(dir.path(), &["a,seq1,panic,glad,d.json"]);
    assert!(matches!(
        load_manifest(&path),
        Err(Error::Manifest {
            row: 1,
            field: "emotions",
            ..
        })
    ));
    let path = write_manifest(dir.path(), &["a,seq1,panic,happy,missing.json"]);
    assert!(matches!(
        load_manifest(&path),
        Err(Error::Manifest {
            row: 1,
            field: "descriptor_path",
            ..
        })
    ));
    assert!(load_manifest(dir.path().join("nope.csv")).is_err());
}

#[test]
fn manifest_with_31_sequences() {
    let mut cfg = small(1);
    cfg.n_sequences = 31;
    cfg.clips_per_sequence = 2;
    let ds = synthesize_dataset(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let back = load_manifest(save_manifest(&ds, dir.path()).unwrap()).unwrap();
    assert_eq!(back.sequences.len(), 31);
}

fn clip(id: &str) -> ClipRecord {
    ClipRecord {
        clip_id: id.into(),
        sequence_id: "s".into(),
        behavior: Behavior::Fight,
        emotion_annotations: vec![Emotion::Angry],
        emotion: EmotionVector::one_hot(Emotion::Angry),
        channels: vec![DescriptorChannel::new(ChannelKind::Hof, 2, vec![vec![1.0, 2.0]])],
        feature: None,
    }
}

#[test]
fn validation_reports() {
    assert!(validate_dataset(&Dataset::new(vec![clip("a"), clip("b")])).is_valid());

    let mut two_hot = clip("two");
    two_hot.emotion.set(1, true);
    let report = validate_dataset(&Dataset::new(vec![clip("a"), two_hot]));
    assert_eq!(report.violations.len(), 1);
    assert_eq!(report.violations[0].clip_id.as_deref(), Some("two"));

    let mut nan = clip("nan");
    nan.channels[0].descriptors[0][1] = f64::NAN;
    let report = validate_dataset(&Dataset::new(vec![nan]));
    assert_eq!(report.violations.len(), 1);
    assert_eq!(report.violations[0].clip_id.as_deref(), Some("nan"));
    assert_eq!(report.violations[0].channel.as_deref(), Some("hof"));
}
