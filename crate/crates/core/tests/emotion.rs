use crowd_emotion::dataset::{Behavior, Emotion, EmotionVector};
use crowd_emotion::emotion::{
    classify, emotion_aware_feature, emotion_representation, train_behavior_on_emotion_with, train_emotion_bank_on,
    EmotionClassifierBank, EmotionPipeline,
};
use crowd_emotion::svm::{self, Degenerate, LinearModel, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn cfg(lambda: f64) -> TrainConfig {
    TrainConfig {
        lambda,
        ..Default::default()
    }
}

fn random_bank(rng: &mut ChaCha8Rng, dim: usize) -> EmotionClassifierBank {
    let classifiers = (0..Emotion::COUNT)
        .map(|_| {
            let w = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
            LinearModel::new(w, rng.random_range(-1.0..1.0), 0.01)
        })
        .collect();
    EmotionClassifierBank::new(classifiers).unwrap()
}

/// Clips whose emotion is `i mod 6`, with feature centered on a per-emotion
/// mean, and behavior `emotion mod 5`.
fn emotion_data(n: usize, dim: usize, sigma: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<EmotionVector>, Vec<Behavior>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..Emotion::COUNT)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    3.0 * z
                })
                .collect()
        })
        .collect();
    let mut xs = Vec::new();
    let mut es = Vec::new();
    let mut bs = Vec::new();
    for i in 0..n {
        let k = i % Emotion::COUNT;
        xs.push(
            means[k]
                .iter()
                .map(|m| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    m + sigma * e
                })
                .collect(),
        );
        es.push(EmotionVector::one_hot(Emotion::ALL[k]));
        bs.push(Behavior::ALL[k % Behavior::COUNT]);
    }
    (xs, es, bs)
}

#[test]
fn representation_is_affine_in_the_feature() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let bank = random_bank(&mut rng, 8);
    for _ in 0..100 {
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y: Vec<f64> = (0..8).map(|_| rng.random_range(-5.0..5.0)).collect();
        let t: f64 = rng.random();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let (px, py, pm) = (
            emotion_representation(&x, &bank).unwrap(),
            emotion_representation(&y, &bank).unwrap(),
            emotion_representation(&mix, &bank).unwrap(),
        );
        for k in 0..Emotion::COUNT {
            assert!((pm[k] - (t * px[k] + (1.0 - t) * py[k])).abs() < 1e-10);
            let c = &bank.classifiers[k];
            let direct: f64 = c.w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + c.b;
            assert!((px[k] - direct).abs() < 1e-12);
        }
    }
    assert!(emotion_representation(&[1.0], &bank).is_err());
}

#[test]
fn permuting_emotions_permutes_the_representation_and_keeps_predictions() {
    let (xs, es, bs) = emotion_data(120, 6, 1.5, 2);
    let bank = train_emotion_bank_on(&xs, &es, &cfg(0.01)).unwrap();
    let perm = [3, 0, 5, 1, 4, 2];
    let permuted = EmotionClassifierBank::new(perm.iter().map(|&k| bank.classifiers[k].clone()).collect()).unwrap();
    for x in &xs {
        let a = emotion_representation(x, &bank).unwrap();
        let b = emotion_representation(x, &permuted).unwrap();
        for (i, &k) in perm.iter().enumerate() {
            assert_eq!(b[i], a[k]);
        }
    }
    let p1 = train_behavior_on_emotion_with(&xs, &bs, bank, &cfg(0.01)).unwrap();
    let p2 = train_behavior_on_emotion_with(&xs, &bs, permuted, &cfg(0.01)).unwrap();
    for x in &xs {
        assert_eq!(classify(&p1, x).unwrap().0, classify(&p2, x).unwrap().0);
    }
}

#[test]
fn classify_is_the_composition() {
    let (xs, es, bs) = emotion_data(90, 5, 1.0, 3);
    let bank = train_emotion_bank_on(&xs, &es, &cfg(0.01)).unwrap();
    let p = train_behavior_on_emotion_with(&xs, &bs, bank.clone(), &cfg(0.01)).unwrap();
    for x in &xs {
        let phi = emotion_representation(x, &bank).unwrap();
        assert_eq!(classify(&p, x).unwrap(), svm::predict(&p.behavior_model, &phi).unwrap());
    }
}

#[test]
fn separable_emotions_are_recognized() {
    let (xs, es, _) = emotion_data(600, 10, 0.5, 4);
    let bank = train_emotion_bank_on(&xs, &es, &cfg(1e-3)).unwrap();
    let hits = xs
        .iter()
        .zip(&es)
        .filter(|(x, e)| {
            let phi = emotion_representation(x, &bank).unwrap();
            let best = (0..phi.len()).max_by(|&a, &b| phi[a].total_cmp(&phi[b])).unwrap();
            e.get(best)
        })
        .count();
    assert!(hits as f64 / xs.len() as f64 >= 0.95, "{hits}");
    assert!(bank.warnings().is_empty());
}

#[test]
fn absent_emotion_is_flagged() {
    let (xs, es, _) = emotion_data(60, 4, 1.0, 5);
    let keep: Vec<usize> = (0..xs.len()).filter(|&i| !es[i].get(Emotion::Sad.index())).collect();
    let xs: Vec<_> = keep.iter().map(|&i| xs[i].clone()).collect();
    let es: Vec<_> = keep.iter().map(|&i| es[i]).collect();
    let bank = train_emotion_bank_on(&xs, &es, &cfg(0.01)).unwrap();
    assert_eq!(bank.warnings(), vec![(Emotion::Sad.index(), Degenerate::AllNegative)]);
    let phi = emotion_representation(&xs[0], &bank).unwrap();
    assert_eq!(phi[Emotion::Sad.index()], -1.0);
}

#[test]
fn aware_features_are_one_hot() {
    for &e in Emotion::ALL {
        let f = emotion_aware_feature(&EmotionVector::one_hot(e)).unwrap();
        assert_eq!(f.iter().sum::<f64>(), 1.0);
        assert_eq!(f[e.index()], 1.0);
    }
    assert!(emotion_aware_feature(&EmotionVector::zeros(6)).is_err());
    assert!(emotion_aware_feature(&EmotionVector::from_mask(6, 0b11)).is_err());
}

#[test]
fn pipeline_round_trips() {
    let (xs, es, bs) = emotion_data(60, 4, 1.0, 6);
    let bank = train_emotion_bank_on(&xs, &es, &cfg(0.01)).unwrap();
    let p = train_behavior_on_emotion_with(&xs, &bs, bank, &cfg(0.01)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.json");
    p.save(&path).unwrap();
    let back = EmotionPipeline::load(&path).unwrap();
    for x in &xs {
        assert_eq!(classify(&back, x).unwrap(), classify(&p, x).unwrap());
    }
}

#[test]
fn all_zero_bank_gives_zeros_and_the_first_class() {
    let bank = EmotionClassifierBank::new(vec![LinearModel::zeros(3, 0.01); Emotion::COUNT]).unwrap();
    assert_eq!(emotion_representation(&[1.0, -2.0, 5.0], &bank).unwrap(), vec![0.0; 6]);
    let (xs, es, bs) = emotion_data(60, 3, 1.0, 7);
    let trained = train_emotion_bank_on(&xs, &es, &cfg(0.01)).unwrap();
    let p = train_behavior_on_emotion_with(&xs, &bs, trained, &cfg(0.01)).unwrap();
    let zeroed = EmotionPipeline::new(bank, p.behavior_model.clone()).unwrap();
    let (b, scores) = classify(&zeroed, &[0.5, 0.5, 0.5]).unwrap();
    let best = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let first = scores.iter().position(|&s| s == best).unwrap();
    assert_eq!(b, Behavior::ALL[first]);
}

#[test]
fn single_emotion_data_makes_every_classifier_degenerate() {
    let (xs, _, _) = emotion_data(30, 3, 1.0, 8);
    let es = vec![EmotionVector::one_hot(Emotion::Neutral); xs.len()];
    let bank = train_emotion_bank_on(&xs, &es, &cfg(0.01)).unwrap();
    assert_eq!(bank.len(), 6);
    let warnings = bank.warnings();
    assert_eq!(warnings.len(), 6);
    for (k, kind) in warnings {
        let expected = if k == Emotion::Neutral.index() {
            Degenerate::AllPositive
        } else {
            Degenerate::AllNegative
        };
        assert_eq!(kind, expected);
    }
}

#[test]
fn angry_prototype_scores_highest_on_angry() {
    let (xs, es, _) = emotion_data(300, 8, 1.0, 9);
    let bank = train_emotion_bank_on(&xs, &es, &cfg(1e-3)).unwrap();
    let angry: Vec<&Vec<f64>> = xs.iter().zip(&es).filter(|(_, e)| e.get(0)).map(|(x, _)| x).collect();
    let prototype: Vec<f64> = (0..8)
        .map(|a| angry.iter().map(|x| x[a]).sum::<f64>() / angry.len() as f64)
        .collect();
    let phi = emotion_representation(&prototype, &bank).unwrap();
    let best = (0..phi.len()).max_by(|&a, &b| phi[a].total_cmp(&phi[b])).unwrap();
    assert_eq!(Emotion::ALL[best], Emotion::Angry);
}
