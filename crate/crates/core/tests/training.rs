use std::collections::BTreeMap;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synthdet_core::detector::{balanced_batches, compute_sample_weights, train_fused, FeatureTable, Label, TrainConfig, TrainingMode};
use synthdet_core::features::FeatureSet;
use synthdet_core::nn::{early_stop_check, PlateauScheduler};

fn labels(real: usize, fake: usize) -> Vec<Label> {
    let mut v = vec![Label::Real; real];
    v.extend(vec![Label::Fake; fake]);
    v
}

#[test]
fn balanced_batches_are_64_64() {
    for (real, fake) in [(300, 100), (64, 500), (128, 128), (5, 7)] {
        let l = labels(real, fake);
        let batches = balanced_batches(&l, 128, 3).unwrap();
        let majority = real.max(fake);
        assert_eq!(batches.len(), majority.div_ceil(64));
        for b in &batches {
            assert_eq!(b.len(), 128);
            let fakes = b.iter().filter(|&&i| l[i] == Label::Fake).count();
            assert_eq!(fakes, 64);
        }
        // Every majority-class row appears at least once per epoch.
        let major = if fake > real { Label::Fake } else { Label::Real };
        let seen: std::collections::BTreeSet<usize> = batches.iter().flatten().copied().filter(|&i| l[i] == major).collect();
        assert_eq!(seen.len(), majority);
    }
}

#[test]
fn sample_weights_match_manifest_counts() {
    let cells = [("asv", Label::Real, 30), ("asv", Label::Fake, 270), ("ljs", Label::Real, 50), ("ljs", Label::Fake, 10)];
    let mut datasets = Vec::new();
    let mut labs = Vec::new();
    for (d, l, n) in cells {
        datasets.extend(vec![d.to_string(); n]);
        labs.extend(vec![l; n]);
    }
    let w = compute_sample_weights(&datasets, &labs).unwrap();
    let raw: Vec<f64> = datasets
        .iter()
        .zip(&labs)
        .map(|(d, l)| 1.0 / cells.iter().find(|c| c.0 == d && c.1 == *l).unwrap().2 as f64)
        .collect();
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    for (got, r) in w.per_sample.iter().zip(&raw) {
        assert!((got - r / mean).abs() < 1e-12);
    }
    let total = w.per_sample.iter().sum::<f64>() / w.per_sample.len() as f64;
    assert!((total - 1.0).abs() < 1e-12);
    // Every cell carries the same total weight.
    for c in &w.cells {
        assert!((c.weight * c.count as f64 - 360.0 / 4.0).abs() < 1e-9);
    }
}

#[test]
fn early_stop_hand_traced() {
    let patience = 10;
    let mut history = vec![1.0, 0.8];
    for _ in 0..patience {
        history.push(0.9);
        assert!(!early_stop_check(&history, patience));
    }
    // The best epoch is now exactly 10 epochs old; one more triggers.
    history.push(0.85);
    assert!(early_stop_check(&history, patience));
    // A tie with the best does not reset the counter.
    let mut tied = vec![0.5];
    tied.extend(vec![0.5; patience]);
    assert!(!early_stop_check(&tied, patience));
    tied.push(0.5);
    assert!(early_stop_check(&tied, patience));
}

#[test]
fn plateau_hand_traced() {
    let mut s = PlateauScheduler::new(1e-3, 0.1, 5, 1e-6);
    let trace = [
        (1.0, 1e-3, true),
        (0.9, 1e-3, true),
        (0.95, 1e-3, false),
        (0.9, 1e-3, false),
        (0.91, 1e-3, false),
        (0.92, 1e-3, false),
        (0.93, 1e-4, false),
        (0.899995, 1e-4, false),
        (0.8, 1e-4, true),
        (0.8, 1e-4, false),
        (0.8, 1e-4, false),
        (0.8, 1e-4, false),
        (0.8, 1e-4, false),
        (0.8, 1e-5, false),
        (0.8, 1e-5, false),
    ];
    for (i, &(loss, lr, improved)) in trace.iter().enumerate() {
        let (got_lr, got_improved) = s.step(loss);
        assert_eq!(got_improved, improved, "epoch {}", i + 1);
        assert!((got_lr - lr).abs() < 1e-15, "epoch {}: lr {got_lr} want {lr}", i + 1);
    }
    assert_eq!(s.reductions, 2);
    // The floor is respected and not counted as a reduction.
    let mut s = PlateauScheduler::new(1e-6, 0.1, 1, 1e-6);
    s.step(1.0);
    assert_eq!(s.step(1.0).0, 1e-6);
    assert_eq!(s.reductions, 0);
}

fn random_table(n: usize, datasets: &[&str], seed: u64) -> FeatureTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labs: Vec<Label> = (0..n).map(|i| if i % 3 == 0 { Label::Fake } else { Label::Real }).collect();
    let tags: Vec<String> = (0..n).map(|i| datasets[(i / 3) % datasets.len()].to_string()).collect();
    let mut features = BTreeMap::new();
    for set in FeatureSet::ALL {
        let shift: Vec<f64> = labs.iter().map(|&l| if l == Label::Fake { 0.5 } else { 0.0 }).collect();
        let x = Array2::from_shape_fn((n, set.dim()), |(i, _)| rng.random_range(-1.0..1.0) + shift[i]);
        features.insert(set, x);
    }
    FeatureTable::new(features, labs, tags).unwrap()
}

fn small_config() -> TrainConfig {
    TrainConfig {
        max_epochs: 14,
        early_stop_patience: 3,
        plateau_patience: 2,
        lr: 1e-3,
        ..TrainConfig::default()
    }
}

#[test]
fn mode_a_epochs_see_balanced_batches() {
    let train = random_table(150, &["a"], 1);
    let dev = random_table(40, &["a"], 2);
    let config = small_config();
    let (_, log) = train_fused(&train, &dev, &config, TrainingMode::BatchBalanced).unwrap();
    for e in &log.epochs {
        // 100 REAL rows in halves of 64 -> 2 batches per epoch.
        assert_eq!(e.batches, 2);
        assert_eq!(e.exposure, [128, 128]);
    }
    if log.stopped_early {
        assert_eq!(log.epochs.len(), log.best_epoch + config.early_stop_patience + 1);
    }
    let losses: Vec<f64> = log.epochs.iter().map(|e| e.val_loss).collect();
    let best = losses.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0 + 1;
    assert_eq!(best, log.best_epoch);
    // Learning rates follow the plateau counter over the logged losses.
    let mut s = PlateauScheduler::new(config.lr, config.plateau_factor, config.plateau_patience, config.min_lr);
    let mut lr = config.lr;
    for e in &log.epochs {
        assert_eq!(e.lr, lr);
        lr = s.step(e.val_loss).0;
    }
}

#[test]
fn mode_b_logs_manifest_weights() {
    let train = random_table(150, &["a", "b", "b"], 3);
    let dev = random_table(40, &["a", "b"], 4);
    let (_, log) = train_fused(&train, &dev, &small_config(), TrainingMode::SampleWeighted).unwrap();
    let oracle = compute_sample_weights(&train.datasets, &train.labels).unwrap();
    assert_eq!(log.cell_weights, oracle.cells);
    assert_eq!(log.cell_weights.len(), 4);
    for e in &log.epochs {
        assert_eq!(e.exposure.iter().sum::<usize>(), 150);
        let weight: f64 = e.cells.iter().map(|c| c.weight_sum).sum();
        assert!((weight - 150.0).abs() < 1e-9);
    }
}
