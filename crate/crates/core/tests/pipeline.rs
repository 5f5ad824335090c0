use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synthdet_core::attacks::AttackSpec;
use synthdet_core::detector::{FeatureTable, Label};
use synthdet_core::features::FeatureSet;
use synthdet_core::pipeline::bundle::load_bundle;
use synthdet_core::pipeline::cache::FeatureCache;
use synthdet_core::pipeline::config::RunConfig;
use synthdet_core::pipeline::fixture::{generate_fixture, FixtureConfig};
use synthdet_core::pipeline::manifest::{DatasetManifest, Split};
use synthdet_core::pipeline::run::{correlate_tracks, Context};

fn small_config(tracks_per_cell: usize) -> RunConfig {
    let mut c = RunConfig::default();
    c.fixture.tracks_per_cell = tracks_per_cell;
    c.train.lr = 1e-3;
    c.train.max_epochs = 12;
    c.train.early_stop_patience = 4;
    c
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn default_fixture_shape() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate_fixture(dir.path(), &FixtureConfig::default(), 0).unwrap();
    assert_eq!(m.records.len(), 400);
    for tag in ["a", "b"] {
        for label in [Label::Real, Label::Fake] {
            let cell: Vec<_> = m.records.iter().filter(|r| r.dataset == tag && r.label == label).collect();
            assert_eq!(cell.len(), 100);
            let count = |s: Split| cell.iter().filter(|r| r.split == s).count();
            assert_eq!((count(Split::Train), count(Split::Dev), count(Split::Eval)), (60, 20, 20));
        }
    }
    let reparsed = DatasetManifest::parse(&dir.path().join("manifest.csv")).unwrap();
    assert_eq!(reparsed.records, m.records);
}

#[test]
fn fixture_is_byte_identical_per_seed() {
    let config = FixtureConfig {
        tracks_per_cell: 3,
        ..FixtureConfig::default()
    };
    let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_fixture(a.path(), &config, 5).unwrap();
    generate_fixture(b.path(), &config, 5).unwrap();
    generate_fixture(c.path(), &config, 6).unwrap();
    assert_eq!(read_tree(a.path()), read_tree(b.path()));
    assert_ne!(read_tree(a.path()), read_tree(c.path()));
}

#[test]
fn fake_tracks_have_higher_bicoherence() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(15);
    let m = generate_fixture(dir.path(), &config.fixture, 1).unwrap();
    let ctx = Context::new(config);
    let ex = ctx.extract(&m, None, None).unwrap();
    let mean = |label: Label| {
        let v: Vec<f64> = ex
            .tracks
            .iter()
            .filter(|t| t.label == label)
            .map(|t| t.vectors[&FeatureSet::Bicoh].values[0])
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(mean(Label::Fake) > mean(Label::Real), "{} vs {}", mean(Label::Fake), mean(Label::Real));
}

#[test]
fn train_eval_roundtrip_is_deterministic() {
    let work = tempfile::tempdir().unwrap();
    let config = small_config(5);
    let m = generate_fixture(&work.path().join("fx"), &config.fixture, 2).unwrap();
    let mut ctx = Context::new(config.clone());
    ctx.cache = Some(FeatureCache::new(work.path().join("cache")));

    let first = ctx.train(&m, &work.path().join("run1")).unwrap();
    let bundle = load_bundle(&first.bundle_dir).unwrap();
    assert_eq!(bundle.config, config);
    assert_eq!(bundle.baselines.len(), 3);
    assert_eq!(first.logs.fused.cell_weights.len(), 4);

    // Second run: features come from the cache, outputs must not change.
    let second = ctx.train(&m, &work.path().join("run2")).unwrap();
    assert!(second.summaries.iter().all(|s| s.cache_hits == s.total));
    assert_eq!(read_tree(&first.bundle_dir), read_tree(&second.bundle_dir));

    // A cold run without any cache agrees too.
    let cold = Context::new(config);
    let third = cold.train(&m, &work.path().join("run3")).unwrap();
    assert_eq!(read_tree(&first.bundle_dir), read_tree(&third.bundle_dir));

    let conditions = vec![None, Some(AttackSpec::noise(0.01, 0)), Some(AttackSpec::noise(0.001, 0))];
    let reports = ctx.evaluate(&m, &first.bundle_dir, Split::Eval, &conditions, &work.path().join("run1")).unwrap();
    // Five models under three conditions.
    assert_eq!(reports.len(), 15);
    let fps: std::collections::BTreeSet<_> = reports.iter().map(|r| r.fingerprint.clone()).collect();
    assert_eq!(fps.len(), 15);
    for r in &reports {
        assert_eq!(r.config_hash, bundle.config.hash());
        let dir = work.path().join("run1/reports").join(&r.condition);
        assert!(dir.join(format!("{}.json", r.model)).is_file());
        assert!(dir.join(format!("{}.roc.csv", r.model)).is_file());
    }
    let again = ctx.evaluate(&m, &first.bundle_dir, Split::Eval, &conditions, &work.path().join("run2")).unwrap();
    assert_eq!(reports, again);
    assert_eq!(
        read_tree(&work.path().join("run1/reports")),
        read_tree(&work.path().join("run2/reports"))
    );

    let preds = ctx.predict(&first.bundle_dir, &[m.resolve(&m.records[0])]).unwrap();
    assert_eq!(preds.len(), 1);
    assert!((0.0..=1.0).contains(&preds[0].p_fake));
}

#[test]
fn corrupt_cache_entries_are_reextracted() {
    let work = tempfile::tempdir().unwrap();
    let config = small_config(2);
    let m = generate_fixture(&work.path().join("fx"), &config.fixture, 3).unwrap();
    let mut ctx = Context::new(config);
    ctx.cache = Some(FeatureCache::new(work.path().join("cache")));
    let fresh = ctx.extract(&m, None, None).unwrap();
    assert_eq!(fresh.summary.cache_hits, 0);
    let files: Vec<_> = read_tree(&work.path().join("cache")).into_keys().collect();
    assert_eq!(files.len(), 3 * 8);
    let victim = work.path().join("cache").join(&files[0]);
    let mut bytes = std::fs::read(&victim).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0xff;
    std::fs::write(&victim, bytes).unwrap();
    let again = ctx.extract(&m, None, None).unwrap();
    assert_eq!(again.summary.cache_hits, 7);
    assert_eq!(fresh.tracks, again.tracks);
}

fn random_table(n: usize, seed: u64) -> FeatureTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let features = FeatureSet::ALL
        .iter()
        .map(|&s| (s, Array2::from_shape_simple_fn((n, s.dim()), || rng.random_range(-1.0..1.0))))
        .collect();
    let labels = (0..n).map(|i| if i % 2 == 0 { Label::Real } else { Label::Fake }).collect();
    FeatureTable::new(features, labels, vec!["a".into(); n]).unwrap()
}

#[test]
fn correlation_outputs() {
    let out = tempfile::tempdir().unwrap();
    let mut table = random_table(300, 4);
    // Duplicate the first bicoherence column into the second.
    let bicoh = table.features.get_mut(&FeatureSet::Bicoh).unwrap();
    let col = bicoh.column(0).to_owned();
    bicoh.column_mut(1).assign(&col);
    let m = correlate_tracks(&table, out.path()).unwrap();
    assert_eq!(m.dim(), 1224);
    assert!((m.r[[416 + 800, 416 + 801]] - 1.0).abs() < 1e-12);
    for i in (0..1224).step_by(37) {
        for j in (0..1224).step_by(41) {
            assert_eq!(m.r[[i, j]], m.r[[j, i]]);
        }
    }
    for a in 0..3 {
        for b in 0..3 {
            if a != b {
                assert!(m.block_mean_abs(a, b) < 0.1);
            }
        }
    }
    let csv = std::fs::read_to_string(out.path().join("matrix.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1224);
    assert!(csv.lines().all(|l| l.split(',').count() == 1224));
    assert!(out.path().join("abs.csv").is_file() && out.path().join("blocks.json").is_file());
}
