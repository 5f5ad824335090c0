use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::Command;

use synthdet_core::attacks::{AttackRegistry, AttackSpec, CodecConfig};
use synthdet_core::audio::AudioTrack;

fn codec() -> CodecConfig {
    let helper = PathBuf::from(env!("CARGO_BIN_EXE_synthdet-mp3"));
    CodecConfig {
        encoder: Some(helper.clone()),
        decoder: Some(helper),
        ..CodecConfig::default()
    }
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn mp3_roundtrip_keeps_length_and_shape() {
    let samples: Vec<f64> = (0..40_000).map(|i| 0.4 * (2.0 * PI * 440.0 * i as f64 / 16000.0).sin()).collect();
    let track = AudioTrack::new(samples, 16000, "sine").unwrap();
    let attack = AttackRegistry::new(codec()).build(&AttackSpec::mp3(128)).unwrap();
    assert_eq!(attack.fd_mode(), None);
    let out = attack.apply(&track).unwrap().track;
    assert_eq!(out.len(), track.len());
    assert_eq!(out.sample_rate, 16000);
    let r = pearson(&track.samples, &out.samples);
    assert!(r >= 0.99, "correlation {r}");
}

fn synthdet(dir: &Path, args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_synthdet"))
        .current_dir(dir)
        .args(["--config", "cfg.json"])
        .args(["--mp3-encoder", env!("CARGO_BIN_EXE_synthdet-mp3")])
        .args(["--mp3-decoder", env!("CARGO_BIN_EXE_synthdet-mp3")])
        .args(args)
        .output()
        .unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn sweep_writes_one_report_per_preset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"seed": 4, "train": {"lr": 0.001, "max_epochs": 3, "early_stop_patience": 2}, "fixture": {"tracks_per_cell": 5}}"#;
    std::fs::write(dir.path().join("cfg.json"), cfg).unwrap();
    synthdet(dir.path(), &["fixture", "--out", "fx"]);
    synthdet(dir.path(), &["train", "--manifest", "fx/manifest.csv", "--out", "run", "--no-baselines"]);
    let table = synthdet(
        dir.path(),
        &["eval", "--manifest", "fx/manifest.csv", "--bundle", "run/bundle", "--out", "run", "--sweep"],
    );
    assert_eq!(table.lines().count(), 1 + 6);

    let reports = dir.path().join("run/reports");
    let conditions = ["clean", "noise_0.1", "noise_0.01", "noise_0.001", "mp3_128", "mp3_32"];
    let mut fingerprints = BTreeSet::new();
    for c in conditions {
        let text = std::fs::read_to_string(reports.join(c).join("fused.json")).unwrap();
        let report: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(report["condition"], c);
        fingerprints.insert(report["fingerprint"].as_str().unwrap().to_string());
    }
    assert_eq!(fingerprints.len(), 6);

    let predicted = synthdet(dir.path(), &["predict", "--bundle", "run/bundle", "fx/audio/a_real_000.wav"]);
    let fields: Vec<&str> = predicted.trim_end().split('\t').collect();
    assert_eq!(fields.len(), 3);
    assert!(fields[0].ends_with("a_real_000.wav"));
    assert!(["REAL", "FAKE"].contains(&fields[1]));
    let p: f64 = fields[2].parse().unwrap();
    assert!((0.0..=1.0).contains(&p));
}
