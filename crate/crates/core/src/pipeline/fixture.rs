//! Synthetic desk-scale dataset.
//!
//! REAL tracks are a source-filter "speech" model: a glottal pulse train with
//! slow pitch movement through four formant resonators, separated by a
//! low-level noise floor. FAKE tracks use the same generator with one of three
//! vocoder-like artifacts, each aimed at one feature family:
//!
//! * a jittered source, which breaks long-term predictability (STLT);
//! * frame-boundary clicks at a fixed 10 ms frame rate over voiced speech,
//!   phase-locked from frame to frame (bicoherence);
//! * a line-spectrum hum in the noise floor (first digits of silence MFCCs).

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, SampleRecord, Split};
use crate::audio::{write_wav, AudioTrack, WavEncoding};
use crate::derive_seed;
use crate::detector::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArtifactConfig {
    /// Relative pitch-period jitter of the jittered source (REAL uses 0.002).
    pub jitter: f64,
    /// Amplitude of each floor hum tone, relative to the floor RMS.
    pub hum_level: f64,
    /// Floor noise level kept under the hum, relative to the REAL floor.
    pub hum_floor: f64,
    /// RMS of the frame-click train relative to the voiced RMS.
    pub click_level: f64,
    pub click_period_ms: f64,
    /// Give each FAKE track exactly one artifact family (cycling through the
    /// three) instead of all of them.
    pub exclusive: bool,
}

impl Default for ArtifactConfig {
    fn default() -> Self {
        Self {
            jitter: 0.2,
            hum_level: 1.0,
            hum_floor: 0.5,
            click_level: 0.3,
            click_period_ms: 10.0,
            exclusive: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixtureConfig {
    pub tracks_per_cell: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub datasets: Vec<String>,
    /// Train and dev fractions per cell; the rest is eval.
    pub train_fraction: f64,
    pub dev_fraction: f64,
    pub voiced_rms: f64,
    pub floor_rms: f64,
    /// Power share of aspiration noise in the glottal excitation.
    pub aspiration: f64,
    /// Recording-chain lowpass applied to every track.
    pub bandwidth_hz: f64,
    pub artifacts: ArtifactConfig,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            tracks_per_cell: 100,
            duration_s: 1.0,
            sample_rate: 16000,
            datasets: vec!["a".into(), "b".into()],
            train_fraction: 0.6,
            dev_fraction: 0.2,
            voiced_rms: 0.2,
            floor_rms: 0.0025,
            aspiration: 0.02,
            bandwidth_hz: 6500.0,
            artifacts: ArtifactConfig::default(),
        }
    }
}

/// Artifact families carried by one track.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Artifacts {
    pub jitter: bool,
    pub clicks: bool,
    pub hum: bool,
}

impl Artifacts {
    pub const NONE: Artifacts = Artifacts {
        jitter: false,
        clicks: false,
        hum: false,
    };
    pub const ALL: Artifacts = Artifacts {
        jitter: true,
        clicks: true,
        hum: true,
    };

    /// Artifacts of the `index`-th FAKE track of a cell.
    pub fn for_fake(config: &ArtifactConfig, index: usize) -> Self {
        if !config.exclusive {
            return Self::ALL;
        }
        Artifacts {
            jitter: index % 3 == 0,
            clicks: index % 3 == 1,
            hum: index % 3 == 2,
        }
    }
}

/// Per-dataset voice style.
struct Style {
    f0: (f64, f64),
    /// One-pole lowpass coefficient of the floor noise.
    floor_color: f64,
    formant_scale: f64,
}

fn style(dataset_index: usize) -> Style {
    match dataset_index % 2 {
        0 => Style {
            f0: (95.0, 150.0),
            floor_color: 0.5,
            formant_scale: 1.0,
        },
        _ => Style {
            f0: (165.0, 240.0),
            floor_color: 0.8,
            formant_scale: 1.12,
        },
    }
}

const VOWELS: [[f64; 4]; 5] = [
    [730.0, 1090.0, 2440.0, 3400.0],
    [270.0, 2290.0, 3010.0, 3500.0],
    [300.0, 870.0, 2240.0, 3300.0],
    [530.0, 1840.0, 2480.0, 3500.0],
    [570.0, 840.0, 2410.0, 3400.0],
];

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn resonate(x: &mut [f64], freq: f64, bw: f64, sr: f64) {
    let r = (-PI * bw / sr).exp();
    let a1 = 2.0 * r * (2.0 * PI * freq / sr).cos();
    let a2 = -r * r;
    let g = 1.0 - r;
    let (mut y1, mut y2) = (0.0, 0.0);
    for v in x.iter_mut() {
        let y = g * *v + a1 * y1 + a2 * y2;
        y2 = y1;
        y1 = y;
        *v = y;
    }
}

/// Zero-phase windowed-sinc lowpass.
fn lowpass(x: &[f64], cutoff: f64, sr: f64) -> Vec<f64> {
    const HALF: usize = 48;
    let fc = (cutoff / sr).min(0.5);
    let taps: Vec<f64> = (0..=2 * HALF)
        .map(|i| {
            let m = i as f64 - HALF as f64;
            let sinc = if m == 0.0 { 2.0 * fc } else { (2.0 * PI * fc * m).sin() / (PI * m) };
            let w = 0.42 - 0.5 * (PI * i as f64 / HALF as f64).cos() + 0.08 * (2.0 * PI * i as f64 / HALF as f64).cos();
            sinc * w
        })
        .collect();
    let norm: f64 = taps.iter().sum();
    (0..x.len())
        .map(|n| {
            let mut acc = 0.0;
            for (k, t) in taps.iter().enumerate() {
                let j = n as isize + k as isize - HALF as isize;
                if j >= 0 && (j as usize) < x.len() {
                    acc += t * x[j as usize];
                }
            }
            acc / norm
        })
        .collect()
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64).sqrt()
}

fn one_pole(x: &mut [f64], a: f64) {
    let mut y = 0.0;
    for v in x.iter_mut() {
        y = a * y + *v;
        *v = y;
    }
}

/// One voiced segment of `n` samples.
fn voiced_segment(n: usize, sr: f64, st: &Style, art: Artifacts, config: &FixtureConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let f0 = rng.random_range(st.f0.0..st.f0.1);
    let vib_rate = rng.random_range(3.0..5.0);
    let vib_depth = rng.random_range(0.005..0.015);
    let vib_phase = rng.random_range(0.0..2.0 * PI);
    let glide = rng.random_range(-0.05..0.05);
    let jitter = if art.jitter { config.artifacts.jitter } else { 0.002 };
    let mut exc = vec![0.0; n];
    let mut pos = rng.random_range(0.0..sr / f0);
    while (pos as usize) + 1 < n {
        // Fractional pulse position, split linearly across two samples.
        let i = pos as usize;
        let frac = pos - i as f64;
        exc[i] += 1.0 - frac;
        exc[i + 1] += frac;
        let t = pos / sr;
        let f = f0 * (1.0 + glide * t / (n as f64 / sr)) * (1.0 + vib_depth * (2.0 * PI * vib_rate * t + vib_phase).sin());
        pos += sr / f * (1.0 + jitter * gauss(rng)).max(0.3);
    }
    // Glottal tilt then lip radiation.
    one_pole(&mut exc, 0.9);
    one_pole(&mut exc, 0.9);
    let mut prev = 0.0;
    for v in exc.iter_mut() {
        let d = *v - prev;
        prev = *v;
        *v = d;
    }
    let pulse_rms = rms(&exc).max(1e-12);
    let aspiration = config.aspiration;
    for v in exc.iter_mut() {
        *v = (1.0 - aspiration).sqrt() * *v / pulse_rms + aspiration.sqrt() * gauss(rng);
    }

    let vowel = VOWELS[rng.random_range(0..VOWELS.len())];
    for (k, &f) in vowel.iter().enumerate() {
        let freq = f * st.formant_scale * rng.random_range(0.93..1.07);
        let bw = 60.0 + 30.0 * k as f64 + rng.random_range(0.0..30.0);
        resonate(&mut exc, freq, bw, sr);
    }
    let ramp = ((0.03 * sr) as usize).min(n / 2);
    for i in 0..ramp {
        let g = 0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos();
        exc[i] *= g;
        exc[n - 1 - i] *= g;
    }
    exc
}

fn floor_noise(n: usize, st: &Style, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut y = 0.0;
    let mut x: Vec<f64> = (0..n)
        .map(|_| {
            y = st.floor_color * y + gauss(rng);
            y
        })
        .collect();
    let r = rms(&x);
    x.iter_mut().for_each(|v| *v /= r);
    x
}

/// Synthesizes one track.
pub fn synthesize(config: &FixtureConfig, dataset_index: usize, artifacts: Artifacts, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sr = config.sample_rate as f64;
    let n = (config.duration_s * sr).round() as usize;
    let st = style(dataset_index);
    let art = &config.artifacts;

    // Layout: lead silence, voiced, gap, voiced, tail silence.
    let lead = (rng.random_range(0.12..0.18) * config.duration_s * sr) as usize;
    let gap = (rng.random_range(0.10..0.15) * config.duration_s * sr) as usize;
    let tail = (rng.random_range(0.12..0.18) * config.duration_s * sr) as usize;
    let voiced = n.saturating_sub(lead + gap + tail);
    let first = (voiced as f64 * rng.random_range(0.4..0.6)) as usize;
    let segments = [(lead, first), (lead + first + gap, voiced - first)];

    let floor_gain = if artifacts.hum { art.hum_floor } else { 1.0 };
    let mut x: Vec<f64> = floor_noise(n, &st, &mut rng).iter().map(|v| v * config.floor_rms * floor_gain).collect();
    if artifacts.hum {
        for _ in 0..3 {
            let f = rng.random_range(250.0..3500.0);
            let ph = rng.random_range(0.0..2.0 * PI);
            let a = art.hum_level * config.floor_rms;
            for (i, v) in x.iter_mut().enumerate() {
                *v += a * (2.0 * PI * f * i as f64 / sr + ph).sin();
            }
        }
    }
    let level = config.voiced_rms * rng.random_range(0.85..1.15);
    let click_offset = rng.random_range(0..(art.click_period_ms * sr / 1000.0) as usize);
    for &(start, len) in &segments {
        if len < 64 {
            continue;
        }
        let seg = voiced_segment(len, sr, &st, artifacts, config, &mut rng);
        let g = level / rms(&seg).max(1e-12);
        for (i, v) in seg.iter().enumerate() {
            x[start + i] += g * v;
        }
        if artifacts.clicks {
            // Clicks on a track-wide frame grid, ramped like the segment.
            let period = (art.click_period_ms * sr / 1000.0).round() as usize;
            let height = art.click_level * level * (period as f64).sqrt();
            let first = start.div_ceil(period) * period + click_offset;
            let ramp = ((0.03 * sr) as usize).min(len / 2).max(1);
            for p in (first..start + len).step_by(period) {
                let edge = (p - start).min(start + len - 1 - p);
                x[p] += height * (edge as f64 / ramp as f64).min(1.0);
            }
        }
    }
    lowpass(&x, config.bandwidth_hz, sr).into_iter().map(|v| v.clamp(-1.0, 1.0)).collect()
}

/// Writes `audio/*.wav` and `manifest.csv` under `out_dir`.
pub fn generate_fixture(out_dir: &Path, config: &FixtureConfig, seed: u64) -> Result<DatasetManifest> {
    if config.datasets.is_empty() || config.tracks_per_cell == 0 {
        return Err(Error::InvalidArgument("fixture needs datasets and tracks".into()));
    }
    let audio_dir = out_dir.join("audio");
    std::fs::create_dir_all(&audio_dir)?;
    let n_train = (config.tracks_per_cell as f64 * config.train_fraction).round() as usize;
    let n_dev = (config.tracks_per_cell as f64 * config.dev_fraction).round() as usize;
    let mut records = Vec::new();
    let mut index = 0u64;
    for (d, tag) in config.datasets.iter().enumerate() {
        for label in [Label::Real, Label::Fake] {
            for i in 0..config.tracks_per_cell {
                let artifacts = match label {
                    Label::Real => Artifacts::NONE,
                    Label::Fake => Artifacts::for_fake(&config.artifacts, i),
                };
                let samples = synthesize(config, d, artifacts, derive_seed(seed, index));
                index += 1;
                let name = format!("{tag}_{}_{i:03}.wav", label.to_string().to_lowercase());
                let track = AudioTrack::new(samples, config.sample_rate, name.clone())?;
                write_wav(&audio_dir.join(&name), &track, WavEncoding::Pcm16)?;
                let split = if i < n_train {
                    Split::Train
                } else if i < n_train + n_dev {
                    Split::Dev
                } else {
                    Split::Eval
                };
                records.push(SampleRecord {
                    path: format!("audio/{name}"),
                    label,
                    dataset: tag.clone(),
                    split,
                    line: records.len() + 2,
                });
            }
        }
    }
    let manifest = DatasetManifest {
        records,
        base_dir: out_dir.to_path_buf(),
    };
    super::atomic_write(&out_dir.join("manifest.csv"), manifest.to_csv().as_bytes())?;
    Ok(manifest)
}
