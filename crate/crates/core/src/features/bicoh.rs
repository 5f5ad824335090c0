//! Bicoherence magnitude/phase features.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::audio::{frame_count, AudioTrack};
use crate::dsp::{self, RealFft};
use crate::error::{Error, Result};

pub const BICOH_DIM: usize = 8;

const DENOM_GUARD: f64 = 1e-20;
const PHASE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BicohConfig {
    pub seg_len: usize,
    pub hop: usize,
    pub fft_size: usize,
}

impl Default for BicohConfig {
    fn default() -> Self {
        Self {
            seg_len: 320,
            hop: 160,
            fft_size: 512,
        }
    }
}

/// Bicoherence over the principal region `1 <= k2 <= k1`, `k1 + k2 <= fft_size / 2`.
///
/// Cells are stored row by row in `k1`, and within a row by increasing `k2`.
#[derive(Debug, Clone, PartialEq)]
pub struct BicoherenceMap {
    pub fft_size: usize,
    pub cells: Vec<(usize, usize)>,
    pub magnitude: Vec<f64>,
    pub phase: Vec<f64>,
    pub num_segments: usize,
}

impl BicoherenceMap {
    pub fn index_of(&self, k1: usize, k2: usize) -> Option<usize> {
        self.cells.iter().position(|&c| c == (k1, k2))
    }
}

pub fn principal_region(fft_size: usize) -> Vec<(usize, usize)> {
    let half = fft_size / 2;
    let mut cells = Vec::new();
    for k1 in 1..half {
        for k2 in 1..=k1.min(half - k1) {
            cells.push((k1, k2));
        }
    }
    cells
}

/// Windowed, mean-removed segment spectra.
pub fn segment_spectra(samples: &[f64], config: &BicohConfig) -> Result<Vec<Vec<Complex64>>> {
    let n_seg = frame_count(samples.len(), config.seg_len, config.hop);
    if n_seg < 2 {
        return Err(Error::TooShort {
            needed: config.seg_len + config.hop,
            got: samples.len(),
        });
    }
    let window = dsp::hamming(config.seg_len);
    let mut fft = RealFft::new(config.fft_size);
    let half = config.fft_size / 2;
    Ok((0..n_seg)
        .map(|s| {
            let seg = &samples[s * config.hop..s * config.hop + config.seg_len];
            let mean = seg.iter().sum::<f64>() / seg.len() as f64;
            let buf: Vec<f64> = seg.iter().zip(&window).map(|(x, w)| (x - mean) * w).collect();
            fft.spectrum(&buf)[..=half].to_vec()
        })
        .collect())
}

pub fn bicoherence_from_spectra(spectra: &[Vec<Complex64>], fft_size: usize) -> BicoherenceMap {
    let cells = principal_region(fft_size);
    let mut magnitude = Vec::with_capacity(cells.len());
    let mut phase = Vec::with_capacity(cells.len());
    for &(k1, k2) in &cells {
        let mut num = Complex64::new(0.0, 0.0);
        let mut pair_power = 0.0;
        let mut sum_power = 0.0;
        for x in spectra {
            let pair = x[k1] * x[k2];
            let s = x[k1 + k2];
            num += pair * s.conj();
            pair_power += pair.norm_sqr();
            sum_power += s.norm_sqr();
        }
        magnitude.push(num.norm() / ((pair_power * sum_power).sqrt() + DENOM_GUARD));
        phase.push(if num.norm() < PHASE_FLOOR { 0.0 } else { num.arg() });
    }
    BicoherenceMap {
        fft_size,
        cells,
        magnitude,
        phase,
        num_segments: spectra.len(),
    }
}

pub fn compute_bicoherence(track: &AudioTrack, config: &BicohConfig) -> Result<BicoherenceMap> {
    let spectra = segment_spectra(&track.samples, config)?;
    Ok(bicoherence_from_spectra(&spectra, config.fft_size))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BicohFeatures {
    pub values: [f64; BICOH_DIM],
    /// Zero-variance flags for the magnitude and phase blocks.
    pub flat: [bool; 2],
}

/// Mean, variance, skewness and (non-excess) kurtosis. Zero variance gives
/// skewness and kurtosis 0 and sets the flag.
pub fn four_moments(values: &[f64]) -> ([f64; 4], bool) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    if m2 <= 1e-300 {
        return ([mean, 0.0, 0.0, 0.0], true);
    }
    ([mean, m2, m3 / m2.powf(1.5), m4 / (m2 * m2)], false)
}

pub fn extract_bicoh_features(map: &BicoherenceMap) -> BicohFeatures {
    let (mag, mag_flat) = four_moments(&map.magnitude);
    let (ph, ph_flat) = four_moments(&map.phase);
    let mut values = [0.0; BICOH_DIM];
    values[..4].copy_from_slice(&mag);
    values[4..].copy_from_slice(&ph);
    BicohFeatures {
        values,
        flat: [mag_flat, ph_flat],
    }
}
