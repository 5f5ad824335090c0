//! MFCC front end: power spectrum, area-normalized triangular mel filterbank,
//! log compression and orthonormal DCT-II.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::audio::FrameSequence;
use crate::dsp::RealFft;

/// Floor applied to filterbank energies before the logarithm.
pub const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    /// Coefficients c1..=c_n are kept; c0 is dropped.
    pub n_coeffs: usize,
    pub n_mels: usize,
    pub fft_size: usize,
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            n_coeffs: 13,
            n_mels: 26,
            fft_size: 512,
            f_min: 0.0,
            f_max: 8000.0,
        }
    }
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// `n_mels x (fft_size/2 + 1)` filterbank; each filter's weights sum to 1.
pub fn mel_filterbank(config: &MfccConfig, sample_rate: u32) -> Array2<f64> {
    let bins = config.fft_size / 2 + 1;
    let bin_hz = sample_rate as f64 / config.fft_size as f64;
    let f_max = config.f_max.min(sample_rate as f64 / 2.0);
    let (lo, hi) = (hz_to_mel(config.f_min), hz_to_mel(f_max));
    let edges: Vec<f64> = (0..config.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (config.n_mels + 1) as f64))
        .collect();
    let mut bank = Array2::zeros((config.n_mels, bins));
    for m in 0..config.n_mels {
        let (left, center, right) = (edges[m], edges[m + 1], edges[m + 2]);
        for k in 0..bins {
            let f = k as f64 * bin_hz;
            let w = if f > left && f <= center {
                (f - left) / (center - left)
            } else if f > center && f < right {
                (right - f) / (right - center)
            } else {
                0.0
            };
            bank[[m, k]] = w;
        }
        let sum: f64 = bank.row(m).sum();
        if sum > 0.0 {
            bank.row_mut(m).mapv_inplace(|w| w / sum);
        }
    }
    bank
}

/// Orthonormal DCT-II matrix, `n x n`, rows indexed by output coefficient.
pub fn dct2_matrix(n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |(k, i)| {
        let scale = if k == 0 {
            (1.0 / n as f64).sqrt()
        } else {
            (2.0 / n as f64).sqrt()
        };
        scale * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos()
    })
}

/// Computes MFCCs for every frame: `num_frames x n_coeffs`.
pub fn compute_mfcc(frames: &FrameSequence, config: &MfccConfig) -> Array2<f64> {
    let bank = mel_filterbank(config, frames.sample_rate);
    let dct = dct2_matrix(config.n_mels);
    let mut fft = RealFft::new(config.fft_size);
    let mut out = Array2::zeros((frames.num_frames(), config.n_coeffs));
    for (i, frame) in frames.frames.rows().into_iter().enumerate() {
        let frame = frame.to_vec();
        let power = ndarray::Array1::from(fft.power(&frame));
        let log_mel = bank.dot(&power).mapv(|e| e.max(LOG_FLOOR).ln());
        let cep = dct.dot(&log_mel);
        for c in 0..config.n_coeffs {
            out[[i, c]] = cep[c + 1];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{frame_signal, AudioTrack, WindowKind};

    #[test]
    fn zero_frames_give_zero_cepstrum() {
        let track = AudioTrack::new(vec![0.0; 4000], 16000, "z").unwrap();
        let frames = frame_signal(&track, 25.0, 10.0, WindowKind::Hamming).unwrap();
        let mfcc = compute_mfcc(&frames, &MfccConfig::default());
        assert!(mfcc.iter().all(|&c| c.abs() < 1e-12));
    }

    #[test]
    fn flat_spectrum_has_near_zero_ac_terms() {
        // A unit impulse has a perfectly flat power spectrum.
        let mut frame = vec![0.0; 400];
        frame[0] = 1.0;
        let frames = FrameSequence {
            frames: Array2::from_shape_vec((1, 400), frame).unwrap(),
            frame_len: 400,
            hop: 160,
            window: vec![1.0; 400],
            sample_rate: 16000,
        };
        let config = MfccConfig::default();
        let mfcc = compute_mfcc(&frames, &config);
        // Oracle: direct DCT sum over the log-mel vector.
        let bank = mel_filterbank(&config, 16000);
        let log_mel: Vec<f64> = bank
            .rows()
            .into_iter()
            .map(|r| r.sum().max(LOG_FLOOR).ln())
            .collect();
        let n = log_mel.len();
        for k in 1..=13 {
            let direct: f64 = log_mel
                .iter()
                .enumerate()
                .map(|(i, &v)| v * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos())
                .sum::<f64>()
                * (2.0 / n as f64).sqrt();
            assert!((mfcc[[0, k - 1]] - direct).abs() < 1e-9);
            assert!(mfcc[[0, k - 1]].abs() < 0.1, "c{k} = {}", mfcc[[0, k - 1]]);
        }
    }

    #[test]
    fn filters_are_area_normalized() {
        let bank = mel_filterbank(&MfccConfig::default(), 16000);
        for row in bank.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dct_matrix_is_orthonormal() {
        let d = dct2_matrix(26);
        let eye = d.dot(&d.t());
        for i in 0..26 {
            for j in 0..26 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((eye[[i, j]] - want).abs() < 1e-12);
            }
        }
    }
}
