use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::audio::AudioTrack;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseStats {
    /// Fraction of output samples clipped to [-1, 1].
    pub clip_fraction: f64,
    /// Signal power over added-noise power, in dB.
    pub measured_snr_db: f64,
}

/// Adds i.i.d. zero-mean Gaussian noise of standard deviation `std`, then clips
/// to [-1, 1]. The signal is not rescaled.
pub fn add_gaussian_noise(track: &AudioTrack, std: f64, seed: u64) -> Result<(AudioTrack, NoiseStats)> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::InvalidArgument(format!("noise std {std} must be finite and >= 0")));
    }
    if std == 0.0 {
        let stats = NoiseStats {
            clip_fraction: 0.0,
            measured_snr_db: f64::INFINITY,
        };
        return Ok((track.clone(), stats));
    }
    let normal = Normal::new(0.0, std).expect("valid std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut clipped = 0usize;
    let mut noise_power = 0.0;
    let samples: Vec<f64> = track
        .samples
        .iter()
        .map(|&x| {
            let n = normal.sample(&mut rng);
            noise_power += n * n;
            let y = x + n;
            if y.abs() > 1.0 {
                clipped += 1;
            }
            y.clamp(-1.0, 1.0)
        })
        .collect();
    let signal_power: f64 = track.samples.iter().map(|v| v * v).sum();
    let clip_fraction = clipped as f64 / samples.len() as f64;
    if clip_fraction > 0.0 {
        log::debug!("{}: {:.4}% of samples clipped after noise", track.source_id, 100.0 * clip_fraction);
    }
    let out = AudioTrack::new(samples, track.sample_rate, track.source_id.clone())?;
    Ok((
        out,
        NoiseStats {
            clip_fraction,
            measured_snr_db: 10.0 * (signal_power / noise_power).log10(),
        },
    ))
}
