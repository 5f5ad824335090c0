//! Short-term / long-term (STLT) prediction features.
//!
//! For every frame and every even predictor order 2..=50 the extractor measures
//! the short-term prediction gain of the LPC fit and the one-tap long-term gain of
//! the order-p residual stream. Per order, the frame gains are summarized by two
//! normalized 16-bin histograms.

use serde::{Deserialize, Serialize};

use super::lpc::{self, gain_db};
use crate::audio::{frame_count, ms_to_samples, silence_from_energy, AudioTrack, VadConfig};
use crate::dsp;
use crate::error::{Error, Result};

pub const STLT_DIM: usize = 800;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StltConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub orders: Vec<usize>,
    pub lag_min: usize,
    pub lag_max: usize,
    pub bins: usize,
    pub st_range_db: f64,
    pub lt_range_db: f64,
    /// Frames with mean-square amplitude below this are skipped.
    pub min_frame_power: f64,
    /// Aggregate only frames the silence detector marks as speech.
    pub voiced_only: bool,
    pub vad: VadConfig,
}

impl Default for StltConfig {
    fn default() -> Self {
        Self {
            frame_ms: 32.0,
            hop_ms: 16.0,
            orders: (1..=25).map(|i| 2 * i).collect(),
            lag_min: 32,
            lag_max: 400,
            bins: 16,
            st_range_db: 30.0,
            lt_range_db: 20.0,
            min_frame_power: 1e-10,
            voiced_only: true,
            vad: VadConfig {
                rel_threshold_db: 20.0,
                ..VadConfig::default()
            },
        }
    }
}

impl StltConfig {
    pub fn dim(&self) -> usize {
        self.orders.len() * 2 * self.bins
    }
}

/// Per-frame gains for one order, kept for diagnostics and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderGains {
    pub order: usize,
    pub st_db: Vec<f64>,
    pub lt_db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StltFeatures {
    pub values: Vec<f64>,
    pub voiced_frames: usize,
}

fn histogram(values: &[f64], bins: usize, range: f64) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    if values.is_empty() {
        return h;
    }
    for &v in values {
        let idx = ((v / range) * bins as f64).floor();
        let idx = idx.clamp(0.0, (bins - 1) as f64) as usize;
        h[idx] += 1.0;
    }
    let n = values.len() as f64;
    h.iter_mut().for_each(|x| *x /= n);
    h
}

/// Frame-level short-term and long-term gains for every configured order.
pub fn stlt_gains(track: &AudioTrack, config: &StltConfig) -> Result<Vec<OrderGains>> {
    let frame_len = ms_to_samples(config.frame_ms, track.sample_rate);
    let hop = ms_to_samples(config.hop_ms, track.sample_rate);
    let max_order = *config
        .orders
        .iter()
        .max()
        .ok_or_else(|| Error::InvalidArgument("no predictor orders".into()))?;
    if hop == 0 || frame_len < hop || frame_len <= max_order {
        return Err(Error::InvalidArgument(format!("bad STLT framing {frame_len}/{hop}")));
    }
    let n_frames = frame_count(track.len(), frame_len, hop);
    if n_frames < 3 {
        return Err(Error::TooShort {
            needed: frame_len + 2 * hop,
            got: track.len(),
        });
    }
    let x = &track.samples;
    let window = dsp::hamming(frame_len);
    let stream_len = (n_frames - 1) * hop + frame_len;

    let windowed_frames: Vec<Vec<f64>> = (0..n_frames)
        .map(|f| x[f * hop..f * hop + frame_len].iter().zip(&window).map(|(a, w)| a * w).collect())
        .collect();
    let silent = if config.voiced_only {
        let energy: Vec<f64> = windowed_frames
            .iter()
            .map(|w| 10.0 * w.iter().map(|v| v * v).sum::<f64>().log10())
            .collect();
        silence_from_energy(&energy, &config.vad).0
    } else {
        vec![false; n_frames]
    };

    // One Levinson run per frame yields every order. Silent frames still get a
    // predictor so the residual stream stays continuous for the lag search.
    let mut frame_lpc: Vec<Option<(f64, Vec<lpc::LpcResult>)>> = Vec::with_capacity(n_frames);
    for (f, windowed) in windowed_frames.iter().enumerate() {
        let seg = &x[f * hop..f * hop + frame_len];
        let power = seg.iter().map(|v| v * v).sum::<f64>() / frame_len as f64;
        if power < config.min_frame_power {
            frame_lpc.push(None);
            continue;
        }
        let mut r = lpc::autocorrelation(windowed, max_order);
        lpc::regularize(&mut r);
        match lpc::levinson_path(&r, max_order) {
            Ok(path) => frame_lpc.push(Some((r[0], path))),
            Err(_) => frame_lpc.push(None),
        }
    }

    let pad = config.lag_max;
    let mut out = Vec::with_capacity(config.orders.len());
    let mut stream = Vec::with_capacity(pad + stream_len);
    for &order in &config.orders {
        // Residual stream: each frame's predictor covers its hop block (the last
        // frame covers its full length). Skipped frames contribute zeros.
        stream.clear();
        stream.resize(pad, 0.0);
        let mut seg = Vec::with_capacity(frame_len);
        for f in 0..n_frames {
            let start = f * hop;
            let end = if f + 1 == n_frames { start + frame_len } else { start + hop };
            seg.clear();
            match &frame_lpc[f] {
                Some((_, path)) => lpc::residual_segment(x, &path[order - 1].coefficients, start, end, &mut seg),
                None => seg.resize(end - start, 0.0),
            }
            stream.extend_from_slice(&seg);
        }
        let lt = long_term_gains(&stream, pad, n_frames, frame_len, hop, config);

        let mut st_db = Vec::new();
        let mut lt_db = Vec::new();
        for (f, entry) in frame_lpc.iter().enumerate() {
            if silent[f] {
                continue;
            }
            if let Some((r0, path)) = entry {
                st_db.push(10.0 * (r0 / path[order - 1].residual_energy).log10());
                lt_db.push(lt[f]);
            }
        }
        out.push(OrderGains { order, st_db, lt_db });
    }
    Ok(out)
}

/// Long-term gain of every frame window of a zero-padded residual stream.
fn long_term_gains(stream: &[f64], pad: usize, n_frames: usize, frame_len: usize, hop: usize, config: &StltConfig) -> Vec<f64> {
    let (lag_min, lag_max) = (config.lag_min, config.lag_max);
    let n_lags = lag_max - lag_min + 1;
    let mut prefix = Vec::with_capacity(stream.len() + 1);
    prefix.push(0.0);
    for v in stream {
        prefix.push(prefix.last().unwrap() + v * v);
    }
    let energy = |a: usize, b: usize| prefix[b] - prefix[a];

    // Cross terms per hop-sized block, summed per frame when frames tile blocks.
    let tiles = frame_len % hop == 0;
    let block_len = if tiles { hop } else { frame_len };
    let n_blocks = if tiles { (n_frames - 1) + frame_len / hop } else { n_frames };
    let mut cross = vec![0.0; n_blocks * n_lags];
    for b in 0..n_blocks {
        let s = pad + b * hop;
        let target = &stream[s..s + block_len];
        for (li, lag) in (lag_min..=lag_max).enumerate() {
            let lagged = &stream[s - lag..s - lag + block_len];
            cross[b * n_lags + li] = lagged.iter().zip(target).map(|(a, b)| a * b).sum();
        }
    }

    (0..n_frames)
        .map(|f| {
            let s = pad + f * hop;
            let e = s + frame_len;
            let target_energy = energy(s, e);
            if target_energy <= 0.0 {
                return 0.0;
            }
            let blocks: Vec<usize> = if tiles { (f..f + frame_len / hop).collect() } else { vec![f] };
            let mut best = 0.0f64;
            for (li, lag) in (lag_min..=lag_max).enumerate() {
                let c: f64 = blocks.iter().map(|&b| cross[b * n_lags + li]).sum();
                let lagged_energy = energy(s - lag, e - lag);
                if lagged_energy <= 0.0 {
                    continue;
                }
                let rho = (c * c / (target_energy * lagged_energy)).min(1.0);
                if rho > best + 1e-12 {
                    best = rho;
                }
            }
            gain_db(best)
        })
        .collect()
}

pub fn extract_stlt_features(track: &AudioTrack, config: &StltConfig) -> Result<StltFeatures> {
    let gains = stlt_gains(track, config)?;
    let mut values = Vec::with_capacity(config.dim());
    let mut voiced = 0;
    for g in &gains {
        voiced = g.st_db.len();
        values.extend(histogram(&g.st_db, config.bins, config.st_range_db));
        values.extend(histogram(&g.lt_db, config.bins, config.lt_range_db));
    }
    Ok(StltFeatures {
        values,
        voiced_frames: voiced,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(seed: u64, n: usize) -> AudioTrack {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        AudioTrack::new((0..n).map(|_| { let v: f64 = StandardNormal.sample(&mut rng); 0.1 * v }).collect::<Vec<f64>>(), 16000, "noise").unwrap()
    }

    #[test]
    fn canonical_layout_is_800() {
        assert_eq!(StltConfig::default().dim(), STLT_DIM);
    }

    #[test]
    fn frame_lt_gain_matches_direct_search() {
        let track = noise(4, 8000);
        let mut x = track.samples.clone();
        for t in 120..x.len() {
            x[t] += 0.8 * x[t - 120];
        }
        let track = AudioTrack::new(x, 16000, "p").unwrap();
        let config = StltConfig::default();
        let gains = stlt_gains(&track, &config).unwrap();
        // Rebuild the order-2 stream and check a middle frame against the
        // reference single-window search.
        let frame_len = 512;
        let hop = 256;
        let n_frames = frame_count(track.len(), frame_len, hop);
        let mut stream = vec![0.0; config.lag_max];
        for f in 0..n_frames {
            let seg = &track.samples[f * hop..f * hop + frame_len];
            let w = dsp::hamming(frame_len);
            let windowed: Vec<f64> = seg.iter().zip(&w).map(|(a, b)| a * b).collect();
            let mut r = lpc::autocorrelation(&windowed, 50);
            lpc::regularize(&mut r);
            let path = lpc::levinson_path(&r, 50).unwrap();
            let end = if f + 1 == n_frames { f * hop + frame_len } else { f * hop + hop };
            lpc::residual_segment(&track.samples, &path[1].coefficients, f * hop, end, &mut stream);
        }
        for f in [3usize, 10, 20] {
            let s = f * hop;
            let (_, direct) = lpc::long_term_gain(&stream[s..s + config.lag_max + frame_len], config.lag_min, config.lag_max).unwrap();
            assert!((gains[0].lt_db[f] - direct).abs() < 1e-9, "frame {f}: {} vs {direct}", gains[0].lt_db[f]);
        }
    }

    #[test]
    fn histograms_sum_to_one() {
        let feats = extract_stlt_features(&noise(5, 16000), &StltConfig::default()).unwrap();
        assert_eq!(feats.values.len(), STLT_DIM);
        for block in feats.values.chunks(16) {
            assert!((block.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert!(block.iter().all(|&v| (0.0..=1.0).contains(&v)));
        }
    }

    #[test]
    fn silent_track_gives_empty_histograms() {
        let track = AudioTrack::new(vec![0.0; 8000], 16000, "z").unwrap();
        let feats = extract_stlt_features(&track, &StltConfig::default()).unwrap();
        assert_eq!(feats.voiced_frames, 0);
        assert!(feats.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn too_short_is_rejected() {
        let track = AudioTrack::new(vec![0.1; 700], 16000, "s").unwrap();
        assert!(matches!(extract_stlt_features(&track, &StltConfig::default()), Err(Error::TooShort { .. })));
    }
}
