//! Library routines checked against slow, direct reference computations.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use synthdet_core::audio::{frame_signal, AudioTrack, WindowKind};
use synthdet_core::detector::Label;
use synthdet_core::eval::{pearson_matrix, roc_and_auc};
use synthdet_core::features::bicoh::{compute_bicoherence, four_moments, BicohConfig};
use synthdet_core::features::lpc::{autocorrelation, levinson_durbin};
use synthdet_core::features::mfcc::{compute_mfcc, MfccConfig};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

#[test]
fn levinson_matches_toeplitz_solve() {
    let mut r = rng(1);
    for order in [2usize, 10, 24, 50] {
        // An AR-ish signal so the Toeplitz system is well conditioned.
        let mut x = vec![0.0f64; 2048];
        for t in 0..x.len() {
            let e: f64 = r.random_range(-1.0..1.0);
            x[t] = e + if t > 0 { 0.6 * x[t - 1] } else { 0.0 } - if t > 1 { 0.2 * x[t - 2] } else { 0.0 };
        }
        let ac = autocorrelation(&x, order);
        let lpc = levinson_durbin(&ac, order).unwrap();
        let toeplitz: Vec<Vec<f64>> = (0..order)
            .map(|i| (0..order).map(|j| ac[i.abs_diff(j)]).collect())
            .collect();
        let direct = solve(toeplitz, ac[1..=order].to_vec());
        for (a, b) in lpc.coefficients.iter().zip(&direct) {
            assert!((a - b).abs() < 1e-7, "order {order}: {a} vs {b}");
        }
        let energy = ac[0] - direct.iter().zip(&ac[1..]).map(|(a, r)| a * r).sum::<f64>();
        assert!((lpc.residual_energy - energy).abs() < 1e-7 * ac[0]);
    }
}

#[test]
fn auc_matches_pair_count() {
    let mut r = rng(2);
    // Coarse scores force plenty of ties.
    let scores: Vec<f64> = (0..1000).map(|_| (r.random_range(0.0..1.0f64) * 50.0).round() / 50.0).collect();
    let labels: Vec<Label> = scores
        .iter()
        .map(|&s| if r.random_range(0.0..1.0) < 0.3 + 0.4 * s { Label::Fake } else { Label::Real })
        .collect();
    let roc = roc_and_auc(&scores, &labels).unwrap();
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != Label::Fake {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] != Label::Real {
                continue;
            }
            pairs += 1.0;
            if si > sj {
                wins += 1.0;
            } else if si == sj {
                wins += 0.5;
            }
        }
    }
    assert!((roc.auc - wins / pairs).abs() < 1e-9, "{} vs {}", roc.auc, wins / pairs);
}

#[test]
fn pearson_matches_naive_formula() {
    let mut r = rng(3);
    let (n, d) = (200, 12);
    let base: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let x = Array2::from_shape_fn((n, d), |(i, j)| 100.0 + (j as f64) * base[i] + r.random_range(-1.0..1.0));
    let m = pearson_matrix(x.view(), Vec::new()).unwrap();
    for a in 0..d {
        for b in 0..d {
            let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for i in 0..n {
                let (u, v) = (x[[i, a]], x[[i, b]]);
                sa += u;
                sb += v;
                saa += u * u;
                sbb += v * v;
                sab += u * v;
            }
            let nf = n as f64;
            let naive = (nf * sab - sa * sb) / ((nf * saa - sa * sa).sqrt() * (nf * sbb - sb * sb).sqrt());
            assert!((m.r[[a, b]] - naive).abs() < 1e-10, "({a},{b}) {} vs {naive}", m.r[[a, b]]);
        }
    }
}

/// DFT bin `k` of a zero-padded sequence, summed directly.
fn dft_bin(x: &[f64], n_fft: usize, k: usize) -> (f64, f64) {
    x.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, &v)| {
        let ang = -2.0 * PI * (k * n) as f64 / n_fft as f64;
        (re + v * ang.cos(), im + v * ang.sin())
    })
}

#[test]
fn bicoherence_bin_matches_triple_product() {
    let mut r = rng(4);
    let sr = 16000.0;
    let samples: Vec<f64> = (0..4000)
        .map(|t| {
            let t = t as f64 / sr;
            (2.0 * PI * 500.0 * t).sin() + (2.0 * PI * 1250.0 * t + 0.3).sin() + 0.3 * r.random_range(-1.0..1.0)
        })
        .collect();
    let config = BicohConfig::default();
    let track = AudioTrack::new(samples.clone(), 16000, "b").unwrap();
    let map = compute_bicoherence(&track, &config).unwrap();
    let n = config.seg_len;
    let window: Vec<f64> = (0..n).map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()).collect();
    for (k1, k2) in [(16usize, 16usize), (40, 16), (100, 3), (200, 55)] {
        let (mut br, mut bi, mut p12, mut p3) = (0.0, 0.0, 0.0, 0.0);
        let mut start = 0;
        while start + n <= samples.len() {
            let seg = &samples[start..start + n];
            let mean = seg.iter().sum::<f64>() / n as f64;
            let w: Vec<f64> = seg.iter().zip(&window).map(|(x, w)| (x - mean) * w).collect();
            let (a, b) = (dft_bin(&w, config.fft_size, k1), dft_bin(&w, config.fft_size, k2));
            let c = dft_bin(&w, config.fft_size, k1 + k2);
            let pr = a.0 * b.0 - a.1 * b.1;
            let pi = a.0 * b.1 + a.1 * b.0;
            // pair * conj(c)
            br += pr * c.0 + pi * c.1;
            bi += pi * c.0 - pr * c.1;
            p12 += pr * pr + pi * pi;
            p3 += c.0 * c.0 + c.1 * c.1;
            start += config.hop;
        }
        let direct = (br * br + bi * bi).sqrt() / (p12 * p3).sqrt();
        let idx = map.index_of(k1, k2).unwrap();
        assert!((map.magnitude[idx] - direct).abs() < 1e-9, "({k1},{k2}) {} vs {direct}", map.magnitude[idx]);
        assert!((map.phase[idx] - bi.atan2(br)).abs() < 1e-9);
    }
}

#[test]
fn moments_match_two_pass() {
    let mut r = rng(5);
    for len in [3usize, 50, 1000] {
        let v: Vec<f64> = (0..len).map(|_| r.random_range(0.0..1.0f64).powi(3)).collect();
        let n = len as f64;
        let mean = v.iter().sum::<f64>() / n;
        let central = |p: i32| v.iter().map(|x| (x - mean).powi(p)).sum::<f64>() / n;
        let var = central(2);
        let skew = central(3) / var.powf(1.5);
        let kurt = central(4) / (var * var);
        let (m, flat) = four_moments(&v);
        assert!(!flat);
        for (got, want) in m.iter().zip([mean, var, skew, kurt]) {
            assert!((got - want).abs() < 1e-12 * want.abs().max(1.0), "{got} vs {want}");
        }
    }
}

#[test]
fn mfcc_matches_direct_formula() {
    let mut r = rng(6);
    let samples: Vec<f64> = (0..1200).map(|_| r.random_range(-0.5..0.5)).collect();
    let track = AudioTrack::new(samples, 16000, "m").unwrap();
    let frames = frame_signal(&track, 25.0, 10.0, WindowKind::Hamming).unwrap();
    let config = MfccConfig::default();
    let mfcc = compute_mfcc(&frames, &config);

    let mel = |hz: f64| 2595.0 * (1.0 + hz / 700.0).log10();
    let hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
    let (nm, nfft) = (config.n_mels, config.fft_size);
    let edges: Vec<f64> = (0..nm + 2).map(|i| hz(mel(8000.0) * i as f64 / (nm + 1) as f64)).collect();
    for f in [0usize, frames.num_frames() / 2] {
        let frame = frames.frames.row(f).to_vec();
        let power: Vec<f64> = (0..=nfft / 2)
            .map(|k| {
                let (re, im) = dft_bin(&frame, nfft, k);
                re * re + im * im
            })
            .collect();
        let log_mel: Vec<f64> = (0..nm)
            .map(|m| {
                let tri = |k: usize| {
                    let f = k as f64 * 16000.0 / nfft as f64;
                    let (l, c, h) = (edges[m], edges[m + 1], edges[m + 2]);
                    if f > l && f <= c {
                        (f - l) / (c - l)
                    } else if f > c && f < h {
                        (h - f) / (h - c)
                    } else {
                        0.0
                    }
                };
                let area: f64 = (0..=nfft / 2).map(tri).sum();
                let e: f64 = (0..=nfft / 2).map(|k| tri(k) * power[k]).sum::<f64>() / area;
                e.max(1e-10).ln()
            })
            .collect();
        for c in 1..=config.n_coeffs {
            let dct: f64 = log_mel
                .iter()
                .enumerate()
                .map(|(i, v)| v * (PI * c as f64 * (2 * i + 1) as f64 / (2 * nm) as f64).cos())
                .sum::<f64>()
                * (2.0 / nm as f64).sqrt();
            assert!((mfcc[[f, c - 1]] - dct).abs() < 1e-9, "frame {f} c{c}: {} vs {dct}", mfcc[[f, c - 1]]);
        }
    }
}
