//! Linear prediction: autocorrelation, Levinson-Durbin recursion and one-tap
//! long-term (pitch) prediction gain.

use crate::error::{Error, Result};

/// Biased autocorrelation `r[k] = sum_t x[t] x[t+k]` for `k = 0..=max_lag`.
pub fn autocorrelation(frame: &[f64], max_lag: usize) -> Vec<f64> {
    (0..=max_lag)
        .map(|k| {
            if k >= frame.len() {
                0.0
            } else {
                frame[..frame.len() - k]
                    .iter()
                    .zip(&frame[k..])
                    .map(|(a, b)| a * b)
                    .sum()
            }
        })
        .collect()
}

/// Conditions `r[0]` so the recursion stays well-posed on near-silent frames.
pub fn regularize(r: &mut [f64]) {
    if let Some(r0) = r.first_mut() {
        *r0 = *r0 * (1.0 + 1e-9) + 1e-12;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpcResult {
    pub order: usize,
    /// Predictor `x[t] ~ sum_k a[k] x[t-1-k]`.
    pub coefficients: Vec<f64>,
    pub residual_energy: f64,
    pub reflection: Vec<f64>,
}

/// Runs the Levinson-Durbin recursion and returns the solution at every order
/// `1..=max_order`.
pub fn levinson_path(r: &[f64], max_order: usize) -> Result<Vec<LpcResult>> {
    if max_order >= r.len() {
        return Err(Error::InvalidArgument(format!(
            "order {max_order} needs {} autocorrelation lags, got {}",
            max_order + 1,
            r.len()
        )));
    }
    if !(r[0] > 0.0) {
        return Err(Error::Numeric(format!("r[0] = {} is not positive", r[0])));
    }
    let mut a: Vec<f64> = Vec::with_capacity(max_order);
    let mut reflection = Vec::with_capacity(max_order);
    let mut energy = r[0];
    let mut path = Vec::with_capacity(max_order);
    for m in 1..=max_order {
        let acc: f64 = r[m] - a.iter().enumerate().map(|(j, aj)| aj * r[m - 1 - j]).sum::<f64>();
        let k = acc / energy;
        if !k.is_finite() {
            return Err(Error::Numeric(format!("non-finite reflection coefficient at order {m}")));
        }
        let prev = a.clone();
        for j in 0..m - 1 {
            a[j] = prev[j] - k * prev[m - 2 - j];
        }
        a.push(k);
        reflection.push(k);
        energy *= 1.0 - k * k;
        if !energy.is_finite() || energy < 0.0 {
            return Err(Error::Numeric(format!("prediction error energy {energy} at order {m}")));
        }
        path.push(LpcResult {
            order: m,
            coefficients: a.clone(),
            residual_energy: energy,
            reflection: reflection.clone(),
        });
    }
    Ok(path)
}

pub fn levinson_durbin(r: &[f64], order: usize) -> Result<LpcResult> {
    if order == 0 {
        return Err(Error::InvalidArgument("order must be at least 1".into()));
    }
    Ok(levinson_path(r, order)?.pop().expect("order >= 1"))
}

/// Prediction residual of `signal[start..end]` using `coefficients`, with samples
/// before index 0 treated as zero.
pub fn residual_segment(signal: &[f64], coefficients: &[f64], start: usize, end: usize, out: &mut Vec<f64>) {
    for t in start..end {
        let mut pred = 0.0;
        for (k, &ak) in coefficients.iter().enumerate() {
            if t > k {
                pred += ak * signal[t - 1 - k];
            }
        }
        out.push(signal[t] - pred);
    }
}

pub const LT_GAIN_MAX_DB: f64 = 20.0;

/// Best pitch lag and one-tap long-term prediction gain in dB.
///
/// The target segment is `residual[lag_max..]`; each candidate lag `T` compares it
/// with the segment `T` samples earlier. Ties go to the smaller lag.
pub fn long_term_gain(residual: &[f64], lag_min: usize, lag_max: usize) -> Result<(usize, f64)> {
    if lag_min == 0 || lag_min > lag_max || residual.len() <= lag_max {
        return Err(Error::InvalidArgument(format!(
            "need 0 < lag_min <= lag_max < len, got {lag_min}, {lag_max}, {}",
            residual.len()
        )));
    }
    let target = &residual[lag_max..];
    let target_energy: f64 = target.iter().map(|x| x * x).sum();
    if target_energy <= 0.0 {
        return Ok((lag_min, 0.0));
    }
    let n = target.len();
    let mut best = (lag_min, 0.0f64);
    for lag in lag_min..=lag_max {
        let lagged = &residual[lag_max - lag..lag_max - lag + n];
        let (cross, lagged_energy) = lagged
            .iter()
            .zip(target)
            .fold((0.0, 0.0), |(c, e), (l, t)| (c + l * t, e + l * l));
        if lagged_energy <= 0.0 {
            continue;
        }
        let rho = (cross * cross / (target_energy * lagged_energy)).min(1.0);
        if rho > best.1 + 1e-12 {
            best = (lag, rho);
        }
    }
    Ok((best.0, gain_db(best.1)))
}

/// `-10 log10(1 - rho)` clamped to `[0, LT_GAIN_MAX_DB]`.
pub fn gain_db(rho: f64) -> f64 {
    if rho >= 1.0 {
        return LT_GAIN_MAX_DB;
    }
    (-10.0 * (1.0 - rho).log10()).clamp(0.0, LT_GAIN_MAX_DB)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    #[test]
    fn autocorrelation_direct_sum() {
        assert_eq!(autocorrelation(&[1.0, 1.0, 1.0, 1.0], 2), vec![4.0, 3.0, 2.0]);
    }

    #[test]
    fn white_noise_autocorrelation_is_small() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..4000).map(|_| rng.sample(StandardNormal)).collect();
        let r = autocorrelation(&x, 20);
        for k in 1..=20 {
            assert!(r[k].abs() / r[0] < 0.1);
        }
    }

    #[test]
    fn order_one_closed_form() {
        let res = levinson_durbin(&[1.0, 0.9], 1).unwrap();
        assert!((res.coefficients[0] - 0.9).abs() < 1e-15);
        assert!((res.residual_energy - 0.19).abs() < 1e-15);
    }

    #[test]
    fn zero_energy_rejected() {
        assert!(matches!(levinson_durbin(&[0.0, 0.0], 1), Err(Error::Numeric(_))));
    }

    #[test]
    fn impulse_train_lag_and_clamp() {
        let mut e = vec![0.0; 912];
        for t in (0..912).step_by(100) {
            e[t] = 1.0;
        }
        let (lag, gain) = long_term_gain(&e, 32, 400).unwrap();
        assert_eq!(lag, 100);
        assert_eq!(gain, LT_GAIN_MAX_DB);
    }

    #[test]
    fn zero_residual_defaults() {
        assert_eq!(long_term_gain(&vec![0.0; 600], 32, 400).unwrap(), (32, 0.0));
    }

    #[test]
    fn white_noise_has_low_gain() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let e: Vec<f64> = (0..912).map(|_| rng.sample(StandardNormal)).collect();
        let (_, gain) = long_term_gain(&e, 32, 400).unwrap();
        assert!(gain < 3.0, "gain {gain}");
    }

    #[test]
    fn periodic_recursion_finds_lag() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let mut x: Vec<f64> = (0..160).map(|_| rng.sample(StandardNormal)).collect();
        for t in 160..2000 {
            let noise: f64 = rng.sample(StandardNormal);
            x.push(0.5 * x[t - 160] + 0.05 * noise);
        }
        let (lag, _) = long_term_gain(&x[1000..], 32, 400).unwrap();
        assert!((lag as i64 - 160).abs() <= 1, "lag {lag}");
    }

    proptest! {
        #[test]
        fn residual_energy_non_increasing(seed in 0u64..500) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut x = vec![0.0f64; 512];
            for t in 0..512 {
                let n: f64 = rng.sample(StandardNormal);
                x[t] = n + if t >= 2 { 1.3 * x[t - 1] - 0.6 * x[t - 2] } else { 0.0 };
            }
            let mut r = autocorrelation(&x, 50);
            regularize(&mut r);
            let path = levinson_path(&r, 50).unwrap();
            for w in path.windows(2) {
                prop_assert!(w[1].residual_energy <= w[0].residual_energy);
            }
            for res in &path {
                prop_assert!(res.reflection.iter().all(|k| k.abs() <= 1.0));
            }
        }

        #[test]
        fn gains_are_scale_invariant(seed in 0u64..200, g in 0.01f64..100.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let e: Vec<f64> = (0..700).map(|_| rng.random::<f64>() - 0.5).collect();
            let scaled: Vec<f64> = e.iter().map(|v| v * g).collect();
            let (la, ga) = long_term_gain(&e, 32, 400).unwrap();
            let (lb, gb) = long_term_gain(&scaled, 32, 400).unwrap();
            prop_assert_eq!(la, lb);
            prop_assert!((ga - gb).abs() < 1e-9);
        }
    }
}
