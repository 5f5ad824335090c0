//! First-digit histograms and generalized Benford law fitting.
//!
//! The model is `p(d) = beta * log10(1 + 1 / (alpha + d^gamma))` for digits 1..=9,
//! renormalized to sum to one before comparison with an empirical pmf.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DIGITS: usize = 9;

/// Minimum number of nonzero quantized values for a usable histogram.
pub const DEFAULT_MIN_SUPPORT: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DigitHistogram {
    pub counts: [u64; DIGITS],
    pub total: u64,
    pub pmf: [f64; DIGITS],
}

impl DigitHistogram {
    pub fn from_counts(counts: [u64; DIGITS]) -> Self {
        let total = counts.iter().sum();
        let mut pmf = [0.0; DIGITS];
        if total > 0 {
            for (p, &c) in pmf.iter_mut().zip(&counts) {
                *p = c as f64 / total as f64;
            }
        }
        Self { counts, total, pmf }
    }

    /// Histogram with a given pmf and a nominal total, used for ideal fixtures.
    pub fn from_pmf(pmf: [f64; DIGITS], total: u64) -> Self {
        let mut counts = [0u64; DIGITS];
        for (c, &p) in counts.iter_mut().zip(&pmf) {
            *c = (p * total as f64).round() as u64;
        }
        Self { counts, total, pmf }
    }
}

/// Leading decimal digit of a positive integer.
pub fn leading_digit(mut q: u64) -> usize {
    while q >= 10 {
        q /= 10;
    }
    q as usize
}

/// Quantizes `values` by `delta` and counts the first digits of the nonzero results.
///
/// Returns `Err(Error::Numeric)` when fewer than `min_support` values survive,
/// which callers treat as a degenerate cell.
pub fn first_digit_histogram(values: &[f64], delta: f64, min_support: usize) -> Result<DigitHistogram> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("quantizer step must be positive, got {delta}")));
    }
    let mut counts = [0u64; DIGITS];
    for &v in values {
        let q = (v / delta).round().abs();
        if q >= 1.0 && q.is_finite() {
            counts[leading_digit(q as u64) - 1] += 1;
        }
    }
    let hist = DigitHistogram::from_counts(counts);
    if (hist.total as usize) < min_support {
        return Err(Error::Numeric(format!(
            "only {} nonzero quantized values (need {min_support})",
            hist.total
        )));
    }
    Ok(hist)
}

pub fn standard_benford() -> [f64; DIGITS] {
    std::array::from_fn(|i| (1.0 + 1.0 / (i + 1) as f64).log10())
}

/// Unnormalized generalized Benford shape `log10(1 + 1/(alpha + d^gamma))`.
pub fn benford_shape(alpha: f64, gamma: f64) -> [f64; DIGITS] {
    std::array::from_fn(|i| (1.0 + 1.0 / (alpha + ((i + 1) as f64).powf(gamma))).log10())
}

/// Renormalized generalized Benford pmf. `beta` cancels under renormalization.
pub fn generalized_benford_pmf(alpha: f64, gamma: f64) -> [f64; DIGITS] {
    let shape = benford_shape(alpha, gamma);
    let sum: f64 = shape.iter().sum();
    shape.map(|v| v / sum)
}

fn mse(a: &[f64; DIGITS], b: &[f64; DIGITS]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / DIGITS as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenfordFit {
    pub alpha: f64,
    /// Least-squares scale of the unnormalized shape against the empirical pmf.
    pub beta: f64,
    pub gamma: f64,
    pub fitted_pmf: [f64; DIGITS],
    pub mse: f64,
}

impl BenfordFit {
    fn at(alpha: f64, gamma: f64, target: &[f64; DIGITS]) -> Self {
        let shape = benford_shape(alpha, gamma);
        let num: f64 = shape.iter().zip(target).map(|(g, p)| g * p).sum();
        let den: f64 = shape.iter().map(|g| g * g).sum();
        let sum: f64 = shape.iter().sum();
        let fitted_pmf = shape.map(|v| v / sum);
        Self {
            alpha,
            beta: if den > 0.0 { num / den } else { 0.0 },
            gamma,
            mse: mse(&fitted_pmf, target),
            fitted_pmf,
        }
    }
}

// Search box for the refiner; keeps every fitted digit probability positive.
const ALPHA_MAX: f64 = 100.0;
const GAMMA_MIN: f64 = 1e-3;
const GAMMA_MAX: f64 = 10.0;

fn clamp_params(alpha: f64, gamma: f64) -> (f64, f64) {
    (alpha.clamp(0.0, ALPHA_MAX), gamma.clamp(GAMMA_MIN, GAMMA_MAX))
}

/// Fits the generalized Benford law by grid search followed by Nelder-Mead.
pub fn fit_generalized_benford(hist: &DigitHistogram) -> BenfordFit {
    let target = &hist.pmf;
    let objective = |alpha: f64, gamma: f64| {
        let (a, g) = clamp_params(alpha, gamma);
        mse(&generalized_benford_pmf(a, g), target)
    };

    let mut best = (0.0, 1.0, f64::INFINITY);
    for ai in 0..=20 {
        let alpha = ai as f64 * 0.25;
        for gi in 1..=12 {
            let gamma = gi as f64 * 0.25;
            let e = objective(alpha, gamma);
            if e < best.2 {
                best = (alpha, gamma, e);
            }
        }
    }

    let (alpha, gamma) = nelder_mead(
        |p| objective(p[0], p[1]),
        [best.0, best.1],
        [0.125, 0.125],
        500,
        1e-9,
    );
    let (alpha, gamma) = clamp_params(alpha, gamma);
    let refined = BenfordFit::at(alpha, gamma, target);
    let coarse = BenfordFit::at(best.0, best.1, target);
    if refined.mse <= coarse.mse {
        refined
    } else {
        coarse
    }
}

/// Minimizes `f` over R^2 with the Nelder-Mead simplex method.
///
/// Stops after `max_iter` iterations or when the spread of function values and
/// the simplex diameter both fall below `tol`.
pub fn nelder_mead(f: impl Fn([f64; 2]) -> f64, start: [f64; 2], step: [f64; 2], max_iter: usize, tol: f64) -> (f64, f64) {
    let mut simplex = [
        start,
        [start[0] + step[0], start[1]],
        [start[0], start[1] + step[1]],
    ];
    let mut values = simplex.map(&f);
    let lerp = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];

    for _ in 0..max_iter {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);

        let diameter = simplex[1..]
            .iter()
            .map(|p| (p[0] - simplex[0][0]).abs().max((p[1] - simplex[0][1]).abs()))
            .fold(0.0, f64::max);
        if values[2] - values[0] < tol && diameter < tol {
            break;
        }

        let centroid = [
            (simplex[0][0] + simplex[1][0]) / 2.0,
            (simplex[0][1] + simplex[1][1]) / 2.0,
        ];
        let reflected = lerp(centroid, simplex[2], -1.0);
        let fr = f(reflected);
        if fr < values[0] {
            let expanded = lerp(centroid, simplex[2], -2.0);
            let fe = f(expanded);
            if fe < fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
        } else if fr < values[1] {
            simplex[2] = reflected;
            values[2] = fr;
        } else {
            let (contracted, fc) = if fr < values[2] {
                let c = lerp(centroid, reflected, 0.5);
                (c, f(c))
            } else {
                let c = lerp(centroid, simplex[2], 0.5);
                (c, f(c))
            };
            if fc < values[2].min(fr) {
                simplex[2] = contracted;
                values[2] = fc;
            } else {
                for i in 1..3 {
                    simplex[i] = lerp(simplex[0], simplex[i], 0.5);
                    values[i] = f(simplex[i]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap();
    (simplex[best][0], simplex[best][1])
}

fn kl(p: &[f64; DIGITS], q: &[f64; DIGITS]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi / qi).ln())
        .sum()
}

/// Jensen-Shannon divergence in nats.
pub fn jensen_shannon(p: &[f64; DIGITS], q: &[f64; DIGITS]) -> f64 {
    let m: [f64; DIGITS] = std::array::from_fn(|i| 0.5 * (p[i] + q[i]));
    (0.5 * kl(p, &m) + 0.5 * kl(q, &m)).max(0.0)
}

/// Renyi divergence of order 2, `ln sum p^2 / q`.
pub fn renyi2(p: &[f64; DIGITS], q: &[f64; DIGITS]) -> f64 {
    let s: f64 = p.iter().zip(q).map(|(pi, qi)| pi * pi / qi).sum();
    s.ln().max(0.0)
}

pub fn entropy(p: &[f64; DIGITS]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Pearson chi-square of observed counts against the fitted pmf.
pub fn chi_square(hist: &DigitHistogram, q: &[f64; DIGITS]) -> f64 {
    let n = hist.total as f64;
    hist.pmf
        .iter()
        .zip(q)
        .map(|(p, qi)| {
            let expected = n * qi;
            let observed = n * p;
            (observed - expected).powi(2) / expected
        })
        .sum()
}

pub const STAT_COUNT: usize = 8;

/// `[alpha, beta, gamma, JSD, Renyi-2, MSE, entropy, chi^2]`.
pub fn divergence_stats(hist: &DigitHistogram, fit: &BenfordFit) -> [f64; STAT_COUNT] {
    [
        fit.alpha,
        fit.beta,
        fit.gamma,
        jensen_shannon(&hist.pmf, &fit.fitted_pmf),
        renyi2(&hist.pmf, &fit.fitted_pmf),
        fit.mse,
        entropy(&hist.pmf),
        chi_square(hist, &fit.fitted_pmf),
    ]
}
