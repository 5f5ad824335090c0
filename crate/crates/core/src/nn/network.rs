//! Sequential fully-connected network: parameters, forward pass and reverse-mode
//! gradients for every supported layer type.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{LayerSpec, MlpSpec};
use crate::error::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    Stateless,
    Linear {
        /// `input x output`, so a batch multiplies on the left.
        weight: Array2<f64>,
        bias: Array1<f64>,
    },
    BatchNorm {
        gamma: Array1<f64>,
        beta: Array1<f64>,
        running_mean: Array1<f64>,
        running_var: Array1<f64>,
    },
}

/// Per-layer parameters of a network, also used as the gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub layers: Vec<LayerParams>,
    pub step: u64,
}

impl MlpParams {
    /// Xavier-uniform weights, zero biases, identity batch norm.
    pub fn init(spec: &MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = spec
            .layers
            .iter()
            .map(|layer| match *layer {
                LayerSpec::Linear { input, output } => {
                    let a = (6.0 / (input + output) as f64).sqrt();
                    LayerParams::Linear {
                        weight: Array2::from_shape_simple_fn((input, output), || rng.random_range(-a..a)),
                        bias: Array1::zeros(output),
                    }
                }
                LayerSpec::BatchNorm { dim } => LayerParams::BatchNorm {
                    gamma: Array1::ones(dim),
                    beta: Array1::zeros(dim),
                    running_mean: Array1::zeros(dim),
                    running_var: Array1::ones(dim),
                },
                _ => LayerParams::Stateless,
            })
            .collect();
        Ok(Self { layers, step: 0 })
    }

    /// Zero-filled container with the same shapes (running stats included).
    pub fn zeros_like(&self) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|l| match l {
                LayerParams::Stateless => LayerParams::Stateless,
                LayerParams::Linear { weight, bias } => LayerParams::Linear {
                    weight: Array2::zeros(weight.raw_dim()),
                    bias: Array1::zeros(bias.len()),
                },
                LayerParams::BatchNorm { gamma, .. } => LayerParams::BatchNorm {
                    gamma: Array1::zeros(gamma.len()),
                    beta: Array1::zeros(gamma.len()),
                    running_mean: Array1::zeros(gamma.len()),
                    running_var: Array1::zeros(gamma.len()),
                },
            })
            .collect();
        Self { layers, step: 0 }
    }

    /// Trainable tensors in a fixed order, flattened.
    pub fn trainable(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                LayerParams::Stateless => {}
                LayerParams::Linear { weight, bias } => {
                    out.push(weight.as_slice().expect("standard layout"));
                    out.push(bias.as_slice().expect("standard layout"));
                }
                LayerParams::BatchNorm { gamma, beta, .. } => {
                    out.push(gamma.as_slice().expect("standard layout"));
                    out.push(beta.as_slice().expect("standard layout"));
                }
            }
        }
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            match l {
                LayerParams::Stateless => {}
                LayerParams::Linear { weight, bias } => {
                    out.push(weight.as_slice_mut().expect("standard layout"));
                    out.push(bias.as_slice_mut().expect("standard layout"));
                }
                LayerParams::BatchNorm { gamma, beta, .. } => {
                    out.push(gamma.as_slice_mut().expect("standard layout"));
                    out.push(beta.as_slice_mut().expect("standard layout"));
                }
            }
        }
        out
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    /// Every stored scalar in checkpoint order: weights, biases, then for batch
    /// norm gamma, beta, running mean, running variance.
    pub fn flatten_all(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            match l {
                LayerParams::Stateless => {}
                LayerParams::Linear { weight, bias } => {
                    out.extend(weight.iter());
                    out.extend(bias.iter());
                }
                LayerParams::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                } => {
                    out.extend(gamma.iter());
                    out.extend(beta.iter());
                    out.extend(running_mean.iter());
                    out.extend(running_var.iter());
                }
            }
        }
        out
    }

    /// Inverse of [`flatten_all`](Self::flatten_all) on an existing shape.
    pub fn load_flat(&mut self, values: &[f64]) -> Result<()> {
        let expected: usize = self.flatten_all().len();
        if values.len() != expected {
            return Err(Error::Checkpoint(format!("payload has {} values, expected {expected}", values.len())));
        }
        let mut it = values.iter().copied();
        let mut fill = |dst: &mut [f64]| dst.iter_mut().for_each(|d| *d = it.next().expect("length checked"));
        for l in &mut self.layers {
            match l {
                LayerParams::Stateless => {}
                LayerParams::Linear { weight, bias } => {
                    fill(weight.as_slice_mut().unwrap());
                    fill(bias.as_slice_mut().unwrap());
                }
                LayerParams::BatchNorm {
                    gamma,
                    beta,
                    running_mean,
                    running_var,
                } => {
                    fill(gamma.as_slice_mut().unwrap());
                    fill(beta.as_slice_mut().unwrap());
                    fill(running_mean.as_slice_mut().unwrap());
                    fill(running_var.as_slice_mut().unwrap());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
enum LayerCache {
    None,
    Linear { input: Array2<f64> },
    LeakyRelu { input: Array2<f64>, slope: f64 },
    Dropout { mask: Array2<f64> },
    BatchNormTrain { normalized: Array2<f64>, inv_std: Array1<f64>, mean: Array1<f64>, var: Array1<f64> },
    BatchNormEval { inv_std: Array1<f64> },
    Softmax,
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    batch: usize,
}

impl ForwardCache {
    /// Batch mean and biased variance of every training-mode batch-norm layer.
    fn batch_stats(&self) -> impl Iterator<Item = (usize, &Array1<f64>, &Array1<f64>)> {
        self.layers.iter().enumerate().filter_map(|(i, c)| match c {
            LayerCache::BatchNormTrain { mean, var, .. } => Some((i, mean, var)),
            _ => None,
        })
    }
}

pub struct ForwardOutput {
    /// Network output (probabilities when the spec ends in Softmax).
    pub output: Array2<f64>,
    /// Input to the final Softmax, when present.
    pub logits: Option<Array2<f64>>,
    pub embedding: Option<Array2<f64>>,
    pub cache: ForwardCache,
}

pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// A network spec together with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: MlpSpec,
    pub params: MlpParams,
}

impl Network {
    pub fn new(spec: MlpSpec, seed: u64) -> Result<Self> {
        let params = MlpParams::init(&spec, seed)?;
        Ok(Self { spec, params })
    }

    pub fn forward(&self, input: ArrayView2<f64>, mode: Mode, dropout_seed: u64) -> Result<ForwardOutput> {
        if input.ncols() != self.spec.input_dim() {
            return Err(Error::InvalidArgument(format!(
                "batch width {} does not match network input {}",
                input.ncols(),
                self.spec.input_dim()
            )));
        }
        let n = input.nrows();
        if mode == Mode::Train && n < 2 && self.spec.layers.iter().any(|l| matches!(l, LayerSpec::BatchNorm { .. })) {
            return Err(Error::BatchTooSmall(n));
        }
        let mut x = input.to_owned();
        let mut caches = Vec::with_capacity(self.spec.layers.len());
        let mut logits = None;
        let mut embedding = None;
        let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);

        for (i, (layer, params)) in self.spec.layers.iter().zip(&self.params.layers).enumerate() {
            let cache = match (*layer, params) {
                (LayerSpec::Linear { .. }, LayerParams::Linear { weight, bias }) => {
                    let y = x.dot(weight) + bias;
                    LayerCache::Linear {
                        input: std::mem::replace(&mut x, y),
                    }
                }
                (LayerSpec::LeakyRelu { slope }, _) => {
                    let y = x.mapv(|v| if v > 0.0 { v } else { slope * v });
                    LayerCache::LeakyRelu {
                        input: std::mem::replace(&mut x, y),
                        slope,
                    }
                }
                (LayerSpec::Dropout { rate }, _) => {
                    if mode == Mode::Train && rate > 0.0 {
                        let keep = 1.0 / (1.0 - rate);
                        let mask = Array2::from_shape_simple_fn(x.raw_dim(), || if rng.random::<f64>() < rate { 0.0 } else { keep });
                        x *= &mask;
                        LayerCache::Dropout { mask }
                    } else {
                        LayerCache::None
                    }
                }
                (
                    LayerSpec::BatchNorm { .. },
                    LayerParams::BatchNorm {
                        gamma,
                        beta,
                        running_mean,
                        running_var,
                    },
                ) => match mode {
                    Mode::Train => {
                        let mean = x.mean_axis(Axis(0)).expect("nonempty batch");
                        let centered = &x - &mean;
                        let var = centered.mapv(|v| v * v).mean_axis(Axis(0)).expect("nonempty batch");
                        let inv_std = var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                        let normalized = centered * &inv_std;
                        x = &normalized * gamma + beta;
                        LayerCache::BatchNormTrain {
                            normalized,
                            inv_std,
                            mean,
                            var,
                        }
                    }
                    Mode::Eval => {
                        let inv_std = running_var.mapv(|v| 1.0 / (v + BN_EPS).sqrt());
                        x = (&x - running_mean) * &inv_std * gamma + beta;
                        LayerCache::BatchNormEval { inv_std }
                    }
                },
                (LayerSpec::Softmax, _) => {
                    let y = softmax_rows(&x);
                    logits = Some(std::mem::replace(&mut x, y));
                    LayerCache::Softmax
                }
                _ => return Err(Error::Spec(format!("layer {i}: parameters do not match spec"))),
            };
            caches.push(cache);
            if self.spec.tap == Some(i) {
                embedding = Some(x.clone());
            }
        }
        Ok(ForwardOutput {
            output: x,
            logits,
            embedding,
            cache: ForwardCache { layers: caches, batch: n },
        })
    }

    /// Backpropagates `grad` from the network output. When the spec ends in
    /// Softmax, `grad` is taken with respect to the logits (the Softmax layer is
    /// folded into the loss). Returns parameter gradients and the input gradient.
    pub fn backward(&self, cache: &ForwardCache, grad: Array2<f64>) -> (MlpParams, Array2<f64>) {
        let mut grads = self.params.zeros_like();
        let mut g = grad;
        for i in (0..self.spec.layers.len()).rev() {
            match (&cache.layers[i], &self.params.layers[i]) {
                (LayerCache::Softmax, _) | (LayerCache::None, _) => {}
                (LayerCache::Linear { input }, LayerParams::Linear { weight, .. }) => {
                    if let LayerParams::Linear { weight: gw, bias: gb } = &mut grads.layers[i] {
                        *gw = input.t().dot(&g);
                        *gb = g.sum_axis(Axis(0));
                    }
                    g = g.dot(&weight.t());
                }
                (LayerCache::LeakyRelu { input, slope }, _) => {
                    ndarray::Zip::from(&mut g).and(input).for_each(|gv, &xv| {
                        if xv <= 0.0 {
                            *gv *= slope;
                        }
                    });
                }
                (LayerCache::Dropout { mask }, _) => g *= mask,
                (LayerCache::BatchNormTrain { normalized, inv_std, .. }, LayerParams::BatchNorm { gamma, .. }) => {
                    let n = cache.batch as f64;
                    let dgamma = (&g * normalized).sum_axis(Axis(0));
                    let dbeta = g.sum_axis(Axis(0));
                    let dxhat = &g * gamma;
                    let sum_dxhat = dxhat.sum_axis(Axis(0));
                    let sum_dxhat_xhat = (&dxhat * normalized).sum_axis(Axis(0));
                    let dx = (&dxhat * n - &sum_dxhat - normalized * &sum_dxhat_xhat) * &(inv_std / n);
                    if let LayerParams::BatchNorm { gamma: gg, beta: gbeta, .. } = &mut grads.layers[i] {
                        *gg = dgamma;
                        *gbeta = dbeta;
                    }
                    g = dx;
                }
                (LayerCache::BatchNormEval { inv_std }, LayerParams::BatchNorm { gamma, .. }) => {
                    let normalized = &g * &(inv_std * gamma);
                    if let LayerParams::BatchNorm { gamma: gg, beta: gbeta, .. } = &mut grads.layers[i] {
                        *gbeta = g.sum_axis(Axis(0));
                        *gg = Array1::zeros(gamma.len());
                    }
                    g = normalized;
                }
                _ => unreachable!("cache and parameters come from the same spec"),
            }
        }
        (grads, g)
    }

    /// Folds the batch statistics of a training forward pass into the running
    /// averages (unbiased variance, momentum 0.1).
    pub fn update_running_stats(&mut self, cache: &ForwardCache) {
        let n = cache.batch as f64;
        for (i, mean, var) in cache.batch_stats() {
            if let LayerParams::BatchNorm {
                running_mean, running_var, ..
            } = &mut self.params.layers[i]
            {
                running_mean.zip_mut_with(mean, |r, &m| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m);
                running_var.zip_mut_with(var, |r, &v| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * n / (n - 1.0));
            }
        }
    }

    pub fn eval(&self, input: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.forward(input, Mode::Eval, 0)?.output)
    }
}

/// Weighted mean cross-entropy and its gradient with respect to the logits.
pub fn weighted_cross_entropy(probs: &Array2<f64>, labels: &[usize], weights: &[f64]) -> Result<(f64, Array2<f64>)> {
    if labels.len() != probs.nrows() || weights.len() != probs.nrows() {
        return Err(Error::InvalidArgument("labels/weights length mismatch".into()));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(Error::InvalidArgument("sample weights must be non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateBatch("sample weights sum to zero".into()));
    }
    let mut loss = 0.0;
    let mut grad = probs.clone();
    for (i, (&y, &w)) in labels.iter().zip(weights).enumerate() {
        loss -= w * probs[[i, y]].max(f64::MIN_POSITIVE).ln();
        grad[[i, y]] -= 1.0;
        grad.row_mut(i).mapv_inplace(|v| v * w / total);
    }
    Ok((loss / total, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::LayerSpec as L;
    use ndarray::array;

    fn toy() -> MlpSpec {
        MlpSpec::new(
            vec![
                L::Linear { input: 3, output: 4 },
                L::LeakyRelu { slope: 0.01 },
                L::Dropout { rate: 0.25 },
                L::BatchNorm { dim: 4 },
                L::Linear { input: 4, output: 2 },
                L::Softmax,
            ],
            Some(1),
        )
        .unwrap()
    }

    #[test]
    fn zero_parameters_give_uniform_softmax() {
        let mut net = Network::new(toy(), 1).unwrap();
        for l in &mut net.params.layers {
            if let LayerParams::Linear { weight, bias } = l {
                weight.fill(0.0);
                bias.fill(0.0);
            }
        }
        let out = net.eval(array![[1.0, -2.0, 3.0], [0.5, 0.5, 0.5]].view()).unwrap();
        assert!(out.iter().all(|&p| (p - 0.5).abs() < 1e-15));
    }

    #[test]
    fn same_seed_same_parameters() {
        assert_eq!(Network::new(toy(), 42).unwrap(), Network::new(toy(), 42).unwrap());
        assert_ne!(Network::new(toy(), 42).unwrap(), Network::new(toy(), 43).unwrap());
    }

    #[test]
    fn biases_start_at_zero() {
        let spec = MlpSpec::new(vec![L::Linear { input: 8, output: 32 }], None).unwrap();
        let p = MlpParams::init(&spec, 0).unwrap();
        match &p.layers[0] {
            LayerParams::Linear { bias, .. } => assert_eq!(bias, &Array1::<f64>::zeros(32)),
            _ => panic!(),
        }
    }

    #[test]
    fn eval_is_deterministic_and_train_needs_two_rows() {
        let net = Network::new(toy(), 3).unwrap();
        let x = array![[0.1, 0.2, 0.3]];
        assert_eq!(net.eval(x.view()).unwrap(), net.eval(x.view()).unwrap());
        assert!(matches!(net.forward(x.view(), Mode::Train, 0), Err(Error::BatchTooSmall(1))));
    }

    #[test]
    fn train_batch_norm_standardizes() {
        let spec = MlpSpec::new(vec![L::BatchNorm { dim: 2 }], None).unwrap();
        let net = Network::new(spec, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        // Column 0 has mean 3 and std 2 by construction (symmetric +/- 2 pairs).
        let mut rows = Vec::new();
        for _ in 0..50 {
            let other: f64 = rng.random();
            rows.extend([1.0, other, 5.0, -other]);
        }
        let x = Array2::from_shape_vec((100, 2), rows).unwrap();
        let out = net.forward(x.view(), Mode::Train, 0).unwrap().output;
        let col = out.column(0);
        let mean = col.mean().unwrap();
        let var = col.mapv(|v| (v - mean).powi(2)).mean().unwrap();
        assert!(mean.abs() < 1e-6);
        assert!((var - 1.0).abs() < 1e-4);
    }

    #[test]
    fn uniform_prediction_loss_is_ln2() {
        let probs = Array2::from_elem((4, 2), 0.5);
        let (loss, _) = weighted_cross_entropy(&probs, &[0, 1, 1, 0], &[1.0, 3.0, 0.5, 2.0]).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_prediction_has_tiny_loss() {
        let probs = array![[1.0 - 1e-9, 1e-9], [1e-9, 1.0 - 1e-9]];
        let (loss, _) = weighted_cross_entropy(&probs, &[0, 1], &[1.0, 1.0]).unwrap();
        assert!(loss < 1e-6);
    }

    #[test]
    fn zero_weight_batch_is_degenerate() {
        let probs = Array2::from_elem((2, 2), 0.5);
        assert!(matches!(
            weighted_cross_entropy(&probs, &[0, 1], &[0.0, 0.0]),
            Err(Error::DegenerateBatch(_))
        ));
    }

    #[test]
    fn flatten_roundtrip() {
        let net = Network::new(toy(), 9).unwrap();
        let flat = net.params.flatten_all();
        let mut other = Network::new(toy(), 10).unwrap();
        other.params.load_flat(&flat).unwrap();
        assert_eq!(other.params.layers, net.params.layers);
    }
}
