use serde::{Deserialize, Serialize};

use super::network::MlpParams;
use crate::error::{Error, Result};

/// A first-order update rule over all trainable tensors.
pub trait Optimizer: Send {
    fn name(&self) -> &str;

    /// Applies one update. `params` and `grads` must share a shape.
    fn step(&mut self, params: &mut MlpParams, grads: &MlpParams, lr: f64);
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Self::new(0.9, 0.999, 1e-8)
    }
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }
}

impl Optimizer for Adam {
    fn name(&self) -> &str {
        "adam"
    }

    fn step(&mut self, params: &mut MlpParams, grads: &MlpParams, lr: f64) {
        let grads = grads.trainable();
        let mut targets = params.trainable_mut();
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, (p, g)) in targets.iter_mut().zip(&grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        params.step += 1;
    }
}

#[derive(Debug, Clone, Default)]
pub struct Sgd {
    pub momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(momentum: f64) -> Self {
        Self {
            momentum,
            velocity: Vec::new(),
        }
    }
}

impl Optimizer for Sgd {
    fn name(&self) -> &str {
        "sgd"
    }

    fn step(&mut self, params: &mut MlpParams, grads: &MlpParams, lr: f64) {
        let grads = grads.trainable();
        let mut targets = params.trainable_mut();
        if self.velocity.is_empty() {
            self.velocity = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        }
        for (k, (p, g)) in targets.iter_mut().zip(&grads).enumerate() {
            let vel = &mut self.velocity[k];
            for i in 0..p.len() {
                vel[i] = self.momentum * vel[i] + g[i];
                p[i] -= lr * vel[i];
            }
        }
        params.step += 1;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

impl OptimizerKind {
    pub fn build(self) -> Box<dyn Optimizer> {
        match self {
            OptimizerKind::Adam => Box::new(Adam::default()),
            OptimizerKind::Sgd => Box::new(Sgd::new(0.9)),
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            _ => Err(Error::Unknown {
                kind: "optimizer",
                name: s.to_string(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::network::LayerParams;
    use crate::nn::spec::{LayerSpec, MlpSpec};

    fn single(len: usize) -> (MlpParams, MlpParams) {
        let spec = MlpSpec::new(vec![LayerSpec::Linear { input: 1, output: len }], None).unwrap();
        let p = MlpParams::init(&spec, 0).unwrap();
        let g = p.zeros_like();
        (p, g)
    }

    fn set_grad(g: &mut MlpParams, value: f64) {
        if let LayerParams::Linear { weight, bias } = &mut g.layers[0] {
            weight.fill(value);
            bias.fill(value);
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut p, g) = single(4);
        let before = p.clone();
        let mut adam = Adam::default();
        adam.step(&mut p, &g, 1e-3);
        assert_eq!(p.layers, before.layers);
        assert_eq!(p.step, 1);
    }

    #[test]
    fn constant_gradient_step_approaches_lr() {
        // Scalar simulation of the same recursion.
        let (b1, b2, eps, lr, g) = (0.9f64, 0.999f64, 1e-8, 1e-3, 0.37f64);
        let (mut m, mut v) = (0.0, 0.0);
        let mut last = 0.0;
        for t in 1..=1000 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            last = lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
        }
        assert!((last - lr).abs() / lr < 0.01);

        let (mut p, mut grad) = single(1);
        set_grad(&mut grad, g);
        let mut adam = Adam::default();
        let mut prev = p.flatten_all();
        let mut delta = 0.0;
        for _ in 0..1000 {
            adam.step(&mut p, &grad, lr);
            let now = p.flatten_all();
            delta = prev[0] - now[0];
            prev = now;
        }
        assert!((delta - last).abs() < 1e-12);
    }

    #[test]
    fn first_step_closed_form() {
        let (mut p, mut grad) = single(1);
        set_grad(&mut grad, -2.5);
        let before = p.flatten_all();
        Adam::default().step(&mut p, &grad, 0.01);
        let after = p.flatten_all();
        // m_hat = g, v_hat = g^2 after bias correction.
        let expected = -0.01 * -2.5 / (2.5 + 1e-8);
        assert!((after[0] - before[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn registry_names() {
        assert_eq!("adam".parse::<OptimizerKind>().unwrap().build().name(), "adam");
        assert_eq!("sgd".parse::<OptimizerKind>().unwrap().build().name(), "sgd");
        assert!("rmsprop".parse::<OptimizerKind>().is_err());
    }
}
