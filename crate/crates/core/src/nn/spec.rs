use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Linear { input: usize, output: usize },
    LeakyRelu { slope: f64 },
    Dropout { rate: f64 },
    BatchNorm { dim: usize },
    Softmax,
}

/// Ordered layer list. `tap` names the layer whose output is the embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layers: Vec<LayerSpec>,
    pub tap: Option<usize>,
}

impl MlpSpec {
    pub fn new(layers: Vec<LayerSpec>, tap: Option<usize>) -> Result<Self> {
        let spec = Self { layers, tap };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks dimension chaining, Softmax placement and the tap position.
    pub fn validate(&self) -> Result<()> {
        let mut width: Option<usize> = None;
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Linear { input, output } => {
                    if input == 0 || output == 0 {
                        return Err(Error::Spec(format!("layer {i}: zero-sized linear layer")));
                    }
                    if let Some(w) = width {
                        if w != input {
                            return Err(Error::Spec(format!("layer {i}: expects width {input}, previous layer gives {w}")));
                        }
                    }
                    width = Some(output);
                }
                LayerSpec::BatchNorm { dim } => match width {
                    Some(w) if w == dim => {}
                    Some(w) => return Err(Error::Spec(format!("layer {i}: batch norm over {dim}, input width {w}"))),
                    None => width = Some(dim),
                },
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(Error::Spec(format!("layer {i}: dropout rate {rate} outside [0, 1)")));
                    }
                }
                LayerSpec::LeakyRelu { slope } => {
                    if !slope.is_finite() {
                        return Err(Error::Spec(format!("layer {i}: bad slope")));
                    }
                }
                LayerSpec::Softmax => {
                    if i + 1 != self.layers.len() {
                        return Err(Error::Spec(format!("layer {i}: softmax must be the final layer")));
                    }
                }
            }
        }
        if width.is_none() {
            return Err(Error::Spec("network has no sized layer".into()));
        }
        if let Some(t) = self.tap {
            if t >= self.layers.len() {
                return Err(Error::Spec(format!("tap index {t} out of range")));
            }
            let after_linear = t > 0 && matches!(self.layers[t - 1], LayerSpec::Linear { .. });
            if !matches!(self.layers[t], LayerSpec::LeakyRelu { .. }) || !after_linear {
                return Err(Error::Spec(format!("tap index {t} must be a LeakyReLU following a linear layer")));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers
            .iter()
            .find_map(|l| match *l {
                LayerSpec::Linear { input, .. } => Some(input),
                LayerSpec::BatchNorm { dim } => Some(dim),
                _ => None,
            })
            .expect("validated spec has a sized layer")
    }

    pub fn output_dim(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match *l {
                LayerSpec::Linear { output, .. } => Some(output),
                LayerSpec::BatchNorm { dim } => Some(dim),
                _ => None,
            })
            .expect("validated spec has a sized layer")
    }

    pub fn ends_in_softmax(&self) -> bool {
        matches!(self.layers.last(), Some(LayerSpec::Softmax))
    }

    /// Trainable scalars: linear weights and biases plus batch-norm scale and shift.
    pub fn trainable_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match *l {
                LayerSpec::Linear { input, output } => input * output + output,
                LayerSpec::BatchNorm { dim } => 2 * dim,
                _ => 0,
            })
            .sum()
    }

    /// Builds `FC -> LeakyReLU -> Dropout -> BatchNorm` blocks for each width
    /// transition.
    pub fn blocks(widths: &[usize], dropout: f64, slope: f64) -> Vec<LayerSpec> {
        widths
            .windows(2)
            .flat_map(|w| {
                [
                    LayerSpec::Linear { input: w[0], output: w[1] },
                    LayerSpec::LeakyRelu { slope },
                    LayerSpec::Dropout { rate: dropout },
                    LayerSpec::BatchNorm { dim: w[1] },
                ]
            })
            .collect()
    }
}
