//! Fully connected embedding network `R^{n_x} -> R^d` with manual
//! reverse-mode gradients. Hidden layers are activated, the output layer is
//! linear.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub input_dim: usize,
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

/// Intermediate activations kept for the backward pass.
pub struct EncoderCache {
    input: DMatrix<f64>,
    /// Output of every hidden layer, post-activation.
    hidden: Vec<DMatrix<f64>>,
}

impl Encoder {
    /// Uniform fan-in initialization, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// for weights and biases. `output_dim == 0` gives an empty network.
    pub fn random(
        input_dim: usize,
        hidden: &[usize],
        output_dim: usize,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Self {
        if output_dim == 0 {
            return Self::identity_lifting(input_dim);
        }
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(output_dim);
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                Layer {
                    weights: DMatrix::from_fn(w[1], w[0], |_, _| rng.random_range(-bound..bound)),
                    bias: DVector::from_fn(w[1], |_, _| rng.random_range(-bound..bound)),
                }
            })
            .collect();
        Self {
            input_dim,
            layers,
            activation,
        }
    }

    /// A network with no layers and no output: the lifted state is the
    /// physical state itself.
    pub fn identity_lifting(input_dim: usize) -> Self {
        Self {
            input_dim,
            layers: Vec::new(),
            activation: Activation::Tanh,
        }
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.nrows())
    }

    pub fn hidden_sizes(&self) -> Vec<usize> {
        let n = self.layers.len();
        self.layers
            .iter()
            .take(n.saturating_sub(1))
            .map(|l| l.weights.nrows())
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let mut width = self.input_dim;
        for l in &self.layers {
            if l.weights.ncols() != width || l.bias.len() != l.weights.nrows() {
                return Err(Error::Dimension {
                    context: "encoder layer",
                    expected: width,
                    actual: l.weights.ncols(),
                });
            }
            width = l.weights.nrows();
        }
        Ok(())
    }

    /// Forward pass over column-stacked inputs (`input_dim x N`).
    pub fn forward_batch(&self, input: &DMatrix<f64>) -> (DMatrix<f64>, EncoderCache) {
        let n = input.ncols();
        let mut hidden = Vec::with_capacity(self.layers.len().saturating_sub(1));
        let mut current = input.clone();
        let last = self.layers.len().saturating_sub(1);
        for (idx, layer) in self.layers.iter().enumerate() {
            let mut next = &layer.weights * &current;
            for mut col in next.column_iter_mut() {
                col += &layer.bias;
            }
            if idx < last {
                next.apply(|v| *v = self.activation.apply(*v));
                hidden.push(next.clone());
            }
            current = next;
        }
        let output = if self.layers.is_empty() {
            DMatrix::zeros(0, n)
        } else {
            current
        };
        (
            output,
            EncoderCache {
                input: input.clone(),
                hidden,
            },
        )
    }

    pub fn forward(&self, x: &DVector<f64>) -> DVector<f64> {
        let input = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
        let (out, _) = self.forward_batch(&input);
        DVector::from_column_slice(out.as_slice())
    }

    /// Gradients of a scalar objective w.r.t. every layer, given its
    /// gradient w.r.t. the batched output.
    pub fn backward_batch(&self, cache: &EncoderCache, grad_output: &DMatrix<f64>) -> Vec<Layer> {
        let mut grads: Vec<Layer> = Vec::with_capacity(self.layers.len());
        let mut delta = grad_output.clone();
        for idx in (0..self.layers.len()).rev() {
            let input = if idx == 0 {
                &cache.input
            } else {
                &cache.hidden[idx - 1]
            };
            let weights = &delta * input.transpose();
            let bias = DVector::from_iterator(delta.nrows(), delta.row_iter().map(|r| r.sum()));
            if idx > 0 {
                let mut back = self.layers[idx].weights.tr_mul(&delta);
                back.zip_apply(&cache.hidden[idx - 1], |g, y| {
                    *g *= self.activation.grad_from_output(y)
                });
                delta = back;
            }
            grads.push(Layer { weights, bias });
        }
        grads.reverse();
        grads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layer_shapes_chain() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = Encoder::random(15, &[64, 64], 40, Activation::Tanh, &mut rng);
        enc.validate().unwrap();
        assert_eq!(enc.output_dim(), 40);
        assert_eq!(enc.hidden_sizes(), vec![64, 64]);
        assert_eq!(enc.n_params(), 15 * 64 + 64 + 64 * 64 + 64 + 64 * 40 + 40);
    }

    #[test]
    fn batch_and_single_forward_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let enc = Encoder::random(3, &[5], 4, Activation::Tanh, &mut rng);
        let batch = DMatrix::from_fn(3, 6, |i, j| (i as f64 - j as f64) * 0.3);
        let (out, _) = enc.forward_batch(&batch);
        for j in 0..6 {
            let single = enc.forward(&batch.column(j).into_owned());
            assert!((single - out.column(j)).abs().max() < 1e-15);
        }
    }

    #[test]
    fn empty_network_has_no_output() {
        let enc = Encoder::identity_lifting(3);
        assert_eq!(enc.output_dim(), 0);
        assert_eq!(enc.forward(&DVector::from_element(3, 1.0)).len(), 0);
    }
}
