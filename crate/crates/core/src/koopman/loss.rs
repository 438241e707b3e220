//! Exponentially weighted multi-step loss
//! `L = sum_k lambda^(k-1) |Z_k - Zhat_k|^2` and its exact gradients through
//! the linear rollout and the embedding network.

use nalgebra::{DMatrix, DVector};

use super::encoder::{Encoder, Layer};
use super::model::KoopmanOperator;
use crate::error::{Error, Result};

/// Squared-norm errors weighted by `lambda^(k-1)`; index 0 of the slices is
/// step 1.
pub fn weighted_loss(targets: &[DVector<f64>], preds: &[DVector<f64>], lambda: f64) -> Result<f64> {
    if targets.len() != preds.len() {
        return Err(Error::Dimension {
            context: "loss horizon",
            expected: targets.len(),
            actual: preds.len(),
        });
    }
    let mut weight = 1.0;
    let mut total = 0.0;
    for (t, p) in targets.iter().zip(preds) {
        if t.len() != p.len() {
            return Err(Error::Dimension {
                context: "loss state",
                expected: t.len(),
                actual: p.len(),
            });
        }
        total += weight * (t - p).norm_squared();
        weight *= lambda;
    }
    Ok(total)
}

/// One training window: `K + 1` consecutive normalized states and the `K`
/// controls between them.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// `n_x x (K + 1)`, one column per step.
    pub states: DMatrix<f64>,
    pub controls: Vec<f64>,
}

impl Window {
    pub fn horizon(&self) -> usize {
        self.controls.len()
    }
}

/// Gradients with the same shapes as the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(l.weights.as_slice());
            out.extend_from_slice(l.bias.as_slice());
        }
        out.extend_from_slice(self.a.as_slice());
        out.extend_from_slice(self.b.as_slice());
        out
    }
}

/// Copies every trainable parameter into one flat vector (column-major per
/// array, layers first, then `A`, then `B`).
pub fn flatten_params(encoder: &Encoder, op: &KoopmanOperator) -> Vec<f64> {
    let mut out = Vec::new();
    for l in &encoder.layers {
        out.extend_from_slice(l.weights.as_slice());
        out.extend_from_slice(l.bias.as_slice());
    }
    out.extend_from_slice(op.a.as_slice());
    out.extend_from_slice(op.b.as_slice());
    out
}

/// Inverse of [`flatten_params`].
pub fn unflatten_params(flat: &[f64], encoder: &mut Encoder, op: &mut KoopmanOperator) {
    let mut off = 0;
    let mut take = |dst: &mut [f64]| {
        dst.copy_from_slice(&flat[off..off + dst.len()]);
        off += dst.len();
    };
    for l in &mut encoder.layers {
        take(l.weights.as_mut_slice());
        take(l.bias.as_mut_slice());
    }
    take(op.a.as_mut_slice());
    take(op.b.as_mut_slice());
}

struct Forward {
    /// Encoded ground truth, `m x ((K+1) B)`, column `k B + w`.
    lifted: DMatrix<f64>,
    cache: super::encoder::EncoderCache,
    /// `Zhat_0..Zhat_K`, each `m x B`.
    predicted: Vec<DMatrix<f64>>,
    controls: Vec<DVector<f64>>,
}

fn check_batch(windows: &[Window], n_x: usize) -> Result<usize> {
    let first = windows
        .first()
        .ok_or_else(|| Error::Invalid("empty batch".into()))?;
    let k = first.horizon();
    if k == 0 {
        return Err(Error::Invalid("window horizon must be at least 1".into()));
    }
    for w in windows {
        if w.horizon() != k || w.states.ncols() != k + 1 {
            return Err(Error::Dimension {
                context: "window horizon",
                expected: k,
                actual: w.horizon(),
            });
        }
        if w.states.nrows() != n_x {
            return Err(Error::Dimension {
                context: "window state",
                expected: n_x,
                actual: w.states.nrows(),
            });
        }
    }
    Ok(k)
}

fn forward(windows: &[Window], encoder: &Encoder, op: &KoopmanOperator) -> Result<Forward> {
    let n_x = encoder.input_dim;
    let horizon = check_batch(windows, n_x)?;
    let m = op.dim();
    if m != n_x + encoder.output_dim() {
        return Err(Error::Dimension {
            context: "operator vs encoder",
            expected: n_x + encoder.output_dim(),
            actual: m,
        });
    }
    let batch = windows.len();
    let states = DMatrix::from_fn(n_x, (horizon + 1) * batch, |i, c| {
        windows[c % batch].states[(i, c / batch)]
    });
    let (psi, cache) = encoder.forward_batch(&states);
    let mut lifted = DMatrix::zeros(m, states.ncols());
    lifted.rows_mut(0, n_x).copy_from(&states);
    lifted.rows_mut(n_x, m - n_x).copy_from(&psi);

    let controls: Vec<DVector<f64>> = (0..horizon)
        .map(|k| DVector::from_fn(batch, |w, _| windows[w].controls[k]))
        .collect();
    let mut predicted = Vec::with_capacity(horizon + 1);
    predicted.push(lifted.columns(0, batch).into_owned());
    for u in &controls {
        let prev = predicted.last().unwrap();
        let mut next = &op.a * prev;
        next.ger(1.0, &op.b, u, 1.0);
        predicted.push(next);
    }
    Ok(Forward {
        lifted,
        cache,
        predicted,
        controls,
    })
}

/// Batch-mean weighted loss.
pub fn batch_loss(windows: &[Window], encoder: &Encoder, op: &KoopmanOperator, lambda: f64) -> Result<f64> {
    let fwd = forward(windows, encoder, op)?;
    let batch = windows.len();
    let mut total = 0.0;
    let mut weight = 1.0;
    for k in 1..fwd.predicted.len() {
        let err = &fwd.predicted[k] - fwd.lifted.columns(k * batch, batch);
        total += weight * err.norm_squared();
        weight *= lambda;
    }
    Ok(total / batch as f64)
}

/// Batch-mean loss and its exact gradients w.r.t. the encoder, `A` and `B`.
/// Targets `Z_k = encode(x_k)` depend on the encoder and are differentiated
/// too.
pub fn loss_and_gradients(
    windows: &[Window],
    encoder: &Encoder,
    op: &KoopmanOperator,
    lambda: f64,
) -> Result<(f64, Gradients)> {
    let fwd = forward(windows, encoder, op)?;
    let batch = windows.len();
    let horizon = fwd.controls.len();
    let n_x = encoder.input_dim;
    let m = op.dim();
    let scale = 2.0 / batch as f64;

    // Direct error gradients G_k = 2 w_k (Zhat_k - Z_k) / B.
    let mut loss = 0.0;
    let mut weight = 1.0;
    let mut direct = Vec::with_capacity(horizon);
    for k in 1..=horizon {
        let err = &fwd.predicted[k] - fwd.lifted.columns(k * batch, batch);
        loss += weight * err.norm_squared();
        direct.push(err * (scale * weight));
        weight *= lambda;
    }
    loss /= batch as f64;

    let mut grad_a = DMatrix::zeros(m, m);
    let mut grad_b = DVector::zeros(m);
    let mut grad_lifted = DMatrix::zeros(m, fwd.lifted.ncols());

    // Adjoint sweep: g_k = G_k + A^T g_{k+1}, then g_0 = A^T g_1.
    let mut adjoint = DMatrix::zeros(m, batch);
    for k in (1..=horizon).rev() {
        adjoint += &direct[k - 1];
        grad_a += &adjoint * fwd.predicted[k - 1].transpose();
        grad_b.gemv(1.0, &adjoint, &fwd.controls[k - 1], 1.0);
        grad_lifted
            .columns_mut(k * batch, batch)
            .copy_from(&(-&direct[k - 1]));
        adjoint = op.a.tr_mul(&adjoint);
    }
    grad_lifted.columns_mut(0, batch).copy_from(&adjoint);

    let layers = if encoder.layers.is_empty() {
        Vec::new()
    } else {
        let grad_psi = grad_lifted.rows(n_x, m - n_x).into_owned();
        encoder.backward_batch(&fwd.cache, &grad_psi)
    };
    Ok((
        loss,
        Gradients {
            layers,
            a: grad_a,
            b: grad_b,
        },
    ))
}
