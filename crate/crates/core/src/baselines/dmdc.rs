//! Dynamic mode decomposition with control: `[A B] = X' pinv([X; U])`.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Singular values below this fraction of the largest are discarded.
pub const RELATIVE_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DmdcModel {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub rank_used: usize,
    pub dt: f64,
}

impl DmdcModel {
    pub fn state_dim(&self) -> usize {
        self.b.len()
    }
}

/// Least-squares fit on snapshot pairs stored column-wise: `current` and
/// `next` are `n_x x N`, `controls` has length `N`.
pub fn dmdc_fit_pairs(
    current: &DMatrix<f64>,
    controls: &[f64],
    next: &DMatrix<f64>,
    rank: Option<usize>,
) -> Result<(DMatrix<f64>, DVector<f64>, usize)> {
    let n_x = current.nrows();
    let pairs = current.ncols();
    if next.shape() != current.shape() || controls.len() != pairs {
        return Err(Error::Dimension {
            context: "dmdc snapshot pairs",
            expected: pairs,
            actual: controls.len().min(next.ncols()),
        });
    }
    if pairs < n_x + 1 {
        return Err(Error::Invalid(format!(
            "DMDc needs at least {} snapshot pairs, got {pairs}",
            n_x + 1
        )));
    }
    let mut omega = DMatrix::zeros(n_x + 1, pairs);
    omega.rows_mut(0, n_x).copy_from(current);
    omega.row_mut(n_x).copy_from_slice(controls);

    let svd = omega.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let sigma = svd.singular_values;
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
    let sigma_max = sigma[order[0]];
    let limit = rank.unwrap_or(usize::MAX);
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&i| sigma_max > 0.0 && sigma[i] > RELATIVE_CUTOFF * sigma_max)
        .take(limit)
        .collect();

    // pinv(Omega) = V_r diag(1/s_r) U_r^T
    let mut pinv = DMatrix::zeros(pairs, n_x + 1);
    for &i in &kept {
        let inv = 1.0 / sigma[i];
        pinv.ger(inv, &vt.row(i).transpose(), &u.column(i), 1.0);
    }
    let gain = next * pinv;
    let a = gain.columns(0, n_x).into_owned();
    let b = gain.column(n_x).into_owned();
    Ok((a, b, kept.len()))
}

/// Fits `x_{k+1} = A x_k + B u_k` to one sequence of states (`steps x n_x`,
/// one row per step) and controls.
pub fn dmdc_fit(states: &DMatrix<f64>, controls: &[f64], rank: Option<usize>, dt: f64) -> Result<DmdcModel> {
    let steps = states.nrows();
    if controls.len() != steps {
        return Err(Error::Dimension {
            context: "dmdc controls",
            expected: steps,
            actual: controls.len(),
        });
    }
    if steps < 2 {
        return Err(Error::Invalid("DMDc needs at least two snapshots".into()));
    }
    let current = states.rows(0, steps - 1).transpose();
    let next = states.rows(1, steps - 1).transpose();
    let (a, b, rank_used) = dmdc_fit_pairs(&current, &controls[..steps - 1], &next, rank)?;
    Ok(DmdcModel { a, b, rank_used, dt })
}

/// Pools snapshot pairs from every sequence of a (raw, unnormalized) dataset.
pub fn dmdc_fit_dataset(ds: &Dataset, rank: Option<usize>) -> Result<DmdcModel> {
    let n_x = ds
        .sequences
        .first()
        .map(|s| s.states.ncols())
        .ok_or(Error::NoTrajectories)?;
    let pairs: usize = ds.sequences.iter().map(|s| s.steps().saturating_sub(1)).sum();
    let mut current = DMatrix::zeros(n_x, pairs);
    let mut next = DMatrix::zeros(n_x, pairs);
    let mut controls = Vec::with_capacity(pairs);
    let mut col = 0;
    for s in &ds.sequences {
        for k in 0..s.steps().saturating_sub(1) {
            current.set_column(col, &s.states.row(k).transpose());
            next.set_column(col, &s.states.row(k + 1).transpose());
            controls.push(s.controls[k]);
            col += 1;
        }
    }
    let (a, b, rank_used) = dmdc_fit_pairs(&current, &controls, &next, rank)?;
    Ok(DmdcModel {
        a,
        b,
        rank_used,
        dt: ds.dt,
    })
}

/// `x_{k+1} = A x_k + B u_k`; returns `x_1..x_K`.
pub fn dmdc_rollout(model: &DmdcModel, x0: &DVector<f64>, controls: &[f64]) -> Result<Vec<DVector<f64>>> {
    if x0.len() != model.state_dim() {
        return Err(Error::Dimension {
            context: "dmdc rollout",
            expected: model.state_dim(),
            actual: x0.len(),
        });
    }
    let mut x = x0.clone();
    let mut out = Vec::with_capacity(controls.len());
    for (k, &u) in controls.iter().enumerate() {
        let mut nx = &model.a * &x;
        nx.axpy(u, &model.b, 1.0);
        if nx.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged { step: k + 1 });
        }
        out.push(nx.clone());
        x = nx;
    }
    Ok(out)
}
