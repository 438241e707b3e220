use nalgebra::{Complex, DMatrix, DVector, Schur};
use serde::Serialize;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

const SCHUR_MAX_ITER: usize = 10_000;

/// Eigenvalues closer than this (relative to `max(1, |lambda|)`) count as
/// one.
pub const DISTINCT_TOL: f64 = 1e-8;

/// All eigenvalues of a real square matrix, via the real Schur form.
pub fn eigenvalues(a: &DMatrix<f64>) -> Result<Vec<C64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension {
            context: "eigenvalues of non-square matrix",
            expected: a.nrows(),
            actual: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Invalid("matrix has non-finite entries".into()));
    }
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, SCHUR_MAX_ITER).ok_or(Error::EigenFailure)?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Groups eigenvalues that coincide within [`DISTINCT_TOL`]. Each group is a
/// list of indices into `values`.
pub fn cluster_eigenvalues(values: &[C64]) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, v) in values.iter().enumerate() {
        let found = clusters.iter_mut().find(|c| {
            let r = values[c[0]];
            (r - v).norm() <= DISTINCT_TOL * r.norm().max(v.norm()).max(1.0)
        });
        match found {
            Some(c) => c.push(i),
            None => clusters.push(vec![i]),
        }
    }
    clusters
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    AsymptoticallyStable,
    MarginallyStable,
    Unstable,
}

impl Verdict {
    pub fn describe(self) -> &'static str {
        match self {
            Verdict::AsymptoticallyStable => "asymptotically stable",
            Verdict::MarginallyStable => "marginally stable",
            Verdict::Unstable => "locally unstable",
        }
    }
}

/// Spectrum of a discrete-time operator and its local-stability verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenReport {
    /// Sorted by magnitude, largest first.
    pub eigenvalues: Vec<C64>,
    pub magnitudes: Vec<f64>,
    pub max_magnitude: f64,
    pub verdict: Verdict,
    pub distinct_count: usize,
    /// Set when an eigenvalue on the unit circle (within `tol`) is repeated;
    /// boundedness then also needs it to be semisimple.
    pub repeated_unit_eigenvalue: bool,
    pub tol: f64,
}

impl EigenReport {
    pub fn is_diagonalizable_witness(&self) -> bool {
        self.distinct_count == self.eigenvalues.len()
    }
}

/// `verdict` from the largest eigenvalue magnitude of `z' = A z`.
pub fn classify(max_magnitude: f64, tol: f64) -> Verdict {
    if max_magnitude < 1.0 - tol {
        Verdict::AsymptoticallyStable
    } else if max_magnitude > 1.0 + tol {
        Verdict::Unstable
    } else {
        Verdict::MarginallyStable
    }
}

pub fn local_stability(a: &DMatrix<f64>, tol: f64) -> Result<EigenReport> {
    let mut values = eigenvalues(a)?;
    if values.is_empty() {
        return Err(Error::Invalid("empty operator".into()));
    }
    values.sort_by(|x, y| y.norm().total_cmp(&x.norm()));
    let magnitudes: Vec<f64> = values.iter().map(|v| v.norm()).collect();
    let max_magnitude = magnitudes[0];
    let clusters = cluster_eigenvalues(&values);
    let repeated_unit_eigenvalue = clusters
        .iter()
        .any(|c| c.len() > 1 && (values[c[0]].norm() - 1.0).abs() <= tol);
    Ok(EigenReport {
        verdict: classify(max_magnitude, tol),
        distinct_count: clusters.len(),
        eigenvalues: values,
        magnitudes,
        max_magnitude,
        repeated_unit_eigenvalue,
        tol,
    })
}

/// Right null-space basis of `A - lambda I` with `dim` columns, or an
/// error when the eigenvalue's geometric multiplicity is below `dim`.
pub(crate) fn eigenvectors(a: &DMatrix<f64>, lambda: C64, dim: usize) -> Result<DMatrix<C64>> {
    let m = a.nrows();
    let shifted = DMatrix::from_fn(m, m, |i, j| {
        let d = if i == j { lambda } else { C64::new(0.0, 0.0) };
        C64::new(a[(i, j)], 0.0) - d
    });
    let svd = shifted.svd(false, true);
    let v_t = svd.v_t.ok_or(Error::EigenFailure)?;
    let sigma: DVector<f64> = svd.singular_values;
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[i].total_cmp(&sigma[j]));
    let scale = a.norm().max(1.0);
    let null_tol = 1e-6 * scale;
    if sigma[order[dim - 1]] > null_tol {
        return Err(Error::NoPrincipalLog(format!(
            "eigenvalue {lambda} is defective (matrix not diagonalizable)"
        )));
    }
    let mut basis = DMatrix::zeros(m, dim);
    for (c, &i) in order.iter().take(dim).enumerate() {
        // Rows of V^H are conjugated right singular vectors.
        for r in 0..m {
            basis[(r, c)] = v_t[(i, r)].conj();
        }
    }
    Ok(basis)
}
