//! Zero-order-hold conversion between discrete and continuous time.
//!
//! Forward: `A = exp(A_c dt)`, `B = (int_0^dt exp(A_c t) dt) B_c`.
//! Inverse (this module's `d2c_zoh`): principal matrix logarithm through the
//! eigendecomposition `A = V diag(lambda) V^-1`, then
//! `B_c = Psi^-1 B` with `Psi = V diag(dt phi(mu_i dt)) V^-1`,
//! `phi(x) = (e^x - 1)/x`.

use nalgebra::{DMatrix, DVector};

use super::eigen::{cluster_eigenvalues, eigenvalues, eigenvectors, C64};
use crate::error::{Error, Result};

/// Imaginary parts of reconstructed real matrices below this (relative to
/// the largest entry, floor 1) are discarded.
pub const IMAG_RESIDUE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousSystem {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    /// Sample time of the discrete system this came from.
    pub dt_source: f64,
}

/// `(e^x - 1) / x` with the removable singularity filled in.
fn phi(x: C64) -> C64 {
    if x.norm() < 1e-4 {
        // Taylor series; the fifth term is below 1e-22 here.
        let one = C64::new(1.0, 0.0);
        one + x / 2.0 + x * x / 6.0 + x * x * x / 24.0 + x * x * x * x / 120.0
    } else {
        (x.exp() - 1.0) / x
    }
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<C64> {
    m.map(|v| C64::new(v, 0.0))
}

fn real_part(m: &DMatrix<C64>, what: &str) -> Result<DMatrix<f64>> {
    let scale = m.iter().map(|v| v.re.abs()).fold(1.0, f64::max);
    let residue = m.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    if residue > IMAG_RESIDUE_TOL * scale {
        return Err(Error::NoPrincipalLog(format!(
            "{what} has imaginary residue {residue:.3e}"
        )));
    }
    Ok(m.map(|v| v.re))
}

/// Recovers `(A_c, B_c)` whose zero-order-hold discretization at `dt` is
/// `(A, B)`. Requires a diagonalizable `A` with no eigenvalue at 0 or on
/// the negative real axis.
pub fn d2c_zoh(a: &DMatrix<f64>, b: &DVector<f64>, dt: f64) -> Result<ContinuousSystem> {
    let m = a.nrows();
    if a.ncols() != m || b.len() != m {
        return Err(Error::Dimension {
            context: "d2c_zoh",
            expected: m,
            actual: b.len(),
        });
    }
    if !(dt > 0.0) {
        return Err(Error::Invalid(format!("non-positive dt {dt}")));
    }
    let values = eigenvalues(a)?;
    for v in &values {
        if v.norm() < 1e-12 {
            return Err(Error::NoPrincipalLog(format!("eigenvalue {v} is zero")));
        }
        if v.re < 0.0 && v.im.abs() <= 1e-12 * v.norm() {
            return Err(Error::NoPrincipalLog(format!(
                "eigenvalue {v} lies on the negative real axis"
            )));
        }
    }

    let clusters = cluster_eigenvalues(&values);
    let mut basis = DMatrix::<C64>::zeros(m, m);
    let mut mu = Vec::with_capacity(m);
    let mut col = 0;
    for c in &clusters {
        let lambda = c.iter().map(|&i| values[i]).sum::<C64>() / c.len() as f64;
        let vecs = eigenvectors(a, lambda, c.len())?;
        basis.columns_mut(col, c.len()).copy_from(&vecs);
        // Principal branch: arg in (-pi, pi].
        let log = C64::new(lambda.norm().ln(), lambda.arg());
        mu.extend(std::iter::repeat_n(log / dt, c.len()));
        col += c.len();
    }

    let lu = basis.clone().lu();
    let lu_t = basis.transpose().lu();
    if !lu.is_invertible() {
        return Err(Error::Singular("eigenvector matrix".into()));
    }
    // A_c = V D V^-1  <=>  V^T A_c^T = D V^T.
    let d_vt = DMatrix::from_fn(m, m, |i, j| mu[i] * basis[(j, i)]);
    let ac_t = lu_t
        .solve(&d_vt)
        .ok_or_else(|| Error::Singular("eigenvector matrix".into()))?;
    let ac = real_part(&ac_t.transpose(), "continuous A")?;

    // Solve Psi B_c = B in the eigenbasis.
    let modal_b = lu
        .solve(&to_complex(&DMatrix::from_column_slice(m, 1, b.as_slice())))
        .ok_or_else(|| Error::Singular("eigenvector matrix".into()))?;
    let mut scaled = modal_b;
    for i in 0..m {
        let psi = phi(mu[i] * dt) * dt;
        if psi.norm() < 1e-300 {
            return Err(Error::Singular("input integral matrix".into()));
        }
        scaled[(i, 0)] /= psi;
    }
    let bc = real_part(&(&basis * scaled), "continuous B")?;
    Ok(ContinuousSystem {
        a: ac,
        b: DVector::from_column_slice(bc.as_slice()),
        dt_source: dt,
    })
}

/// Zero-order-hold discretization via the exponential of the augmented
/// matrix `[[A_c, B_c], [0, 0]] dt`.
pub fn c2d_zoh(sys: &ContinuousSystem, dt: f64) -> (DMatrix<f64>, DVector<f64>) {
    let m = sys.a.nrows();
    let mut aug = DMatrix::zeros(m + 1, m + 1);
    aug.view_mut((0, 0), (m, m)).copy_from(&(&sys.a * dt));
    aug.view_mut((0, m), (m, 1)).copy_from(&(&sys.b * dt));
    let e = aug.exp();
    (
        e.view((0, 0), (m, m)).into_owned(),
        e.view((0, m), (m, 1)).column(0).into_owned(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_closed_form() {
        let a = DMatrix::from_element(1, 1, (-0.1f64).exp());
        let b = DVector::from_element(1, 1.0 - (-0.1f64).exp());
        let sys = d2c_zoh(&a, &b, 0.1).unwrap();
        assert!((sys.a[(0, 0)] + 1.0).abs() < 1e-10);
        assert!((sys.b[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn identity_maps_to_integrator() {
        let b = DVector::from_vec(vec![0.3, -0.2, 1.0]);
        let sys = d2c_zoh(&DMatrix::identity(3, 3), &b, 0.1).unwrap();
        assert!(sys.a.abs().max() < 1e-14);
        assert!((&sys.b - &b / 0.1).abs().max() < 1e-12);
    }

    #[test]
    fn rotation_has_real_logarithm() {
        let th: f64 = 0.3;
        let a = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()]) * 0.95;
        let b = DVector::from_vec(vec![0.1, 0.0]);
        let sys = d2c_zoh(&a, &b, 0.5).unwrap();
        let (a2, b2) = c2d_zoh(&sys, 0.5);
        assert!((a2 - &a).abs().max() < 1e-12);
        assert!((b2 - &b).abs().max() < 1e-12);
    }

    #[test]
    fn rejects_singular_negative_and_defective() {
        let b = DVector::from_element(2, 1.0);
        let zero = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 0.5]));
        assert!(matches!(d2c_zoh(&zero, &b, 0.1), Err(Error::NoPrincipalLog(_))));
        let neg = DMatrix::from_diagonal(&DVector::from_vec(vec![-0.5, 0.5]));
        assert!(matches!(d2c_zoh(&neg, &b, 0.1), Err(Error::NoPrincipalLog(_))));
        let jordan = DMatrix::from_row_slice(2, 2, &[0.9, 1.0, 0.0, 0.9]);
        assert!(d2c_zoh(&jordan, &b, 0.1).is_err());
    }

    #[test]
    fn phi_is_continuous_at_zero() {
        let small = C64::new(1e-5, 2e-5);
        let direct = (small.exp() - 1.0) / small;
        assert!((phi(small) - direct).norm() < 1e-10);
        assert_eq!(phi(C64::new(0.0, 0.0)), C64::new(1.0, 0.0));
    }
}
