//! Head-to-tail acceleration transfer `G(s) = s C (sI - A_c)^-1 B_c` and the
//! sup-gain string-stability test `sup |G(j w)| <= 1`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::d2c::ContinuousSystem;
use super::eigen::C64;
use crate::error::{Error, Result};

/// Pivots smaller than this, relative to the largest, mark `sI - A_c` as
/// singular.
const PIVOT_TOL: f64 = 1e-14;

pub const DEFAULT_GRID_POINTS: usize = 400;
pub const DEFAULT_GRID_MIN_HZ: f64 = 1e-3;
pub const DEFAULT_GRID_MAX_HZ: f64 = 5.0;
pub const DEFAULT_STRING_TOL: f64 = 1e-6;

/// How grid values are turned into `s = j w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyUnit {
    /// Grid in Hz, `w = 2 pi f`.
    #[default]
    Hz,
    /// Grid already in rad/s.
    RadPerSec,
}

impl FrequencyUnit {
    pub fn omega(self, f: f64) -> f64 {
        match self {
            FrequencyUnit::Hz => 2.0 * PI * f,
            FrequencyUnit::RadPerSec => f,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            FrequencyUnit::Hz => "freq_hz",
            FrequencyUnit::RadPerSec => "omega_rad_s",
        }
    }
}

/// `points` log-spaced values over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..points)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (points - 1) as f64))
                .collect()
        }
    }
}

pub fn default_grid() -> Vec<f64> {
    log_grid(DEFAULT_GRID_MIN_HZ, DEFAULT_GRID_MAX_HZ, DEFAULT_GRID_POINTS)
}

/// `|s e_output^T (sI - A_c)^-1 B_c|` at `s = j omega`, by LU solve.
pub fn transfer_gain_at_omega(sys: &ContinuousSystem, output: usize, omega: f64) -> Result<f64> {
    let m = sys.a.nrows();
    if output >= m {
        return Err(Error::Dimension {
            context: "transfer output index",
            expected: m,
            actual: output,
        });
    }
    let s = C64::new(0.0, omega);
    let shifted = DMatrix::from_fn(m, m, |i, j| {
        let d = if i == j { s } else { C64::new(0.0, 0.0) };
        d - C64::new(sys.a[(i, j)], 0.0)
    });
    let lu = shifted.lu();
    let u = lu.u();
    let pivots: Vec<f64> = u.diagonal().iter().map(|p| p.norm()).collect();
    let largest = pivots.iter().copied().fold(0.0, f64::max);
    let smallest = pivots.iter().copied().fold(f64::INFINITY, f64::min);
    if largest == 0.0 || smallest <= PIVOT_TOL * largest {
        return Err(Error::PoleOnAxis {
            freq: omega / (2.0 * PI),
        });
    }
    let rhs = DMatrix::from_fn(m, 1, |i, _| C64::new(sys.b[i], 0.0));
    let x = lu.solve(&rhs).ok_or(Error::PoleOnAxis {
        freq: omega / (2.0 * PI),
    })?;
    Ok((s * x[(output, 0)]).norm())
}

/// Gain at `f` Hz.
pub fn transfer_gain(sys: &ContinuousSystem, output: usize, f: f64) -> Result<f64> {
    if !(f > 0.0) {
        return Err(Error::Invalid(format!("frequency must be positive, got {f}")));
    }
    transfer_gain_at_omega(sys, output, FrequencyUnit::Hz.omega(f))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyResponse {
    pub unit: FrequencyUnit,
    pub frequencies: Vec<f64>,
    pub gains: Vec<f64>,
    pub peak_gain: f64,
    pub peak_frequency: f64,
    pub string_stable: bool,
    pub tol: f64,
    /// Grid points that fell on a pole and were left out.
    pub skipped: Vec<f64>,
}

/// Evaluates the gain over an ascending positive grid. String stable iff
/// the peak gain is at most `1 + tol`.
pub fn string_stability_sweep(
    sys: &ContinuousSystem,
    output: usize,
    grid: &[f64],
    tol: f64,
    unit: FrequencyUnit,
) -> Result<FrequencyResponse> {
    if grid.is_empty() {
        return Err(Error::Invalid("empty frequency grid".into()));
    }
    if grid.iter().any(|&f| !(f > 0.0)) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Invalid(
            "frequency grid must be positive and strictly ascending".into(),
        ));
    }
    let mut frequencies = Vec::with_capacity(grid.len());
    let mut gains = Vec::with_capacity(grid.len());
    let mut skipped = Vec::new();
    for &f in grid {
        match transfer_gain_at_omega(sys, output, unit.omega(f)) {
            Ok(g) => {
                frequencies.push(f);
                gains.push(g);
            }
            Err(Error::PoleOnAxis { .. }) => {
                log::warn!("skipping grid point {f}: pole on the imaginary axis");
                skipped.push(f);
            }
            Err(e) => return Err(e),
        }
    }
    let (peak_idx, &peak_gain) = gains
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::Invalid("every grid point fell on a pole".into()))?;
    Ok(FrequencyResponse {
        unit,
        peak_frequency: frequencies[peak_idx],
        string_stable: peak_gain <= 1.0 + tol,
        frequencies,
        gains,
        peak_gain,
        tol,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn first_order() -> ContinuousSystem {
        ContinuousSystem {
            a: DMatrix::from_element(1, 1, -1.0),
            b: DVector::from_element(1, 1.0),
            dt_source: 0.1,
        }
    }

    #[test]
    fn first_order_gain_at_unit_omega() {
        let g = transfer_gain(&first_order(), 0, 1.0 / (2.0 * PI)).unwrap();
        assert!((g - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn gain_vanishes_at_dc() {
        assert!(transfer_gain(&first_order(), 0, 1e-6).unwrap() < 1e-5);
    }

    #[test]
    fn grid_shape() {
        let g = default_grid();
        assert_eq!(g.len(), 400);
        assert!((g[0] - 1e-3).abs() < 1e-15);
        assert!((g[399] - 5.0).abs() < 1e-12);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn pole_on_axis_is_skipped() {
        // Undamped oscillator at 1 rad/s.
        let sys = ContinuousSystem {
            a: DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            b: DVector::from_vec(vec![0.0, 1.0]),
            dt_source: 0.1,
        };
        assert!(matches!(
            transfer_gain_at_omega(&sys, 1, 1.0),
            Err(Error::PoleOnAxis { .. })
        ));
        let r = string_stability_sweep(&sys, 1, &[0.5, 1.0, 2.0], 1e-6, FrequencyUnit::RadPerSec)
            .unwrap();
        assert_eq!(r.skipped, vec![1.0]);
        assert_eq!(r.frequencies, vec![0.5, 2.0]);
    }

    #[test]
    fn amplified_system_is_string_unstable() {
        let mut sys = first_order();
        sys.b[0] = 2.0;
        let r = string_stability_sweep(&sys, 0, &default_grid(), 1e-6, FrequencyUnit::Hz).unwrap();
        assert!(r.peak_gain > 1.9 && r.peak_gain <= 2.0);
        assert!(!r.string_stable);
    }

    #[test]
    fn grid_must_be_ascending_and_positive() {
        let sys = first_order();
        assert!(string_stability_sweep(&sys, 0, &[0.2, 0.1], 1e-6, FrequencyUnit::Hz).is_err());
        assert!(string_stability_sweep(&sys, 0, &[0.0, 0.1], 1e-6, FrequencyUnit::Hz).is_err());
        assert!(transfer_gain(&sys, 0, 0.0).is_err());
        assert!(transfer_gain(&sys, 1, 0.1).is_err());
    }
}
