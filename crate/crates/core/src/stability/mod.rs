//! Local stability from the spectrum of the discrete operator, and string
//! stability from the frequency response of its continuous-time equivalent.

mod d2c;
mod eigen;
mod frequency;

pub use d2c::{c2d_zoh, d2c_zoh, ContinuousSystem, IMAG_RESIDUE_TOL};
pub use eigen::{
    classify, cluster_eigenvalues, eigenvalues, local_stability, EigenReport, Verdict, C64,
    DISTINCT_TOL,
};
pub use frequency::{
    default_grid, log_grid, string_stability_sweep, transfer_gain, transfer_gain_at_omega,
    FrequencyResponse, FrequencyUnit, DEFAULT_GRID_MAX_HZ, DEFAULT_GRID_MIN_HZ,
    DEFAULT_GRID_POINTS, DEFAULT_STRING_TOL,
};
