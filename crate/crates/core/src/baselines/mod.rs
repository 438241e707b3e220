//! Comparison models: linear identification by DMD with control, and the
//! Intelligent Driver Model.

mod dmdc;
mod idm;

pub use dmdc::{dmdc_fit, dmdc_fit_dataset, dmdc_fit_pairs, dmdc_rollout, DmdcModel, RELATIVE_CUTOFF};
pub use idm::{idm_accel, idm_rollout, IdmParams, PlatoonInit};
