use serde::{Deserialize, Serialize};

use super::{Dataset, StateSequence};
use crate::error::{Error, Result};

const MIN_STD: f64 = 1e-8;

/// Scale-only normalization. There is no mean shift, so the zero state maps
/// to itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormScales {
    pub state: Vec<f64>,
    pub control: f64,
}

impl NormScales {
    pub fn identity(n_x: usize) -> Self {
        Self {
            state: vec![1.0; n_x],
            control: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.state.iter().chain([&self.control]).any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Invalid("normalization scales must be positive".into()));
        }
        Ok(())
    }

    pub fn apply_state(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.state).map(|(v, s)| v / s).collect()
    }

    pub fn invert_state(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.state).map(|(v, s)| v * s).collect()
    }

    pub fn apply_control(&self, u: f64) -> f64 {
        u / self.control
    }

    pub fn invert_control(&self, u: f64) -> f64 {
        u * self.control
    }

    pub(crate) fn apply_sequence(&self, seq: &StateSequence) -> Result<StateSequence> {
        if seq.states.ncols() != self.state.len() {
            return Err(Error::Dimension {
                context: "normalization",
                expected: self.state.len(),
                actual: seq.states.ncols(),
            });
        }
        let mut out = seq.clone();
        for (j, s) in self.state.iter().enumerate() {
            out.states.column_mut(j).iter_mut().for_each(|v| *v /= s);
        }
        out.controls.iter_mut().for_each(|u| *u /= self.control);
        Ok(out)
    }
}

fn population_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return 1.0;
    }
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    let std = var.sqrt();
    if std < MIN_STD {
        1.0
    } else {
        std
    }
}

/// Per-column population standard deviation over every step of every
/// training sequence. Near-constant columns keep scale 1.
pub fn fit_normalization(train: &Dataset) -> Result<NormScales> {
    if train.is_empty() {
        return Err(Error::Invalid("cannot fit normalization on an empty dataset".into()));
    }
    if train.norm.is_some() {
        return Err(Error::Invalid("dataset is already normalized".into()));
    }
    let n_x = train.sequences[0].states.ncols();
    let state = (0..n_x)
        .map(|j| {
            population_std(
                train
                    .sequences
                    .iter()
                    .flat_map(move |s| s.states.column(j).iter().copied().collect::<Vec<_>>()),
            )
        })
        .collect();
    let control = population_std(train.sequences.iter().flat_map(|s| s.controls.iter().copied()));
    Ok(NormScales { state, control })
}
