//! Platoon trajectories and the car-following state sequences derived from
//! them.
//!
//! A platoon is one leader (vehicle 0) followed by `n` vehicles ordered
//! front to back. For every step the derived state stacks three blocks
//! `[s_1..s_n, v_1..v_n, dv_1..dv_n]`: spacing to the preceding vehicle,
//! follower speed, and approach rate `v_i - v_{i-1}`. The control input is
//! the leader's acceleration.

mod csv_io;
mod normalize;
mod profile;
mod simulate;
mod split;

pub use csv_io::{load_trajectories, read_trajectories, write_trajectories};
pub use normalize::{fit_normalization, NormScales};
pub use profile::{generate_leader_profile, LeaderProfile};
pub use simulate::{
    generate_corpus, simulate_platoon, AccelNoise, CorpusConfig, CorpusOutput, FollowerInit,
    LeaderInit, ProfileKind,
};
pub use split::split_dataset;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleTrace {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub acceleration: Vec<f64>,
}

impl VehicleTrace {
    pub fn len(&self) -> usize {
        self.position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position.is_empty()
    }
}

/// Per-vehicle time series for one leader plus its followers.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatoonTrajectory {
    pub id: String,
    pub dt: f64,
    /// Index 0 is the leader.
    pub vehicles: Vec<VehicleTrace>,
}

impl PlatoonTrajectory {
    /// Builds a trajectory after checking shape and ordering invariants.
    pub fn new(id: impl Into<String>, dt: f64, vehicles: Vec<VehicleTrace>) -> Result<Self> {
        let traj = Self {
            id: id.into(),
            dt,
            vehicles,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::Invalid(format!(
                "trajectory {}: non-positive dt {}",
                self.id, self.dt
            )));
        }
        if self.vehicles.len() < 2 {
            return Err(Error::Invalid(format!(
                "trajectory {}: need a leader and at least one follower",
                self.id
            )));
        }
        let steps = self.vehicles[0].len();
        if steps < 2 {
            return Err(Error::Invalid(format!(
                "trajectory {}: need at least 2 steps",
                self.id
            )));
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            if v.len() != steps || v.velocity.len() != steps || v.acceleration.len() != steps {
                return Err(Error::Invalid(format!(
                    "trajectory {}: vehicle {i} has inconsistent trace lengths",
                    self.id
                )));
            }
        }
        for i in 1..self.vehicles.len() {
            for k in 0..steps {
                let gap = self.vehicles[i - 1].position[k] - self.vehicles[i].position[k];
                if !(gap > 0.0) {
                    return Err(Error::Trajectory {
                        traj: self.id.clone(),
                        row: k,
                        message: format!("non-positive spacing {gap} for follower {i}"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        self.vehicles[0].len()
    }

    pub fn n_followers(&self) -> usize {
        self.vehicles.len() - 1
    }
}

/// Column layout of the stacked `[s; v; dv]` state for `n` followers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StateLayout {
    pub n_followers: usize,
}

impl StateLayout {
    pub fn new(n_followers: usize) -> Self {
        Self { n_followers }
    }

    pub fn dim(&self) -> usize {
        3 * self.n_followers
    }

    /// Follower `i` is 1-based.
    pub fn spacing(&self, i: usize) -> usize {
        i - 1
    }

    pub fn velocity(&self, i: usize) -> usize {
        self.n_followers + i - 1
    }

    pub fn speed_diff(&self, i: usize) -> usize {
        2 * self.n_followers + i - 1
    }
}

/// Car-following states and controls for one platoon trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSequence {
    pub id: String,
    pub n_followers: usize,
    /// `steps x 3n`, one row per step.
    pub states: DMatrix<f64>,
    /// Leader acceleration per step.
    pub controls: Vec<f64>,
    pub leader_position: Vec<f64>,
    pub leader_velocity: Vec<f64>,
}

impl StateSequence {
    pub fn steps(&self) -> usize {
        self.states.nrows()
    }

    pub fn layout(&self) -> StateLayout {
        StateLayout::new(self.n_followers)
    }

    pub fn state(&self, k: usize) -> DVector<f64> {
        self.states.row(k).transpose()
    }

    /// Spacing columns as a `steps x n` matrix.
    pub fn spacings(&self) -> DMatrix<f64> {
        self.states.columns(0, self.n_followers).into_owned()
    }
}

/// Derives `[s; v; dv]` states and the leader-acceleration control.
pub fn derive_states(traj: &PlatoonTrajectory) -> Result<StateSequence> {
    let n = traj.n_followers();
    let steps = traj.steps();
    let layout = StateLayout::new(n);
    let mut states = DMatrix::zeros(steps, layout.dim());
    for i in 1..=n {
        let (front, back) = (&traj.vehicles[i - 1], &traj.vehicles[i]);
        for k in 0..steps {
            let s = front.position[k] - back.position[k];
            if !(s > 0.0) {
                return Err(Error::Trajectory {
                    traj: traj.id.clone(),
                    row: k,
                    message: format!("non-positive spacing {s} for follower {i}"),
                });
            }
            states[(k, layout.spacing(i))] = s;
            states[(k, layout.velocity(i))] = back.velocity[k];
            states[(k, layout.speed_diff(i))] = back.velocity[k] - front.velocity[k];
        }
    }
    let leader = &traj.vehicles[0];
    Ok(StateSequence {
        id: traj.id.clone(),
        n_followers: n,
        states,
        controls: leader.acceleration.clone(),
        leader_position: leader.position.clone(),
        leader_velocity: leader.velocity.clone(),
    })
}

/// A collection of sequences sharing `dt` and platoon size.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub sequences: Vec<StateSequence>,
    pub dt: f64,
    /// Present when `sequences` hold normalized states and controls.
    pub norm: Option<NormScales>,
}

impl Dataset {
    pub fn new(sequences: Vec<StateSequence>, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Invalid(format!("non-positive dt {dt}")));
        }
        if let Some(first) = sequences.first() {
            if let Some(bad) = sequences.iter().find(|s| s.n_followers != first.n_followers) {
                return Err(Error::Invalid(format!(
                    "sequence {} has {} followers, expected {}",
                    bad.id, bad.n_followers, first.n_followers
                )));
            }
        }
        Ok(Self {
            sequences,
            dt,
            norm: None,
        })
    }

    pub fn from_trajectories(trajs: &[PlatoonTrajectory]) -> Result<Self> {
        let first = trajs.first().ok_or(Error::NoTrajectories)?;
        let dt = first.dt;
        if let Some(t) = trajs.iter().find(|t| t.dt != dt) {
            return Err(Error::Invalid(format!(
                "trajectory {} has dt {}, expected {dt}",
                t.id, t.dt
            )));
        }
        let seqs = trajs.iter().map(derive_states).collect::<Result<Vec<_>>>()?;
        Self::new(seqs, dt)
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn n_followers(&self) -> Option<usize> {
        self.sequences.first().map(|s| s.n_followers)
    }

    /// Returns a copy with states and controls divided by `norm`.
    pub fn normalized(&self, norm: &NormScales) -> Result<Dataset> {
        if self.norm.is_some() {
            return Err(Error::Invalid("dataset is already normalized".into()));
        }
        let sequences = self
            .sequences
            .iter()
            .map(|s| norm.apply_sequence(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            sequences,
            dt: self.dt,
            norm: Some(norm.clone()),
        })
    }
}
