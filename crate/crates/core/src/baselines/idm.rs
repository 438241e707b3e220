//! Intelligent Driver Model.
//!
//! `a = a_max * [1 - (v/v0)^delta - (s*/s)^2]` with desired gap
//! `s* = s0 + v T + v dv / (2 sqrt(a_max b))`, floored at `s0`.

use serde::{Deserialize, Serialize};

use crate::data::{
    derive_states, simulate_platoon, FollowerInit, LeaderInit, StateSequence,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdmParams {
    /// Desired speed, m/s.
    pub v0: f64,
    /// Time headway, s.
    pub t_headway: f64,
    /// Jam spacing, m.
    pub s0: f64,
    pub a_max: f64,
    /// Comfortable deceleration, m/s^2.
    pub b: f64,
    pub delta: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            v0: 30.0,
            t_headway: 1.5,
            s0: 2.0,
            a_max: 1.0,
            b: 1.5,
            delta: 4.0,
        }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<()> {
        let all_positive = [self.v0, self.t_headway, self.s0, self.a_max, self.b, self.delta]
            .iter()
            .all(|&x| x > 0.0 && x.is_finite());
        if !all_positive || self.delta < 1.0 {
            return Err(Error::Invalid(format!("invalid IDM parameters {self:?}")));
        }
        Ok(())
    }

    pub fn desired_gap(&self, v: f64, dv: f64) -> f64 {
        let dynamic = v * self.t_headway + v * dv / (2.0 * (self.a_max * self.b).sqrt());
        (self.s0 + dynamic).max(self.s0)
    }

    /// Steady-state spacing at speed `v`, or `None` when `v >= v0`.
    pub fn equilibrium_spacing(&self, v: f64) -> Option<f64> {
        let free = 1.0 - (v / self.v0).powf(self.delta);
        (free > 0.0).then(|| self.desired_gap(v, 0.0) / free.sqrt())
    }

    /// Every parameter multiplied by its own factor.
    pub fn scaled(&self, f: [f64; 6]) -> Self {
        Self {
            v0: self.v0 * f[0],
            t_headway: self.t_headway * f[1],
            s0: self.s0 * f[2],
            a_max: self.a_max * f[3],
            b: self.b * f[4],
            delta: self.delta * f[5],
        }
    }
}

/// Follower acceleration for spacing `s`, speed `v` and approach rate
/// `dv = v - v_leader`.
pub fn idm_accel(s: f64, v: f64, dv: f64, p: &IdmParams) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Invalid(format!("IDM needs positive spacing, got {s}")));
    }
    let gap_ratio = p.desired_gap(v, dv) / s;
    Ok(p.a_max * (1.0 - (v / p.v0).powf(p.delta) - gap_ratio * gap_ratio))
}

/// Initial condition of a platoon in car-following coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatoonInit {
    pub leader: LeaderInit,
    pub spacings: Vec<f64>,
    pub velocities: Vec<f64>,
}

impl PlatoonInit {
    /// Reads the first step of a derived sequence.
    pub fn from_sequence(seq: &StateSequence) -> Self {
        let l = seq.layout();
        let n = seq.n_followers;
        Self {
            leader: LeaderInit {
                position: seq.leader_position[0],
                velocity: seq.leader_velocity[0],
            },
            spacings: (1..=n).map(|i| seq.states[(0, l.spacing(i))]).collect(),
            velocities: (1..=n).map(|i| seq.states[(0, l.velocity(i))]).collect(),
        }
    }
}

/// Replays the leader's acceleration through an IDM platoon with the given
/// (possibly mismatched) per-follower parameters.
pub fn idm_rollout(
    id: &str,
    init: &PlatoonInit,
    leader_accel: &[f64],
    params: &[IdmParams],
    dt: f64,
) -> Result<StateSequence> {
    if params.len() != init.spacings.len() || init.velocities.len() != init.spacings.len() {
        return Err(Error::Dimension {
            context: "idm_rollout followers",
            expected: init.spacings.len(),
            actual: params.len(),
        });
    }
    let followers: Vec<FollowerInit> = params
        .iter()
        .zip(init.spacings.iter().zip(&init.velocities))
        .map(|(p, (&spacing, &velocity))| FollowerInit {
            params: *p,
            spacing,
            velocity,
        })
        .collect();
    let traj = simulate_platoon(id, init.leader, leader_accel, &followers, dt, None)?;
    derive_states(&traj)
}
