use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Leader acceleration patterns used to excite the platoon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LeaderProfile {
    Constant { bias: f64 },
    /// `a_k = amplitude * sin(2 pi f k dt)`.
    Sinusoid { amplitude: f64, frequency: f64 },
    /// `-amplitude` for the first half of every period, `+amplitude` for the second.
    StopAndGo { amplitude: f64, period: f64 },
}

pub fn generate_leader_profile(profile: &LeaderProfile, steps: usize, dt: f64) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::Invalid("leader profile needs at least one step".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::Invalid(format!("non-positive dt {dt}")));
    }
    let accel = match *profile {
        LeaderProfile::Constant { bias } => vec![bias; steps],
        LeaderProfile::Sinusoid {
            amplitude,
            frequency,
        } => {
            if amplitude < 0.0 || frequency < 0.0 {
                return Err(Error::Invalid(
                    "sinusoid amplitude and frequency must be non-negative".into(),
                ));
            }
            (0..steps)
                .map(|k| amplitude * (2.0 * PI * frequency * k as f64 * dt).sin())
                .collect()
        }
        LeaderProfile::StopAndGo { amplitude, period } => {
            if amplitude < 0.0 || !(period > 0.0) {
                return Err(Error::Invalid(
                    "stop-and-go amplitude must be non-negative and period positive".into(),
                ));
            }
            (0..steps)
                .map(|k| {
                    let phase = (k as f64 * dt).rem_euclid(period);
                    if phase < 0.5 * period {
                        -amplitude
                    } else {
                        amplitude
                    }
                })
                .collect()
        }
    };
    Ok(accel)
}
