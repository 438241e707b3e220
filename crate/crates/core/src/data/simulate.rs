use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{generate_leader_profile, LeaderProfile, PlatoonTrajectory, VehicleTrace};
use crate::baselines::{idm_accel, IdmParams};
use crate::error::{Error, Result};

/// Spacing at or below this is treated as a crash.
pub const COLLISION_GAP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeaderInit {
    pub position: f64,
    pub velocity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowerInit {
    pub params: IdmParams,
    /// Initial gap to the preceding vehicle, m.
    pub spacing: f64,
    pub velocity: f64,
}

/// Additive zero-mean Gaussian noise on follower accelerations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelNoise {
    pub sigma: f64,
    pub seed: u64,
}

/// Integrates a leader driven by `leader_accel` and IDM followers with
/// semi-implicit Euler: `v' = max(0, v + a dt)`, `y' = y + v' dt`.
///
/// The recorded acceleration at step `k` is the one actually applied over
/// `[k, k+1)`, so it reflects the zero-speed clamp.
pub fn simulate_platoon(
    id: &str,
    leader: LeaderInit,
    leader_accel: &[f64],
    followers: &[FollowerInit],
    dt: f64,
    noise: Option<AccelNoise>,
) -> Result<PlatoonTrajectory> {
    if !(dt > 0.0) {
        return Err(Error::Invalid(format!("non-positive dt {dt}")));
    }
    if followers.is_empty() {
        return Err(Error::Invalid("platoon needs at least one follower".into()));
    }
    let steps = leader_accel.len();
    if steps < 2 {
        return Err(Error::Invalid("simulation needs at least 2 steps".into()));
    }
    for (i, f) in followers.iter().enumerate() {
        f.params.validate()?;
        if !(f.spacing > 0.0) {
            return Err(Error::Invalid(format!(
                "follower {} has non-positive initial spacing {}",
                i + 1,
                f.spacing
            )));
        }
    }
    let (mut rng, normal) = match noise {
        Some(n) if n.sigma > 0.0 => (
            Some(ChaCha8Rng::seed_from_u64(n.seed)),
            Some(Normal::new(0.0, n.sigma).map_err(|e| Error::Invalid(e.to_string()))?),
        ),
        _ => (None, None),
    };

    let n_veh = followers.len() + 1;
    let mut pos = Vec::with_capacity(n_veh);
    let mut vel = Vec::with_capacity(n_veh);
    pos.push(leader.position);
    vel.push(leader.velocity);
    for f in followers {
        let front = *pos.last().unwrap();
        pos.push(front - f.spacing);
        vel.push(f.velocity);
    }

    let mut traces: Vec<VehicleTrace> = (0..n_veh)
        .map(|_| VehicleTrace {
            position: Vec::with_capacity(steps),
            velocity: Vec::with_capacity(steps),
            acceleration: Vec::with_capacity(steps),
        })
        .collect();
    let mut accel = vec![0.0; n_veh];

    for k in 0..steps {
        accel[0] = leader_accel[k];
        for i in 1..n_veh {
            let s = pos[i - 1] - pos[i];
            let mut a = idm_accel(s, vel[i], vel[i] - vel[i - 1], &followers[i - 1].params)?;
            if let (Some(rng), Some(normal)) = (rng.as_mut(), normal.as_ref()) {
                a += normal.sample(rng);
            }
            accel[i] = a;
        }
        for i in 0..n_veh {
            // Clamp so speeds stay non-negative; record what was applied.
            if vel[i] + accel[i] * dt < 0.0 {
                accel[i] = -vel[i] / dt;
            }
            traces[i].position.push(pos[i]);
            traces[i].velocity.push(vel[i]);
            traces[i].acceleration.push(accel[i]);
        }
        if k + 1 == steps {
            break;
        }
        for i in 0..n_veh {
            vel[i] = (vel[i] + accel[i] * dt).max(0.0);
            pos[i] += vel[i] * dt;
        }
        for i in 1..n_veh {
            let s = pos[i - 1] - pos[i];
            if s <= COLLISION_GAP {
                return Err(Error::Collision {
                    step: k + 1,
                    follower: i,
                    spacing: s,
                });
            }
        }
    }
    PlatoonTrajectory::new(id, dt, traces)
}

/// How the leader is excited across a synthetic corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Constant,
    Sinusoid,
    StopAndGo,
    /// Alternates sinusoid and stop-and-go by trajectory index.
    Mixed,
}

/// Parameters of a synthetic platoon corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub trajectories: usize,
    pub steps: usize,
    pub dt: f64,
    pub followers: usize,
    pub profile: ProfileKind,
    /// Leader acceleration amplitude, m/s^2.
    pub amplitude: f64,
    /// Leader oscillation frequency, Hz.
    pub frequency: f64,
    /// Relative per-trajectory spread of amplitude and frequency.
    pub profile_jitter: f64,
    pub leader_speed_min: f64,
    pub leader_speed_max: f64,
    pub idm: IdmParams,
    /// Relative half-width of the uniform per-follower parameter spread.
    pub heterogeneity: f64,
    /// Draw fresh follower parameters for every trajectory instead of one
    /// platoon of drivers shared by the whole corpus.
    pub resample_drivers: bool,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            trajectories: 50,
            steps: 350,
            dt: 0.1,
            followers: 5,
            profile: ProfileKind::Mixed,
            amplitude: 0.8,
            frequency: 0.06,
            profile_jitter: 0.3,
            leader_speed_min: 8.0,
            leader_speed_max: 14.0,
            idm: IdmParams::default(),
            heterogeneity: 0.2,
            resample_drivers: false,
            noise_sigma: 0.05,
            seed: 42,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.trajectories == 0 {
            return bad("trajectories must be at least 1");
        }
        if self.steps < 2 {
            return bad("steps must be at least 2");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if self.followers == 0 {
            return bad("followers must be at least 1");
        }
        if self.amplitude < 0.0 || self.frequency < 0.0 || self.noise_sigma < 0.0 {
            return bad("amplitude, frequency and noise_sigma must be non-negative");
        }
        if !(0.0..1.0).contains(&self.profile_jitter) || !(0.0..1.0).contains(&self.heterogeneity) {
            return bad("profile_jitter and heterogeneity must lie in [0, 1)");
        }
        if !(self.leader_speed_min >= 0.0 && self.leader_speed_max >= self.leader_speed_min) {
            return bad("leader speed range is invalid");
        }
        self.idm.validate()
    }
}

/// A generated corpus plus the trajectories that had to be dropped.
#[derive(Debug)]
pub struct CorpusOutput {
    pub trajectories: Vec<PlatoonTrajectory>,
    pub followers: Vec<Vec<IdmParams>>,
    pub failures: Vec<(String, Error)>,
}

fn jitter(rng: &mut impl Rng, spread: f64) -> f64 {
    if spread == 0.0 {
        1.0
    } else {
        rng.random_range(1.0 - spread..=1.0 + spread)
    }
}

/// One parameter set per follower, each field scaled uniformly within
/// `1 +- heterogeneity` of the nominal.
fn draw_drivers(rng: &mut ChaCha8Rng, cfg: &CorpusConfig) -> Vec<IdmParams> {
    (0..cfg.followers)
        .map(|_| {
            let mut f = [0.0; 6];
            f.iter_mut().for_each(|x| *x = jitter(rng, cfg.heterogeneity));
            let mut p = cfg.idm.scaled(f);
            p.delta = p.delta.max(1.0);
            p
        })
        .collect()
}

/// Heterogeneous IDM platoons started at equilibrium behind an oscillating
/// leader. Each trajectory draws from its own seed, so a collision in one
/// does not perturb the others.
pub fn generate_corpus(cfg: &CorpusConfig) -> Result<CorpusOutput> {
    cfg.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let shared = draw_drivers(&mut master, cfg);
    let mut out = CorpusOutput {
        trajectories: Vec::new(),
        followers: Vec::new(),
        failures: Vec::new(),
    };
    for t in 0..cfg.trajectories {
        let id = format!("traj{t:03}");
        let traj_seed = master.next_u64();
        let mut rng = ChaCha8Rng::seed_from_u64(traj_seed);

        let kind = match cfg.profile {
            ProfileKind::Mixed if t % 2 == 0 => ProfileKind::Sinusoid,
            ProfileKind::Mixed => ProfileKind::StopAndGo,
            k => k,
        };
        let amplitude = cfg.amplitude * jitter(&mut rng, cfg.profile_jitter);
        let frequency = cfg.frequency * jitter(&mut rng, cfg.profile_jitter);
        let profile = match kind {
            ProfileKind::Constant => LeaderProfile::Constant { bias: 0.0 },
            ProfileKind::Sinusoid => LeaderProfile::Sinusoid {
                amplitude,
                frequency,
            },
            _ => LeaderProfile::StopAndGo {
                amplitude,
                period: if frequency > 0.0 { 1.0 / frequency } else { f64::INFINITY },
            },
        };
        let leader_accel = generate_leader_profile(&profile, cfg.steps, cfg.dt)?;
        let v_init = if cfg.leader_speed_max > cfg.leader_speed_min {
            rng.random_range(cfg.leader_speed_min..cfg.leader_speed_max)
        } else {
            cfg.leader_speed_min
        };

        let params = if cfg.resample_drivers {
            draw_drivers(&mut rng, cfg)
        } else {
            shared.clone()
        };
        let mut followers = Vec::with_capacity(cfg.followers);
        for &p in &params {
            let spacing = p.equilibrium_spacing(v_init).ok_or_else(|| {
                Error::Config(format!(
                    "initial leader speed {v_init} exceeds a follower's desired speed"
                ))
            })?;
            followers.push(FollowerInit {
                params: p,
                spacing,
                velocity: v_init,
            });
        }
        let noise = AccelNoise {
            sigma: cfg.noise_sigma,
            seed: rng.next_u64(),
        };
        let leader = LeaderInit {
            position: 0.0,
            velocity: v_init,
        };
        match simulate_platoon(&id, leader, &leader_accel, &followers, cfg.dt, Some(noise)) {
            Ok(traj) => {
                out.trajectories.push(traj);
                out.followers.push(params);
            }
            Err(e @ Error::Collision { .. }) => {
                log::warn!("trajectory {id} dropped: {e}");
                out.failures.push((id, e));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}
