//! Long-format trajectory CSV:
//! `traj_id,step,vehicle,position_m,velocity_mps,accel_mps2`.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use super::{derive_states, Dataset, PlatoonTrajectory, VehicleTrace};
use crate::error::{Error, Result};

pub const HEADER: [&str; 6] = [
    "traj_id",
    "step",
    "vehicle",
    "position_m",
    "velocity_mps",
    "accel_mps2",
];

#[derive(Default)]
struct Pending {
    // (vehicle, step) -> (csv line, position, velocity, accel)
    cells: BTreeMap<(usize, usize), (usize, [f64; 3])>,
}

fn traj_err(traj: &str, row: usize, message: impl Into<String>) -> Error {
    Error::Trajectory {
        traj: traj.to_string(),
        row,
        message: message.into(),
    }
}

/// Parses every trajectory in the file, ordered by `traj_id`.
pub fn read_trajectories(path: &Path, dt: f64) -> Result<Vec<PlatoonTrajectory>> {
    if !(dt > 0.0) {
        return Err(Error::Invalid(format!("non-positive dt {dt}")));
    }
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::NoTrajectories);
    }
    let mut col = [0usize; 6];
    for (c, name) in HEADER.iter().enumerate() {
        col[c] = headers.iter().position(|h| h == *name).ok_or_else(|| {
            Error::Invalid(format!("{}: missing column `{name}`", path.display()))
        })?;
    }

    let mut pending: BTreeMap<String, Pending> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        // Line 1 is the header.
        let line = i + 2;
        let field = |c: usize| record.get(col[c]).unwrap_or("");
        let traj = field(0).to_string();
        let int = |c: usize| {
            field(c).parse::<usize>().map_err(|_| {
                traj_err(&traj, line, format!("bad integer `{}` in {}", field(c), HEADER[c]))
            })
        };
        let real = |c: usize| {
            field(c)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    traj_err(&traj, line, format!("bad number `{}` in {}", field(c), HEADER[c]))
                })
        };
        let (step, vehicle) = (int(1)?, int(2)?);
        let values = [real(3)?, real(4)?, real(5)?];
        let entry = pending.entry(traj.clone()).or_default();
        if entry.cells.insert((vehicle, step), (line, values)).is_some() {
            return Err(traj_err(
                &traj,
                line,
                format!("duplicate record for vehicle {vehicle} step {step}"),
            ));
        }
    }
    if pending.is_empty() {
        return Err(Error::NoTrajectories);
    }

    pending
        .into_iter()
        .map(|(id, p)| assemble(id, p, dt))
        .collect()
}

fn assemble(id: String, p: Pending, dt: f64) -> Result<PlatoonTrajectory> {
    let n_veh = p.cells.keys().map(|(v, _)| v + 1).max().unwrap_or(0);
    let mut vehicles: Vec<VehicleTrace> = (0..n_veh)
        .map(|_| VehicleTrace {
            position: vec![],
            velocity: vec![],
            acceleration: vec![],
        })
        .collect();
    let mut lines: Vec<Vec<usize>> = vec![vec![]; n_veh];
    for ((v, step), (line, [y, s, a])) in p.cells {
        if step != vehicles[v].len() {
            return Err(traj_err(
                &id,
                line,
                format!("vehicle {v}: steps are not contiguous from 0 (found step {step})"),
            ));
        }
        vehicles[v].position.push(y);
        vehicles[v].velocity.push(s);
        vehicles[v].acceleration.push(a);
        lines[v].push(line);
    }
    let steps = vehicles[0].len();
    for (v, trace) in vehicles.iter().enumerate() {
        if trace.len() != steps {
            let line = lines[v].last().copied().unwrap_or(0);
            return Err(traj_err(
                &id,
                line,
                format!(
                    "non-uniform step counts: vehicle {v} has {} steps, leader has {steps}",
                    trace.len()
                ),
            ));
        }
    }
    if n_veh < 2 || steps < 2 {
        return Err(traj_err(
            &id,
            lines[0].first().copied().unwrap_or(0),
            "need a leader, a follower, and at least 2 steps",
        ));
    }
    for i in 1..n_veh {
        for k in 0..steps {
            let gap = vehicles[i - 1].position[k] - vehicles[i].position[k];
            if !(gap > 0.0) {
                return Err(traj_err(
                    &id,
                    lines[i][k],
                    format!("non-positive spacing {gap} for follower {i} at step {k}"),
                ));
            }
        }
    }
    PlatoonTrajectory::new(id, dt, vehicles)
}

/// Reads trajectories and derives their state sequences.
pub fn load_trajectories(path: &Path, dt: f64) -> Result<Dataset> {
    let trajs = read_trajectories(path, dt)?;
    let seqs = trajs.iter().map(derive_states).collect::<Result<Vec<_>>>()?;
    Dataset::new(seqs, dt)
}

pub fn write_trajectories(path: &Path, trajs: &[PlatoonTrajectory]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&HEADER.join(","));
    out.push('\n');
    for t in trajs {
        for (v, trace) in t.vehicles.iter().enumerate() {
            for k in 0..trace.len() {
                out.push_str(&format!(
                    "{},{k},{v},{},{},{}\n",
                    t.id, trace.position[k], trace.velocity[k], trace.acceleration[k]
                ));
            }
        }
    }
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}
