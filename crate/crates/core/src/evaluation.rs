//! Position reconstruction, error metrics, phase-plane tables, and the
//! Koopman / DMDc / IDM comparison.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::baselines::{dmdc_rollout, idm_rollout, DmdcModel, IdmParams, PlatoonInit};
use crate::data::{Dataset, StateLayout, StateSequence};
use crate::error::{Error, Result};
use crate::koopman::KoopmanModel;

/// Chains follower positions back from the leader: `y_i = y_{i-1} - s_i`.
/// Negative spacings are allowed (learned models can emit them) but logged.
pub fn reconstruct_positions(spacings: &DMatrix<f64>, leader_position: &[f64]) -> Result<DMatrix<f64>> {
    let (steps, n) = spacings.shape();
    if leader_position.len() != steps {
        return Err(Error::Dimension {
            context: "reconstruct_positions leader",
            expected: steps,
            actual: leader_position.len(),
        });
    }
    let mut pos = DMatrix::zeros(steps, n);
    let mut negative = 0usize;
    for k in 0..steps {
        let mut front = leader_position[k];
        for i in 0..n {
            let s = spacings[(k, i)];
            if s < 0.0 {
                negative += 1;
            }
            front -= s;
            pos[(k, i)] = front;
        }
    }
    if negative > 0 {
        log::warn!("{negative} negative spacings while reconstructing positions");
    }
    Ok(pos)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub rmse: f64,
    pub mae: f64,
    pub per_vehicle_rmse: Vec<f64>,
    pub per_vehicle_mae: Vec<f64>,
    pub horizon: usize,
    /// Sum of squared and absolute residuals, kept for pooling.
    pub sum_sq: f64,
    pub sum_abs: f64,
    pub count: usize,
}

/// RMSE and MAE over every (step, vehicle) entry, plus per-vehicle values.
pub fn position_metrics(pred: &DMatrix<f64>, truth: &DMatrix<f64>) -> Result<MetricReport> {
    if pred.shape() != truth.shape() {
        return Err(Error::Dimension {
            context: "position_metrics",
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    let (steps, n) = truth.shape();
    if steps == 0 || n == 0 {
        return Err(Error::Invalid("no positions to compare".into()));
    }
    let mut per_sq = vec![0.0; n];
    let mut per_abs = vec![0.0; n];
    for i in 0..n {
        for k in 0..steps {
            let r = pred[(k, i)] - truth[(k, i)];
            per_sq[i] += r * r;
            per_abs[i] += r.abs();
        }
    }
    let count = steps * n;
    let sum_sq: f64 = per_sq.iter().sum();
    let sum_abs: f64 = per_abs.iter().sum();
    Ok(MetricReport {
        rmse: (sum_sq / count as f64).sqrt(),
        mae: sum_abs / count as f64,
        per_vehicle_rmse: per_sq.iter().map(|s| (s / steps as f64).sqrt()).collect(),
        per_vehicle_mae: per_abs.iter().map(|s| s / steps as f64).collect(),
        horizon: steps,
        sum_sq,
        sum_abs,
        count,
    })
}

/// Model families compared on held-out data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Koopman,
    Dmdc,
    Idm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Koopman, ModelKind::Dmdc, ModelKind::Idm];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Koopman => "koopman",
            ModelKind::Dmdc => "dmdc",
            ModelKind::Idm => "idm",
        }
    }
}

/// Predicted states (`steps x 3n`, row 0 is the true initial state) from the
/// initial state and the leader's accelerations alone.
pub fn generate_states(
    kind: ModelKind,
    seq: &StateSequence,
    koopman: &KoopmanModel,
    dmdc: &DmdcModel,
    idm: &[IdmParams],
    dt: f64,
) -> Result<DMatrix<f64>> {
    let steps = seq.steps();
    let x0 = seq.state(0);
    let controls = &seq.controls[..steps - 1];
    match kind {
        ModelKind::Koopman => koopman.predict_physical(x0.as_slice(), controls),
        ModelKind::Dmdc => {
            let xs = dmdc_rollout(dmdc, &x0, controls)?;
            let mut out = DMatrix::zeros(steps, x0.len());
            out.set_row(0, &x0.transpose());
            for (k, x) in xs.iter().enumerate() {
                out.set_row(k + 1, &x.transpose());
            }
            Ok(out)
        }
        ModelKind::Idm => {
            let init = PlatoonInit::from_sequence(seq);
            Ok(idm_rollout(&seq.id, &init, &seq.controls, idm, dt)?.states)
        }
    }
}

/// Follower positions implied by generated states and the true leader path.
pub fn positions_from_states(states: &DMatrix<f64>, seq: &StateSequence) -> Result<DMatrix<f64>> {
    let spacings = states.columns(0, seq.n_followers).into_owned();
    reconstruct_positions(&spacings, &seq.leader_position)
}

fn check_dims(test: &Dataset, koopman: &KoopmanModel, dmdc: &DmdcModel, idm: &[IdmParams]) -> Result<usize> {
    let n = test.n_followers().ok_or(Error::NoTrajectories)?;
    let n_x = 3 * n;
    let mismatch = |what: &str, got: usize| {
        Error::Invalid(format!(
            "{what} has state dimension {got} but the data has {n_x} ({n} followers)"
        ))
    };
    if koopman.state_dim() != n_x {
        return Err(mismatch("Koopman model", koopman.state_dim()));
    }
    if dmdc.state_dim() != n_x {
        return Err(mismatch("DMDc model", dmdc.state_dim()));
    }
    if idm.len() != n {
        return Err(Error::Invalid(format!(
            "IDM baseline has {} followers but the data has {n}",
            idm.len()
        )));
    }
    if (koopman.dt - test.dt).abs() > 1e-12 {
        return Err(Error::Invalid(format!(
            "Koopman model dt {} differs from data dt {}",
            koopman.dt, test.dt
        )));
    }
    Ok(n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub model: ModelKind,
    pub sequence: String,
    /// `None` when the model diverged or crashed on this sequence.
    pub report: Option<MetricReport>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AggregateRow {
    pub model: ModelKind,
    /// Pooled over every vehicle, step, and sequence before the root.
    pub rmse: f64,
    pub mae: f64,
    pub sequences: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    pub aggregate: Vec<AggregateRow>,
}

impl Comparison {
    pub fn aggregate_for(&self, kind: ModelKind) -> Option<&AggregateRow> {
        self.aggregate.iter().find(|r| r.model == kind)
    }

    /// `model,sequence,rmse_m,mae_m`; aggregate rows use sequence `ALL`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,sequence,rmse_m,mae_m\n");
        for r in &self.rows {
            match &r.report {
                Some(m) => writeln!(out, "{},{},{},{}", r.model.name(), r.sequence, m.rmse, m.mae),
                None => writeln!(out, "{},{},NaN,NaN", r.model.name(), r.sequence),
            }
            .unwrap();
        }
        for a in &self.aggregate {
            writeln!(out, "{},ALL,{},{}", a.model.name(), a.rmse, a.mae).unwrap();
        }
        out
    }

    pub fn summary_table(&self) -> String {
        let mut out = format!("{:<10} {:>12} {:>12} {:>8}\n", "model", "RMSE (m)", "MAE (m)", "failed");
        for a in &self.aggregate {
            writeln!(
                out,
                "{:<10} {:>12.4} {:>12.4} {:>8}",
                a.model.name(),
                a.rmse,
                a.mae,
                a.failed
            )
            .unwrap();
        }
        out
    }
}

/// Full-horizon generation on every test sequence for every model. A model
/// that diverges on a sequence gets a flagged row instead of an error.
pub fn compare_models(
    test: &Dataset,
    koopman: &KoopmanModel,
    dmdc: &DmdcModel,
    idm: &[IdmParams],
) -> Result<Comparison> {
    if test.is_empty() {
        return Err(Error::NoTrajectories);
    }
    if test.norm.is_some() {
        return Err(Error::Invalid("comparison expects raw (unnormalized) data".into()));
    }
    check_dims(test, koopman, dmdc, idm)?;
    let mut rows = Vec::new();
    let mut aggregate = Vec::new();
    for kind in ModelKind::ALL {
        let (mut sum_sq, mut sum_abs, mut count, mut failed) = (0.0, 0.0, 0usize, 0usize);
        for seq in &test.sequences {
            let truth = positions_from_states(&seq.states, seq)?;
            let outcome = generate_states(kind, seq, koopman, dmdc, idm, test.dt)
                .and_then(|states| positions_from_states(&states, seq))
                .and_then(|pred| {
                    let steps = truth.nrows();
                    let p = pred.rows(1, steps - 1).into_owned();
                    let t = truth.rows(1, steps - 1).into_owned();
                    position_metrics(&p, &t)
                });
            let row = match outcome {
                Ok(report) if report.rmse.is_finite() => {
                    sum_sq += report.sum_sq;
                    sum_abs += report.sum_abs;
                    count += report.count;
                    ComparisonRow {
                        model: kind,
                        sequence: seq.id.clone(),
                        report: Some(report),
                        failure: None,
                    }
                }
                Ok(_) => {
                    failed += 1;
                    ComparisonRow {
                        model: kind,
                        sequence: seq.id.clone(),
                        report: None,
                        failure: Some("non-finite error".into()),
                    }
                }
                Err(e) => {
                    failed += 1;
                    ComparisonRow {
                        model: kind,
                        sequence: seq.id.clone(),
                        report: None,
                        failure: Some(e.to_string()),
                    }
                }
            };
            rows.push(row);
        }
        let (rmse, mae) = if count > 0 {
            ((sum_sq / count as f64).sqrt(), sum_abs / count as f64)
        } else {
            (f64::NAN, f64::NAN)
        };
        aggregate.push(AggregateRow {
            model: kind,
            rmse,
            mae,
            sequences: test.len() - failed,
            failed,
        });
    }
    Ok(Comparison { rows, aggregate })
}

pub const TRAJECTORY_HEADER: &str = "traj_id,step,vehicle,position_m,velocity_mps,accel_mps2\n";

/// Appends one generated trajectory in the trajectory CSV layout. The
/// leader is the recorded one; follower accelerations are forward
/// differences of the generated speeds (0 on the last step).
pub fn append_generated_csv(
    out: &mut String,
    id: &str,
    seq: &StateSequence,
    states: &DMatrix<f64>,
    dt: f64,
) -> Result<()> {
    let layout = seq.layout();
    let pos = positions_from_states(states, seq)?;
    let steps = seq.steps();
    for k in 0..steps {
        writeln!(
            out,
            "{id},{k},0,{},{},{}",
            seq.leader_position[k], seq.leader_velocity[k], seq.controls[k]
        )
        .unwrap();
    }
    for i in 1..=seq.n_followers {
        let v = |k: usize| states[(k, layout.velocity(i))];
        for k in 0..steps {
            let a = if k + 1 < steps { (v(k + 1) - v(k)) / dt } else { 0.0 };
            writeln!(out, "{id},{k},{i},{},{},{a}", pos[(k, i - 1)], v(k)).unwrap();
        }
    }
    Ok(())
}

/// Recorded and generated trajectories of every test sequence, one
/// `traj_id` per pair named `<sequence>/<model>` (`truth` for the record).
/// Models that fail on a sequence are left out with a warning.
pub fn write_generated_trajectories(
    path: &Path,
    test: &Dataset,
    koopman: &KoopmanModel,
    dmdc: &DmdcModel,
    idm: &[IdmParams],
) -> Result<()> {
    let mut out = String::from(TRAJECTORY_HEADER);
    for seq in &test.sequences {
        append_generated_csv(&mut out, &format!("{}/truth", seq.id), seq, &seq.states, test.dt)?;
        for kind in ModelKind::ALL {
            match generate_states(kind, seq, koopman, dmdc, idm, test.dt) {
                Ok(states) => append_generated_csv(
                    &mut out,
                    &format!("{}/{}", seq.id, kind.name()),
                    seq,
                    &states,
                    test.dt,
                )?,
                Err(e) => log::warn!("{} on {}: {e}", kind.name(), seq.id),
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PairKind {
    SpacingSpeed,
    SpacingDv,
    SpeedDv,
}

impl PairKind {
    pub const ALL: [PairKind; 3] = [PairKind::SpacingSpeed, PairKind::SpacingDv, PairKind::SpeedDv];

    pub fn name(self) -> &'static str {
        match self {
            PairKind::SpacingSpeed => "spacing_speed",
            PairKind::SpacingDv => "spacing_dv",
            PairKind::SpeedDv => "speed_dv",
        }
    }

    fn columns(self, layout: StateLayout, i: usize) -> (usize, usize) {
        match self {
            PairKind::SpacingSpeed => (layout.spacing(i), layout.velocity(i)),
            PairKind::SpacingDv => (layout.spacing(i), layout.speed_diff(i)),
            PairKind::SpeedDv => (layout.velocity(i), layout.speed_diff(i)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhasePlaneRow {
    pub vehicle: usize,
    pub step: usize,
    pub pair: PairKind,
    pub truth: (f64, f64),
    pub recon: (f64, f64),
    pub pred: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhasePlaneTable {
    pub horizon: usize,
    pub rows: Vec<PhasePlaneRow>,
}

impl PhasePlaneTable {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("vehicle,step,pair_kind,truth_x,truth_y,recon_x,recon_y,pred_x,pred_y\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.vehicle,
                r.step,
                r.pair.name(),
                r.truth.0,
                r.truth.1,
                r.recon.0,
                r.recon.1,
                r.pred.0,
                r.pred.1
            )
            .unwrap();
        }
        out
    }

    /// Mean Euclidean distance of the one-step and the `horizon`-step
    /// points from the truth, over all rows.
    pub fn mean_deviation(&self) -> (f64, f64) {
        let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
        let n = self.rows.len().max(1) as f64;
        let recon = self.rows.iter().map(|r| dist(r.recon, r.truth)).sum::<f64>() / n;
        let pred = self.rows.iter().map(|r| dist(r.pred, r.truth)).sum::<f64>() / n;
        (recon, pred)
    }
}

/// Phase-plane points for every follower, aligned on the target step `t`:
/// `truth` is the recorded state at `t`, `recon` the one-step prediction
/// from the recorded state at `t - 1`, and `pred` the `horizon`-step
/// prediction from the recorded state at `t - horizon`.
pub fn phase_plane_export(model: &KoopmanModel, seq: &StateSequence, horizon: usize) -> Result<PhasePlaneTable> {
    if horizon == 0 {
        return Err(Error::Invalid("prediction horizon must be at least 1".into()));
    }
    if seq.steps() <= horizon {
        return Err(Error::Invalid(format!(
            "sequence {} has {} steps, need more than {horizon}",
            seq.id,
            seq.steps()
        )));
    }
    if model.state_dim() != seq.states.ncols() {
        return Err(Error::Dimension {
            context: "phase plane model vs data",
            expected: seq.states.ncols(),
            actual: model.state_dim(),
        });
    }
    let layout = seq.layout();
    let ahead = |from: usize, k: usize| -> Result<DVector<f64>> {
        let traj = model.predict_physical(seq.state(from).as_slice(), &seq.controls[from..from + k])?;
        Ok(traj.row(k).transpose())
    };
    let mut rows = Vec::new();
    for t in horizon..seq.steps() {
        let truth = seq.state(t);
        let recon = ahead(t - 1, 1)?;
        let pred = if horizon == 1 { recon.clone() } else { ahead(t - horizon, horizon)? };
        for i in 1..=seq.n_followers {
            for pair in PairKind::ALL {
                let (cx, cy) = pair.columns(layout, i);
                rows.push(PhasePlaneRow {
                    vehicle: i,
                    step: t,
                    pair,
                    truth: (truth[cx], truth[cy]),
                    recon: (recon[cx], recon[cy]),
                    pred: (pred[cx], pred[cy]),
                });
            }
        }
    }
    Ok(PhasePlaneTable { horizon, rows })
}
