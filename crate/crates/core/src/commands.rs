//! Subcommand bodies. Each returns the text to print on success; files go
//! under the configured output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::baselines::{dmdc_fit_dataset, dmdc_rollout, DmdcModel, IdmParams};
use crate::config::RunConfig;
use crate::data::{fit_normalization, generate_corpus, load_trajectories, split_dataset, write_trajectories, Dataset, StateSequence};
use crate::error::{Error, Result};
use crate::evaluation::{
    append_generated_csv, compare_models, phase_plane_export, write_generated_trajectories, ModelKind,
    TRAJECTORY_HEADER,
};
use crate::koopman::{train, KoopmanModel};
use crate::model_io::{load_any, load_dmdc, load_model, save_dmdc, save_model, AnyModel};
use crate::stability::{
    d2c_zoh, local_stability, log_grid, string_stability_sweep, EigenReport, FrequencyResponse,
};

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn ensure_out_dir(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))
}

fn load_data(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg.trajectories_path();
    if !path.is_file() {
        return Err(Error::DataNotFound(path));
    }
    load_trajectories(&path, cfg.dt)
}

/// The train and test sides of the configured split.
pub fn load_split(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    let ds = load_data(cfg)?;
    split_dataset(&ds, cfg.split.ratio, cfg.split.seed)
}

fn require_model_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::DataNotFound(path.to_path_buf()))
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    dt: f64,
    corpus: &'a crate::data::CorpusConfig,
    trajectories: Vec<ManifestEntry<'a>>,
    failures: Vec<ManifestFailure>,
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    id: &'a str,
    followers: &'a [IdmParams],
}

#[derive(Serialize)]
struct ManifestFailure {
    id: String,
    error: String,
}

/// Generates the synthetic corpus: one long-format trajectory CSV and a
/// manifest with the parameters and per-follower IDM draws.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    ensure_out_dir(cfg)?;
    let corpus_cfg = cfg.corpus_config();
    let out = generate_corpus(&corpus_cfg)?;
    if out.trajectories.is_empty() {
        return Err(Error::NoTrajectories);
    }
    let path = cfg.trajectories_path();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_trajectories(&path, &out.trajectories)?;
    let manifest = Manifest {
        dt: cfg.dt,
        corpus: &corpus_cfg,
        trajectories: out
            .trajectories
            .iter()
            .zip(&out.followers)
            .map(|(t, f)| ManifestEntry { id: &t.id, followers: f })
            .collect(),
        failures: out
            .failures
            .iter()
            .map(|(id, e)| ManifestFailure {
                id: id.clone(),
                error: e.to_string(),
            })
            .collect(),
    };
    let manifest_path = cfg.out_dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Invalid(e.to_string()))?;
    write_file(&manifest_path, &(json + "\n"))?;

    let mut msg = format!(
        "wrote {} trajectories ({} steps, {} followers) to {}\n",
        out.trajectories.len(),
        corpus_cfg.steps,
        corpus_cfg.followers,
        path.display()
    );
    for (id, e) in &out.failures {
        writeln!(msg, "dropped {id}: {e}").unwrap();
    }
    Ok(msg)
}

/// Trains the Koopman model and the DMDc baseline on the train split.
pub fn cmd_train(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    let (train_set, test_set) = load_split(cfg)?;
    ensure_out_dir(cfg)?;
    let norm = fit_normalization(&train_set)?;
    let normalized = train_set.normalized(&norm)?;
    let outcome = train(&normalized, &cfg.train)?;
    let dmdc = dmdc_fit_dataset(&train_set, cfg.dmdc.rank)?;

    save_model(&outcome.model, &cfg.model_path())?;
    save_dmdc(&dmdc, &cfg.dmdc_path())?;
    let mut curve = String::from("epoch,loss\n");
    for (e, l) in outcome.loss_curve.iter().enumerate() {
        writeln!(curve, "{e},{l}").unwrap();
    }
    write_file(&cfg.out_dir.join("loss_curve.csv"), &curve)?;

    let idm = vec![cfg.idm_baseline(); test_set.n_followers().unwrap_or(0)];
    let cmp = compare_models(&test_set, &outcome.model, &dmdc, &idm)?;
    let held_out = |k| cmp.aggregate_for(k).map_or(f64::NAN, |a| a.rmse);
    Ok(format!(
        "final train loss: {:.6e}\nheld-out rollout RMSE: koopman {:.4} m, dmdc {:.4} m ({} test sequences)\nwrote {} and {}\n",
        outcome.final_loss,
        held_out(ModelKind::Koopman),
        held_out(ModelKind::Dmdc),
        test_set.len(),
        cfg.model_path().display(),
        cfg.dmdc_path().display(),
    ))
}

/// Compares the Koopman, DMDc and IDM models on the test split and writes
/// the comparison table, generated trajectories and a phase-plane table.
pub fn cmd_eval(cfg: &RunConfig, model: Option<&Path>, dmdc: Option<&Path>) -> Result<String> {
    cfg.validate()?;
    let model_path = model.map_or_else(|| cfg.model_path(), Path::to_path_buf);
    let dmdc_path = dmdc.map_or_else(|| cfg.dmdc_path(), Path::to_path_buf);
    require_model_file(&model_path)?;
    require_model_file(&dmdc_path)?;
    let koopman = load_model(&model_path)?;
    let dmdc = load_dmdc(&dmdc_path)?;
    let (_, test) = load_split(cfg)?;
    ensure_out_dir(cfg)?;
    let n = test.n_followers().ok_or(Error::NoTrajectories)?;
    let idm = vec![cfg.idm_baseline(); n];

    let cmp = compare_models(&test, &koopman, &dmdc, &idm)?;
    write_file(&cfg.out_dir.join("comparison.csv"), &cmp.to_csv())?;
    write_generated_trajectories(&cfg.out_dir.join("generated_trajectories.csv"), &test, &koopman, &dmdc, &idm)?;

    let seq = test.sequences.get(cfg.eval.phase_sequence).ok_or_else(|| {
        Error::Config(format!(
            "eval.phase_sequence {} out of range for {} test sequences",
            cfg.eval.phase_sequence,
            test.len()
        ))
    })?;
    let table = phase_plane_export(&koopman, seq, cfg.eval.phase_horizon)?;
    write_file(&cfg.out_dir.join("phase_plane.csv"), &table.to_csv())?;

    let mut msg = cmp.summary_table();
    for r in cmp.rows.iter().filter(|r| r.failure.is_some()) {
        writeln!(msg, "{} failed on {}: {}", r.model.name(), r.sequence, r.failure.as_deref().unwrap_or("")).unwrap();
    }
    Ok(msg)
}

fn find_sequence<'a>(ds: &'a Dataset, id: &str) -> Result<&'a StateSequence> {
    ds.sequences
        .iter()
        .find(|s| s.id == id)
        .ok_or_else(|| Error::Invalid(format!("no sequence named {id}")))
}

/// Regenerates trajectories with a saved model (Koopman or DMDc) from each
/// sequence's initial state and leader accelerations. Defaults to every
/// test sequence.
pub fn cmd_rollout(cfg: &RunConfig, model: Option<&Path>, sequence: Option<&str>) -> Result<String> {
    cfg.validate()?;
    let model_path = model.map_or_else(|| cfg.model_path(), Path::to_path_buf);
    require_model_file(&model_path)?;
    let any = load_any(&model_path)?;
    let (kind, n_x) = match &any {
        AnyModel::Koopman(m) => (ModelKind::Koopman, m.state_dim()),
        AnyModel::Dmdc(m) => (ModelKind::Dmdc, m.state_dim()),
    };
    let seqs: Vec<StateSequence> = match sequence {
        Some(id) => vec![find_sequence(&load_data(cfg)?, id)?.clone()],
        None => load_split(cfg)?.1.sequences,
    };
    if let Some(s) = seqs.first() {
        if s.states.ncols() != n_x {
            return Err(Error::Invalid(format!(
                "model has state dimension {n_x} but the data has {} ({} followers)",
                s.states.ncols(),
                s.n_followers
            )));
        }
    }
    ensure_out_dir(cfg)?;
    let mut out = String::from(TRAJECTORY_HEADER);
    for seq in &seqs {
        let steps = seq.steps();
        let states = match &any {
            AnyModel::Koopman(m) => m.predict_physical(seq.state(0).as_slice(), &seq.controls[..steps - 1])?,
            AnyModel::Dmdc(m) => dmdc_states(m, seq)?,
        };
        append_generated_csv(&mut out, &format!("{}/{}", seq.id, kind.name()), seq, &states, cfg.dt)?;
    }
    let path = cfg.out_dir.join("rollout.csv");
    write_file(&path, &out)?;
    Ok(format!("wrote {} {} rollouts to {}\n", seqs.len(), kind.name(), path.display()))
}

fn dmdc_states(m: &DmdcModel, seq: &StateSequence) -> Result<DMatrix<f64>> {
    let x0 = seq.state(0);
    let xs = dmdc_rollout(m, &x0, &seq.controls[..seq.steps() - 1])?;
    let mut out = DMatrix::zeros(seq.steps(), x0.len());
    out.set_row(0, &x0.transpose());
    for (k, x) in xs.iter().enumerate() {
        out.set_row(k + 1, &x.transpose());
    }
    Ok(out)
}

#[derive(Serialize)]
struct StabilitySummary<'a> {
    model: &'a str,
    lifted_dim: usize,
    local: &'a str,
    max_magnitude: f64,
    distinct_eigenvalues: usize,
    repeated_unit_eigenvalue: bool,
    string: Option<StringSummary>,
    string_error: Option<String>,
}

#[derive(Serialize)]
struct StringSummary {
    stable: bool,
    follower: usize,
    peak_gain: f64,
    peak_frequency: f64,
    unit: &'static str,
    skipped_points: usize,
}

fn eigen_csv(r: &EigenReport) -> String {
    let mut out = String::from("index,re,im,magnitude\n");
    for (i, (v, m)) in r.eigenvalues.iter().zip(&r.magnitudes).enumerate() {
        writeln!(out, "{i},{},{},{m}", v.re, v.im).unwrap();
    }
    out
}

fn frequency_csv(r: &FrequencyResponse) -> String {
    let mut out = format!("{},gain\n", r.unit.label());
    for (f, g) in r.frequencies.iter().zip(&r.gains) {
        writeln!(out, "{f},{g}").unwrap();
    }
    out
}

/// Local stability from the operator's spectrum and string stability from
/// the continuous-time head-to-tail frequency response.
pub fn cmd_stability(cfg: &RunConfig, model: Option<&Path>) -> Result<String> {
    cfg.validate()?;
    let model_path = model.map_or_else(|| cfg.model_path(), Path::to_path_buf);
    require_model_file(&model_path)?;
    let (name, a, b, n_x, dt) = match load_any(&model_path)? {
        AnyModel::Koopman(m) => {
            let op = m.physical_operator();
            ("koopman", op.a, op.b, m.state_dim(), m.dt)
        }
        AnyModel::Dmdc(m) => {
            let n_x = m.state_dim();
            ("dmdc", m.a, m.b, n_x, m.dt)
        }
    };
    if n_x % 3 != 0 {
        return Err(Error::ModelFormat(format!("state dimension {n_x} is not a multiple of 3")));
    }
    let n = n_x / 3;
    let follower = match cfg.stability.follower {
        0 => n,
        f if f <= n => f,
        f => {
            return Err(Error::Config(format!(
                "stability.follower {f} exceeds the model's {n} followers"
            )))
        }
    };
    ensure_out_dir(cfg)?;
    let report = local_stability(&a, cfg.stability.eigen_tol)?;
    write_file(&cfg.out_dir.join("eigenvalues.csv"), &eigen_csv(&report))?;

    let s = &cfg.stability;
    let grid = log_grid(s.grid_min, s.grid_max, s.grid_points);
    let output = n + follower - 1;
    let sweep = d2c_zoh(&a, &b, dt).and_then(|sys| string_stability_sweep(&sys, output, &grid, s.string_tol, s.unit));
    let freq_path = cfg.out_dir.join("frequency_response.csv");
    let (string, string_error) = match &sweep {
        Ok(r) => {
            write_file(&freq_path, &frequency_csv(r))?;
            (
                Some(StringSummary {
                    stable: r.string_stable,
                    follower,
                    peak_gain: r.peak_gain,
                    peak_frequency: r.peak_frequency,
                    unit: r.unit.label(),
                    skipped_points: r.skipped.len(),
                }),
                None,
            )
        }
        Err(e) => (None, Some(e.to_string())),
    };
    let summary = StabilitySummary {
        model: name,
        lifted_dim: a.nrows(),
        local: report.verdict.describe(),
        max_magnitude: report.max_magnitude,
        distinct_eigenvalues: report.distinct_count,
        repeated_unit_eigenvalue: report.repeated_unit_eigenvalue,
        string,
        string_error,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Invalid(e.to_string()))?;
    write_file(&cfg.out_dir.join("stability.json"), &(json.clone() + "\n"))?;

    match sweep {
        Ok(_) => Ok(format!(
            "local stability: {} (max |lambda| = {:.6})\nstring stability: {}\n{json}\n",
            report.verdict.describe(),
            report.max_magnitude,
            summary
                .string
                .as_ref()
                .map(|s| format!(
                    "{} (peak gain {:.4} at {:.4} {})",
                    if s.stable { "string stable" } else { "string unstable" },
                    s.peak_gain,
                    s.peak_frequency,
                    if s.unit == "freq_hz" { "Hz" } else { "rad/s" }
                ))
                .unwrap_or_default(),
        )),
        Err(Error::NoPrincipalLog(m)) => Err(Error::NoPrincipalLog(format!(
            "{m}. The local verdict ({}) was written to eigenvalues.csv; the continuous-time \
             conversion needs a diagonalizable operator with no eigenvalue at zero or on the \
             negative real axis. Retrain with another seed or embedding width, or use a DMDc model.",
            report.verdict.describe()
        ))),
        Err(e) => Err(e),
    }
}

/// Phase-plane table for one sequence: recorded states, one-step
/// reconstructions and `horizon`-step predictions.
pub fn cmd_phase_plane(
    cfg: &RunConfig,
    model: Option<&Path>,
    sequence: Option<&str>,
    horizon: Option<usize>,
) -> Result<String> {
    cfg.validate()?;
    let model_path = model.map_or_else(|| cfg.model_path(), Path::to_path_buf);
    require_model_file(&model_path)?;
    let koopman: KoopmanModel = load_model(&model_path)?;
    let seq = match sequence {
        Some(id) => find_sequence(&load_data(cfg)?, id)?.clone(),
        None => {
            let (_, test) = load_split(cfg)?;
            test.sequences.get(cfg.eval.phase_sequence).cloned().ok_or_else(|| {
                Error::Config(format!("eval.phase_sequence {} out of range", cfg.eval.phase_sequence))
            })?
        }
    };
    let horizon = horizon.unwrap_or(cfg.eval.phase_horizon);
    ensure_out_dir(cfg)?;
    let table = phase_plane_export(&koopman, &seq, horizon)?;
    let path: PathBuf = cfg.out_dir.join("phase_plane.csv");
    write_file(&path, &table.to_csv())?;
    let (recon, pred) = table.mean_deviation();
    Ok(format!(
        "sequence {}: mean one-step deviation {recon:.4}, mean {horizon}-step deviation {pred:.4}\nwrote {}\n",
        seq.id,
        path.display()
    ))
}

