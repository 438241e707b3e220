//! Run configuration: one TOML file, every field defaulted.
//!
//! ```toml
//! out_dir = "out"
//! dt = 0.1
//!
//! [data]
//! trajectories = "out/trajectories.csv"   # default: <out_dir>/trajectories.csv
//!
//! [corpus]      # synthetic data, see CorpusConfig
//! [train]       # see TrainConfig
//! [split]       # ratio = 0.8, seed = 7
//! [dmdc]        # rank = <unset> (full numerical rank)
//! [eval]        # phase_horizon = 10, phase_sequence = 0
//! [stability]   # grid and tolerances
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::IdmParams;
use crate::data::CorpusConfig;
use crate::error::{Error, Result};
use crate::koopman::TrainConfig;
use crate::stability::{
    FrequencyUnit, DEFAULT_GRID_MAX_HZ, DEFAULT_GRID_MIN_HZ, DEFAULT_GRID_POINTS, DEFAULT_STRING_TOL,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    /// Trajectory CSV; defaults to `<out_dir>/trajectories.csv`.
    pub trajectories: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    /// Fraction of sequences used for training.
    pub ratio: f64,
    pub seed: u64,
}

impl Default for SplitSection {
    fn default() -> Self {
        Self { ratio: 0.8, seed: 7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct DmdcSection {
    /// Truncation rank; unset keeps every numerically nonzero direction.
    pub rank: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Steps ahead for the phase-plane prediction series.
    pub phase_horizon: usize,
    /// Index into the test split of the sequence exported to the phase plane.
    pub phase_sequence: usize,
    /// IDM parameters of the car-following baseline, used for every follower.
    /// Defaults to the corpus nominals.
    pub idm: Option<IdmParams>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            phase_horizon: 10,
            phase_sequence: 0,
            idm: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilitySection {
    pub grid_points: usize,
    pub grid_min: f64,
    pub grid_max: f64,
    pub unit: FrequencyUnit,
    /// Band around `|lambda| = 1` treated as marginal.
    pub eigen_tol: f64,
    /// Peak gains up to `1 + string_tol` count as string stable.
    pub string_tol: f64,
    /// 1-based follower whose acceleration is the output; 0 means the last.
    pub follower: usize,
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self {
            grid_points: DEFAULT_GRID_POINTS,
            grid_min: DEFAULT_GRID_MIN_HZ,
            grid_max: DEFAULT_GRID_MAX_HZ,
            unit: FrequencyUnit::Hz,
            eigen_tol: 1e-9,
            string_tol: DEFAULT_STRING_TOL,
            follower: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    /// Sample time, s. Also used for the synthetic corpus.
    pub dt: f64,
    pub data: DataSection,
    pub corpus: CorpusConfig,
    pub train: TrainConfig,
    pub split: SplitSection,
    pub dmdc: DmdcSection,
    pub eval: EvalSection,
    pub stability: StabilitySection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            dt: 0.1,
            data: DataSection::default(),
            corpus: CorpusConfig::default(),
            train: TrainConfig::default(),
            split: SplitSection::default(),
            dmdc: DmdcSection::default(),
            eval: EvalSection::default(),
            stability: StabilitySection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Sets every seed (corpus, split, training) to `seed`.
    pub fn override_seed(&mut self, seed: u64) {
        self.corpus.seed = seed;
        self.split.seed = seed;
        self.train.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.corpus.dt != CorpusConfig::default().dt && self.corpus.dt != self.dt {
            return bad("set the sample time with top-level `dt`, not corpus.dt".into());
        }
        if self.corpus.steps == 0 {
            return bad("corpus.steps must be at least 2, got 0".into());
        }
        self.corpus_config().validate()?;
        self.train.validate()?;
        if !(self.split.ratio > 0.0 && self.split.ratio < 1.0) {
            return bad(format!("split.ratio must lie in (0, 1), got {}", self.split.ratio));
        }
        if self.dmdc.rank == Some(0) {
            return bad("dmdc.rank must be at least 1".into());
        }
        if self.eval.phase_horizon == 0 {
            return bad("eval.phase_horizon must be at least 1".into());
        }
        if let Some(p) = &self.eval.idm {
            p.validate().map_err(|e| Error::Config(format!("eval.idm: {e}")))?;
        }
        let s = &self.stability;
        if s.grid_points == 0 || !(s.grid_min > 0.0) || !(s.grid_max > s.grid_min) {
            return bad("stability grid needs points > 0 and 0 < grid_min < grid_max".into());
        }
        if !(s.eigen_tol >= 0.0) || !(s.string_tol >= 0.0) {
            return bad("stability tolerances must be non-negative".into());
        }
        Ok(())
    }

    /// Corpus parameters with the run's sample time.
    pub fn corpus_config(&self) -> CorpusConfig {
        CorpusConfig {
            dt: self.dt,
            ..self.corpus.clone()
        }
    }

    pub fn trajectories_path(&self) -> PathBuf {
        self.data
            .trajectories
            .clone()
            .unwrap_or_else(|| self.out_dir.join("trajectories.csv"))
    }

    pub fn model_path(&self) -> PathBuf {
        self.out_dir.join("model.json")
    }

    pub fn dmdc_path(&self) -> PathBuf {
        self.out_dir.join("dmdc.json")
    }

    pub fn idm_baseline(&self) -> IdmParams {
        self.eval.idm.unwrap_or(self.corpus.idm)
    }
}
