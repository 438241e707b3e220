use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{Activation, Encoder};
use super::loss::{batch_loss, flatten_params, loss_and_gradients, unflatten_params, Window};
use super::model::{KoopmanModel, KoopmanOperator};
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Per-step decay of the loss weight, in `(0, 1]`.
    pub lambda: f64,
    /// Rollout length of each training window.
    pub window: usize,
    pub learning_rate: f64,
    /// Learning rate reached at the last epoch under exponential decay.
    /// Equal to `learning_rate` for a constant rate.
    pub final_learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    /// Width `d` of the learned embedding; 0 trains a plain linear model.
    pub embed_dim: usize,
    pub activation: Activation,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.98,
            window: 50,
            learning_rate: 1e-3,
            final_learning_rate: 1e-5,
            epochs: 2000,
            batch_size: 32,
            seed: 0,
            hidden: vec![64, 64],
            embed_dim: 40,
            activation: Activation::Tanh,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return bad(format!("lambda must lie in (0, 1], got {}", self.lambda));
        }
        if self.window == 0 {
            return bad("window must be at least 1".into());
        }
        if !(self.learning_rate > 0.0) || !(self.final_learning_rate > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive".into());
        }
        Ok(())
    }

    fn learning_rate_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 || self.final_learning_rate == self.learning_rate {
            return self.learning_rate;
        }
        let frac = epoch as f64 / (self.epochs - 1) as f64;
        self.learning_rate * (self.final_learning_rate / self.learning_rate).powf(frac)
    }
}

/// Cuts every sequence into windows of `horizon + 1` states with stride
/// `horizon`, so consecutive windows share their boundary state.
pub fn make_windows(ds: &Dataset, horizon: usize) -> Result<Vec<Window>> {
    if horizon == 0 {
        return Err(Error::Invalid("window horizon must be at least 1".into()));
    }
    let mut windows = Vec::new();
    for seq in &ds.sequences {
        let mut start = 0;
        while start + horizon < seq.steps() {
            windows.push(Window {
                states: seq.states.rows(start, horizon + 1).transpose(),
                controls: seq.controls[start..start + horizon].to_vec(),
            });
            start += horizon;
        }
    }
    if windows.is_empty() {
        return Err(Error::Invalid(format!(
            "no sequence has the {} steps a window needs",
            horizon + 1
        )));
    }
    Ok(windows)
}

/// Adaptive-moment gradient descent over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: KoopmanModel,
    /// Mean mini-batch loss per epoch.
    pub loss_curve: Vec<f64>,
    /// Loss over all windows with the final parameters.
    pub final_loss: f64,
}

/// Fresh model: random encoder, `A = I`, `B = 0`.
pub fn init_model(train_set: &Dataset, cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<KoopmanModel> {
    let norm = train_set
        .norm
        .clone()
        .ok_or_else(|| Error::Invalid("training data must be normalized first".into()))?;
    let n_x = norm.state.len();
    let encoder = Encoder::random(n_x, &cfg.hidden, cfg.embed_dim, cfg.activation, rng);
    let operator = KoopmanOperator::neutral(n_x + encoder.output_dim());
    KoopmanModel::new(encoder, operator, norm, train_set.dt)
}

/// Mean loss over `windows`, evaluated in batches of `batch_size`.
pub fn dataset_loss(model: &KoopmanModel, windows: &[Window], lambda: f64, batch_size: usize) -> Result<f64> {
    let mut total = 0.0;
    for chunk in windows.chunks(batch_size.max(1)) {
        total += batch_loss(chunk, &model.encoder, &model.operator, lambda)? * chunk.len() as f64;
    }
    Ok(total / windows.len() as f64)
}

/// Jointly fits the embedding network and the operator by mini-batch Adam
/// on the weighted rollout loss. Deterministic for a given seed.
pub fn train(train_set: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = init_model(train_set, cfg, &mut rng)?;
    train_from(model, train_set, cfg, &mut rng)
}

/// Continues training an existing model.
pub fn train_from(
    mut model: KoopmanModel,
    train_set: &Dataset,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let windows = make_windows(train_set, cfg.window)?;
    let mut params = flatten_params(&model.encoder, &model.operator);
    let mut adam = Adam::new(params.len());
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut batch = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        let lr = cfg.learning_rate_at(epoch);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| windows[i].clone()));
            let (loss, grads) = loss_and_gradients(&batch, &model.encoder, &model.operator, cfg.lambda)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            epoch_loss += loss * chunk.len() as f64;
            adam.step(&mut params, &grads.flatten(), lr);
            unflatten_params(&params, &mut model.encoder, &mut model.operator);
        }
        let epoch_loss = epoch_loss / windows.len() as f64;
        loss_curve.push(epoch_loss);
        if epoch % 100 == 0 || epoch + 1 == cfg.epochs {
            log::info!("epoch {epoch}: loss {epoch_loss:.6e}");
        }
    }
    let final_loss = dataset_loss(&model, &windows, cfg.lambda, cfg.batch_size)?;
    if !final_loss.is_finite() {
        return Err(Error::TrainingDiverged { epoch: cfg.epochs });
    }
    Ok(TrainOutcome {
        model,
        loss_curve,
        final_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{NormScales, StateSequence};
    use nalgebra::DMatrix;

    fn ramp(steps: usize) -> Dataset {
        let seq = StateSequence {
            id: "r".into(),
            n_followers: 1,
            states: DMatrix::from_fn(steps, 3, |k, j| (k * 3 + j) as f64),
            controls: (0..steps).map(|k| k as f64).collect(),
            leader_position: vec![0.0; steps],
            leader_velocity: vec![0.0; steps],
        };
        Dataset::new(vec![seq], 0.1).unwrap()
    }

    #[test]
    fn windows_share_boundaries() {
        let w = make_windows(&ramp(11), 5).unwrap();
        assert_eq!(w.len(), 2);
        assert_eq!(w[0].states.ncols(), 6);
        assert_eq!(w[0].states.column(5), w[1].states.column(0));
        assert_eq!(w[1].controls, vec![5.0, 6.0, 7.0, 8.0, 9.0]);
        assert!(make_windows(&ramp(5), 5).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig { lambda: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { lambda: 1.5, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { window: 0, ..Default::default() }.validate().is_err());
        TrainConfig::default().validate().unwrap();
    }

    #[test]
    fn learning_rate_decays_geometrically() {
        let cfg = TrainConfig {
            learning_rate: 1e-2,
            final_learning_rate: 1e-4,
            epochs: 3,
            ..Default::default()
        };
        assert_eq!(cfg.learning_rate_at(0), 1e-2);
        assert!((cfg.learning_rate_at(1) - 1e-3).abs() < 1e-15);
        assert!((cfg.learning_rate_at(2) - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn requires_normalized_data() {
        let cfg = TrainConfig {
            epochs: 1,
            window: 2,
            ..Default::default()
        };
        assert!(train(&ramp(10), &cfg).is_err());
        let ds = ramp(10).normalized(&NormScales::identity(3)).unwrap();
        let cfg = TrainConfig {
            hidden: vec![4],
            embed_dim: 2,
            ..cfg
        };
        let out = train(&ds, &cfg).unwrap();
        assert_eq!(out.loss_curve.len(), 1);
        assert_eq!(out.model.lifted_dim(), 5);
    }
}
