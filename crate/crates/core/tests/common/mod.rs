//! Oracles and fixtures shared by the integration tests. Everything here is
//! written independently of the library's numerics.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use platoon_koopman::data::{Dataset, NormScales, StateSequence};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
}

/// Largest singular value by power iteration on `A^T A`.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    let mut v = DVector::from_element(a.ncols(), 1.0);
    for _ in 0..500 {
        let w = a.transpose() * (a * &v);
        let n = w.norm();
        if n == 0.0 {
            return 0.0;
        }
        v = w / n;
    }
    (a * &v).norm()
}

/// Random `A` rescaled so its spectral norm (hence spectral radius) is
/// `radius`, and a random `B`.
pub fn random_stable_system(rng: &mut ChaCha8Rng, n: usize, radius: f64) -> (DMatrix<f64>, DVector<f64>) {
    let a = random_matrix(rng, n, n, 1.0);
    let a = &a * (radius / spectral_norm(&a));
    let b = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    (a, b)
}

/// Direct iteration `x_{k+1} = A x_k + B u_k`, rows `x_0..x_{steps-1}`.
pub fn simulate_linear(a: &DMatrix<f64>, b: &DVector<f64>, x0: &DVector<f64>, u: &[f64]) -> DMatrix<f64> {
    let n = x0.len();
    let mut out = DMatrix::zeros(u.len(), n);
    let mut x = x0.clone();
    for (k, &uk) in u.iter().enumerate() {
        out.set_row(k, &x.transpose());
        x = a * &x + b * uk;
    }
    out
}

/// Noiseless sequences of a linear system under white-noise inputs, marked
/// as already normalized with unit scales.
pub fn linear_dataset(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    rng: &mut ChaCha8Rng,
    sequences: usize,
    steps: usize,
) -> Dataset {
    let n = b.len();
    let seqs = (0..sequences)
        .map(|i| {
            let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let u: Vec<f64> = (0..steps).map(|_| rng.random_range(-1.0..1.0)).collect();
            StateSequence {
                id: format!("lin{i}"),
                n_followers: 0,
                states: simulate_linear(a, b, &x0, &u),
                controls: u,
                leader_position: vec![0.0; steps],
                leader_velocity: vec![0.0; steps],
            }
        })
        .collect();
    Dataset {
        sequences: seqs,
        dt: 0.1,
        norm: Some(NormScales::identity(n)),
    }
}

/// `exp(M)` by scaling and squaring a 30-term Taylor series.
pub fn expm_taylor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm1 = (0..n)
        .map(|j| m.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0;
    while norm1 / 2f64.powi(squarings) > 0.5 {
        squarings += 1;
    }
    let scaled = m / 2f64.powi(squarings);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..30 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Zero-order-hold discretization from the augmented exponential.
pub fn zoh_oracle(ac: &DMatrix<f64>, bc: &DVector<f64>, dt: f64) -> (DMatrix<f64>, DVector<f64>) {
    let m = ac.nrows();
    let mut aug = DMatrix::zeros(m + 1, m + 1);
    aug.view_mut((0, 0), (m, m)).copy_from(&(ac * dt));
    aug.view_mut((0, m), (m, 1)).copy_from(&(bc * dt));
    let e = expm_taylor(&aug);
    (
        e.view((0, 0), (m, m)).into_owned(),
        e.view((0, m), (m, 1)).column(0).into_owned(),
    )
}

/// Random diagonalizable stable continuous system: one or more complex
/// pairs plus real modes, in a random well-conditioned basis.
pub fn random_continuous_system(rng: &mut ChaCha8Rng, n: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut blocks = DMatrix::zeros(n, n);
    let mut i = 0;
    while i < n {
        let re = -rng.random_range(0.1..2.0);
        if i + 1 < n && rng.random_bool(0.5) {
            let im = rng.random_range(0.2..3.0);
            blocks[(i, i)] = re;
            blocks[(i + 1, i + 1)] = re;
            blocks[(i, i + 1)] = im;
            blocks[(i + 1, i)] = -im;
            i += 2;
        } else {
            blocks[(i, i)] = re;
            i += 1;
        }
    }
    let basis = DMatrix::identity(n, n) + random_matrix(rng, n, n, 0.3);
    let inv = basis.clone().try_inverse().expect("basis is invertible");
    let ac = &basis * blocks * inv;
    let bc = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    (ac, bc)
}

pub fn frob_rel(got: &DMatrix<f64>, want: &DMatrix<f64>) -> f64 {
    (got - want).norm() / want.norm().max(1e-300)
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).abs().max()
}

use platoon_koopman::koopman::{
    batch_loss, flatten_params, loss_and_gradients, unflatten_params, Activation, Encoder, KoopmanOperator,
    Window,
};

/// Worst per-entry relative error between the analytic gradient and
/// central differences (`h = 1e-5`) for a random `n_x = 3`, `d = 4`, `K = 5`
/// problem. Entries where both are below `1e-7` are compared absolutely.
pub fn gradient_check(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n_x, d, horizon, batch) = (3, 4, 5, 3);
    let mut enc = Encoder::random(n_x, &[6, 5], d, Activation::Tanh, &mut r);
    let m = n_x + d;
    let mut op = KoopmanOperator {
        a: DMatrix::identity(m, m) * 0.9 + random_matrix(&mut r, m, m, 0.15),
        b: DVector::from_fn(m, |_, _| r.random_range(-0.5..0.5)),
    };
    let windows: Vec<Window> = (0..batch)
        .map(|_| Window {
            states: random_matrix(&mut r, n_x, horizon + 1, 1.0),
            controls: (0..horizon).map(|_| r.random_range(-1.0..1.0)).collect(),
        })
        .collect();
    let lambda = 0.9;
    let (_, grads) = loss_and_gradients(&windows, &enc, &op, lambda).unwrap();
    let analytic = grads.flatten();
    let params = flatten_params(&enc, &op);
    assert_eq!(analytic.len(), params.len());
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let mut p = params.clone();
        p[i] = params[i] + h;
        unflatten_params(&p, &mut enc, &mut op);
        let up = batch_loss(&windows, &enc, &op, lambda).unwrap();
        p[i] = params[i] - h;
        unflatten_params(&p, &mut enc, &mut op);
        let down = batch_loss(&windows, &enc, &op, lambda).unwrap();
        let fd = (up - down) / (2.0 * h);
        let scale = analytic[i].abs().max(fd.abs());
        let err = if scale < 1e-7 {
            (analytic[i] - fd).abs()
        } else {
            (analytic[i] - fd).abs() / scale
        };
        worst = worst.max(err);
    }
    unflatten_params(&params, &mut enc, &mut op);
    worst
}

/// Linear recovery run: returns (max |A - A*|, max |B - B*|, rollout RMSE)
/// for the trained d = 0 model and for DMDc, plus the final training loss.
pub struct Recovery {
    pub train_a: f64,
    pub train_b: f64,
    pub train_rmse: f64,
    pub train_loss: f64,
    pub dmdc_a: f64,
    pub dmdc_b: f64,
    pub dmdc_rmse: f64,
}

pub fn linear_recovery(seed: u64) -> Recovery {
    use platoon_koopman::baselines::{dmdc_fit_dataset, dmdc_rollout};
    use platoon_koopman::koopman::{train, TrainConfig};

    let mut r = rng(seed);
    let (a_star, b_star) = random_stable_system(&mut r, 4, 0.9);
    let ds = linear_dataset(&a_star, &b_star, &mut r, 8, 41);
    let cfg = TrainConfig {
        lambda: 1.0,
        window: 5,
        learning_rate: 1e-2,
        final_learning_rate: 1e-7,
        epochs: 2000,
        batch_size: 4,
        seed,
        hidden: vec![],
        embed_dim: 0,
        activation: Activation::Tanh,
    };
    let out = train(&ds, &cfg).unwrap();
    let raw = Dataset { norm: None, ..ds.clone() };
    let dmdc = dmdc_fit_dataset(&raw, None).unwrap();

    // Fresh held-out sequence from the generator.
    let x0 = DVector::from_fn(4, |_, _| r.random_range(-1.0..1.0));
    let u: Vec<f64> = (0..60).map(|_| r.random_range(-1.0..1.0)).collect();
    let truth = simulate_linear(&a_star, &b_star, &x0, &u);
    let rmse = |rows: &[DVector<f64>]| {
        let mut sq = 0.0;
        for (k, x) in rows.iter().enumerate() {
            sq += (x - truth.row(k + 1).transpose()).norm_squared();
        }
        (sq / (rows.len() * 4) as f64).sqrt()
    };
    let learned = out.model.rollout(&x0, &u[..59]).unwrap();
    let dmdc_rows = dmdc_rollout(&dmdc, &x0, &u[..59]).unwrap();
    let bmat = |b: &DVector<f64>| DMatrix::from_column_slice(4, 1, b.as_slice());
    Recovery {
        train_a: max_abs_diff(&out.model.operator.a, &a_star),
        train_b: max_abs_diff(&bmat(&out.model.operator.b), &bmat(&b_star)),
        train_rmse: rmse(&learned.states),
        train_loss: out.final_loss,
        dmdc_a: max_abs_diff(&dmdc.a, &a_star),
        dmdc_b: max_abs_diff(&bmat(&dmdc.b), &bmat(&b_star)),
        dmdc_rmse: rmse(&dmdc_rows),
    }
}
