mod common;

use common::*;
use nalgebra::{DMatrix, DVector};
use platoon_koopman::baselines::{dmdc_fit, dmdc_fit_dataset, IdmParams};
use platoon_koopman::data::{
    derive_states, simulate_platoon, Dataset, FollowerInit, LeaderInit, NormScales, StateSequence,
};
use platoon_koopman::evaluation::{compare_models, phase_plane_export, reconstruct_positions, ModelKind};
use platoon_koopman::koopman::{
    train, Activation, Encoder, KoopmanModel, KoopmanOperator, TrainConfig,
};
use platoon_koopman::stability::{
    c2d_zoh, d2c_zoh, local_stability, string_stability_sweep, transfer_gain, ContinuousSystem,
    FrequencyUnit, default_grid,
};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn analytic_gradients_match_central_differences() {
    for seed in 0..20 {
        let err = gradient_check(seed);
        assert!(err < 1e-4, "seed {seed}: worst relative error {err:.3e}");
    }
}

#[test]
fn linear_system_is_recovered_by_training_and_dmdc() {
    let r = linear_recovery(11);
    assert!(r.train_loss < 1e-8, "train loss {:.3e}", r.train_loss);
    assert!(r.train_a < 1e-4 && r.train_b < 1e-4, "train A {:.3e} B {:.3e}", r.train_a, r.train_b);
    assert!(r.dmdc_a < 1e-4 && r.dmdc_b < 1e-4, "dmdc A {:.3e} B {:.3e}", r.dmdc_a, r.dmdc_b);
    assert!(r.train_rmse < 1e-6 && r.dmdc_rmse < 1e-6, "{:.3e} {:.3e}", r.train_rmse, r.dmdc_rmse);
}

#[test]
fn dmdc_matches_normal_equations() {
    // Noisy data so the fit is a genuine least-squares problem.
    let mut r = rng(5);
    let (a, b) = random_stable_system(&mut r, 3, 0.8);
    let u: Vec<f64> = (0..80).map(|_| r.random_range(-1.0..1.0)).collect();
    let mut states = simulate_linear(&a, &b, &DVector::from_element(3, 0.5), &u);
    states.iter_mut().for_each(|v| *v += r.random_range(-0.01..0.01));
    let model = dmdc_fit(&states, &u, None, 0.1).unwrap();

    // [A B] = X' W^T (W W^T)^-1 with W = [X; U].
    let n = states.nrows() - 1;
    let w = DMatrix::from_fn(4, n, |i, k| if i < 3 { states[(k, i)] } else { u[k] });
    let next = DMatrix::from_fn(3, n, |i, k| states[(k + 1, i)]);
    let gram = &w * w.transpose();
    let ab = (&next * w.transpose()) * gram.try_inverse().unwrap();
    let oracle_a = ab.columns(0, 3).into_owned();
    let oracle_b = ab.column(3).into_owned();
    assert!(max_abs_diff(&model.a, &oracle_a) < 1e-8);
    assert!((&model.b - oracle_b).abs().max() < 1e-8);
}

#[test]
fn one_step_training_matches_dmdc() {
    let mut r = rng(3);
    let (a, b) = random_stable_system(&mut r, 3, 0.7);
    let mut ds = linear_dataset(&a, &b, &mut r, 6, 30);
    // Perturb so the one-step regression has a non-trivial residual.
    for s in &mut ds.sequences {
        s.states.iter_mut().for_each(|v| *v += r.random_range(-0.02..0.02));
    }
    let cfg = TrainConfig {
        lambda: 1.0,
        window: 1,
        learning_rate: 1e-2,
        final_learning_rate: 1e-8,
        epochs: 20000,
        batch_size: 1000,
        seed: 1,
        hidden: vec![],
        embed_dim: 0,
        activation: Activation::Tanh,
    };
    let out = train(&ds, &cfg).unwrap();
    let raw = Dataset { norm: None, ..ds.clone() };
    let dmdc = dmdc_fit_dataset(&raw, None).unwrap();
    let da = max_abs_diff(&out.model.operator.a, &dmdc.a);
    let db = (&out.model.operator.b - &dmdc.b).abs().max();
    assert!(da < 1e-6 && db < 1e-6, "A {da:.3e} B {db:.3e}");
}

#[test]
fn d2c_inverts_independent_zoh_discretization() {
    let mut r = rng(21);
    for trial in 0..50 {
        let (ac, bc) = random_continuous_system(&mut r, 6);
        let (a, b) = zoh_oracle(&ac, &bc, 0.1);
        let sys = d2c_zoh(&a, &b, 0.1).unwrap();
        let ea = frob_rel(&sys.a, &ac);
        let eb = (&sys.b - &bc).norm() / bc.norm();
        assert!(ea < 1e-8 && eb < 1e-8, "trial {trial}: A {ea:.3e} B {eb:.3e}");
    }
    let (ac, bc) = random_continuous_system(&mut r, 5);
    let (a, b) = zoh_oracle(&ac, &bc, 0.1);
    let sys = d2c_zoh(&a, &b, 0.1).unwrap();
    assert!(frob_rel(&sys.a, &ac) < 1e-8);
}

#[test]
fn library_discretization_agrees_with_taylor_oracle() {
    let mut r = rng(4);
    let (ac, bc) = random_continuous_system(&mut r, 5);
    let sys = ContinuousSystem { a: ac.clone(), b: bc.clone(), dt_source: 0.1 };
    let (a, b) = c2d_zoh(&sys, 0.1);
    let (oa, ob) = zoh_oracle(&ac, &bc, 0.1);
    assert!(frob_rel(&a, &oa) < 1e-12);
    assert!((b - &ob).norm() / ob.norm() < 1e-12);
}

#[test]
fn two_mode_transfer_gain_matches_rational_function() {
    // A_c = diag(-1, -3); output is the second state.
    let sys = ContinuousSystem {
        a: DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -3.0])),
        b: DVector::from_vec(vec![2.0, 1.5]),
        dt_source: 0.1,
    };
    for &f in &[0.01, 0.1, 0.5, 2.0] {
        let w = 2.0 * std::f64::consts::PI * f;
        let want = w * 1.5 / (w * w + 9.0).sqrt();
        let got = transfer_gain(&sys, 1, f).unwrap();
        assert!((got - want).abs() < 1e-10, "f {f}: {got} vs {want}");
    }
}

#[test]
fn scalar_sweep_is_string_stable() {
    let sys = ContinuousSystem {
        a: DMatrix::from_element(1, 1, -1.0),
        b: DVector::from_element(1, 1.0),
        dt_source: 0.1,
    };
    let r = string_stability_sweep(&sys, 0, &default_grid(), 1e-6, FrequencyUnit::Hz).unwrap();
    assert!(r.string_stable);
    for (f, g) in r.frequencies.iter().zip(&r.gains) {
        let w = 2.0 * std::f64::consts::PI * f;
        assert!((g - w / (w * w + 1.0).sqrt()).abs() < 1e-10);
    }
    assert_eq!(r.string_stable, r.peak_gain <= 1.0 + r.tol);
}

fn platoon(v: f64, n: usize, accel: &[f64]) -> (StateSequence, Vec<IdmParams>) {
    let params: Vec<IdmParams> = (0..n)
        .map(|i| IdmParams {
            t_headway: 1.2 + 0.1 * i as f64,
            ..IdmParams::default()
        })
        .collect();
    let followers: Vec<FollowerInit> = params
        .iter()
        .map(|&p| FollowerInit {
            params: p,
            spacing: p.equilibrium_spacing(v).unwrap(),
            velocity: v,
        })
        .collect();
    let traj = simulate_platoon(
        "p",
        LeaderInit { position: 50.0, velocity: v },
        accel,
        &followers,
        0.1,
        None,
    )
    .unwrap();
    (derive_states(&traj).unwrap(), params)
}

#[test]
fn positions_roundtrip_through_spacings() {
    let accel: Vec<f64> = (0..200).map(|k| 0.5 * (k as f64 * 0.03).sin()).collect();
    let (seq, _) = platoon(15.0, 4, &accel);
    let y = reconstruct_positions(&seq.spacings(), &seq.leader_position).unwrap();
    assert!((y[(0, 0)] - (50.0 - seq.states[(0, 0)])).abs() < 1e-12);
    // Derive spacings back from the chained positions.
    let re_spacing = DMatrix::from_fn(seq.steps(), 4, |k, i| {
        let front = if i == 0 { seq.leader_position[k] } else { y[(k, i - 1)] };
        front - y[(k, i)]
    });
    assert!(max_abs_diff(&re_spacing, &seq.spacings()) < 1e-9);
}

fn linear_koopman(a: DMatrix<f64>, b: DVector<f64>, n: usize) -> KoopmanModel {
    KoopmanModel::new(
        Encoder::identity_lifting(3 * n),
        KoopmanOperator { a, b },
        NormScales::identity(3 * n),
        0.1,
    )
    .unwrap()
}

#[test]
fn exact_idm_replay_ranks_first() {
    let mut seqs = Vec::new();
    let mut params = Vec::new();
    for (i, amp) in [0.4, 0.6].iter().enumerate() {
        let accel: Vec<f64> = (0..300).map(|k| amp * (k as f64 * 0.04).sin()).collect();
        let (mut s, p) = platoon(14.0 + i as f64, 3, &accel);
        s.id = format!("s{i}");
        seqs.push(s);
        params = p;
    }
    let test = Dataset::new(seqs, 0.1).unwrap();
    let dmdc = dmdc_fit_dataset(&test, None).unwrap();
    let frozen = linear_koopman(DMatrix::identity(9, 9), DVector::zeros(9), 3);
    let cmp = compare_models(&test, &frozen, &dmdc, &params).unwrap();
    let idm = cmp.aggregate_for(ModelKind::Idm).unwrap();
    assert!(idm.rmse < 1e-9, "{}", idm.rmse);
    for kind in [ModelKind::Koopman, ModelKind::Dmdc] {
        assert!(cmp.aggregate_for(kind).unwrap().rmse >= idm.rmse);
    }
    assert_eq!(cmp.rows.len(), 6);
}

#[test]
fn empty_test_set_is_an_error() {
    let frozen = linear_koopman(DMatrix::identity(3, 3), DVector::zeros(3), 1);
    let dmdc = platoon_koopman::baselines::DmdcModel {
        a: DMatrix::identity(3, 3),
        b: DVector::zeros(3),
        rank_used: 3,
        dt: 0.1,
    };
    let empty = Dataset::new(vec![], 0.1).unwrap();
    assert!(compare_models(&empty, &frozen, &dmdc, &[IdmParams::default()]).is_err());
}

#[test]
fn mismatched_model_dimension_names_both() {
    let accel = vec![0.0; 50];
    let (seq, params) = platoon(10.0, 2, &accel);
    let test = Dataset::new(vec![seq], 0.1).unwrap();
    let dmdc = dmdc_fit_dataset(&test, None).unwrap();
    let wrong = linear_koopman(DMatrix::identity(9, 9), DVector::zeros(9), 3);
    let err = compare_models(&test, &wrong, &dmdc, &params).unwrap_err().to_string();
    assert!(err.contains('9') && err.contains('6'), "{err}");
}

#[test]
fn divergent_model_is_flagged_not_fatal() {
    let accel: Vec<f64> = (0..300).map(|k| 0.3 * (k as f64 * 0.05).sin()).collect();
    let (seq, params) = platoon(12.0, 2, &accel);
    let test = Dataset::new(vec![seq], 0.1).unwrap();
    let dmdc = dmdc_fit_dataset(&test, None).unwrap();
    let exploding = linear_koopman(DMatrix::identity(6, 6) * 20.0, DVector::zeros(6), 2);
    let cmp = compare_models(&test, &exploding, &dmdc, &params).unwrap();
    let row = cmp.rows.iter().find(|r| r.model == ModelKind::Koopman).unwrap();
    assert!(row.report.is_none() && row.failure.is_some());
    assert_eq!(cmp.aggregate_for(ModelKind::Koopman).unwrap().failed, 1);
    assert!(cmp.aggregate_for(ModelKind::Dmdc).unwrap().rmse.is_finite());
}

#[test]
fn frozen_dynamics_phase_plane() {
    let accel: Vec<f64> = (0..60).map(|k| 0.5 * (k as f64 * 0.1).sin()).collect();
    let (seq, _) = platoon(12.0, 2, &accel);
    let frozen = linear_koopman(DMatrix::identity(6, 6), DVector::zeros(6), 2);
    let table = phase_plane_export(&frozen, &seq, 10).unwrap();
    assert_eq!(table.rows.len(), (60 - 10) * 2 * 3);
    for row in &table.rows {
        // Frozen: one step from t-1 returns x_{t-1}; h steps from t-h return x_{t-h}.
        let layout = seq.layout();
        let (cx, cy) = match row.pair {
            platoon_koopman::evaluation::PairKind::SpacingSpeed => (layout.spacing(row.vehicle), layout.velocity(row.vehicle)),
            platoon_koopman::evaluation::PairKind::SpacingDv => (layout.spacing(row.vehicle), layout.speed_diff(row.vehicle)),
            platoon_koopman::evaluation::PairKind::SpeedDv => (layout.velocity(row.vehicle), layout.speed_diff(row.vehicle)),
        };
        let t = row.step;
        assert_eq!(row.recon, (seq.states[(t - 1, cx)], seq.states[(t - 1, cy)]));
        assert_eq!(row.pred, (seq.states[(t - 10, cx)], seq.states[(t - 10, cy)]));
        assert_eq!(row.truth, (seq.states[(t, cx)], seq.states[(t, cy)]));
    }
    let one = phase_plane_export(&frozen, &seq, 1).unwrap();
    assert!(one.rows.iter().all(|r| r.pred == r.recon));
}

#[test]
fn perfect_linear_model_overlays_truth() {
    let mut r = rng(8);
    let (a, b) = random_stable_system(&mut r, 6, 0.95);
    let u: Vec<f64> = (0..80).map(|_| r.random_range(-1.0..1.0)).collect();
    let x0 = DVector::from_fn(6, |_, _| r.random_range(5.0..10.0));
    let states = simulate_linear(&a, &b, &x0, &u);
    let seq = StateSequence {
        id: "lin".into(),
        n_followers: 2,
        states,
        controls: u,
        leader_position: vec![0.0; 80],
        leader_velocity: vec![0.0; 80],
    };
    let model = linear_koopman(a, b, 2);
    let table = phase_plane_export(&model, &seq, 10).unwrap();
    for row in &table.rows {
        assert!((row.recon.0 - row.truth.0).abs() < 1e-8 && (row.recon.1 - row.truth.1).abs() < 1e-8);
        assert!((row.pred.0 - row.truth.0).abs() < 1e-8 && (row.pred.1 - row.truth.1).abs() < 1e-8);
    }
}

#[test]
fn eigen_verdicts_on_known_spectra() {
    let rot = |r: f64, th: f64| DMatrix::from_row_slice(2, 2, &[r * th.cos(), -r * th.sin(), r * th.sin(), r * th.cos()]);
    use platoon_koopman::stability::Verdict::*;
    let cases = [
        (rot(0.9, 0.7), AsymptoticallyStable),
        (rot(1.0, 0.7), MarginallyStable),
        (rot(1.05, 0.7), Unstable),
        (DMatrix::from_diagonal(&DVector::from_vec(vec![0.2, -0.99])), AsymptoticallyStable),
    ];
    for (a, want) in cases {
        let r = local_stability(&a, 1e-9).unwrap();
        assert_eq!(r.verdict, want, "{a}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn similarity_preserves_spectrum(seed: u64) {
        let mut r = rng(seed);
        let a = random_matrix(&mut r, 5, 5, 0.5);
        let p = DMatrix::identity(5, 5) + random_matrix(&mut r, 5, 5, 0.3);
        let p_inv = p.clone().try_inverse().unwrap();
        let base = local_stability(&a, 1e-9).unwrap();
        let moved = local_stability(&(&p * &a * p_inv), 1e-9).unwrap();
        prop_assert_eq!(base.verdict, moved.verdict);
        for (x, y) in base.magnitudes.iter().zip(&moved.magnitudes) {
            prop_assert!((x - y).abs() < 1e-8, "{} vs {}", x, y);
        }
    }

    #[test]
    fn zoh_roundtrip_through_d2c(seed: u64) {
        let mut r = rng(seed);
        let (ac, bc) = random_continuous_system(&mut r, 4);
        let (a, b) = zoh_oracle(&ac, &bc, 0.2);
        let sys = d2c_zoh(&a, &b, 0.2).unwrap();
        let (a2, b2) = c2d_zoh(&sys, 0.2);
        prop_assert!(frob_rel(&a2, &a) < 1e-8);
        prop_assert!((b2 - &b).norm() / b.norm() < 1e-8);
    }

    #[test]
    fn gain_vanishes_toward_dc(seed: u64) {
        let mut r = rng(seed);
        let (ac, bc) = random_continuous_system(&mut r, 3);
        let sys = ContinuousSystem { a: ac, b: bc, dt_source: 0.1 };
        let g1 = transfer_gain(&sys, 0, 1e-4).unwrap();
        let g2 = transfer_gain(&sys, 0, 1e-7).unwrap();
        prop_assert!(g2 <= g1 * 1e-2 + 1e-12);
    }
}
