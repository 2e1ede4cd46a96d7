//! Central finite-difference oracle for every loss gradient.
//!
//! For each of the five losses we build randomized small nets and batches,
//! evaluate the analytic gradient, and compare against
//! `(f(x + h) - f(x - h)) / 2h` coordinate by coordinate. The comparison is
//! `|a - b| / max(1, |a|, |b|) <= tol`: plain relative error where gradients
//! are O(1) or larger, absolute below that (a pure ratio is meaningless for
//! components near machine zero).

use gcttt_core::nn::{
    awr_loss_grad, bc_loss_grad, ddpgbc_loss_grad, iql_q_loss_grad, iql_v_loss_grad,
    GaussianPolicy, ParamStore,
};
use gcttt_core::seeding;
use rand::Rng;

const FD_STEP: f64 = 1e-5;
const TOL: f64 = 1e-5;
const INSTANCES: usize = 24;

fn check_grad(
    label: &str,
    flat: &[f64],
    analytic: &[f64],
    mut eval: impl FnMut(&[f64]) -> f64,
) {
    assert_eq!(flat.len(), analytic.len());
    let mut worst = 0.0_f64;
    for i in 0..flat.len() {
        let mut probe = flat.to_vec();
        probe[i] = flat[i] + FD_STEP;
        let up = eval(&probe);
        probe[i] = flat[i] - FD_STEP;
        let down = eval(&probe);
        let fd = (up - down) / (2.0 * FD_STEP);
        let denom = 1.0_f64.max(fd.abs()).max(analytic[i].abs());
        let err = (fd - analytic[i]).abs() / denom;
        worst = worst.max(err);
        assert!(
            err <= TOL,
            "{label}: coord {i} analytic {} vs fd {} (err {err:.3e})",
            analytic[i],
            fd
        );
    }
    let _ = worst;
}

fn random_batch(rng: &mut rand_chacha::ChaCha8Rng, n: usize, dim: usize) -> Vec<f64> {
    (0..n * dim).map(|_| rng.gen_range(-1.5..1.5)).collect()
}

/// Policy with log_std strictly inside its box so the loss stays smooth at
/// every probe point.
fn random_policy(rng: &mut rand_chacha::ChaCha8Rng, dims: &[usize]) -> GaussianPolicy {
    let p = GaussianPolicy::new(rng.gen(), dims).unwrap();
    let mut flat = p.flat_params();
    let nw = p.net.weights().len();
    for ls in &mut flat[nw..] {
        *ls = rng.gen_range(-1.0..0.5);
    }
    let mut p = p;
    p.set_flat_params(&flat);
    p
}

#[test]
fn bc_gradient_matches_finite_differences() {
    let mut rng = seeding::rng(101);
    for _ in 0..INSTANCES {
        let policy = random_policy(&mut rng, &[2, 3, 2]);
        let n = rng.gen_range(1..5);
        let inputs = random_batch(&mut rng, n, 2);
        let actions = random_batch(&mut rng, n, 2);
        let (_, grad) = bc_loss_grad(&policy, &inputs, &actions).unwrap();
        let flat = policy.flat_params();
        check_grad("bc", &flat, &grad, |p| {
            let mut alt = policy.clone();
            alt.set_flat_params(p);
            bc_loss_grad(&alt, &inputs, &actions).unwrap().0
        });
    }
}

#[test]
fn awr_gradient_matches_finite_differences() {
    let mut rng = seeding::rng(202);
    for _ in 0..INSTANCES {
        let policy = random_policy(&mut rng, &[2, 3, 2]);
        let n = rng.gen_range(1..5);
        let inputs = random_batch(&mut rng, n, 2);
        let actions = random_batch(&mut rng, n, 2);
        let adv: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let beta = rng.gen_range(0.0..1.5);
        let (_, grad) = awr_loss_grad(&policy, &inputs, &actions, &adv, beta, 100.0).unwrap();
        let flat = policy.flat_params();
        check_grad("awr", &flat, &grad, |p| {
            let mut alt = policy.clone();
            alt.set_flat_params(p);
            awr_loss_grad(&alt, &inputs, &actions, &adv, beta, 100.0)
                .unwrap()
                .0
        });
    }
}

#[test]
fn iql_q_gradient_matches_finite_differences() {
    let mut rng = seeding::rng(303);
    for _ in 0..INSTANCES {
        let q = ParamStore::init(rng.gen(), &[3, 3, 1]).unwrap();
        let n = rng.gen_range(1..6);
        let inputs = random_batch(&mut rng, n, 3);
        let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..0.5)).collect();
        let (_, grad) = iql_q_loss_grad(&q, &inputs, &targets).unwrap();
        check_grad("iql_q", q.weights(), &grad, |w| {
            let alt = ParamStore::from_weights(q.layer_dims().to_vec(), w.to_vec()).unwrap();
            iql_q_loss_grad(&alt, &inputs, &targets).unwrap().0
        });
    }
}

#[test]
fn iql_v_gradient_matches_finite_differences() {
    let mut rng = seeding::rng(404);
    for _ in 0..INSTANCES {
        let v = ParamStore::init(rng.gen(), &[2, 3, 1]).unwrap();
        let n = rng.gen_range(1..6);
        let inputs = random_batch(&mut rng, n, 2);
        let q_vals: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..0.5)).collect();
        let expectile = rng.gen_range(0.55..0.95);
        let (_, grad) = iql_v_loss_grad(&v, &inputs, &q_vals, expectile).unwrap();
        check_grad("iql_v", v.weights(), &grad, |w| {
            let alt = ParamStore::from_weights(v.layer_dims().to_vec(), w.to_vec()).unwrap();
            iql_v_loss_grad(&alt, &inputs, &q_vals, expectile).unwrap().0
        });
    }
}

#[test]
fn ddpgbc_gradient_matches_finite_differences() {
    let mut rng = seeding::rng(505);
    for _ in 0..INSTANCES {
        // ds = 1, da = 2, dg = 1: policy [2 -> 2], q [4 -> 1]
        let policy = random_policy(&mut rng, &[2, 3, 2]);
        let q = ParamStore::init(rng.gen(), &[4, 3, 1]).unwrap();
        let n = rng.gen_range(1..5);
        let states = random_batch(&mut rng, n, 1);
        let goals = random_batch(&mut rng, n, 1);
        let actions = random_batch(&mut rng, n, 2);
        let beta = rng.gen_range(0.0..1.5);
        let (_, grad) = ddpgbc_loss_grad(&policy, &q, &states, &goals, &actions, beta).unwrap();
        let flat = policy.flat_params();
        check_grad("ddpg_bc", &flat, &grad, |p| {
            let mut alt = policy.clone();
            alt.set_flat_params(p);
            ddpgbc_loss_grad(&alt, &q, &states, &goals, &actions, beta)
                .unwrap()
                .0
        });
    }
}
