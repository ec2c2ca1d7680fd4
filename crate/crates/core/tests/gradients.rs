//! Analytic gradients against central finite differences of an independent
//! straight-line loss evaluation.

mod common;

use common::reference_loss;
use pulse_csc::csc::Shrinkage;
use pulse_csc::training::{backward, loss};
use pulse_csc::unfolded::{init_random, UnfoldedModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64) -> (UnfoldedModel, Vec<f64>, Vec<f64>) {
    instance_with(seed, Shrinkage::Smooth { beta: 50.0 })
}

fn instance_with(seed: u64, shrink: Shrinkage) -> (UnfoldedModel, Vec<f64>, Vec<f64>) {
    let mut model = init_random(4, 8, 3, seed).unwrap();
    model.set_shrinkage(shrink);
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
    let y: Vec<f64> = (0..64).map(|t| (t as f64 * 0.3).sin() + 0.2 * r.random::<f64>()).collect();
    let yn: Vec<f64> = y.iter().map(|v| v + 0.5 * (r.random::<f64>() - 0.5)).collect();
    (model, yn, y)
}

fn perturbed(model: &UnfoldedModel, group: usize, idx: usize, delta: f64) -> UnfoldedModel {
    let mut m = model.clone();
    m.param_groups_mut()[group][idx] += delta;
    m
}

/// Largest relative error over all parameters of one instance.
fn max_relative_error(seed: u64, lambda: f64) -> f64 {
    max_relative_error_with(seed, lambda, Shrinkage::Smooth { beta: 50.0 })
}

fn max_relative_error_with(seed: u64, lambda: f64, shrink: Shrinkage) -> f64 {
    let h = 1e-5;
    let (model, yn, y) = instance_with(seed, shrink);
    let (_, trace) = loss(&model, &yn, &y, lambda).unwrap();
    let grads = backward(&model, &trace, &y, lambda).unwrap();
    let mut worst: f64 = 0.0;
    for (g, group) in model.param_groups().iter().enumerate() {
        for idx in 0..group.len() {
            let up = reference_loss(&perturbed(&model, g, idx, h), &yn, &y, lambda);
            let dn = reference_loss(&perturbed(&model, g, idx, -h), &yn, &y, lambda);
            let fd = (up - dn) / (2.0 * h);
            let an = grads.groups()[g][idx];
            let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

#[test]
fn reference_loss_agrees_with_traced_loss() {
    for seed in 0..5 {
        let (model, yn, y) = instance(seed);
        let (l, _) = loss(&model, &yn, &y, 0.05).unwrap();
        let r = reference_loss(&model, &yn, &y, 0.05);
        assert!((l - r).abs() <= 1e-12 * r.abs().max(1.0), "{l} vs {r}");
    }
}

#[test]
fn all_parameter_gradients_match_finite_differences() {
    for seed in 0..5 {
        let e = max_relative_error(100 + seed, 0.05);
        assert!(e < 1e-5, "seed {seed}: relative error {e:.3e}");
    }
}

#[test]
fn exact_threshold_gradients_match_finite_differences() {
    // Piecewise linear; no pre-activation lands within h of a kink for these
    // seeds, so central differences are exact up to rounding.
    for seed in 0..3 {
        let e = max_relative_error_with(200 + seed, 0.05, Shrinkage::Exact);
        assert!(e < 1e-5, "seed {seed}: relative error {e:.3e}");
    }
}

#[test]
fn reconstruction_only_gradients_match_finite_differences() {
    let e = max_relative_error(7, 0.0);
    assert!(e < 1e-5, "relative error {e:.3e}");
}

#[test]
fn decoder_gradient_of_reconstruction_term_is_residual_correlation() {
    let (mut model, yn, y) = instance(3);
    model = {
        let d = model.decoder().clone();
        let k1 = init_random(4, 8, 1, 5).unwrap();
        UnfoldedModel::from_parts(
            d,
            1,
            8,
            8,
            vec![k1.w1_bank(0).to_vec()],
            vec![],
            vec![k1.raw_thresholds(0).to_vec()],
            0,
        )
        .unwrap()
    };
    let (_, trace) = loss(&model, &yn, &y, 0.0).unwrap();
    let grads = backward(&model, &trace, &y, 0.0).unwrap();
    let resid: Vec<f64> = trace.output.iter().zip(&y).map(|(a, b)| a - b).collect();
    let x = trace.final_code();
    let a = 4isize;
    for i in 0..4 {
        for j in 0..8 {
            let expect: f64 = (0..64)
                .filter_map(|t| {
                    let s = t as isize + a - j as isize;
                    (0..64).contains(&s).then(|| resid[t] * x.get(s as usize, i))
                })
                .sum();
            assert!((grads.groups()[0][i * 8 + j] - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn zero_model_on_zero_input_has_zero_gradient() {
    let (model, _, _) = instance(1);
    let mut zero = model.clone();
    for g in zero.param_groups_mut().into_iter().skip(1) {
        g.iter_mut().for_each(|v| *v = 0.0);
    }
    let y = vec![0.0; 64];
    let (l, trace) = loss(&zero, &y, &y, 0.05).unwrap();
    assert_eq!(l, 0.0);
    let grads = backward(&zero, &trace, &y, 0.05).unwrap();
    assert!(grads.groups().iter().flatten().all(|v| *v == 0.0));
}

#[test]
fn stale_trace_is_rejected() {
    let (mut model, yn, y) = instance(2);
    let (_, trace) = loss(&model, &yn, &y, 0.05).unwrap();
    model.param_groups_mut()[1][0] += 1e-3;
    assert!(matches!(
        backward(&model, &trace, &y, 0.05),
        Err(pulse_csc::Error::StaleTrace { .. })
    ));
}
