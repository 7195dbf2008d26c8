mod oracles;

use oracles::*;
use rand::{Rng, SeedableRng};
use smcd_core::net::{DropoutNet, Gate};
use smcd_core::rng::SmcdRng;

/// Inputs whose hidden pre-activations all stay at least `margin` from 0.
fn inputs_off_kinks(net: &DropoutNet, batch: usize, margin: f64, rng: &mut SmcdRng) -> Vec<f64> {
    loop {
        let x: Vec<f64> = (0..batch * net.input_dim()).map(|_| rng.gen_range(-1.5..1.5)).collect();
        if kink_margin(net, &x, batch) > margin {
            return x;
        }
    }
}

#[test]
fn parameter_gradients_match_central_differences() {
    let mut rng = SmcdRng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for trial in 0..20 {
        let net = random_net(&[3, 12, 10, 2], 0.5, &mut rng);
        let batch = 4;
        let x = inputs_off_kinks(&net, batch, 1e-3, &mut rng);
        let t: Vec<f64> = (0..batch * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let gates: Vec<f64> = (0..batch).flat_map(|_| gates_of(&net, &net.sample_mask(&mut rng))).collect();
        let g = if trial % 4 == 0 { None } else { Some(&gates[..]) };
        worst = worst.max(gradient_fd_error(&net, &x, &t, batch, g, 1e-5));
    }
    assert!(worst < 1e-5, "worst relative error {worst:e}");
}

#[test]
fn analytic_loss_matches_reference() {
    let mut rng = SmcdRng::seed_from_u64(5);
    let net = random_net(&[2, 8, 3], 0.3, &mut rng);
    let x: Vec<f64> = (0..10).map(|_| rng.gen()).collect();
    let t: Vec<f64> = (0..15).map(|_| rng.gen()).collect();
    let (loss, _) = net.loss_and_gradient(&x, &t, 5, None).unwrap();
    assert!((loss - reference_loss(&net, &x, &t, 5, None)).abs() < 1e-12);
}

#[test]
fn input_jacobian_matches_central_differences() {
    let mut rng = SmcdRng::seed_from_u64(12);
    for _ in 0..20 {
        let net = random_net(&[2, 64, 2], 0.5, &mut rng);
        let x = inputs_off_kinks(&net, 1, 1e-3, &mut rng);
        let mask = net.sample_mask(&mut rng);
        for m in [None, Some(&mask)] {
            let (abs, rel) = jacobian_fd_error(&net, &x, m, 1e-5);
            assert!(abs < 1e-5 && rel < 1e-5, "abs {abs:e} rel {rel:e}");
        }
    }
}

#[test]
fn deep_jacobian_with_fractional_gate() {
    let mut rng = SmcdRng::seed_from_u64(13);
    let net = random_net(&[2, 16, 16, 2], 0.5, &mut rng);
    let x = inputs_off_kinks(&net, 1, 1e-3, &mut rng);
    let m: Vec<f64> = (0..net.mask_len()).map(|_| rng.gen()).collect();
    let jac = net.input_jacobian(&x, Gate::Fractional(&m)).unwrap();
    let gates: Vec<f64> = m.iter().map(|v| v / net.keep_prob()).collect();
    let h = 1e-5;
    for c in 0..2 {
        let mut xp = x.clone();
        xp[c] += h;
        let up = reference_forward(&net, &xp, Some(&gates)).0;
        xp[c] -= 2.0 * h;
        let down = reference_forward(&net, &xp, Some(&gates)).0;
        for r in 0..2 {
            assert!(rel_err(jac[(r, c)], (up[r] - down[r]) / (2.0 * h), 1e-6) < 1e-5);
        }
    }
}

#[test]
fn forward_matches_reference() {
    let mut rng = SmcdRng::seed_from_u64(14);
    let net = random_net(&[3, 20, 7, 2], 0.4, &mut rng);
    for _ in 0..50 {
        let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mask = net.sample_mask(&mut rng);
        let ours = net.forward_masked(&x, &mask).unwrap();
        let theirs = reference_forward(&net, &x, Some(&gates_of(&net, &mask))).0;
        for (a, b) in ours.iter().zip(&theirs) {
            assert!((a - b).abs() < 1e-12);
        }
        let mean = net.forward_mean(&x).unwrap();
        let reference = reference_forward(&net, &x, None).0;
        assert!(mean.iter().zip(&reference).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}
