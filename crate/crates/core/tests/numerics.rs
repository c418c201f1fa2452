mod common;

use battcal::lac::lyapunov_values;
use battcal::nn::{log_prob_of_action, squash_sample, Matrix, LOG_STD_MAX, LOG_STD_MIN};
use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn mlp_gradients_match_finite_differences() {
    let check = mlp_gradients();
    assert!(check.passed(), "{check:?}");
}

#[test]
fn critic_gradients_match_finite_differences() {
    let check = critic_gradients();
    assert!(check.passed(), "{check:?}");
}

#[test]
fn actor_gradients_match_finite_differences() {
    let check = actor_gradients();
    assert!(check.passed(), "{check:?}");
}

#[test]
fn gradients_still_match_after_training() {
    let (critic, actor) = trained_gradients();
    assert!(critic.passed(), "{critic:?}");
    assert!(actor.passed(), "{actor:?}");
}

#[test]
fn forward_matches_hand_computation() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let net = random_net(&mut rng, &[2, 3, 1]);
    let p = net.params();
    // layer 0: W0 (3x2) row-major, b0 (3); layer 1: W1 (1x3), b1 (1)
    for _ in 0..10 {
        let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let mut h = [0.0; 3];
        for j in 0..3 {
            let z = p[2 * j] * x[0] + p[2 * j + 1] * x[1] + p[6 + j];
            h[j] = if z >= 0.0 { z } else { 0.01 * z };
        }
        let y = p[9] * h[0] + p[10] * h[1] + p[11] * h[2] + p[12];
        let got = net.forward(&x).unwrap()[0];
        assert!((got - y).abs() <= 1e-12 * y.abs().max(1.0), "{got} vs {y}");
    }
}

#[test]
fn squashed_density_integrates_to_one() {
    for (mean, log_std) in DENSITY_CASES {
        let mass = density_mass(mean, log_std, -1.0, 1.0, 2_000_000);
        assert!((mass - 1.0).abs() < 1e-3, "mean {mean} log_std {log_std}: {mass}");
    }
}

#[test]
fn sample_histogram_matches_density() {
    let (mean, log_std) = (0.4, -0.3);
    let bins = 20;
    let n = 1_000_000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut counts = vec![0usize; bins];
    for _ in 0..n {
        let eps: f64 = rng.sample(rand_distr::StandardNormal);
        let a = squash_sample(&[mean], &[log_std], &[eps]).action[0];
        let k = (((a + 1.0) / 2.0) * bins as f64).floor().clamp(0.0, (bins - 1) as f64) as usize;
        counts[k] += 1;
    }
    for (k, &c) in counts.iter().enumerate() {
        let lo = -1.0 + 2.0 * k as f64 / bins as f64;
        let p = density_mass(mean, log_std, lo, lo + 2.0 / bins as f64, 20_000);
        let freq = c as f64 / n as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() <= 5.0 * sigma + 1e-4, "bin {k}: {freq} vs {p}");
    }
}

#[test]
fn log_prob_of_sample_agrees_with_density() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let (m, ls, e) = (rng.random_range(-1.0..1.0), rng.random_range(-2.0..1.0), rng.random_range(-2.0..2.0));
        let s = squash_sample(&[m], &[ls], &[e]);
        assert!((s.log_prob - log_prob_of_action(&[m], &[ls], &s.action)).abs() < 1e-8);
    }
}

proptest! {
    #[test]
    fn squashed_actions_stay_in_range(
        mean in prop::collection::vec(-30.0f64..30.0, 1..4),
        log_std in -40.0f64..10.0,
        eps in -6.0f64..6.0,
    ) {
        let m = mean.len();
        let s = squash_sample(&mean, &vec![log_std; m], &vec![eps; m]);
        prop_assert!(s.log_prob.is_finite());
        let std = log_std.clamp(LOG_STD_MIN, LOG_STD_MAX).exp();
        for (a, mu) in s.action.iter().zip(&mean) {
            prop_assert!((-1.0..=1.0).contains(a));
            // tanh rounds to +-1 only once |u| is past about 19
            if (mu + std * eps).abs() < 18.0 {
                prop_assert!(a.abs() < 1.0);
            }
        }
    }

    #[test]
    fn lyapunov_values_are_non_negative(seed in any::<u64>(), rows in 1usize..16) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let critic = random_net(&mut rng, &small_lac().critic_dims(OBS, ACT));
        let x = Matrix::from_vec(rows, OBS + ACT, (0..rows * (OBS + ACT)).map(|_| rng.random_range(-5.0..5.0)).collect());
        for v in lyapunov_values(&critic, &x).unwrap() {
            prop_assert!(v >= 0.0);
        }
    }
}
