use super::Real;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Added inside the log of the tanh change-of-variables correction.
pub const TANH_GUARD: f64 = 1e-6;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Reparameterised draw from a tanh-squashed diagonal Gaussian, with the
/// partial derivatives needed to backpropagate through the draw.
#[derive(Debug, Clone, PartialEq)]
pub struct SquashedSample<T> {
    pub action: Vec<T>,
    pub log_prob: T,
    /// d action_i / d mean_i
    pub daction_dmean: Vec<T>,
    /// d action_i / d log_std_i (zero where the log-std clamp is active)
    pub daction_dlog_std: Vec<T>,
    /// d log_prob / d mean_i
    pub dlogp_dmean: Vec<T>,
    /// d log_prob / d log_std_i
    pub dlogp_dlog_std: Vec<T>,
}

/// `u = mean + exp(log_std) * eps`, `action = tanh(u)`, and
/// `log_prob = sum_i [log N(u_i; mean_i, std_i) - log(1 - tanh(u_i)^2 + 1e-6)]`.
pub fn squash_sample<T: Real>(mean: &[T], log_std: &[T], eps: &[T]) -> SquashedSample<T> {
    assert_eq!(mean.len(), log_std.len(), "head widths");
    assert_eq!(mean.len(), eps.len(), "noise width");
    let m = mean.len();
    let (lo, hi) = (T::lit(LOG_STD_MIN), T::lit(LOG_STD_MAX));
    let guard = T::lit(TANH_GUARD);
    let two = T::lit(2.0);
    let half = T::lit(0.5);

    let mut out = SquashedSample {
        action: Vec::with_capacity(m),
        log_prob: T::zero(),
        daction_dmean: Vec::with_capacity(m),
        daction_dlog_std: Vec::with_capacity(m),
        dlogp_dmean: Vec::with_capacity(m),
        dlogp_dlog_std: Vec::with_capacity(m),
    };
    for i in 0..m {
        let clamped = log_std[i] < lo || log_std[i] > hi;
        let ls = log_std[i].max(lo).min(hi);
        let std = ls.exp();
        let u = mean[i] + std * eps[i];
        let a = u.tanh();
        // sech^2 rather than 1 - a^2, which cancels once tanh saturates
        let sech = u.cosh().recip();
        let one_minus_a2 = sech * sech;
        let denom = one_minus_a2 + guard;
        out.log_prob = out.log_prob - half * eps[i] * eps[i] - ls - T::lit(HALF_LN_2PI) - denom.ln();

        // d/du of -log(1 - tanh(u)^2 + guard)
        let dcorr_du = two * a * one_minus_a2 / denom;
        let du_dls = if clamped { T::zero() } else { std * eps[i] };
        out.action.push(a);
        out.daction_dmean.push(one_minus_a2);
        out.daction_dlog_std.push(one_minus_a2 * du_dls);
        out.dlogp_dmean.push(dcorr_du);
        out.dlogp_dlog_std.push(if clamped { T::zero() } else { dcorr_du * du_dls - T::one() });
    }
    out
}

/// Log-density of `action` under the squashed Gaussian.
pub fn log_prob_of_action(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    let mut lp = 0.0;
    for i in 0..mean.len() {
        let ls = log_std[i].clamp(LOG_STD_MIN, LOG_STD_MAX);
        let u = action[i].atanh();
        let z = (u - mean[i]) / ls.exp();
        lp += -0.5 * z * z - ls - HALF_LN_2PI - (1.0 - action[i] * action[i] + TANH_GUARD).ln();
    }
    lp
}
