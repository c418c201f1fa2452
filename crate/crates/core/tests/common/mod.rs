#![allow(dead_code)]

use std::sync::Arc;

use battcal::battery::{eod_time, init_state, simulate, step, BatteryConfig, BatteryState, DegradationParams, LoadProfile, Trajectory};
use battcal::config::RunConfig;
use battcal::dataset::{generate, DatasetSpec};
use battcal::env::{discounted_cost, CalibEnv, CalibRange, CalibTarget, EnvConfig, NormScales};
use battcal::lac::{actor_loss, critic_loss, critic_target, ActorNoise, Batch, LacAgent, LacConfig, ReplayBuffer};
use battcal::nn::{log_prob_of_action, Matrix, Mlp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_TOL: f64 = 1e-4;
pub const GAMMA: f64 = 0.9;

#[derive(Debug, Clone, Copy, Default)]
pub struct GradCheck {
    pub max_rel: f64,
    pub checked: usize,
    /// Components skipped because a LeakyReLU kink lies within one step.
    pub kinks: usize,
}

impl GradCheck {
    pub fn merge(self, other: GradCheck) -> GradCheck {
        GradCheck {
            max_rel: self.max_rel.max(other.max_rel),
            checked: self.checked + other.checked,
            kinks: self.kinks + other.kinks,
        }
    }

    pub fn passed(&self) -> bool {
        self.max_rel < GRAD_TOL && self.checked > 0 && self.kinks * 20 <= self.checked
    }
}

/// Central differences against `analytic`, component by component.
///
/// A component whose forward and backward one-sided slopes disagree by more
/// than a few percent straddles a kink; it is counted and skipped.
pub fn fd_check(params: &[f64], analytic: &[f64], mut loss: impl FnMut(&[f64]) -> f64) -> GradCheck {
    assert_eq!(params.len(), analytic.len());
    let f0 = loss(params);
    let mut p = params.to_vec();
    let mut out = GradCheck::default();
    for i in 0..p.len() {
        let x = p[i];
        p[i] = x + FD_STEP;
        let fp = loss(&p);
        p[i] = x - FD_STEP;
        let fm = loss(&p);
        p[i] = x;
        let (fwd, bwd) = ((fp - f0) / FD_STEP, (f0 - fm) / FD_STEP);
        if (fwd - bwd).abs() > 0.05 * fwd.abs().max(bwd.abs()).max(1e-3) {
            out.kinks += 1;
            continue;
        }
        let numeric = (fp - fm) / (2.0 * FD_STEP);
        let rel = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-6);
        out.max_rel = out.max_rel.max(rel);
        out.checked += 1;
    }
    out
}

pub fn random_batch<R: Rng>(rng: &mut R, n: usize, obs_dim: usize, act_dim: usize) -> Batch<f64> {
    let mut buf = ReplayBuffer::<f64>::new(n, obs_dim, act_dim);
    for _ in 0..n {
        let obs: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let act: Vec<f64> = (0..act_dim).map(|_| rng.random_range(-0.95..0.95)).collect();
        let next: Vec<f64> = (0..obs_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        buf.push(&obs, &act, rng.random_range(0.0..1.0), &next, rng.random_bool(0.1));
    }
    buf.gather(&(0..n).collect::<Vec<_>>())
}

pub fn normals<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(rand_distr::StandardNormal)).collect()
}

pub fn random_net(rng: &mut ChaCha8Rng, dims: &[usize]) -> Mlp<f64> {
    let mut net = Mlp::new(dims, rng);
    for p in net.params_mut() {
        *p += rng.random_range(-0.3..0.3);
    }
    net
}

pub const OBS: usize = 3;
pub const ACT: usize = 1;

pub fn small_lac() -> LacConfig {
    LacConfig { hidden: vec![6, 5], batch_size: 16, ..Default::default() }
}

/// Squared-error loss of a random 2-3-1 network.
pub fn mlp_point(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = [2, 3, 1];
    let net = random_net(&mut rng, &dims);
    let x = Matrix::from_vec(5, 2, (0..10).map(|_| rng.random_range(-2.0..2.0)).collect());
    let y: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss_of = |out: &Matrix<f64>| -> (f64, Matrix<f64>) {
        let mut g = Matrix::zeros(5, 1);
        let mut l = 0.0;
        for i in 0..5 {
            let d = out.get(i, 0) - y[i];
            l += 0.5 * d * d / 5.0;
            g.set(i, 0, d / 5.0);
        }
        (l, g)
    };
    let (_, grads) = net.gradients(&x, loss_of).unwrap();
    fd_check(net.params(), &grads, |p| {
        let n = Mlp::from_params(&dims, p.to_vec()).unwrap();
        loss_of(&n.forward_batch(&x).unwrap()).0
    })
}

pub fn critic_point(critic: &Mlp<f64>, rng: &mut ChaCha8Rng) -> GradCheck {
    let batch = random_batch(rng, 8, OBS, ACT);
    let targets: Vec<f64> = (0..8).map(|_| rng.random_range(0.0..2.0)).collect();
    let analytic = critic_loss(critic, &batch.obs, &batch.act, &targets).unwrap();
    fd_check(critic.params(), &analytic.grads, |p| {
        let c = Mlp::from_params(critic.dims(), p.to_vec()).unwrap();
        critic_loss(&c, &batch.obs, &batch.act, &targets).unwrap().loss
    })
}

/// Fixed reparameterisation noise, so the sampled actions move with the
/// actor parameters only.
pub fn actor_point(actor: &Mlp<f64>, critic: &Mlp<f64>, rng: &mut ChaCha8Rng) -> GradCheck {
    let batch = random_batch(rng, 8, OBS, ACT);
    let noise = ActorNoise {
        at_obs: Matrix::from_vec(8, ACT, normals(rng, 8 * ACT)),
        at_next: Matrix::from_vec(8, ACT, normals(rng, 8 * ACT)),
    };
    let (beta, lambda) = (rng.random_range(0.1..2.0), rng.random_range(0.1..2.0));
    let analytic = actor_loss(actor, critic, &batch, &noise, beta, lambda, 0.1).unwrap();
    fd_check(actor.params(), &analytic.grads, |p| {
        let a = Mlp::from_params(actor.dims(), p.to_vec()).unwrap();
        actor_loss(&a, critic, &batch, &noise, beta, lambda, 0.1).unwrap().loss
    })
}

pub fn mlp_gradients() -> GradCheck {
    (0..10).map(mlp_point).fold(GradCheck::default(), GradCheck::merge)
}

pub fn critic_gradients() -> GradCheck {
    let cfg = small_lac();
    (0..10)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let critic = random_net(&mut rng, &cfg.critic_dims(OBS, ACT));
            critic_point(&critic, &mut rng)
        })
        .fold(GradCheck::default(), GradCheck::merge)
}

pub fn actor_gradients() -> GradCheck {
    let cfg = small_lac();
    (0..10)
        .map(|seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let actor = random_net(&mut rng, &cfg.actor_dims(OBS, ACT));
            let critic = random_net(&mut rng, &cfg.critic_dims(OBS, ACT));
            actor_point(&actor, &critic, &mut rng)
        })
        .fold(GradCheck::default(), GradCheck::merge)
}

/// Critic and actor checks at 10 points each, after 1000 updates.
pub fn trained_gradients() -> (GradCheck, GradCheck) {
    let mut agent = LacAgent::<f64>::new(OBS, ACT, small_lac(), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let pool: Vec<_> = (0..20).map(|_| random_batch(&mut rng, 16, OBS, ACT)).collect();
    for k in 0..1000 {
        agent.update(&pool[k % pool.len()]).unwrap();
    }
    let (mut c, mut a) = (GradCheck::default(), GradCheck::default());
    for _ in 0..10 {
        c = c.merge(critic_point(&agent.critic, &mut rng));
        a = a.merge(actor_point(&agent.actor, &agent.critic, &mut rng));
    }
    (c, a)
}

/// Midpoint rule for the squashed density over `[lo, hi]`.
pub fn density_mass(mean: f64, log_std: f64, lo: f64, hi: f64, cells: usize) -> f64 {
    let w = (hi - lo) / cells as f64;
    (0..cells).map(|k| log_prob_of_action(&[mean], &[log_std], &[lo + (k as f64 + 0.5) * w]).exp() * w).sum()
}

pub const DENSITY_CASES: [(f64, f64); 5] = [(0.0, -1.0), (0.0, 0.0), (0.7, -0.5), (-1.2, 0.3), (0.3, -2.5)];

/// Largest `|mass - 1|` over [`DENSITY_CASES`].
pub fn density_mass_error() -> f64 {
    DENSITY_CASES.iter().map(|&(m, s)| (density_mass(m, s, -1.0, 1.0, 2_000_000) - 1.0).abs()).fold(0.0, f64::max)
}

pub fn grid(lo: f64, hi: f64) -> [f64; 5] {
    std::array::from_fn(|k| lo + (hi - lo) * k as f64 / 4.0)
}

pub fn q_grid() -> [DegradationParams; 5] {
    let r = CalibRange::default();
    grid(r.q_max.min, r.q_max.max).map(|q_max| DegradationParams { q_max, ..DegradationParams::PERFECT })
}

pub fn r_grid() -> [DegradationParams; 5] {
    let r = CalibRange::default();
    grid(r.r_o.min, r.r_o.max).map(|r_o| DegradationParams { r_o, ..DegradationParams::PERFECT })
}

/// Largest per-step relative change of total charge over 10^4 steps of
/// random low current, across the capacity grid.
pub fn conservation_drift() -> f64 {
    let cfg = BatteryConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for p in q_grid() {
        let mut s = init_state(&p, &cfg).unwrap();
        for _ in 0..10_000 {
            let before = s.total_charge();
            s = step(&s, rng.random_range(0.0..0.4), &p, &cfg).unwrap().0;
            worst = worst.max(((s.total_charge() - before) / before).abs());
        }
    }
    worst
}

/// Whether 10^4 zero-current steps leave the initial state bit-for-bit
/// unchanged, across both parameter grids.
pub fn zero_load_fixed_point() -> bool {
    let cfg = BatteryConfig::default();
    q_grid().into_iter().chain(r_grid()).all(|p| {
        let s0 = init_state(&p, &cfg).unwrap();
        let mut s = s0;
        for _ in 0..10_000 {
            s = step(&s, 0.0, &p, &cfg).unwrap().0;
        }
        s == s0
    })
}

/// End-of-discharge times over the capacity grid at a constant current.
pub fn eod_over_capacity(current: f64) -> Vec<f64> {
    let cfg = BatteryConfig::default();
    let load = LoadProfile::constant(cfg.dt, current, 20_000);
    q_grid().iter().map(|p| eod_time(&simulate(p, &load, &cfg).unwrap(), cfg.v_eod).unwrap()).collect()
}

/// Terminal voltages over the resistance grid after `k` steps at 2 A.
pub fn voltage_over_resistance(k: usize) -> Vec<f64> {
    let cfg = BatteryConfig::default();
    let load = LoadProfile::constant(cfg.dt, 2.0, k);
    r_grid().iter().map(|p| *simulate(p, &load, &cfg).unwrap().voltages.last().unwrap()).collect()
}

pub fn increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

pub fn decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] > w[1])
}

pub fn test_trajectories(target: CalibTarget, count: usize, seed: u64) -> Vec<Arc<Trajectory>> {
    let spec = DatasetSpec { target, count, seed, ..Default::default() };
    generate(&spec, &BatteryConfig::default(), 1).unwrap().entries.iter().map(|e| e.trajectory.clone()).collect()
}

/// Per-step costs of holding `action` for a whole episode. Panics if a
/// step's cost is zero without the predicted and true states being equal,
/// or the other way round.
pub fn episode_costs(env: &mut CalibEnv, traj: Arc<Trajectory>, action: &[f64]) -> Vec<f64> {
    env.reset(traj.clone()).unwrap();
    let mut costs = Vec::new();
    while !env.is_done() {
        let t = env.step_index();
        let out = env.step(action).unwrap();
        assert_eq!(out.cost == 0.0, out.state.x_hat == traj.states[t + 1]);
        costs.push(out.cost);
    }
    costs
}

/// Cost is zero for identical states and positive after a one-ulp change
/// to any component, over 1000 random states.
pub fn zero_cost_iff_identical() -> bool {
    let scales = NormScales::default();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    (0..1000).all(|_| {
        let a = BatteryState::from_array(std::array::from_fn(|_| rng.random_range(0.0..3000.0)));
        scales.state_distance(&a, &a) == 0.0
            && (0..BatteryState::DIM).all(|k| {
                let mut v = a.to_array();
                v[k] = f64::from_bits(v[k].to_bits() + 1);
                scales.state_distance(&a, &BatteryState::from_array(v)) > 0.0
            })
    })
}

/// Discounted episode cost of the true-parameter action against 20 random
/// constant actions on each of `trajectories` trajectories per target.
/// Returns `(oracle wins, comparisons)`.
pub fn oracle_against_random(trajectories: usize) -> (usize, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let (mut wins, mut total) = (0, 0);
    for target in [CalibTarget::QMax, CalibTarget::ROhm] {
        let cfg = EnvConfig::for_target(target);
        let mut env = CalibEnv::new(cfg).unwrap();
        for traj in test_trajectories(target, trajectories, 21) {
            let truth = cfg.range.params_to_action(target, &traj.params);
            let oracle = discounted_cost(&episode_costs(&mut env, traj.clone(), &truth), GAMMA);
            for _ in 0..20 {
                let a = [rng.random_range(-1.0..1.0)];
                let other = discounted_cost(&episode_costs(&mut env, traj.clone(), &a), GAMMA);
                wins += usize::from(oracle < other);
                total += 1;
            }
        }
    }
    (wins, total)
}

/// Deterministic 3-state, 2-action MDP. State 2 under action 1 ends the episode.
pub struct Tabular {
    pub next: [[usize; 2]; 3],
    pub cost: [[f64; 2]; 3],
    pub done: [[bool; 2]; 3],
    pub policy: [usize; 3],
}

pub const MDP: Tabular = Tabular {
    next: [[1, 2], [2, 0], [0, 1]],
    cost: [[1.0, 0.5], [0.2, 2.0], [0.0, 0.7]],
    done: [[false, false], [false, false], [false, true]],
    policy: [1, 0, 0],
};

/// Discounted cost-to-go of `(s, a)` by walking the chain.
pub fn brute_force(m: &Tabular, s: usize, a: usize) -> f64 {
    let (mut s, mut a, mut w, mut total) = (s, a, 1.0, 0.0);
    for _ in 0..2000 {
        total += w * m.cost[s][a];
        if m.done[s][a] {
            break;
        }
        s = m.next[s][a];
        a = m.policy[s];
        w *= GAMMA;
    }
    total
}

/// Iterates the critic target to convergence on the table.
pub fn tabular_critic(m: &Tabular) -> [[f64; 2]; 3] {
    let mut table = [[0.0f64; 2]; 3];
    for _ in 0..2000 {
        let mut next = table;
        for s in 0..3 {
            for a in 0..2 {
                let s2 = m.next[s][a];
                next[s][a] = critic_target(m.cost[s][a], m.done[s][a], GAMMA, table[s2][m.policy[s2]]);
            }
        }
        table = next;
    }
    table
}

pub const POLICIES: [[usize; 3]; 3] = [[1, 0, 0], [0, 0, 1], [1, 1, 1]];

/// Largest gap between the iterated critic and the brute-force cost-to-go.
pub fn tabular_error() -> f64 {
    let mut worst: f64 = 0.0;
    for policy in POLICIES {
        let m = Tabular { policy, ..MDP };
        let table = tabular_critic(&m);
        for s in 0..3 {
            for a in 0..2 {
                worst = worst.max((table[s][a] - brute_force(&m, s, a)).abs());
            }
        }
    }
    worst
}

/// A run small enough for tests: a few short trajectories and tiny networks.
pub fn tiny_config(out: &std::path::Path, seed: u64) -> RunConfig {
    let mut c = RunConfig { seed: Some(seed), out_dir: out.to_path_buf(), ..Default::default() };
    c.dataset.count = 10;
    c.dataset.load.cycle_cap_s = 400.0;
    c.lac.total_steps = 600;
    c.lac.warmup_steps = 200;
    c.lac.batch_size = 32;
    c.lac.hidden = vec![16, 16];
    c.baseline.epochs = 3;
    c.baseline.batch_size = 64;
    c.baseline.hidden = vec![16, 16];
    c
}
