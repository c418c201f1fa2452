use std::sync::Arc;

use battcal::baseline::{build_labeled_dataset, train_supervised, BaselineConfig, Regressor};
use battcal::battery::{BatteryConfig, Trajectory};
use battcal::dataset::{generate, load_profile, trajectory_from_seed, DatasetSpec, LoadGenConfig, Split};
use battcal::env::{CalibEnv, CalibRange, CalibTarget, EnvConfig, MdpState, NormScales};
use battcal::lac::{LacAgent, LacConfig, TrainingLog};
use proptest::prelude::*;

fn short_spec(target: CalibTarget, seed: u64) -> DatasetSpec {
    let mut spec = DatasetSpec { target, count: 8, seed, ..Default::default() };
    spec.load.cycle_cap_s = 500.0;
    spec
}

fn train_set(target: CalibTarget) -> Vec<Arc<Trajectory>> {
    generate(&short_spec(target, 3), &BatteryConfig::default(), 1).unwrap().trajectories(Split::Train)
}

fn train_agent(seed: u64) -> (LacAgent<f32>, TrainingLog) {
    let cfg = LacConfig { hidden: vec![16, 16], batch_size: 32, total_steps: 1500, warmup_steps: 300, ..Default::default() };
    let mut agent = LacAgent::new(MdpState::OBS_DIM, 1, cfg, seed).unwrap();
    let mut env = CalibEnv::new(EnvConfig::for_target(CalibTarget::QMax)).unwrap();
    let log = agent.train(&mut env, &train_set(CalibTarget::QMax)).unwrap();
    (agent, log)
}

#[test]
fn same_seed_same_training_run() {
    let (a, log_a) = train_agent(17);
    let (b, log_b) = train_agent(17);
    assert_eq!(log_a, log_b);
    assert!(!log_a.updates.is_empty());
    assert_eq!(a.actor, b.actor);
    assert_eq!(a.critic, b.critic);
    assert_eq!(a.multipliers, b.multipliers);
    let (c, log_c) = train_agent(18);
    assert_ne!(log_a, log_c);
    assert_ne!(a.actor, c.actor);
}

#[test]
fn same_seed_same_regressor() {
    let set = build_labeled_dataset(&train_set(CalibTarget::ROhm), CalibTarget::ROhm, &CalibRange::default(), &NormScales::default());
    let cfg = BaselineConfig { epochs: 2, hidden: vec![16, 16], ..Default::default() };
    let fit = |seed| {
        let mut reg = Regressor::<f32>::new(&cfg, CalibTarget::ROhm, CalibRange::default(), seed);
        let (hist, opt) = train_supervised(&mut reg, &set, &cfg, seed).unwrap();
        (reg.net, hist, opt)
    };
    let (net_a, hist_a, opt_a) = fit(5);
    let (net_b, hist_b, opt_b) = fit(5);
    assert_eq!(net_a, net_b);
    assert_eq!(hist_a, hist_b);
    assert_eq!(opt_a, opt_b);
    assert_ne!(fit(6).0, net_a);
}

#[test]
fn same_seed_same_dataset() {
    for target in [CalibTarget::QMax, CalibTarget::ROhm] {
        let battery = BatteryConfig::default();
        let a = generate(&short_spec(target, 9), &battery, 1).unwrap();
        assert_eq!(a, generate(&short_spec(target, 9), &battery, 4).unwrap());
        assert_ne!(a.entries, generate(&short_spec(target, 10), &battery, 1).unwrap().entries);
    }
}

#[test]
fn different_load_seeds_give_different_profiles() {
    let gen = LoadGenConfig::default();
    for k in 0..100u64 {
        let (a, b) = (load_profile(&gen, 1.0, 2 * k), load_profile(&gen, 1.0, 2 * k + 1));
        assert_ne!(a.currents, b.currents, "pair {k}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn every_trajectory_replays_from_its_seed(master in any::<u64>(), q in any::<bool>()) {
        let target = if q { CalibTarget::QMax } else { CalibTarget::ROhm };
        let spec = short_spec(target, master);
        let battery = BatteryConfig::default();
        let ds = generate(&spec, &battery, 2).unwrap();
        prop_assert_eq!(ds.split(Split::Train).count(), spec.train_count());
        for e in &ds.entries {
            prop_assert_eq!(&trajectory_from_seed(&spec, &battery, e.seed).unwrap(), e.trajectory.as_ref());
        }
    }
}
