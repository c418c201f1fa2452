mod common;

use battcal::battery::{eod_time, init_state, simulate, step, BatteryConfig, DegradationParams, LoadProfile};
use common::*;
use proptest::prelude::*;

#[test]
fn charge_conserved_over_ten_thousand_steps() {
    let drift = conservation_drift();
    assert!(drift <= 1e-9, "{drift:e}");
}

#[test]
fn zero_load_is_a_fixed_point() {
    assert!(zero_load_fixed_point());
}

#[test]
fn end_of_discharge_grows_with_capacity() {
    for current in [1.0, 2.5, 4.0] {
        let eods = eod_over_capacity(current);
        assert!(increasing(&eods), "{current} A: {eods:?}");
    }
}

#[test]
fn voltage_falls_with_resistance() {
    for k in [1, 10, 100, 1000, 1500] {
        let v = voltage_over_resistance(k);
        assert!(decreasing(&v), "step {k}: {v:?}");
    }
}

#[test]
fn discharge_lasts_over_an_hour_at_one_amp() {
    let cfg = BatteryConfig::default();
    let t = simulate(&DegradationParams::PERFECT, &LoadProfile::constant(cfg.dt, 1.0, 20_000), &cfg).unwrap();
    let eod = eod_time(&t, cfg.v_eod).unwrap();
    assert!(eod > 3600.0, "{eod}");
    let fast = simulate(&DegradationParams::PERFECT, &LoadProfile::constant(cfg.dt, 4.0, 20_000), &cfg).unwrap();
    assert!(eod_time(&fast, cfg.v_eod).unwrap() < eod);
}

proptest! {
    #[test]
    fn any_step_conserves_charge(
        q_max in 5000.0f64..7600.0,
        r_o in 0.117215f64..0.3,
        currents in prop::collection::vec(0.0f64..4.0, 1..200),
    ) {
        let cfg = BatteryConfig::default();
        let p = DegradationParams { q_max, r_o };
        let mut s = init_state(&p, &cfg).unwrap();
        for i in currents {
            let Ok((next, v)) = step(&s, i, &p, &cfg) else { break };
            prop_assert!(v.is_finite() && next.is_finite());
            prop_assert!(((next.total_charge() - s.total_charge()) / q_max).abs() <= 1e-9);
            s = next;
        }
    }
}
