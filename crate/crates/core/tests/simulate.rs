use proptest::prelude::*;
use riskalloc::model::ProtectionMask;
use riskalloc::presets;
use riskalloc::simulate::{simulate, simulate_ensemble, AttackSignal, SimulationSettings};

fn settings(dt: f64, horizon: f64) -> SimulationSettings {
    SimulationSettings { stride: 100, keep_states: false, ..SimulationSettings::new(dt, horizon) }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn protected_channel_content_is_irrelevant(
        channel in 0usize..4,
        a in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 4), 11),
        noise in prop::collection::vec(-5.0f64..5.0, 11),
        delta in 0.0f64..3.0,
    ) {
        let sys = presets::four_state_example().system(&[delta], &ProtectionMask::protecting(4, &[channel])).unwrap();
        let mut b = a.clone();
        for (row, n) in b.iter_mut().zip(&noise) {
            row[channel] = *n;
        }
        let s = settings(1e-2, 5.0);
        let ra = simulate(&sys, &AttackSignal::custom(0.5, a).unwrap(), &s).unwrap();
        let rb = simulate(&sys, &AttackSignal::custom(0.5, b).unwrap(), &s).unwrap();
        prop_assert_eq!(ra.perf_energy, rb.perf_energy);
        prop_assert_eq!(ra.det_energy, rb.det_energy);
    }
}

#[test]
fn halving_the_step_barely_moves_the_energies() {
    let ens = presets::four_state_example();
    for delta in [0.0, 1.5, 2.9] {
        let sys = ens.system(&[delta], &ProtectionMask::protecting(4, &[1, 3])).unwrap();
        let coarse = simulate(&sys, &AttackSignal::step(4), &settings(1e-2, 20.0)).unwrap();
        let fine = simulate(&sys, &AttackSignal::step(4), &settings(5e-3, 20.0)).unwrap();
        for (c, f) in [
            (coarse.final_perf_energy(), fine.final_perf_energy()),
            (coarse.final_det_energy(), fine.final_det_energy()),
        ] {
            assert!((c - f).abs() <= 0.01 * f, "delta {delta}: {c} vs {f}");
        }
    }
}

#[test]
fn longer_horizons_accumulate_more_energy() {
    let sys = presets::robot_network().nominal_system(&ProtectionMask::protecting(6, &[0, 1, 2])).unwrap();
    let e: Vec<(f64, f64)> = [1.0, 2.0, 4.0]
        .iter()
        .map(|&t| {
            let r = simulate(&sys, &AttackSignal::step(6), &settings(1e-3, t)).unwrap();
            (r.final_perf_energy(), r.final_det_energy())
        })
        .collect();
    for w in e.windows(2) {
        assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1, "{e:?}");
    }
}

#[test]
fn ensemble_runs_keep_sample_order() {
    let systems = presets::four_state_example().sample_systems(6, 2).unwrap();
    let runs = simulate_ensemble(&systems, &AttackSignal::step(4), &settings(1e-2, 2.0)).unwrap();
    let ids: Vec<_> = runs.iter().map(|r| r.sample_id).collect();
    assert_eq!(ids, (0..6).map(Some).collect::<Vec<_>>());
    for r in &runs {
        assert!(r.perf_energy.windows(2).all(|w| w[1] >= w[0]));
        assert_eq!(*r.t.last().unwrap(), 2.0);
        assert!(r.states.is_empty());
    }
}

#[test]
fn stored_trajectory_follows_the_stride() {
    let sys = presets::four_state_example().nominal_system(&ProtectionMask::unprotected(4)).unwrap();
    let s = SimulationSettings { stride: 10, ..SimulationSettings::new(1e-2, 1.0) };
    let r = simulate(&sys, &AttackSignal::step(4), &s).unwrap();
    assert_eq!(r.t.len(), 11);
    assert_eq!(r.states.len(), 11);
    assert_eq!(r.states[0].len(), 8);
    assert_eq!(r.y_p[0], vec![0.0]);
}

#[test]
fn runs_serialize() {
    let sys = presets::four_state_example().nominal_system(&ProtectionMask::unprotected(4)).unwrap();
    let r = simulate(&sys, &AttackSignal::step(4), &settings(1e-2, 1.0)).unwrap();
    let back: riskalloc::simulate::SimulationRun = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(back, r);
}
