use nalgebra::DMatrix;
use proptest::prelude::*;
use riskalloc::model::{
    assemble_closed_loop, check_assumptions, sample_uncertainties_seeded, PlantEnsemble, PlantModel, ProtectionMask,
    UncertaintySpec,
};
use riskalloc::presets;

fn mask_strategy(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, n)
}

fn structured(e: &PlantEnsemble) -> &riskalloc::model::StructuredPlant {
    match &e.model {
        PlantModel::Structured(s) => s,
        PlantModel::ClosedLoop(_) => unreachable!(),
    }
}

proptest! {
    #[test]
    fn attack_channel_is_linear_in_the_mask(
        z1 in mask_strategy(4),
        z2 in mask_strategy(4),
        t in 0.0f64..=1.0,
        delta in 0.0f64..3.0,
    ) {
        let e = presets::four_state_example();
        let s = e.system(&[delta], &ProtectionMask::unprotected(4)).unwrap();
        let mix: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
        let lhs = s.with_mask(&mix).b_cl();
        let rhs = s.with_mask(&z1).b_cl() * t + s.with_mask(&z2).b_cl() * (1.0 - t);
        prop_assert!((lhs - rhs).abs().max() <= 1e-12);
    }

    #[test]
    fn zeroing_a_mask_entry_zeroes_its_column(i in 0usize..6, delta in -1.0f64..0.0) {
        let e = presets::robot_network();
        let full = e.system(&[delta], &ProtectionMask::unprotected(6)).unwrap();
        let cut = e.system(&[delta], &ProtectionMask::protecting(6, &[i])).unwrap();
        let mut expect = full.b_cl();
        expect.column_mut(i).fill(0.0);
        prop_assert_eq!(cut.b_cl(), expect);
        prop_assert_eq!(cut.a, full.a);
    }

    #[test]
    fn samples_stay_in_the_box(seed in any::<u64>(), n in 1usize..200) {
        let spec = UncertaintySpec::interval(0.0, 3.0, 1.5);
        let d = sample_uncertainties_seeded(&spec, n, seed).unwrap();
        prop_assert_eq!(d.len(), n);
        prop_assert!(d.iter().all(|x| spec.contains(x)));
    }
}

#[test]
fn seeded_sampling_is_reproducible() {
    let spec = UncertaintySpec::interval(0.0, 3.0, 1.5);
    let a = sample_uncertainties_seeded(&spec, 3, 7).unwrap();
    let b = sample_uncertainties_seeded(&spec, 3, 7).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, sample_uncertainties_seeded(&spec, 3, 8).unwrap());
}

#[test]
fn nominal_assembly_ignores_the_perturbation_directions() {
    let e = presets::four_state_example();
    let s = structured(&e);
    let mut bare = s.process.clone();
    bare.a_delta.clear();
    let mask = ProtectionMask::unprotected(4);
    let with = assemble_closed_loop(&s.process, &s.controller, &s.detector, &mask, &[0.0]).unwrap();
    let without = assemble_closed_loop(&bare, &s.controller, &s.detector, &mask, &[]).unwrap();
    assert_eq!(with.a, without.a);
    assert_eq!(with.b_cl(), without.b_cl());
}

#[test]
fn perturbation_enters_only_the_plant_block() {
    let e = presets::four_state_example();
    let lo = e.system(&[0.0], &ProtectionMask::unprotected(4)).unwrap();
    let hi = e.system(&[3.0], &ProtectionMask::unprotected(4)).unwrap();
    let diff = &hi.a - &lo.a;
    let mut expect = DMatrix::zeros(8, 8);
    expect[(0, 3)] = 3.0;
    assert!((diff - expect).abs().max() < 1e-12);
}

#[test]
fn both_presets_satisfy_the_standing_assumptions() {
    for e in [presets::four_state_example(), presets::robot_network()] {
        let report = check_assumptions(&e.sample_systems(50, 5).unwrap());
        assert!(report.all_stable(), "{}", e.name);
        assert!(report.samples.iter().all(|s| s.spectral_abscissa < 0.0));
    }
}

#[test]
fn ensembles_round_trip_through_json() {
    for e in [presets::four_state_example(), presets::robot_network()] {
        let text = serde_json::to_string(&e).unwrap();
        let back: PlantEnsemble = serde_json::from_str(&text).unwrap();
        assert_eq!(back, e);
    }
}
