use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskalloc::allocation::{
    allocate, allocate_cvar_sdp, allocate_nominal, allocate_worst_case, exhaustive_search, greedy_search,
    lifted_rank_one, round_allocation, AllocationMethod, AllocationProblem,
};
use riskalloc::impact::{ImpactBudget, ImpactKind};
use riskalloc::linalg;
use riskalloc::model::ClosedLoopSystem;
use riskalloc::risk::RiskConfig;
use riskalloc::Error;

/// Random stable loop with `n_u` attack channels and `n` sampled perturbations
/// of one entry.
fn synthetic(seed: u64, n_x: usize, n_u: usize, n: usize) -> (Vec<ClosedLoopSystem>, ClosedLoopSystem) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rand_mat = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0));
    let m = rand_mat(n_x, n_x);
    let shift = linalg::spectral_abscissa(&m) + 1.5;
    let a = m - DMatrix::identity(n_x, n_x) * shift;
    let b = rand_mat(n_x, n_u);
    let c_p = rand_mat(1, n_x);
    let c_r = rand_mat(1, n_x);
    let mut e = DMatrix::zeros(n_x, n_x);
    e[(0, n_x - 1)] = 1.0;
    let build = |d: f64, id: Option<usize>| ClosedLoopSystem {
        a: &a + &e * d,
        b_attack: b.clone(),
        c_p: c_p.clone(),
        c_r: c_r.clone(),
        z: vec![1.0; n_u],
        delta: vec![d],
        sample_id: id,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let systems = (0..n).map(|i| build(rng.gen_range(-0.5..0.5), Some(i))).collect();
    (systems, build(0.0, None))
}

fn problem(seed: u64, n_u: usize, n_w: usize, n: usize) -> AllocationProblem {
    let (systems, nominal) = synthetic(seed, 3, n_u, n);
    AllocationProblem::new(systems, n_w, ImpactBudget::new(1.0, 10.0).unwrap(), RiskConfig::cvar(0.7))
        .with_nominal(nominal)
}

#[test]
fn relaxed_vectors_satisfy_the_box_and_budget() {
    for seed in 0..6 {
        let n_u = 3 + (seed as usize % 2);
        let p = problem(seed, n_u, 1 + seed as usize % 2, 8);
        for r in [allocate_cvar_sdp(&p).unwrap(), allocate_worst_case(&p).unwrap(), allocate_nominal(&p).unwrap()] {
            let z = r.z_relaxed.unwrap();
            assert!(z.iter().all(|&v| (-1e-6..=1.0 + 1e-6).contains(&v)), "{z:?}");
            assert!(z.iter().sum::<f64>() >= (n_u - p.n_w) as f64 - 1e-6);
            assert_eq!(r.protected.len(), p.n_w);
            if lifted_rank_one(&z, r.z_matrix.as_ref().unwrap(), 1e-6) {
                assert!(z.iter().all(|&v| v.min(1.0 - v).abs() <= 1e-6), "rank one but fractional: {z:?}");
            }
        }
    }
}

#[test]
fn exhaustive_is_never_beaten() {
    for seed in 10..14 {
        let p = problem(seed, 3, 2, 10);
        let best = exhaustive_search(&p).unwrap();
        let greedy = greedy_search(&p).unwrap();
        assert!(best.risk <= greedy.risk + 1e-9, "seed {seed}");
        let sdp = allocate_cvar_sdp(&p).unwrap();
        let rescored = p.evaluate(&sdp.protected, p.impact, &p.risk).unwrap();
        assert!(best.risk <= rescored.risk + 1e-9, "seed {seed}");
        assert_eq!(best.scored.len(), 3);
        let min = best.scored.iter().map(|s| s.risk).fold(f64::INFINITY, f64::min);
        assert_eq!(min, best.risk);
    }
}

#[test]
fn single_protection_greedy_equals_exhaustive() {
    for seed in 20..23 {
        let p = problem(seed, 4, 1, 6);
        assert_eq!(greedy_search(&p).unwrap().protected, exhaustive_search(&p).unwrap().protected);
    }
}

#[test]
fn worst_case_on_one_sample_is_nominal_at_that_sample() {
    for seed in 30..33 {
        let (systems, _) = synthetic(seed, 3, 4, 1);
        let p =
            AllocationProblem::new(systems.clone(), 2, ImpactBudget::new(1.0, 10.0).unwrap(), RiskConfig::cvar(0.5))
                .with_nominal(systems[0].clone());
        let worst = allocate_worst_case(&p).unwrap();
        let nominal = allocate_nominal(&p).unwrap();
        assert_eq!(worst.protected, nominal.protected);
        assert!((worst.risk - nominal.risk).abs() <= 1e-9 * (1.0 + worst.risk));
    }
}

#[test]
fn degenerate_nominal_ensemble_matches_nominal_allocation() {
    let (_, nominal) = synthetic(40, 3, 4, 1);
    let p =
        AllocationProblem::new(vec![nominal.clone()], 2, ImpactBudget::new(1.0, 10.0).unwrap(), RiskConfig::cvar(0.3))
            .with_nominal(nominal);
    assert_eq!(allocate_cvar_sdp(&p).unwrap().protected, allocate_nominal(&p).unwrap().protected);
}

#[test]
fn empty_budget_protects_nothing() {
    let p = problem(50, 3, 0, 5);
    for m in AllocationMethod::ALL {
        let r = allocate(&p, m).unwrap();
        assert!(r.protected.is_empty(), "{m:?}");
    }
}

#[test]
fn full_budget_protects_everything_at_zero_risk() {
    let p = problem(51, 3, 3, 5);
    for m in AllocationMethod::ALL {
        let r = allocate(&p, m).unwrap();
        assert_eq!(r.protected, vec![0, 1, 2], "{m:?}");
        assert_eq!(r.risk, 0.0);
    }
    assert_eq!(exhaustive_search(&p).unwrap().scored.len(), 1);
}

#[test]
fn exact_impact_search_is_selectable() {
    let p = problem(52, 3, 1, 5).with_impact(ImpactKind::Exact);
    let r = exhaustive_search(&p).unwrap();
    assert_eq!(r.impact, ImpactKind::Exact);
    let relaxed = p.evaluate(&r.protected, ImpactKind::Relaxed, &p.risk).unwrap();
    assert!(relaxed.risk >= r.risk - 1e-6 * (1.0 + r.risk));
}

#[test]
fn oversized_search_is_refused() {
    let mut p = problem(53, 4, 2, 2);
    p.search_cap = 5;
    assert!(matches!(exhaustive_search(&p), Err(Error::SearchTooLarge { subsets: 6, cap: 5 })));
}

#[test]
fn rounding_takes_the_sorted_prefix() {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    for _ in 0..200 {
        let n = rng.gen_range(1..9);
        let z: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let k = rng.gen_range(0..=n);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| z[a].partial_cmp(&z[b]).unwrap());
        let mut expect = order[..k].to_vec();
        expect.sort_unstable();
        assert_eq!(round_allocation(&z, k).protected(), expect);
    }
    assert_eq!(round_allocation(&[1.0, 0.0, 1.0, 0.0], 2).protected(), vec![1, 3]);
}

#[test]
fn mismatched_budget_is_rejected() {
    let p = problem(61, 3, 4, 2);
    assert!(matches!(allocate_cvar_sdp(&p), Err(Error::Config(_))));
}
