use crnosc::dynamics::{
    bistability_probe, find_limit_cycle, flow, integrate, permanence_probe, refine_cycle_newton,
    CycleOptions, CycleSearch, CycleStability, Fate, ProbeOptions, SectionSpec, Tolerance,
};
use crnosc::hopf::hopf_locus_eval;
use crnosc::massaction::MassActionSystem;
use crnosc::models::{builtin_model, ModelId, ModelParams};
use crnosc::netdsl::{parse_network, NetworkSource};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn wh(k1: f64) -> ModelParams {
    ModelParams::Wh {
        k: [k1, 1.0, 1.0, 1.0, 1.0],
    }
}

#[test]
fn wh_stable_cycle_and_refinement() {
    let m = builtin_model(wh(3.5)).unwrap();
    let x_eq = m.equilibrium().unwrap();
    let section = SectionSpec::default_for(&m.system, &x_eq);
    let seed: Vec<f64> = x_eq.iter().map(|v| v * 1.1).collect();
    let opts = CycleOptions::default();
    let found = find_limit_cycle(&m.system, &seed, &section, &opts).unwrap();
    let c = found.cycle().expect("cycle");
    assert_eq!(c.stability, CycleStability::Stable);
    assert!(c.spectral_radius < 1.0);
    assert!(c.residual <= 1e-6, "{}", c.residual);

    let refined =
        refine_cycle_newton(&m.system, &section, &c.section_fixed_point, c.period, &opts).unwrap();
    assert!(refined.residual <= 1e-9, "{}", refined.residual);
    assert!((refined.period - c.period).abs() < 1e-5 * c.period);
    let gap = refined
        .section_fixed_point
        .iter()
        .zip(&c.section_fixed_point)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(gap < 1e-5, "{gap}");
}

#[test]
fn wh_below_threshold_settles() {
    let m = builtin_model(wh(2.0)).unwrap();
    let x_eq = m.equilibrium().unwrap();
    let section = SectionSpec::default_for(&m.system, &x_eq);
    let found = find_limit_cycle(
        &m.system,
        &[0.3, 2.0, 0.7],
        &section,
        &CycleOptions::default(),
    )
    .unwrap();
    assert!(
        matches!(found, CycleSearch::EquilibriumCapture { .. }),
        "{found:?}"
    );

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let x0: Vec<f64> = (0..3).map(|_| rng.random_range(0.05..5.0)).collect();
        let end = flow(&m.system, &x0, 2000.0, Tolerance::default()).unwrap();
        let err = end
            .iter()
            .zip(&x_eq)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-6, "{x0:?} -> {end:?}");
    }
}

#[test]
fn homogenised_models_conserve_mass() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for id in [ModelId::FbH, ModelId::WhH, ModelId::WH] {
        let m = builtin_model(ModelParams::defaults(id)).unwrap();
        let x0: Vec<f64> = (0..4).map(|_| rng.random_range(0.1..3.0)).collect();
        let tr = integrate(&m.system, &x0, 1000.0, Tolerance::default()).unwrap();
        assert!(
            tr.conservation_drift(&[1.0; 4]) <= 1e-9,
            "{id}: {}",
            tr.conservation_drift(&[1.0; 4])
        );
    }
}

#[test]
fn fb_coexistence() {
    let m = builtin_model(ModelParams::FbSlice {
        k6: 0.187,
        k8: 0.0052,
    })
    .unwrap();
    let rep = bistability_probe(&m, &ProbeOptions::default()).unwrap();
    assert_eq!(rep.inner_fate, Fate::Equilibrium);
    assert_eq!(rep.outer_fate, Fate::Cycle);
    let u = rep.unstable_cycle.expect("unstable cycle");
    assert!(u.spectral_radius > 1.0);
    assert!(u.residual <= 1e-9);
    assert!(rep.stable_cycle.unwrap().spectral_radius < 1.0);
}

#[test]
fn whh_coexistence() {
    let m = builtin_model(ModelParams::WhH {
        p: 8.0,
        q: 1.0,
        r: 2.0,
        s: 1.0,
        t: 2.84,
    })
    .unwrap();
    let rep = bistability_probe(&m, &ProbeOptions::default()).unwrap();
    assert_eq!(rep.inner_fate, Fate::Equilibrium);
    assert_eq!(rep.outer_fate, Fate::Cycle);
    let u = rep.unstable_cycle.expect("unstable cycle");
    assert!(u.spectral_radius > 1.0);
    assert!(u.residual <= 1e-9);
    assert!(rep.stable_cycle.unwrap().spectral_radius < 1.0);
}

#[test]
fn whh_permanence_depends_on_total() {
    let m = builtin_model(ModelParams::WhH {
        p: 8.0,
        q: 1.0,
        r: 2.0,
        s: 1.0,
        t: 4.0,
    })
    .unwrap();
    let x_eq = m.equilibrium().unwrap();
    let rep =
        permanence_probe(&m.system, &x_eq, 10, 500.0, 500.0, 1, Tolerance::default()).unwrap();
    assert!(rep.floor > 1e-4, "{}", rep.floor);
    // Total mass 1 < r = 2: no positive equilibrium, x dies out.
    let low: Vec<f64> = vec![0.25; 4];
    let rep = permanence_probe(&m.system, &low, 6, 500.0, 500.0, 1, Tolerance::default()).unwrap();
    assert!(rep.floor < 1e-4, "{}", rep.floor);
}

#[test]
fn linear_decay_matches_exponential() {
    let net = parse_network(&NetworkSource::new("A -> 0 ; k")).unwrap();
    let sys = MassActionSystem::from_kappa(net, vec![1.0]).unwrap();
    let end = flow(&sys, &[1.0], 1.0, Tolerance::default()).unwrap();
    assert!((end[0] - (-1f64).exp()).abs() < 1e-8, "{end:?}");
}

#[test]
fn w_just_past_the_locus_has_a_small_stable_cycle() {
    let (q, r) = (1.0, 1.0);
    let p0 = 2.0 * q * (q + 2.0);
    let params = [p0 * 1.02, p0 * 0.98]
        .into_iter()
        .map(|p| ModelParams::w_from_pqr(p, q, r))
        .find(|pr| hopf_locus_eval(pr).unwrap() < 0.0)
        .expect("unstable side");
    let m = builtin_model(params).unwrap();
    let x_eq = m.equilibrium().unwrap();
    let section = SectionSpec::default_for(&m.system, &x_eq);
    let seed: Vec<f64> = x_eq.iter().map(|v| v * 1.01).collect();
    let found = find_limit_cycle(&m.system, &seed, &section, &CycleOptions::default()).unwrap();
    let c = found.cycle().expect("cycle");
    assert_eq!(c.stability, CycleStability::Stable);
    let amp = c
        .section_fixed_point
        .iter()
        .zip(&x_eq)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(
        amp < 0.5 * x_eq.iter().cloned().fold(0.0, f64::max),
        "{amp}"
    );
}

#[test]
fn wh_is_never_bistable() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut checked = 0;
    for _ in 0..12 {
        let k: [f64; 5] = std::array::from_fn(|_| rng.random_range(0.5..2.0));
        let m = builtin_model(ModelParams::Wh { k }).unwrap();
        if m.equilibrium().is_err() || hopf_locus_eval(&m.params).unwrap() <= 0.0 {
            continue;
        }
        let rep = bistability_probe(&m, &ProbeOptions::default()).unwrap();
        assert!(rep.unstable_cycle.is_none(), "{k:?}");
        assert_eq!(rep.inner_fate, Fate::Equilibrium, "{k:?}");
        checked += 1;
    }
    assert!(checked > 0);
}
