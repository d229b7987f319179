use approx::assert_relative_eq;
use crnosc::lincheck::{
    canonical_transform, classify_equilibrium, competitive_pattern_search, cubic_routh_hurwitz,
    reduced_jacobian, Classification, CubicCoefficients,
};
use crnosc::massaction::{
    detailed_balance_check, find_equilibrium, MassActionSystem, RateAssignment,
};
use crnosc::models::{builtin_model, ModelId, ModelParams};
use crnosc::netdsl::{parse_network, NetworkSource};
use crnosc::network::ReactionNetwork;
use nalgebra::{Complex, Matrix3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn net(text: &str) -> ReactionNetwork {
    parse_network(&NetworkSource::new(text)).unwrap()
}

fn system(id: ModelId, k: &[f64]) -> MassActionSystem {
    MassActionSystem::from_kappa(id.network(), k.to_vec()).unwrap()
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

#[test]
fn right_hand_sides_vanish_where_expected() {
    // κ3 = κ4, κ1 − κ2 = κ5 − κ6 = κ7 − κ8.
    let fb = system(ModelId::Fb, &[2.0, 1.5, 0.7, 0.7, 1.2, 0.7, 3.5, 3.0]);
    assert!(max_abs(&fb.ode_rhs(&[1.0; 3]).unwrap()) < 1e-15);
    let wh = system(ModelId::Wh, &[2.0, 1.0, 1.0, 1.0, 1.0]);
    assert_eq!(wh.ode_rhs(&[1.0; 3]).unwrap(), vec![0.0; 3]);
    let w = system(ModelId::W, &[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(w.ode_rhs(&[0.0; 3]).unwrap(), vec![0.0; 3]);
}

#[test]
fn linear_jacobian_is_constant() {
    let sys =
        MassActionSystem::new(net("A -> B ; k"), &RateAssignment::new().with("k", 2.5)).unwrap();
    for x in [[0.1, 3.0], [4.0, 0.0]] {
        let j = sys.jacobian(&x);
        assert_eq!(
            (j[(0, 0)], j[(0, 1)], j[(1, 0)], j[(1, 1)]),
            (-2.5, 0.0, 2.5, 0.0)
        );
    }
}

#[test]
fn builtin_rates_and_closed_forms() {
    let slice = ModelParams::FbSlice { k6: 1.0, k8: 1.0 };
    assert_eq!(slice.kappa(), vec![1.0, 0.2, 0.2, 0.2, 1.8, 1.0, 1.8, 1.0]);
    assert_eq!(
        builtin_model(ModelParams::defaults(ModelId::W))
            .unwrap()
            .system
            .network()
            .reactions()
            .len(),
        4
    );

    let fbh = builtin_model(ModelParams::FbH {
        k: [1.0; 8],
        t: 2.0,
    })
    .unwrap();
    assert_eq!(fbh.equilibrium().unwrap(), vec![2.0; 4]);
    let whh = builtin_model(ModelParams::WhH {
        p: 8.0,
        q: 1.0,
        r: 2.0,
        s: 1.0,
        t: 1.0,
    })
    .unwrap();
    assert_eq!(whh.equilibrium().unwrap(), vec![1.0, 2.0, 2.0, 18.0]);
    let w = builtin_model(ModelParams::W {
        k: [1.0, 0.5, 1.0, 0.25],
    })
    .unwrap();
    assert_eq!(w.equilibrium().unwrap(), vec![1.0; 3]);
}

#[test]
fn newton_reaches_the_closed_forms() {
    let fbh = builtin_model(ModelParams::FbH {
        k: [1.0; 8],
        t: 2.0,
    })
    .unwrap();
    let x = find_equilibrium(&fbh.system, &[2.3, 1.8, 2.1, 1.8]).unwrap();
    assert!(x.iter().all(|v| (v - 2.0).abs() < 1e-9), "{x:?}");

    let whh = builtin_model(ModelParams::WhH {
        p: 8.0,
        q: 1.0,
        r: 2.0,
        s: 1.0,
        t: 1.0,
    })
    .unwrap();
    let x = find_equilibrium(&whh.system, &[5.0, 5.0, 5.0, 8.0]).unwrap();
    for (a, b) in x.iter().zip([1.0, 2.0, 2.0, 18.0]) {
        assert_relative_eq!(*a, b, max_relative = 1e-9);
    }

    let ab = MassActionSystem::new(
        net("A <-> B ; k1, k2"),
        &RateAssignment::new().with("k1", 1.0).with("k2", 1.0),
    )
    .unwrap();
    let x = find_equilibrium(&ab, &[3.0, 1.0]).unwrap();
    assert_relative_eq!(x[0], 2.0, max_relative = 1e-12);
    assert_relative_eq!(x[1], 2.0, max_relative = 1e-12);
}

#[test]
fn detailed_balance_verdicts() {
    let ones = builtin_model(ModelParams::defaults(ModelId::Fb)).unwrap();
    let rep = detailed_balance_check(&ones.system).unwrap();
    assert!(rep.is_balanced());
    let mut k = [1.0; 8];
    k[0] = 2.0;
    let rep = detailed_balance_check(&system(ModelId::Fb, &k)).unwrap();
    assert!(!rep.is_balanced());

    // κ1κ5κ7 = κ2κ6κ8: balanced, and y*(t) is linear along the branch.
    let k = [2.0, 1.0, 1.3, 0.6, 1.5, 3.0, 1.0, 1.0];
    let ys: Vec<f64> = [0.5, 1.0, 2.0]
        .iter()
        .map(|&t| {
            let m = builtin_model(ModelParams::FbH { k, t }).unwrap();
            assert!(detailed_balance_check(&m.system).unwrap().is_balanced());
            m.equilibrium().unwrap()[1] / t
        })
        .collect();
    assert_relative_eq!(ys[0], ys[1], max_relative = 1e-12);
    assert_relative_eq!(ys[1], ys[2], max_relative = 1e-12);
}

#[test]
fn displayed_reduced_jacobians() {
    let (p, q, r, s, t) = (8.0, 1.0, 2.0, 1.0, 0.7);
    let m = builtin_model(ModelParams::WhH { p, q, r, s, t }).unwrap();
    let j = reduced_jacobian(&m.system, &m.equilibrium().unwrap(), None).unwrap();
    let want = Matrix3::new(-t, -(p + 1.0) * t, -t, 0.0, -q, s, r, 0.0, -s);
    assert!((j - want).norm() < 1e-12, "{j}");

    let (p, q, r) = (5.0, 1.5, 0.8);
    let m = builtin_model(ModelParams::WH { p, q, r, t: 1.0 }).unwrap();
    let j = reduced_jacobian(&m.system, &m.equilibrium().unwrap(), None).unwrap();
    let q2 = q * q;
    let want = Matrix3::new(
        -4.0 * q * r,
        p * r,
        2.0 * q2 * r,
        -2.0 * q2,
        -2.0 * q2,
        -2.0 * q2 * (r + 1.0),
        2.0 * q * r,
        0.0,
        -2.0 * q2 * r,
    );
    assert!((j - want).norm() < 1e-12, "{j}");

    let w = builtin_model(ModelParams::W {
        k: [1.0, 0.5, 1.0, 0.25],
    })
    .unwrap();
    let x = w.equilibrium().unwrap();
    let j = reduced_jacobian(&w.system, &x, None).unwrap();
    let full = w.system.jacobian(&x);
    assert!((0..3).all(|a| (0..3).all(|b| j[(a, b)] == full[(a, b)])));
}

#[test]
fn stability_examples() {
    let ones = builtin_model(ModelParams::defaults(ModelId::Fb)).unwrap();
    assert_eq!(
        classify_equilibrium(&ones.system, &[1.0; 3])
            .unwrap()
            .classification,
        Classification::Stable
    );

    // h(κ6, κ8) < 0 near the origin of the slice.
    let m = builtin_model(ModelParams::FbSlice { k6: 0.05, k8: 0.05 }).unwrap();
    assert_eq!(
        classify_equilibrium(&m.system, &[1.0; 3])
            .unwrap()
            .classification,
        Classification::Unstable
    );

    let m = builtin_model(ModelParams::WhH {
        p: 8.0,
        q: 1.0,
        r: 2.0,
        s: 1.0,
        t: 1.0,
    })
    .unwrap();
    assert_eq!(
        classify_equilibrium(&m.system, &m.equilibrium().unwrap())
            .unwrap()
            .classification,
        Classification::Unstable
    );

    let w = builtin_model(ModelParams::w_from_pqr(6.0, 1.0, 1.0)).unwrap();
    let rep = classify_equilibrium(&w.system, &w.equilibrium().unwrap()).unwrap();
    assert_eq!((rep.cubic.a2, rep.cubic.a1, rep.cubic.a0), (6.0, 4.0, 24.0));
    assert_eq!(rep.classification, Classification::HopfBoundary);
    assert_relative_eq!(rep.hopf_data.unwrap().omega, 2.0, max_relative = 1e-12);
}

#[test]
fn canonical_frame_on_whh_locus() {
    let (p, q, r, s) = (8.0, 1.0, 2.0, 1.0);
    let t = (3.0 - 7f64.sqrt()) / 2.0;
    let m = builtin_model(ModelParams::WhH { p, q, r, s, t }).unwrap();
    let j = reduced_jacobian(&m.system, &m.equilibrium().unwrap(), None).unwrap();
    let f = canonical_transform(&j).unwrap();
    assert_relative_eq!(f.rho, -q - s - t, max_relative = 1e-9);
    assert_relative_eq!(
        f.omega,
        (s * q + q * t + r * t + s * t).sqrt(),
        max_relative = 1e-9
    );
    assert!(f.defect(&j) < 1e-9);
}

fn log_uniform_point(rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..3)
        .map(|_| rng.random_range(-3.0f64..3.0).exp())
        .collect()
}

#[test]
fn competitivity_patterns() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let samples: Vec<Vec<f64>> = (0..200).map(|_| log_uniform_point(&mut rng)).collect();
    let k: Vec<f64> = (0..8).map(|_| rng.random_range(0.1..5.0)).collect();
    let fb = competitive_pattern_search(&system(ModelId::Fb, &k), &samples).unwrap();
    assert_eq!(fb.flips, vec![1, 1, -1]);
    let w =
        competitive_pattern_search(&system(ModelId::W, &[1.0, 2.0, 0.5, 3.0]), &samples).unwrap();
    assert_eq!(w.flips, vec![-1, 1, 1]);
    let diag = MassActionSystem::new(
        net("X -> 2X ; a\nY -> 2Y ; b\nZ -> 2Z ; c"),
        &RateAssignment::new()
            .with("a", 1.0)
            .with("b", 1.0)
            .with("c", 1.0),
    )
    .unwrap();
    assert_eq!(
        competitive_pattern_search(&diag, &samples).unwrap().flips,
        vec![1, 1, 1]
    );
}

fn real_part_class(roots: &[Complex<f64>; 3]) -> Classification {
    if roots.iter().all(|z| z.re < 0.0) {
        Classification::Stable
    } else {
        Classification::Unstable
    }
}

proptest! {
    #[test]
    fn classification_agrees_with_roots(
        a in -3.0f64..3.0, b in 0.05f64..3.0, c in -3.0f64..3.0,
    ) {
        // Roots c and a ± ib.
        let roots = [Complex::new(c, 0.0), Complex::new(a, b), Complex::new(a, -b)];
        let cubic = CubicCoefficients::from_roots(roots);
        let class = cubic_routh_hurwitz(&cubic);
        let margin = a.abs().min(c.abs());
        prop_assume!(margin > 1e-3);
        prop_assert_eq!(class, real_part_class(&roots));
    }

    #[test]
    fn hopf_boundary_from_imaginary_pair(w in 0.1f64..5.0, rho in -5.0f64..-0.05) {
        let cubic = CubicCoefficients::from_roots([Complex::new(rho, 0.0), Complex::new(0.0, w), Complex::new(0.0, -w)]);
        prop_assert_eq!(cubic_routh_hurwitz(&cubic), Classification::HopfBoundary);
    }

    #[test]
    fn jacobian_matches_finite_differences(
        k in prop::collection::vec(0.1f64..5.0, 8),
        x in prop::collection::vec(0.2f64..4.0, 3),
    ) {
        for (id, m) in [(ModelId::Fb, 8), (ModelId::Wh, 5), (ModelId::W, 4)] {
            let sys = system(id, &k[..m]);
            let j = sys.jacobian(&x);
            for col in 0..3 {
                let h = 1e-6 * x[col];
                let mut up = x.clone();
                let mut dn = x.clone();
                up[col] += h;
                dn[col] -= h;
                let (fu, fd) = (sys.ode_rhs(&up).unwrap(), sys.ode_rhs(&dn).unwrap());
                for row in 0..3 {
                    let fdv = (fu[row] - fd[row]) / (2.0 * h);
                    prop_assert!((fdv - j[(row, col)]).abs() <= 1e-6 * (1.0 + j[(row, col)].abs()), "{} {} {}", id, row, col);
                }
            }
        }
    }

    #[test]
    fn closed_forms_are_equilibria(k in prop::collection::vec(0.1f64..10.0, 9)) {
        let kk: [f64; 8] = k[..8].try_into().unwrap();
        for params in [
            ModelParams::Fb { k: kk },
            ModelParams::FbH { k: kk, t: k[8] },
            ModelParams::W { k: [k[0], k[1], k[2], k[3]] },
            ModelParams::WhH { p: k[0], q: k[1], r: k[2], s: k[3], t: k[4] },
            ModelParams::WH { p: k[0], q: k[1], r: k[2], t: k[3] },
        ] {
            let m = builtin_model(params).unwrap();
            let x = m.equilibrium().unwrap();
            prop_assert!(x.iter().all(|v| *v > 0.0));
            prop_assert!(m.system.relative_residual(&x) <= 1e-12, "{:?}", params);
        }
    }
}
