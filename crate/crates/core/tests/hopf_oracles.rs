use approx::assert_relative_eq;
use crnosc::hopf::{
    canonical_derivatives, center_manifold_quadratic, closed_form_l1, first_focal_value,
    focal_value_at, focal_value_at_point, taylor_coefficients, w_first_row, whh_hopf_roots,
    CanonicalTaylorData,
};
use crnosc::lincheck::{self, canonical_transform_with, FrameChoice, Reduction};
use crnosc::models::{builtin_model, ModelParams};
use nalgebra::{DMatrix, Vector3};
use proptest::prelude::*;

fn whh(p: f64, t: f64) -> ModelParams {
    ModelParams::WhH {
        p,
        q: 1.0,
        r: 2.0,
        s: 1.0,
        t,
    }
}

/// Focal value through the quadratic centre manifold, written independently
/// of the closed expression.
fn l1_via_center_manifold(d: &CanonicalTaylorData) -> f64 {
    let c = center_manifold_quadratic(d.omega, d.rho, d.h200, d.h110, d.h020).unwrap();
    let planar = d.f300
        + d.f120
        + d.g030
        + d.g210
        + (d.f110 * (d.f200 + d.f020) - d.g110 * (d.g200 + d.g020) + d.f020 * d.g020
            - d.f200 * d.g200)
            / d.omega;
    planar
        + 3.0 * d.f101 * c.c20
        + d.f101 * c.c02
        + 2.0 * d.f011 * c.c11
        + 2.0 * d.g101 * c.c11
        + d.g011 * c.c20
        + 3.0 * d.g011 * c.c02
}

#[test]
fn w_unit_point_matches_closed_form() {
    let params = ModelParams::w_from_pqr(6.0, 1.0, 1.0);
    let l = focal_value_at(&params, FrameChoice::FirstRow(w_first_row(1.0)))
        .unwrap()
        .l1;
    assert_relative_eq!(l, -47.0 / 1300.0, max_relative = 1e-10);
}

#[test]
fn whh_focal_signs_at_locus_roots() {
    let roots = whh_hopf_roots(8.0, 1.0, 2.0, 1.0);
    let lo = focal_value_at(&whh(8.0, roots[0]), FrameChoice::Balanced)
        .unwrap()
        .l1;
    let hi = focal_value_at(&whh(8.0, roots[1]), FrameChoice::Balanced)
        .unwrap()
        .l1;
    assert!(lo < 0.0, "{lo}");
    assert!(hi > 0.0, "{hi}");
    let ts = 1.0 + 2f64.sqrt();
    let deg = focal_value_at(&whh(3.0 * ts, ts), FrameChoice::Balanced)
        .unwrap()
        .l1;
    assert!(deg.abs() <= 1e-8, "{deg}");
}

#[test]
fn cubic_terms_vanish_and_both_routes_agree() {
    for params in [
        whh(8.0, whh_hopf_roots(8.0, 1.0, 2.0, 1.0)[0]),
        ModelParams::w_from_pqr(16.0, 2.0, 3.0),
    ] {
        let m = builtin_model(params).unwrap();
        let x = m.equilibrium().unwrap();
        let (f, d) = focal_value_at_point(&m.system, &x, FrameChoice::Balanced).unwrap();
        assert_eq!((d.f300, d.f120, d.g210, d.g030), (0.0, 0.0, 0.0, 0.0));
        assert_relative_eq!(f.l1, l1_via_center_manifold(&d), max_relative = 1e-10);
    }
}

#[test]
fn taylor_coefficients_match_finite_differences() {
    let m = builtin_model(whh(8.0, whh_hopf_roots(8.0, 1.0, 2.0, 1.0)[1])).unwrap();
    let x = m.equilibrium().unwrap();
    let sys = &m.system;
    let red = Reduction::for_system(sys, None).unwrap();
    let j = lincheck::reduced_jacobian(sys, &x, None).unwrap();
    let frame = canonical_transform_with(&j, FrameChoice::Balanced).unwrap();
    let exact = canonical_derivatives(sys, &x, &red, &frame.t).unwrap();

    let tinv = frame.t.try_inverse().unwrap();
    let m_map = red.embedding() * DMatrix::from_iterator(3, 3, tinv.iter().copied());
    let a_map = DMatrix::from_iterator(3, 3, frame.t.iter().copied()) * red.projection();
    let g = |xi: &[f64; 3]| -> Vector3<f64> {
        let xv = DMatrix::from_column_slice(3, 1, xi);
        let dx = &m_map * xv;
        let pt: Vec<f64> = (0..x.len()).map(|i| x[i] + dx[(i, 0)]).collect();
        let f = sys.ode_rhs(&pt).unwrap();
        let out = &a_map * DMatrix::from_vec(f.len(), 1, f);
        Vector3::new(out[(0, 0)], out[(1, 0)], out[(2, 0)])
    };
    let h = 1e-3;
    for jj in 0..3 {
        for kk in 0..3 {
            let mut pp = [0.0; 3];
            let mut pm = [0.0; 3];
            let mut mp = [0.0; 3];
            let mut mm = [0.0; 3];
            pp[jj] += h;
            pp[kk] += h;
            pm[jj] += h;
            pm[kk] -= h;
            mp[jj] -= h;
            mp[kk] += h;
            mm[jj] -= h;
            mm[kk] -= h;
            let fd = (g(&pp) - g(&pm) - g(&mp) + g(&mm)) / (4.0 * h * h);
            for out in 0..3 {
                let e = exact.second[out][jj][kk];
                assert!(
                    (fd[out] - e).abs() <= 1e-6 * (1.0 + e.abs()),
                    "{out}{jj}{kk}: {} vs {e}",
                    fd[out]
                );
            }
        }
    }

    let d = taylor_coefficients(sys, &x, &frame, &red).unwrap();
    assert_eq!(d.h110, exact.second[2][0][1]);
}

#[test]
fn rotated_frames_give_the_same_value() {
    let m = builtin_model(ModelParams::w_from_pqr(30.0, 3.0, 2.0)).unwrap();
    let x = m.equilibrium().unwrap();
    let j = lincheck::reduced_jacobian(&m.system, &x, None).unwrap();
    let base = canonical_transform_with(&j, FrameChoice::Balanced).unwrap();
    let l0 = focal_value_at_point(&m.system, &x, FrameChoice::Balanced)
        .unwrap()
        .0
        .l1;
    let v1: Vector3<f64> = base.t.row(0).transpose();
    let v2: Vector3<f64> = base.t.row(1).transpose();
    for (theta, s) in [(0.3, 1.0), (2.0, 1.0), (-1.1, 1.0), (0.7, 2.5), (4.0, 0.1)] {
        let row = (v1 * f64::cos(theta) + v2 * f64::sin(theta)) * s;
        let l = focal_value_at_point(&m.system, &x, FrameChoice::FirstRow(row))
            .unwrap()
            .0
            .l1;
        assert_relative_eq!(l * s * s, l0, max_relative = 1e-8);
    }
}

proptest! {
    #[test]
    fn center_manifold_plug_back(omega in 0.1f64..10.0, rho in -10.0f64..-0.01, h in prop::array::uniform3(-5.0f64..5.0)) {
        let c = center_manifold_quadratic(omega, rho, h[0], h[1], h[2]).unwrap();
        let r1 = omega * c.c11 - 0.5 * (rho * c.c20 + h[0]);
        let r2 = omega * (c.c02 - c.c20) - (rho * c.c11 + h[1]);
        let r3 = -omega * c.c11 - 0.5 * (rho * c.c02 + h[2]);
        let scale = 1.0 + h.iter().map(|v| v.abs()).fold(0.0, f64::max) * (1.0 + 1.0 / rho.abs());
        prop_assert!(r1.abs().max(r2.abs()).max(r3.abs()) <= 1e-12 * scale);
    }

    #[test]
    fn literal_formula_matches_center_manifold_route(
        omega in 0.1f64..5.0,
        rho in -5.0f64..-0.05,
        c in prop::collection::vec(-3.0f64..3.0, 17),
    ) {
        let d = CanonicalTaylorData {
            omega, rho,
            f200: c[0], f110: c[1], f020: c[2], f101: c[3], f011: c[4], f300: c[5], f120: c[6],
            g200: c[7], g110: c[8], g020: c[9], g101: c[10], g011: c[11], g210: c[12], g030: c[13],
            h200: c[14], h110: c[15], h020: c[16],
        };
        let a = first_focal_value(&d).unwrap().l1;
        let b = l1_via_center_manifold(&d);
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn w_pipeline_sign_and_closed_form(q in 0.2f64..5.0, r in 0.2f64..5.0) {
        let p = 2.0 * q * (q + 2.0);
        let params = ModelParams::w_from_pqr(p, q, r);
        let pipe = focal_value_at(&params, FrameChoice::FirstRow(w_first_row(q))).unwrap().l1;
        let closed = closed_form_l1(&params).unwrap().l1;
        prop_assert!(pipe < 0.0);
        prop_assert!((pipe - closed).abs() <= 1e-8 * closed.abs());
    }
}
