//! Andronov–Hopf analysis: canonical Taylor coefficients, the first focal
//! value on the centre manifold, closed-form loci and two-parameter scans.

use nalgebra::{DMatrix, Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lincheck::{
    self, CanonicalFrame, Classification, FrameChoice, Reduction, StabilityError,
};
use crate::massaction::MassActionSystem;
use crate::models::{builtin_model, ModelError, ModelId, ModelParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HopfError {
    #[error("|ρ| = {0:e} is too small for the focal value formula")]
    RhoTooSmall(f64),
    #[error("centre manifold system is singular")]
    Singular,
    #[error("frame does not conjugate the reduced Jacobian to canonical form (defect {0:e})")]
    FrameMismatch(f64),
    #[error("equilibrium is {class:?}, not on the Hopf boundary (a2·a1 − a0 = {gap:e})")]
    NotOnBoundary { class: Classification, gap: f64 },
    #[error("no closed form for model {0}")]
    Unsupported(ModelId),
    #[error("root count disagrees with discriminant (threshold says {threshold}, discriminant says {discriminant})")]
    InconsistentRootCount { threshold: u8, discriminant: u8 },
    #[error("scan grid is empty or has zero area")]
    EmptyGrid,
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Coefficients of the canonical system
/// `ẋ = −ωy + ½f₂ + ⅙f₃`, `ẏ = ωx + ½g₂ + ⅙g₃`, `ż = ρz + ½h₂`,
/// where each `f_ijk` is the partial derivative `∂^{i+j+k}/∂x^i∂y^j∂z^k`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CanonicalTaylorData {
    pub omega: f64,
    pub rho: f64,
    pub f200: f64,
    pub f110: f64,
    pub f020: f64,
    pub f101: f64,
    pub f011: f64,
    pub f300: f64,
    pub f120: f64,
    pub g200: f64,
    pub g110: f64,
    pub g020: f64,
    pub g101: f64,
    pub g011: f64,
    pub g210: f64,
    pub g030: f64,
    pub h200: f64,
    pub h110: f64,
    pub h020: f64,
}

/// Full second and third derivative tensors of the canonical right-hand side.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalDerivatives {
    /// `second[a][j][k] = ∂²F_a/∂ξ_j∂ξ_k`
    pub second: [[[f64; 3]; 3]; 3],
    /// `third[a][j][k][l] = ∂³F_a/∂ξ_j∂ξ_k∂ξ_l`
    pub third: [[[[f64; 3]; 3]; 3]; 3],
}

impl CanonicalDerivatives {
    pub fn taylor_data(&self, omega: f64, rho: f64) -> CanonicalTaylorData {
        let s = &self.second;
        let t = &self.third;
        let (x, y, z) = (0, 1, 2);
        CanonicalTaylorData {
            omega,
            rho,
            f200: s[0][x][x],
            f110: s[0][x][y],
            f020: s[0][y][y],
            f101: s[0][x][z],
            f011: s[0][y][z],
            f300: t[0][x][x][x],
            f120: t[0][x][y][y],
            g200: s[1][x][x],
            g110: s[1][x][y],
            g020: s[1][y][y],
            g101: s[1][x][z],
            g011: s[1][y][z],
            g210: t[1][x][x][y],
            g030: t[1][y][y][y],
            h200: s[2][x][x],
            h110: s[2][x][y],
            h020: s[2][y][y],
        }
    }
}

fn beta(n: usize, idx: &[usize]) -> Vec<u32> {
    let mut b = vec![0u32; n];
    for &i in idx {
        b[i] += 1;
    }
    b
}

/// Derivatives of `ξ ↦ T·P·f(x* + E·T⁻¹ξ)` at `ξ = 0`, computed exactly from
/// the monomials of the mass-action right-hand side.
pub fn canonical_derivatives(
    sys: &MassActionSystem,
    x_eq: &[f64],
    red: &Reduction,
    t: &Matrix3<f64>,
) -> Result<CanonicalDerivatives, HopfError> {
    let n = sys.dim();
    let tinv = t
        .try_inverse()
        .ok_or(HopfError::FrameMismatch(f64::INFINITY))?;
    let tinv = DMatrix::from_iterator(3, 3, tinv.iter().copied());
    let tm = DMatrix::from_iterator(3, 3, t.iter().copied());
    let m = red.embedding() * tinv; // n × 3
    let a = tm * red.projection(); // 3 × n

    let mut h2 = vec![vec![vec![0.0; n]; n]; n];
    let mut h3 = vec![vec![vec![vec![0.0; n]; n]; n]; n];
    for i in 0..n {
        for l in 0..n {
            for k in l..n {
                let v = sys.rhs_derivative(i, &beta(n, &[l, k]), x_eq);
                h2[i][l][k] = v;
                h2[i][k][l] = v;
                for q in k..n {
                    let w = sys.rhs_derivative(i, &beta(n, &[l, k, q]), x_eq);
                    for p in permutations3(l, k, q) {
                        h3[i][p[0]][p[1]][p[2]] = w;
                    }
                }
            }
        }
    }

    // Contract each input slot with M, then the output with A.
    let mut second = [[[0.0; 3]; 3]; 3];
    let mut third = [[[[0.0; 3]; 3]; 3]; 3];
    for i in 0..n {
        let mut s2 = [[0.0; 3]; 3];
        for j in 0..3 {
            for k in 0..3 {
                let mut acc = 0.0;
                for l in 0..n {
                    for q in 0..n {
                        acc += h2[i][l][q] * m[(l, j)] * m[(q, k)];
                    }
                }
                s2[j][k] = acc;
            }
        }
        let mut s3 = [[[0.0; 3]; 3]; 3];
        if h3[i].iter().flatten().flatten().any(|v| *v != 0.0) {
            for j in 0..3 {
                for k in 0..3 {
                    for r in 0..3 {
                        let mut acc = 0.0;
                        for l in 0..n {
                            for q in 0..n {
                                for u in 0..n {
                                    acc += h3[i][l][q][u] * m[(l, j)] * m[(q, k)] * m[(u, r)];
                                }
                            }
                        }
                        s3[j][k][r] = acc;
                    }
                }
            }
        }
        for out in 0..3 {
            let w = a[(out, i)];
            if w == 0.0 {
                continue;
            }
            for j in 0..3 {
                for k in 0..3 {
                    second[out][j][k] += w * s2[j][k];
                    for r in 0..3 {
                        third[out][j][k][r] += w * s3[j][k][r];
                    }
                }
            }
        }
    }
    Ok(CanonicalDerivatives { second, third })
}

fn permutations3(a: usize, b: usize, c: usize) -> [[usize; 3]; 6] {
    [
        [a, b, c],
        [a, c, b],
        [b, a, c],
        [b, c, a],
        [c, a, b],
        [c, b, a],
    ]
}

pub fn taylor_coefficients(
    sys: &MassActionSystem,
    x_eq: &[f64],
    frame: &CanonicalFrame,
    red: &Reduction,
) -> Result<CanonicalTaylorData, HopfError> {
    let j = red.projection() * sys.jacobian(x_eq) * red.embedding();
    let j = Matrix3::from_iterator(j.iter().copied());
    let defect = frame.defect(&j);
    if !(defect <= 1e-8 * j.norm()) {
        return Err(HopfError::FrameMismatch(defect));
    }
    let d = canonical_derivatives(sys, x_eq, red, &frame.t)?;
    Ok(d.taylor_data(frame.omega, frame.rho))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterManifoldQuad {
    pub c20: f64,
    pub c11: f64,
    pub c02: f64,
}

/// Quadratic centre manifold `z = ½(c20 x² + 2 c11 xy + c02 y²)`.
pub fn center_manifold_quadratic(
    omega: f64,
    rho: f64,
    h200: f64,
    h110: f64,
    h020: f64,
) -> Result<CenterManifoldQuad, HopfError> {
    // Unknowns (c20, c11, c02).
    let a = Matrix3::new(
        -0.5 * rho,
        omega,
        0.0,
        -omega,
        -rho,
        omega,
        0.0,
        -omega,
        -0.5 * rho,
    );
    let b = Vector3::new(0.5 * h200, h110, 0.5 * h020);
    let c = a.lu().solve(&b).ok_or(HopfError::Singular)?;
    if !c.iter().all(|v| v.is_finite()) {
        return Err(HopfError::Singular);
    }
    Ok(CenterManifoldQuad {
        c20: c[0],
        c11: c[1],
        c02: c[2],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Pipeline,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FocalValue {
    pub l1: f64,
    pub provenance: Provenance,
}

pub fn first_focal_value(d: &CanonicalTaylorData) -> Result<FocalValue, HopfError> {
    let (w, r) = (d.omega, d.rho);
    if !(r.abs() >= 1e-8) {
        return Err(HopfError::RhoTooSmall(r));
    }
    let den = r * r + 4.0 * w * w;
    let l1 = d.f300
        + d.f120
        + d.g030
        + d.g210
        + (d.f110 * (d.f200 + d.f020) - d.g110 * (d.g200 + d.g020) + d.f020 * d.g020
            - d.f200 * d.g200)
            / w
        - d.h200 / (r * den)
            * ((3.0 * r * r + 8.0 * w * w) * d.f101 - 2.0 * r * w * d.f011 - 2.0 * r * w * d.g101
                + (r * r + 8.0 * w * w) * d.g011)
        - 2.0 * d.h110 / den * (2.0 * w * d.f101 + r * d.f011 + r * d.g101 - 2.0 * w * d.g011)
        - d.h020 / (r * den)
            * ((r * r + 8.0 * w * w) * d.f101
                + 2.0 * r * w * d.f011
                + 2.0 * r * w * d.g101
                + (3.0 * r * r + 8.0 * w * w) * d.g011);
    Ok(FocalValue {
        l1,
        provenance: Provenance::Pipeline,
    })
}

/// Reduced Jacobian → canonical frame → Taylor data → `L1` at an equilibrium
/// on the Hopf boundary.
pub fn focal_value_at_point(
    sys: &MassActionSystem,
    x_eq: &[f64],
    choice: FrameChoice,
) -> Result<(FocalValue, CanonicalTaylorData), HopfError> {
    let report = lincheck::classify_equilibrium(sys, x_eq)?;
    if report.classification != Classification::HopfBoundary {
        return Err(HopfError::NotOnBoundary {
            class: report.classification,
            gap: report.hurwitz_gap,
        });
    }
    let red = Reduction::for_system(sys, None)?;
    let j = report.jacobian();
    let frame = lincheck::canonical_transform_with(&j, choice)?;
    let data = taylor_coefficients(sys, x_eq, &frame, &red)?;
    Ok((first_focal_value(&data)?, data))
}

/// Focal value of a builtin model at its own branch equilibrium.
pub fn focal_value_at(params: &ModelParams, choice: FrameChoice) -> Result<FocalValue, HopfError> {
    let m = builtin_model(*params)?;
    let x = m.equilibrium()?;
    Ok(focal_value_at_point(&m.system, &x, choice)?.0)
}

/// First row `(0, p, −2q²)` of the `w` transformation at `p = 2q(q+2)`.
pub fn w_first_row(q: f64) -> Vector3<f64> {
    let p = 2.0 * q * (q + 2.0);
    Vector3::new(0.0, p, -2.0 * q * q)
}

/// Hopf polynomial on the `(κ6, κ8)` slice of `fb`.
pub fn fb_h(k6: f64, k8: f64) -> f64 {
    50.0 * k6 * k6 * k8
        + 100.0 * k6 * k8 * k8
        + 55.0 * k6 * k6
        + 260.0 * k6 * k8
        + 50.0 * k8 * k8
        + 128.0 * k6
        + 40.0 * k8
        - 26.0
}

pub fn whh_h(p: f64, q: f64, r: f64, s: f64, t: f64) -> f64 {
    (q + r + s) * t * t + ((q + s) * (q + s) - p * r * s) * t + q * s * (q + s)
}

/// Critical `p` of `w-h`, if `r > 1` and `q < r(r−1)`.
pub fn wh_critical_p(q: f64, r: f64) -> Option<f64> {
    let den = r * (r - 1.0) - q;
    (r > 1.0 && den > 0.0).then(|| 2.0 * q * (q + 2.0) * (r * r + (q + 2.0) * r + q) / den)
}

/// Signed locus function: zero on the Hopf boundary, positive on the stable side.
pub fn hopf_locus_eval(params: &ModelParams) -> Result<f64, HopfError> {
    match *params {
        ModelParams::FbSlice { k6, k8 } => Ok(fb_h(k6, k8)),
        ModelParams::Wh { k } => Ok((k[2] + k[4]) - (k[0] - k[3])),
        ModelParams::WhH { p, q, r, s, t } => Ok(whh_h(p, q, r, s, t)),
        ModelParams::W { k } => Ok(4.0 * (k[3] + (2.0 * k[1] * k[3]).sqrt()) - k[2]),
        ModelParams::WH { p, q, r, .. } => {
            Ok(wh_critical_p(q, r).map_or(f64::INFINITY, |pc| pc - p))
        }
        ModelParams::Fb { .. } | ModelParams::FbH { .. } => {
            Err(HopfError::Unsupported(params.id()))
        }
    }
}

/// Closed-form focal value: the `wh-h` expression is only defined up to
/// a positive factor; the `w` expression is exact in the `(p, q, r)` scaling.
pub fn closed_form_l1(params: &ModelParams) -> Result<FocalValue, HopfError> {
    let l1 = match *params {
        ModelParams::WhH { q, r, s, t, .. } => {
            let a = q + r + s;
            a * t * t - (q + s) * a * t - 2.0 * q * s * (q + s)
        }
        ModelParams::W { k } => {
            let q = (2.0 * k[3] / k[1]).sqrt();
            let r = k[2] / k[0];
            let q2 = q * q;
            let num = r * r * (3.0 * q2 * q2 + 11.0 * q2 * q + 17.0 * q2 + 12.0 * q + 4.0);
            let a = q2 + 5.0 * q + 4.0;
            -num / (q2 * a * a * (q2 + 8.0 * q + 4.0))
        }
        _ => return Err(HopfError::Unsupported(params.id())),
    };
    Ok(FocalValue {
        l1,
        provenance: Provenance::ClosedForm,
    })
}

/// Positive `t` on the Hopf locus of `wh-h`, ascending.
pub fn whh_hopf_roots(p: f64, q: f64, r: f64, s: f64) -> Vec<f64> {
    let a = q + r + s;
    let b = (q + s) * (q + s) - p * r * s;
    let c = q * s * (q + s);
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 || b >= 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    // b < 0: both roots positive; avoid cancellation in the smaller one.
    let big = (-b + sq) / (2.0 * a);
    let small = c / (a * big);
    if sq == 0.0 {
        vec![big]
    } else {
        vec![small, big]
    }
}

/// Number of positive `t` on the locus for fixed `(p, q, r, s)`.
pub fn hopf_root_count(p: f64, q: f64, r: f64, s: f64) -> Result<u8, HopfError> {
    let thr = (q + s) * (q + s) + 2.0 * (s * q * (q + s) * (q + r + s)).sqrt();
    let prs = p * r * s;
    let tol = 1e-12 * thr.max(prs);
    let by_threshold = if (prs - thr).abs() <= tol {
        1
    } else if prs > thr {
        2
    } else {
        0
    };
    let a = q + r + s;
    let b = (q + s) * (q + s) - prs;
    let c = q * s * (q + s);
    let disc = b * b - 4.0 * a * c;
    let dtol = 1e-10 * (b * b).max(4.0 * a * c);
    let by_disc = if b >= 0.0 {
        0
    } else if disc.abs() <= dtol {
        1
    } else if disc > 0.0 {
        2
    } else {
        0
    };
    if by_threshold != by_disc {
        return Err(HopfError::InconsistentRootCount {
            threshold: by_threshold,
            discriminant: by_disc,
        });
    }
    Ok(by_threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub p1: AxisSpec,
    pub p2: AxisSpec,
    pub n1: usize,
    pub n2: usize,
}

impl GridSpec {
    pub fn value(axis: &AxisSpec, n: usize, i: usize) -> f64 {
        if n == 1 {
            axis.lo
        } else {
            axis.lo + (axis.hi - axis.lo) * i as f64 / (n - 1) as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub p1: f64,
    pub p2: f64,
    pub class: Option<Classification>,
    /// Raw `a2·a1 − a0`.
    pub hval: f64,
    pub l1: Option<f64>,
}

/// Grid direction along which a boundary crossing was bracketed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Along {
    P1,
    P2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub along: Along,
    pub p1: f64,
    pub p2: f64,
    pub hval: f64,
    pub l1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopfScanResult {
    pub grid: GridSpec,
    pub points: Vec<ScanPoint>,
    /// Crossings along `p2` at each grid value of `p1` (ordered by `p1`), then
    /// crossings along `p1` at each grid value of `p2` (ordered by `p2`).
    pub boundary_points: Vec<BoundaryPoint>,
    pub degenerate_points: Vec<BoundaryPoint>,
}

struct Evaluator {
    base: ModelParams,
    n1: String,
    n2: String,
}

impl Evaluator {
    fn params(&self, a: f64, b: f64) -> Result<ModelParams, HopfError> {
        Ok(self.base.with(&self.n1, a)?.with(&self.n2, b)?)
    }

    fn gap(&self, a: f64, b: f64) -> Option<(f64, Classification)> {
        let p = self.params(a, b).ok()?;
        let m = builtin_model(p).ok()?;
        let x = m.equilibrium().ok()?;
        let r = lincheck::classify_equilibrium(&m.system, &x).ok()?;
        Some((r.hurwitz_gap, r.classification))
    }

    fn l1(&self, a: f64, b: f64) -> Option<f64> {
        let p = self.params(a, b).ok()?;
        focal_value_at(&p, FrameChoice::Balanced).ok().map(|f| f.l1)
    }

    /// Bisects the sign change of the Hurwitz gap on the segment `from → to`.
    fn refine(
        &self,
        along: Along,
        from: (f64, f64),
        to: (f64, f64),
        g_from: f64,
    ) -> Option<BoundaryPoint> {
        let (mut lo, mut hi) = (0.0, 1.0);
        let at = |s: f64| (from.0 + s * (to.0 - from.0), from.1 + s * (to.1 - from.1));
        let mut g_lo = g_from;
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            let (a, b) = at(mid);
            let (g, _) = self.gap(a, b)?;
            if g == 0.0 {
                lo = mid;
                hi = mid;
                break;
            }
            if (g > 0.0) == (g_lo > 0.0) {
                lo = mid;
                g_lo = g;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-17 {
                break;
            }
        }
        let s = if lo == hi { lo } else { 0.5 * (lo + hi) };
        let (a, b) = at(s);
        let (g, _) = self.gap(a, b)?;
        Some(BoundaryPoint {
            along,
            p1: a,
            p2: b,
            hval: g,
            l1: self.l1(a, b),
        })
    }

    /// Boundary crossing along `p2` at fixed `p1 = a`, within `[b0, b1]`.
    fn crossing_in_column(&self, a: f64, b0: f64, b1: f64, steps: usize) -> Option<BoundaryPoint> {
        let mut prev: Option<(f64, f64)> = None;
        for i in 0..=steps {
            let b = b0 + (b1 - b0) * i as f64 / steps as f64;
            let Some((g, _)) = self.gap(a, b) else {
                prev = None;
                continue;
            };
            if let Some((pb, pg)) = prev {
                if (pg > 0.0) != (g > 0.0) {
                    return self.refine(Along::P2, (a, pb), (a, b), pg);
                }
            }
            prev = Some((b, g));
        }
        None
    }
}

/// Classifies every grid point, refines the Hopf boundary and locates sign
/// changes of the focal value along it.
pub fn hopf_scan(base: &ModelParams, grid: &GridSpec) -> Result<HopfScanResult, HopfError> {
    if grid.n1 < 2 || grid.n2 < 2 || !(grid.p1.hi > grid.p1.lo) || !(grid.p2.hi > grid.p2.lo) {
        return Err(HopfError::EmptyGrid);
    }
    base.with(&grid.p1.name, grid.p1.lo)?
        .with(&grid.p2.name, grid.p2.lo)?;
    let ev = Evaluator {
        base: *base,
        n1: grid.p1.name.clone(),
        n2: grid.p2.name.clone(),
    };
    let a_vals: Vec<f64> = (0..grid.n1)
        .map(|i| GridSpec::value(&grid.p1, grid.n1, i))
        .collect();
    let b_vals: Vec<f64> = (0..grid.n2)
        .map(|j| GridSpec::value(&grid.p2, grid.n2, j))
        .collect();

    let points: Vec<ScanPoint> = (0..grid.n1 * grid.n2)
        .into_par_iter()
        .map(|idx| {
            let (i, j) = (idx / grid.n2, idx % grid.n2);
            let (a, b) = (a_vals[i], b_vals[j]);
            match ev.gap(a, b) {
                Some((g, class)) => ScanPoint {
                    p1: a,
                    p2: b,
                    class: Some(class),
                    hval: g,
                    l1: (class == Classification::HopfBoundary)
                        .then(|| ev.l1(a, b))
                        .flatten(),
                },
                None => ScanPoint {
                    p1: a,
                    p2: b,
                    class: None,
                    hval: f64::NAN,
                    l1: None,
                },
            }
        })
        .collect();
    let at = |i: usize, j: usize| &points[i * grid.n2 + j];

    let columns: Vec<BoundaryPoint> = (0..grid.n1)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut out = Vec::new();
            for j in 1..grid.n2 {
                let (p, q) = (at(i, j - 1), at(i, j));
                if p.hval.is_finite() && q.hval.is_finite() && (p.hval > 0.0) != (q.hval > 0.0) {
                    out.extend(ev.refine(Along::P2, (p.p1, p.p2), (q.p1, q.p2), p.hval));
                }
            }
            out
        })
        .collect();
    let rows: Vec<BoundaryPoint> = (0..grid.n2)
        .into_par_iter()
        .flat_map_iter(|j| {
            let mut out = Vec::new();
            for i in 1..grid.n1 {
                let (p, q) = (at(i - 1, j), at(i, j));
                if p.hval.is_finite() && q.hval.is_finite() && (p.hval > 0.0) != (q.hval > 0.0) {
                    out.extend(ev.refine(Along::P1, (p.p1, p.p2), (q.p1, q.p2), p.hval));
                }
            }
            out
        })
        .collect();

    // Focal value sign changes between neighbouring column crossings.
    let step2 = (grid.p2.hi - grid.p2.lo) / (grid.n2 - 1) as f64;
    let candidates: Vec<(BoundaryPoint, BoundaryPoint)> = columns
        .windows(2)
        .filter(|w| {
            let (u, v) = (&w[0], &w[1]);
            let adjacent = v.p1 > u.p1
                && v.p1 - u.p1 <= 1.5 * (grid.p1.hi - grid.p1.lo) / (grid.n1 - 1) as f64;
            let close = (v.p2 - u.p2).abs() <= 0.25 * (grid.p2.hi - grid.p2.lo);
            matches!((u.l1, v.l1), (Some(x), Some(y)) if (x > 0.0) != (y > 0.0))
                && adjacent
                && close
        })
        .map(|w| (w[0].clone(), w[1].clone()))
        .collect();
    let degenerate_points: Vec<BoundaryPoint> = candidates
        .par_iter()
        .filter_map(|(u, v)| {
            let window = |a: f64| {
                let lo = u.p2.min(v.p2) - 2.0 * step2;
                let hi = u.p2.max(v.p2) + 2.0 * step2;
                ev.crossing_in_column(a, lo, hi, 16)
            };
            let (mut a_lo, mut a_hi) = (u.p1, v.p1);
            let mut l_lo = u.l1?;
            let mut best = u.clone();
            for _ in 0..50 {
                let mid = 0.5 * (a_lo + a_hi);
                let bp = window(mid)?;
                let l = bp.l1?;
                best = bp;
                if (l > 0.0) == (l_lo > 0.0) {
                    a_lo = mid;
                    l_lo = l;
                } else {
                    a_hi = mid;
                }
                if a_hi - a_lo <= 1e-12 * a_hi.abs().max(1.0) {
                    break;
                }
            }
            Some(best)
        })
        .collect();

    let mut boundary_points = columns;
    boundary_points.extend(rows);
    Ok(HopfScanResult {
        grid: grid.clone(),
        points,
        boundary_points,
        degenerate_points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn center_manifold_worked_instance() {
        let c = center_manifold_quadratic(1.0, -1.0, 1.0, 0.0, 0.0).unwrap();
        assert_relative_eq!(c.c20, 0.6, epsilon = 1e-15);
        assert_relative_eq!(c.c11, 0.2, epsilon = 1e-15);
        assert_relative_eq!(c.c02, 0.4, epsilon = 1e-15);
        let z = center_manifold_quadratic(2.0, -3.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!((z.c20, z.c11, z.c02), (0.0, 0.0, 0.0));
    }

    #[test]
    fn focal_value_trivial_cases() {
        let mut d = CanonicalTaylorData {
            omega: 1.0,
            rho: -1.0,
            ..Default::default()
        };
        assert_eq!(first_focal_value(&d).unwrap().l1, 0.0);
        d.f300 = -6.0;
        assert_eq!(first_focal_value(&d).unwrap().l1, -6.0);
        d.rho = 1e-9;
        assert!(matches!(
            first_focal_value(&d),
            Err(HopfError::RhoTooSmall(_))
        ));
    }

    #[test]
    fn w_closed_form_at_unit_point() {
        let l = closed_form_l1(&ModelParams::w_from_pqr(6.0, 1.0, 1.0))
            .unwrap()
            .l1;
        assert_relative_eq!(l, -47.0 / 1300.0, max_relative = 1e-14);
    }

    #[test]
    fn whh_roots() {
        let r = whh_hopf_roots(8.0, 1.0, 2.0, 1.0);
        let s7 = 7f64.sqrt();
        assert_relative_eq!(r[0], (3.0 - s7) / 2.0, max_relative = 1e-14);
        assert_relative_eq!(r[1], (3.0 + s7) / 2.0, max_relative = 1e-14);
        assert_eq!(hopf_root_count(8.0, 1.0, 2.0, 1.0).unwrap(), 2);
        assert_eq!(hopf_root_count(1.0, 1.0, 1.0, 1.0).unwrap(), 0);
        let p_eq = 4.0 + 2.0 * 6f64.sqrt();
        assert_eq!(hopf_root_count(p_eq, 1.0, 1.0, 1.0).unwrap(), 1);
    }

    #[test]
    fn w_locus_zero() {
        let v = hopf_locus_eval(&ModelParams::W {
            k: [1.0, 0.5, 3.0, 0.25],
        })
        .unwrap();
        assert!(v.abs() < 1e-15);
        assert!(hopf_locus_eval(&ModelParams::defaults(ModelId::FbH)).is_err());
    }

    #[test]
    fn empty_grid_rejected() {
        let g = GridSpec {
            p1: AxisSpec {
                name: "k6".into(),
                lo: 0.1,
                hi: 0.1,
            },
            p2: AxisSpec {
                name: "k8".into(),
                lo: 0.1,
                hi: 0.2,
            },
            n1: 5,
            n2: 5,
        };
        let base = ModelParams::FbSlice { k6: 1.0, k8: 1.0 };
        assert_eq!(hopf_scan(&base, &g), Err(HopfError::EmptyGrid));
    }
}
