//! Poincaré sections, first-return maps and periodic orbits.

use nalgebra::{Complex, DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::integrator::{flow, integrate, DenseStep, Stepper, Tolerance};
use super::DynamicsError;
use crate::lincheck::{complex_null_vector, CubicCoefficients, Reduction};
use crate::massaction::{class_bases, MassActionSystem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Crossing {
    Positive,
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionSpec {
    pub anchor: Vec<f64>,
    pub normal: Vec<f64>,
    pub direction: Crossing,
}

impl SectionSpec {
    pub fn new(
        anchor: Vec<f64>,
        normal: Vec<f64>,
        direction: Crossing,
    ) -> Result<Self, DynamicsError> {
        if anchor.len() != normal.len() {
            return Err(DynamicsError::Dimension {
                expected: anchor.len(),
                got: normal.len(),
            });
        }
        let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(DynamicsError::SectionNotTransversal);
        }
        Ok(Self {
            anchor,
            normal: normal.iter().map(|v| v / norm).collect(),
            direction,
        })
    }

    /// Signed distance, oriented so that accepted crossings go from negative to positive.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let g: f64 = x
            .iter()
            .zip(&self.anchor)
            .zip(&self.normal)
            .map(|((x, a), n)| (x - a) * n)
            .sum();
        match self.direction {
            Crossing::Positive => g,
            Crossing::Negative => -g,
        }
    }

    /// Plane through `x_eq` normal to the real part of the rotating eigenvector
    /// pair; the first coordinate axis when there is no complex pair.
    pub fn default_for(sys: &MassActionSystem, x_eq: &[f64]) -> Self {
        let n = sys.dim();
        let axis = || {
            let mut e = vec![0.0; n];
            e[0] = 1.0;
            e
        };
        let normal = rotation_plane(sys, x_eq)
            .map(|(re, _)| re)
            .unwrap_or_else(axis);
        Self::new(x_eq.to_vec(), normal, Crossing::Positive).unwrap_or_else(|_| {
            Self::new(x_eq.to_vec(), axis(), Crossing::Positive).expect("unit axis")
        })
    }
}

/// Real and imaginary parts of the eigenvector of the reduced Jacobian for the
/// complex pair, embedded back in species space, phase-rotated so that the
/// parts are orthogonal.
pub(crate) fn rotation_plane(sys: &MassActionSystem, x_eq: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
    let red = Reduction::for_system(sys, None).ok()?;
    let jr = red.projection() * sys.jacobian(x_eq) * red.embedding();
    let j = Matrix3::from_iterator(jr.iter().copied());
    let roots = CubicCoefficients::from_matrix(&j).roots();
    let pair = roots
        .iter()
        .copied()
        .filter(|z| z.im > 1e-12 * j.norm())
        .max_by(|a, b| a.im.total_cmp(&b.im))?;
    let m = j.map(|v| Complex::new(v, 0.0)) - Matrix3::from_diagonal_element(pair);
    let u = complex_null_vector(&m);
    let s: Complex<f64> = u.iter().map(|c| c * c).sum();
    let u = u * Complex::from_polar(1.0, -0.5 * s.arg());
    let re: Vector3<f64> = u.map(|c| c.re);
    let im: Vector3<f64> = u.map(|c| c.im);
    let e = red.embedding();
    let lift = |v: &Vector3<f64>| -> Vec<f64> {
        (&e * DVector::from_column_slice(v.as_slice()))
            .iter()
            .copied()
            .collect()
    };
    Some((lift(&re), lift(&im)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleOptions {
    pub transient: f64,
    pub tol: Tolerance,
    /// Tolerance used by shooting and return-map differentiation.
    pub refine_tol: Tolerance,
    pub crossing_tol: f64,
    pub max_crossings: usize,
    /// Longest time allowed between two section crossings.
    pub return_time: f64,
    pub capture_radius: f64,
    pub samples: usize,
    pub fd_step: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl Default for CycleOptions {
    fn default() -> Self {
        Self {
            transient: 500.0,
            tol: Tolerance::uniform(1e-10),
            refine_tol: Tolerance::uniform(1e-12),
            crossing_tol: 1e-7,
            max_crossings: 2000,
            return_time: 1e4,
            capture_radius: 1e-6,
            samples: 200,
            fd_step: 1e-6,
            newton_tol: 1e-10,
            max_newton: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleStability {
    Stable,
    Unstable,
    Inconclusive,
}

/// Multipliers within this distance of the unit circle are inconclusive.
pub const MULTIPLIER_BAND: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitCycleReport {
    pub period: f64,
    pub section_fixed_point: Vec<f64>,
    pub cycle_points: Vec<Vec<f64>>,
    /// Derivative of the first-return map in on-section coordinates.
    pub return_map_jacobian: Vec<Vec<f64>>,
    /// Eigenvalues of the return-map Jacobian as `[re, im]`.
    pub multipliers: Vec<[f64; 2]>,
    pub spectral_radius: f64,
    pub stability: CycleStability,
    /// `‖Φ_T(x) − x‖∞` at the section fixed point.
    pub residual: f64,
    /// Half the largest coordinate range over the cycle.
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CycleSearch {
    Cycle(LimitCycleReport),
    EquilibriumCapture { state: Vec<f64>, distance: f64 },
    Inconclusive { crossings: usize, last_gap: f64 },
}

impl CycleSearch {
    pub fn cycle(&self) -> Option<&LimitCycleReport> {
        match self {
            CycleSearch::Cycle(c) => Some(c),
            _ => None,
        }
    }
}

fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Locates the section crossing inside one dense step.
fn crossing_in_step(section: &SectionSpec, step: &DenseStep) -> (f64, Vec<f64>) {
    let (mut lo, mut hi) = (step.t0, step.t1());
    let mut buf = vec![0.0; step.coeffs[0].len()];
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        step.eval_into(mid, &mut buf);
        if section.eval(&buf) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (hi, step.eval(hi))
}

/// First-return map restricted to the stoichiometric class of the anchor.
pub struct ReturnMap<'a> {
    pub sys: &'a MassActionSystem,
    pub section: &'a SectionSpec,
    /// Orthonormal columns spanning the on-section directions of the class.
    pub basis: DMatrix<f64>,
    pub tol: Tolerance,
    pub return_time: f64,
}

impl<'a> ReturnMap<'a> {
    pub fn new(
        sys: &'a MassActionSystem,
        section: &'a SectionSpec,
        tol: Tolerance,
        return_time: f64,
    ) -> Result<Self, DynamicsError> {
        let n = sys.dim();
        if section.anchor.len() != n {
            return Err(DynamicsError::Dimension {
                expected: n,
                got: section.anchor.len(),
            });
        }
        let (b, _) = class_bases(sys.network());
        let k = b.ncols();
        let nb = b.transpose() * DVector::from_column_slice(&section.normal);
        if nb.norm() < 1e-8 || k < 2 {
            return Err(DynamicsError::SectionNotTransversal);
        }
        // Gram–Schmidt from the projected normal; keep the k − 1 complementary directions.
        let mut q: Vec<DVector<f64>> = vec![nb.normalize()];
        for i in 0..k {
            let mut v = DVector::zeros(k);
            v[i] = 1.0;
            for u in &q {
                let c = u.dot(&v);
                v -= u * c;
            }
            if v.norm() > 1e-6 {
                q.push(v.normalize());
            }
            if q.len() == k {
                break;
            }
        }
        let c = DMatrix::from_columns(&q[1..]);
        Ok(Self {
            sys,
            section,
            basis: b * c,
            tol,
            return_time,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn point(&self, s: &DVector<f64>) -> Vec<f64> {
        let d = &self.basis * s;
        self.section
            .anchor
            .iter()
            .zip(d.iter())
            .map(|(a, v)| a + v)
            .collect()
    }

    pub fn coords(&self, x: &[f64]) -> DVector<f64> {
        let d = DVector::from_iterator(
            x.len(),
            x.iter().zip(&self.section.anchor).map(|(x, a)| x - a),
        );
        self.basis.transpose() * d
    }

    /// Next accepted crossing after leaving `x0`, with the elapsed time.
    pub fn first_return(&self, x0: &[f64]) -> Result<(Vec<f64>, f64), DynamicsError> {
        let mut st = Stepper::new(self.sys, x0, 0.0, self.tol)?;
        // Only count a crossing once the orbit has clearly left the section.
        let margin = 1e-10 * (1.0 + norm_inf(x0));
        let mut armed = self.section.eval(x0) < -margin;
        let mut g_old = self.section.eval(x0);
        while st.t < self.return_time {
            let step = st.step(self.return_time)?;
            let g_new = self.section.eval(&st.y);
            if armed && g_old < 0.0 && g_new >= 0.0 {
                let (t, x) = crossing_in_step(self.section, &step);
                return Ok((x, t));
            }
            armed |= g_new < -margin;
            g_old = g_new;
        }
        Err(DynamicsError::NoReturn(self.return_time))
    }

    /// `P(s)` in on-section coordinates.
    pub fn apply(&self, s: &DVector<f64>) -> Result<(DVector<f64>, f64), DynamicsError> {
        let x = self.point(s);
        if x.iter().any(|v| *v < 0.0) {
            return Err(DynamicsError::NegativeStart);
        }
        let (y, t) = self.first_return(&x)?;
        Ok((self.coords(&y), t))
    }

    pub fn jacobian(
        &self,
        s: &DVector<f64>,
        ps: &DVector<f64>,
        fd_step: f64,
    ) -> Result<DMatrix<f64>, DynamicsError> {
        let m = self.dim();
        let scale = 1.0 + norm_inf(&self.point(s));
        let h = fd_step * scale;
        let mut jac = DMatrix::zeros(m, m);
        for i in 0..m {
            let mut sp = s.clone();
            sp[i] += h;
            let (p, _) = self.apply(&sp)?;
            jac.set_column(i, &((p - ps) / h));
        }
        Ok(jac)
    }
}

fn classify_multipliers(jac: &DMatrix<f64>) -> (Vec<[f64; 2]>, f64, CycleStability) {
    let ev = jac.complex_eigenvalues();
    let multipliers: Vec<[f64; 2]> = ev.iter().map(|z| [z.re, z.im]).collect();
    let radius = ev.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let stability = if radius < 1.0 - MULTIPLIER_BAND {
        CycleStability::Stable
    } else if radius > 1.0 + MULTIPLIER_BAND {
        CycleStability::Unstable
    } else {
        CycleStability::Inconclusive
    };
    (multipliers, radius, stability)
}

fn build_report(
    rm: &ReturnMap,
    x: &[f64],
    period: f64,
    jac: DMatrix<f64>,
    opts: &CycleOptions,
) -> Result<LimitCycleReport, DynamicsError> {
    let traj = integrate(rm.sys, x, period, rm.tol)?;
    let end = traj.final_state().to_vec();
    let residual = dist_inf(&end, x);
    let cycle_points: Vec<Vec<f64>> = traj
        .resample(opts.samples.max(2))
        .into_iter()
        .map(|(_, p)| p)
        .collect();
    let n = x.len();
    let amplitude = (0..n)
        .map(|i| {
            let (lo, hi) = cycle_points
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    (lo.min(p[i]), hi.max(p[i]))
                });
            0.5 * (hi - lo)
        })
        .fold(0.0, f64::max);
    let (multipliers, spectral_radius, stability) = classify_multipliers(&jac);
    Ok(LimitCycleReport {
        period,
        section_fixed_point: x.to_vec(),
        cycle_points,
        return_map_jacobian: jac
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
        multipliers,
        spectral_radius,
        stability,
        residual,
        amplitude,
    })
}

/// Forward integration to an attracting periodic orbit, detected through
/// successive crossings of `section`.
pub fn find_limit_cycle(
    sys: &MassActionSystem,
    seed: &[f64],
    section: &SectionSpec,
    opts: &CycleOptions,
) -> Result<CycleSearch, DynamicsError> {
    if seed.iter().any(|v| !(*v > 0.0)) {
        return Err(DynamicsError::NegativeStart);
    }
    let rm = ReturnMap::new(sys, section, opts.tol, opts.return_time)?;
    let capture = opts.capture_radius * (1.0 + norm_inf(&section.anchor));
    let x = flow(sys, seed, opts.transient, opts.tol)?;
    let mut crossings: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut x = x;
    loop {
        let (y, dt) = match rm.first_return(&x) {
            Ok(r) => r,
            Err(DynamicsError::NoReturn(_)) => {
                let distance =
                    dist_inf(&flow(sys, &x, opts.return_time, opts.tol)?, &section.anchor);
                let state = x;
                return Ok(if distance <= 1e3 * capture {
                    CycleSearch::EquilibriumCapture { state, distance }
                } else {
                    CycleSearch::Inconclusive {
                        crossings: crossings.len(),
                        last_gap: f64::NAN,
                    }
                });
            }
            Err(e) => return Err(e),
        };
        let distance = dist_inf(&y, &section.anchor);
        if distance <= capture {
            return Ok(CycleSearch::EquilibriumCapture { state: y, distance });
        }
        if let Some((prev, _)) = crossings.last() {
            let gap = dist_inf(prev, &y);
            if gap <= opts.crossing_tol {
                // A slowly contracting spiral also produces small gaps: extrapolate
                // the crossing distances and reject limits at the equilibrium.
                if crossings.len() >= 2 {
                    let r0 = dist_inf(&crossings[crossings.len() - 2].0, &section.anchor);
                    let r1 = dist_inf(prev, &section.anchor);
                    let r2 = distance;
                    let den = r2 - 2.0 * r1 + r0;
                    if den.abs() > 0.0 {
                        let limit = (r2 * r0 - r1 * r1) / den;
                        if limit.is_finite()
                            && limit.abs() <= 10.0 * capture
                            && (r2 - r1) * (r1 - r0) > 0.0
                            && r2 < r1
                        {
                            return Ok(CycleSearch::EquilibriumCapture { state: y, distance });
                        }
                    }
                }
                let s = rm.coords(&y);
                let drm = ReturnMap::new(sys, section, opts.refine_tol, opts.return_time)?;
                let (ps, _) = drm.apply(&s)?;
                let jac = drm.jacobian(&s, &ps, opts.fd_step)?;
                let rep = build_report(&rm, &y, dt, jac, opts)?;
                return Ok(CycleSearch::Cycle(rep));
            }
            if crossings.len() >= opts.max_crossings {
                return Ok(CycleSearch::Inconclusive {
                    crossings: crossings.len(),
                    last_gap: gap,
                });
            }
        }
        crossings.push((y.clone(), dt));
        x = y;
    }
}

/// Newton shooting on `s ↦ P(s) − s`; converges to attracting and repelling orbits alike.
pub fn refine_cycle_newton(
    sys: &MassActionSystem,
    section: &SectionSpec,
    guess: &[f64],
    period_guess: f64,
    opts: &CycleOptions,
) -> Result<LimitCycleReport, DynamicsError> {
    let return_time = opts.return_time.max(10.0 * period_guess);
    let rm = ReturnMap::new(sys, section, opts.refine_tol, return_time)?;
    let mut s = rm.coords(guess);
    let (mut ps, mut period) = rm.apply(&s)?;
    let mut f = &ps - &s;
    let tol = |s: &DVector<f64>| opts.newton_tol * (1.0 + norm_inf(&rm.point(s)));
    let mut it = 0;
    while f.amax() > tol(&s) {
        if it >= opts.max_newton {
            return Err(DynamicsError::NewtonDivergence {
                iterations: it,
                residual: f.amax(),
            });
        }
        it += 1;
        let jac = rm.jacobian(&s, &ps, opts.fd_step)?;
        let a = jac - DMatrix::identity(rm.dim(), rm.dim());
        let delta = a
            .lu()
            .solve(&(-&f))
            .ok_or(DynamicsError::NewtonDivergence {
                iterations: it,
                residual: f.amax(),
            })?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let trial = &s + &delta * lambda;
            if let Ok((pt, t)) = rm.apply(&trial) {
                let ft = &pt - &trial;
                if ft.amax() < f.amax() {
                    s = trial;
                    ps = pt;
                    f = ft;
                    period = t;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(DynamicsError::NewtonDivergence {
                iterations: it,
                residual: f.amax(),
            });
        }
    }
    let x = rm.point(&s);
    let jac = rm.jacobian(&s, &ps, opts.fd_step)?;
    let mut rep = build_report(&rm, &x, period, jac, opts)?;
    rep.residual = rep.residual.max(dist_inf(&rm.point(&ps), &x));
    Ok(rep)
}
