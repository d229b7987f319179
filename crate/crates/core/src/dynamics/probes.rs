//! Bistability and permanence probes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cycles::{
    find_limit_cycle, refine_cycle_newton, rotation_plane, CycleOptions, CycleSearch,
    CycleStability, LimitCycleReport, ReturnMap, SectionSpec,
};
use super::integrator::{integrate, Tolerance};
use super::DynamicsError;
use crate::lincheck::{classify_equilibrium, Classification};
use crate::massaction::MassActionSystem;
use crate::models::ModelInstance;
use crate::network;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fate {
    Equilibrium,
    Cycle,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeStart {
    pub radius: f64,
    pub start: Vec<f64>,
    pub fate: Fate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BistabilityReport {
    pub equilibrium: Vec<f64>,
    pub section: SectionSpec,
    pub starts: Vec<ProbeStart>,
    pub inner_fate: Fate,
    pub outer_fate: Fate,
    pub stable_cycle: Option<LimitCycleReport>,
    pub unstable_cycle: Option<LimitCycleReport>,
    pub separatrix_evidence: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeOptions {
    pub radii: [f64; 5],
    pub cycle: CycleOptions,
    pub bisection_steps: usize,
    /// Return-map iterations allowed when deciding the fate of a start.
    pub max_returns: usize,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        Self {
            radii: [1e-3, 1e-2, 1e-1, 0.5, 1.0],
            cycle: CycleOptions {
                transient: 2000.0,
                ..CycleOptions::default()
            },
            bisection_steps: 50,
            max_returns: 5000,
        }
    }
}

fn fate_of(search: &CycleSearch) -> Fate {
    match search {
        CycleSearch::EquilibriumCapture { .. } => Fate::Equilibrium,
        CycleSearch::Cycle(c) if c.stability != CycleStability::Unstable => Fate::Cycle,
        _ => Fate::Undetermined,
    }
}

/// Starts on the section along the half-ray where crossings are accepted.
struct Ray {
    anchor: Vec<f64>,
    dir: Vec<f64>,
    max_len: f64,
}

impl Ray {
    fn point(&self, len: f64) -> Vec<f64> {
        self.anchor
            .iter()
            .zip(&self.dir)
            .map(|(a, d)| a + len * d)
            .collect()
    }
}

fn section_ray(sys: &MassActionSystem, section: &SectionSpec, rm: &ReturnMap) -> Ray {
    let x = &section.anchor;
    let n = x.len();
    // Prefer the on-section direction along which the flow pushes through the section.
    let im = rotation_plane(sys, x).map(|(_, im)| im);
    let mut dir: Vec<f64> = match im {
        Some(v) => {
            let s = rm.basis.transpose() * nalgebra::DVector::from_column_slice(&v);
            let d = &rm.basis * s;
            d.iter().copied().collect()
        }
        None => rm.basis.column(0).iter().copied().collect(),
    };
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm < 1e-12 {
        dir = rm.basis.column(0).iter().copied().collect();
    } else {
        dir.iter_mut().for_each(|v| *v /= norm);
    }
    let j = sys.jacobian(x);
    let push: f64 = (0..n)
        .map(|i| section.normal[i] * (0..n).map(|k| j[(i, k)] * dir[k]).sum::<f64>())
        .sum();
    let sign = match section.direction {
        super::Crossing::Positive => 1.0,
        super::Crossing::Negative => -1.0,
    };
    if push * sign < 0.0 {
        dir.iter_mut().for_each(|v| *v = -*v);
    }
    let max_len = (0..n)
        .filter(|&i| dir[i] < 0.0)
        .map(|i| x[i] / -dir[i])
        .fold(f64::INFINITY, f64::min);
    Ray {
        anchor: x.clone(),
        dir,
        max_len,
    }
}

/// Launches trajectories on a ray through the equilibrium and, if the inner
/// ones settle while the outer ones oscillate, shoots for the repelling orbit
/// in between.
pub fn bistability_probe(
    m: &ModelInstance,
    opts: &ProbeOptions,
) -> Result<BistabilityReport, DynamicsError> {
    let sys = &m.system;
    let x_eq = m.equilibrium()?;
    let stab = classify_equilibrium(sys, &x_eq)?;
    if stab.classification != Classification::Stable {
        return Err(DynamicsError::NotStable(stab.classification));
    }
    let section = SectionSpec::default_for(sys, &x_eq);
    let rm = ReturnMap::new(sys, &section, opts.cycle.tol, opts.cycle.return_time)?;
    let ray = section_ray(sys, &section, &rm);
    let scale = x_eq.iter().map(|v| v * v).sum::<f64>().sqrt();
    let len_of = |r: f64| (r * scale).min(0.95 * ray.max_len);

    let searches: Vec<(f64, Vec<f64>, Result<CycleSearch, DynamicsError>)> = opts
        .radii
        .par_iter()
        .map(|&r| {
            let x0 = ray.point(len_of(r));
            let s = find_limit_cycle(sys, &x0, &section, &opts.cycle);
            (r, x0, s)
        })
        .collect();
    let mut starts = Vec::new();
    let mut stable_cycle: Option<LimitCycleReport> = None;
    for (r, x0, s) in &searches {
        let fate = match s {
            Ok(s) => fate_of(s),
            Err(_) => Fate::Undetermined,
        };
        if fate == Fate::Cycle && stable_cycle.is_none() {
            stable_cycle = s.as_ref().ok().and_then(|s| s.cycle().cloned());
        }
        starts.push(ProbeStart {
            radius: *r,
            start: x0.clone(),
            fate,
        });
    }
    let inner_fate = starts.first().map_or(Fate::Undetermined, |s| s.fate);
    let outer_fate = starts.last().map_or(Fate::Undetermined, |s| s.fate);
    let separatrix_evidence = inner_fate == Fate::Equilibrium && outer_fate == Fate::Cycle;

    let mut unstable_cycle = None;
    if separatrix_evidence {
        let last_eq = starts
            .iter()
            .rposition(|s| s.fate == Fate::Equilibrium)
            .expect("inner start");
        let first_cycle = starts
            .iter()
            .position(|s| s.fate == Fate::Cycle)
            .expect("outer start");
        let (a, b) = (
            len_of(starts[last_eq].radius),
            len_of(starts[first_cycle].radius),
        );
        if a < b {
            unstable_cycle = repelling_orbit(&rm, &ray, a, b, stable_cycle.as_ref(), opts);
        }
    }
    Ok(BistabilityReport {
        equilibrium: x_eq,
        section,
        starts,
        inner_fate,
        outer_fate,
        stable_cycle,
        unstable_cycle,
        separatrix_evidence,
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Iterates the return map until the orbit is caught by the equilibrium or by
/// the attracting cycle. Also returns the iterate that came closest to being fixed.
fn return_fate(
    rm: &ReturnMap,
    x0: &[f64],
    target: &[f64],
    max_iter: usize,
) -> (Fate, Option<(Vec<f64>, f64)>) {
    let anchor = &rm.section.anchor;
    let catch = 1e-2 * dist(target, anchor);
    let mut x = x0.to_vec();
    let mut best: Option<(Vec<f64>, f64)> = None;
    for _ in 0..max_iter {
        let Ok((y, _)) = rm.first_return(&x) else {
            return (Fate::Undetermined, best);
        };
        let gap = dist(&y, &x);
        if best.as_ref().is_none_or(|(_, g)| gap < *g) {
            best = Some((x.clone(), gap));
        }
        if dist(&y, anchor) < catch {
            return (Fate::Equilibrium, best);
        }
        if dist(&y, target) < catch {
            return (Fate::Cycle, best);
        }
        x = y;
    }
    (Fate::Undetermined, best)
}

fn repelling_orbit(
    rm: &ReturnMap,
    ray: &Ray,
    a: f64,
    b: f64,
    stable: Option<&LimitCycleReport>,
    opts: &ProbeOptions,
) -> Option<LimitCycleReport> {
    let stable = stable?;
    let target = &stable.section_fixed_point;
    let size = dist(target, &rm.section.anchor);
    let shoot =
        |x: &[f64]| refine_cycle_newton(rm.sys, rm.section, x, stable.period, &opts.cycle).ok();
    let (mut lo, mut hi) = (a, b);
    let mut guess: Option<(Vec<f64>, f64)> = None;
    for _ in 0..opts.bisection_steps {
        let mid = 0.5 * (lo + hi);
        let (fate, best) = return_fate(rm, &ray.point(mid), target, opts.max_returns);
        if let Some((x, g)) = best {
            if guess.as_ref().is_none_or(|(_, bg)| g < *bg) {
                if g < 1e-5 * size {
                    if let Some(c) = shoot(&x) {
                        return Some(c);
                    }
                }
                guess = Some((x, g));
            }
        }
        match fate {
            Fate::Equilibrium => lo = mid,
            Fate::Cycle => hi = mid,
            Fate::Undetermined => break,
        }
        if hi - lo <= 1e-13 * hi {
            break;
        }
    }
    shoot(&guess?.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermanenceReport {
    pub seed: u64,
    pub floor: f64,
    pub per_sample: Vec<f64>,
    pub starts: Vec<Vec<f64>>,
}

/// Random positive points in the stoichiometric class of `anchor`; odd-numbered
/// samples have one coordinate pushed to `1e-6`.
pub fn random_class_points(
    sys: &MassActionSystem,
    anchor: &[f64],
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, DynamicsError> {
    let n = sys.dim();
    if anchor.len() != n {
        return Err(DynamicsError::Dimension {
            expected: n,
            got: anchor.len(),
        });
    }
    if anchor.iter().any(|v| !(*v > 0.0)) {
        return Err(DynamicsError::NegativeStart);
    }
    let laws = network::conservation_laws(sys.network());
    let d: Option<Vec<f64>> = match laws.len() {
        0 => None,
        1 if laws[0].iter().all(|v| *v > 0) || laws[0].iter().all(|v| *v < 0) => {
            Some(laws[0].iter().map(|v| (*v as f64).abs()).collect())
        }
        _ => {
            return Err(DynamicsError::UnsupportedClass(
                "only networks with at most one positive conservation law are supported".into(),
            ))
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for s in 0..count {
        let mut x: Vec<f64> = anchor
            .iter()
            .map(|a| a * rng.random_range(-2.0f64..2.0).exp())
            .collect();
        let boundary = (s % 2 == 1).then(|| rng.random_range(0..n));
        if let Some(d) = &d {
            let c: f64 = d.iter().zip(anchor).map(|(a, b)| a * b).sum();
            if let Some(i) = boundary {
                x[i] = 1e-6;
                let rest: f64 = (0..n).filter(|&j| j != i).map(|j| d[j] * x[j]).sum();
                let f = (c - d[i] * 1e-6) / rest;
                (0..n).filter(|&j| j != i).for_each(|j| x[j] *= f);
            } else {
                let cur: f64 = d.iter().zip(&x).map(|(a, b)| a * b).sum();
                x.iter_mut().for_each(|v| *v *= c / cur);
            }
        } else if let Some(i) = boundary {
            x[i] = 1e-6;
        }
        out.push(x);
    }
    Ok(out)
}

/// Smallest coordinate seen after the transient, over random starts in the class.
pub fn permanence_probe(
    sys: &MassActionSystem,
    anchor: &[f64],
    num_samples: usize,
    t_transient: f64,
    t_window: f64,
    seed: u64,
    tol: Tolerance,
) -> Result<PermanenceReport, DynamicsError> {
    let starts = random_class_points(sys, anchor, num_samples, seed)?;
    let per_sample: Vec<f64> = starts
        .par_iter()
        .map(|x0| {
            integrate(sys, x0, t_transient + t_window, tol)
                .map(|tr| tr.min_coordinate_after(t_transient))
        })
        .collect::<Result<_, _>>()?;
    let floor = per_sample.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(PermanenceReport {
        seed,
        floor,
        per_sample,
        starts,
    })
}
