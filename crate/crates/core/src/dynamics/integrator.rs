//! Dormand–Prince 5(4) with Hairer's continuous extension.

use serde::{Deserialize, Serialize};

use super::DynamicsError;
use crate::massaction::MassActionSystem;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Values below this are treated as round-off and clipped to zero.
pub const CLIP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-9,
            rel: 1e-9,
        }
    }
}

impl Tolerance {
    pub fn uniform(tol: f64) -> Self {
        Self { abs: tol, rel: tol }
    }
}

/// Interpolant over one accepted step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    pub coeffs: [Vec<f64>; 5],
}

impl DenseStep {
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.coeffs;
        for i in 0..out.len() {
            out[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.coeffs[0].len()];
        self.eval_into(t, &mut out);
        out
    }

    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }
}

/// Adaptive stepper; one accepted step per call to [`Stepper::step`].
pub struct Stepper<'a> {
    sys: &'a MassActionSystem,
    tol: Tolerance,
    pub t: f64,
    pub y: Vec<f64>,
    h: f64,
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
    pub rejected: usize,
    pub accepted: usize,
}

impl<'a> Stepper<'a> {
    pub fn new(
        sys: &'a MassActionSystem,
        x0: &[f64],
        t0: f64,
        tol: Tolerance,
    ) -> Result<Self, DynamicsError> {
        let n = sys.dim();
        if x0.len() != n {
            return Err(DynamicsError::Dimension {
                expected: n,
                got: x0.len(),
            });
        }
        if x0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(DynamicsError::NegativeStart);
        }
        let zeros = || vec![0.0; n];
        let mut s = Self {
            sys,
            tol,
            t: t0,
            y: x0.to_vec(),
            h: 0.0,
            k: [
                zeros(),
                zeros(),
                zeros(),
                zeros(),
                zeros(),
                zeros(),
                zeros(),
            ],
            ytmp: zeros(),
            ynew: zeros(),
            rejected: 0,
            accepted: 0,
        };
        sys.rhs_into(&s.y, &mut s.k[0]);
        s.h = s.initial_step();
        Ok(s)
    }

    fn scale(&self, a: f64) -> f64 {
        self.tol.abs + self.tol.rel * a.abs()
    }

    fn initial_step(&mut self) -> f64 {
        let n = self.y.len();
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..n {
            let sk = self.scale(self.y[i]);
            d0 += (self.y[i] / sk).powi(2);
            d1 += (self.k[0][i] / sk).powi(2);
        }
        let (d0, d1) = ((d0 / n as f64).sqrt(), (d1 / n as f64).sqrt());
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        for i in 0..n {
            self.ytmp[i] = self.y[i] + h0 * self.k[0][i];
        }
        let mut f1 = vec![0.0; n];
        self.sys.rhs_into(&self.ytmp, &mut f1);
        let mut d2 = 0.0;
        for i in 0..n {
            let sk = self.scale(self.y[i]);
            d2 += ((f1[i] - self.k[0][i]) / sk).powi(2);
        }
        let d2 = (d2 / n as f64).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1)
    }

    /// Advances by one accepted step, never past `t_max`.
    pub fn step(&mut self, t_max: f64) -> Result<DenseStep, DynamicsError> {
        let n = self.y.len();
        loop {
            let mut h = self.h.min(t_max - self.t);
            let last = h >= t_max - self.t;
            if h < 1e-14 * self.t.abs().max(1.0) && !last {
                return Err(DynamicsError::StepUnderflow {
                    t: self.t,
                    h,
                    state: self.y.clone(),
                });
            }
            if h <= 0.0 {
                h = t_max - self.t;
            }
            let (k, y) = (&mut self.k, &self.y);
            let sys = self.sys;
            let yt = &mut self.ytmp;
            macro_rules! stage {
                ($dst:expr, $($c:expr, $src:expr),+) => {{
                    for i in 0..n {
                        yt[i] = y[i] + h * (0.0 $(+ $c * k[$src][i])+);
                    }
                    let (_, rest) = k.split_at_mut($dst);
                    sys.rhs_into(yt, &mut rest[0]);
                }};
            }
            stage!(1, A21, 0);
            stage!(2, A31, 0, A32, 1);
            stage!(3, A41, 0, A42, 1, A43, 2);
            stage!(4, A51, 0, A52, 1, A53, 2, A54, 3);
            stage!(5, A61, 0, A62, 1, A63, 2, A64, 3, A65, 4);
            for i in 0..n {
                self.ynew[i] = y[i]
                    + h * (A71 * k[0][i]
                        + A73 * k[2][i]
                        + A74 * k[3][i]
                        + A75 * k[4][i]
                        + A76 * k[5][i]);
            }
            {
                let (_, rest) = k.split_at_mut(6);
                sys.rhs_into(&self.ynew, &mut rest[0]);
            }
            let mut err = 0.0;
            for i in 0..n {
                let e = h
                    * (E1 * k[0][i]
                        + E3 * k[2][i]
                        + E4 * k[3][i]
                        + E5 * k[4][i]
                        + E6 * k[5][i]
                        + E7 * k[6][i]);
                let sk = self.tol.abs + self.tol.rel * y[i].abs().max(self.ynew[i].abs());
                err += (e / sk).powi(2);
            }
            let err = (err / n as f64).sqrt();
            if !err.is_finite() {
                self.h = 0.25 * h;
                self.rejected += 1;
                continue;
            }
            let negative = self.ynew.iter().any(|v| *v < -CLIP);
            if err > 1.0 || negative {
                let fac = if negative && err <= 1.0 {
                    0.5
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 0.9)
                };
                self.h = h * fac;
                self.rejected += 1;
                continue;
            }

            let mut coeffs: [Vec<f64>; 5] = Default::default();
            let ydiff: Vec<f64> = (0..n).map(|i| self.ynew[i] - y[i]).collect();
            let bspl: Vec<f64> = (0..n).map(|i| h * k[0][i] - ydiff[i]).collect();
            coeffs[0] = y.clone();
            coeffs[3] = (0..n).map(|i| ydiff[i] - h * k[6][i] - bspl[i]).collect();
            coeffs[4] = (0..n)
                .map(|i| {
                    h * (D1 * k[0][i]
                        + D3 * k[2][i]
                        + D4 * k[3][i]
                        + D5 * k[4][i]
                        + D6 * k[5][i]
                        + D7 * k[6][i])
                })
                .collect();
            coeffs[1] = ydiff;
            coeffs[2] = bspl;

            let clipped = self.ynew.iter().any(|v| *v < 0.0);
            for v in self.ynew.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            std::mem::swap(&mut self.y, &mut self.ynew);
            if clipped {
                sys.rhs_into(&self.y, &mut self.k[0]);
            } else {
                let (first, rest) = self.k.split_at_mut(1);
                std::mem::swap(&mut first[0], &mut rest[5]);
            }
            let t0 = self.t;
            self.t = if last { t_max } else { self.t + h };
            let fac = if err == 0.0 {
                10.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 10.0)
            };
            self.h = h * fac;
            self.accepted += 1;
            return Ok(DenseStep {
                t0,
                h: self.t - t0,
                coeffs,
            });
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub species: Vec<String>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub dense: Vec<DenseStep>,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states
            .last()
            .expect("trajectory has its initial state")
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectory has its initial time")
    }

    /// Dense-output state at `t` within the integrated range.
    pub fn at(&self, t: f64) -> Option<Vec<f64>> {
        if t < self.times[0] || t > self.final_time() {
            return None;
        }
        if self.dense.is_empty() {
            return Some(self.states[0].clone());
        }
        let idx = self
            .dense
            .partition_point(|s| s.t1() < t)
            .min(self.dense.len() - 1);
        Some(self.dense[idx].eval(t))
    }

    /// Samples at `m + 1` equally spaced times.
    pub fn resample(&self, m: usize) -> Vec<(f64, Vec<f64>)> {
        let (a, b) = (self.times[0], self.final_time());
        (0..=m)
            .map(|i| {
                let t = if i == m {
                    b
                } else {
                    a + (b - a) * i as f64 / m as f64
                };
                (t, self.at(t).expect("inside range"))
            })
            .collect()
    }

    /// Largest `|d·x(t) − d·x(0)| / (d·x(0))` over the stored states.
    pub fn conservation_drift(&self, d: &[f64]) -> f64 {
        let dot = |x: &[f64]| x.iter().zip(d).map(|(a, b)| a * b).sum::<f64>();
        let c0 = dot(&self.states[0]);
        self.states
            .iter()
            .map(|x| (dot(x) - c0).abs())
            .fold(0.0, f64::max)
            / c0.abs()
    }

    pub fn min_coordinate_after(&self, t: f64) -> f64 {
        self.times
            .iter()
            .zip(&self.states)
            .filter(|(s, _)| **s >= t)
            .flat_map(|(_, x)| x.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn integrate(
    sys: &MassActionSystem,
    x0: &[f64],
    t_end: f64,
    tol: Tolerance,
) -> Result<Trajectory, DynamicsError> {
    if !(t_end > 0.0) {
        return Err(DynamicsError::InvalidHorizon(t_end));
    }
    let mut st = Stepper::new(sys, x0, 0.0, tol)?;
    let species = sys.network().species().to_vec();
    let mut traj = Trajectory {
        species,
        times: vec![0.0],
        states: vec![x0.to_vec()],
        dense: Vec::new(),
    };
    while st.t < t_end {
        let step = st.step(t_end)?;
        if st.y.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite { t: st.t });
        }
        traj.dense.push(step);
        traj.times.push(st.t);
        traj.states.push(st.y.clone());
    }
    Ok(traj)
}

/// Integrates to `t_end` keeping only the final state.
pub fn flow(
    sys: &MassActionSystem,
    x0: &[f64],
    t_end: f64,
    tol: Tolerance,
) -> Result<Vec<f64>, DynamicsError> {
    if t_end == 0.0 {
        return Ok(x0.to_vec());
    }
    let mut st = Stepper::new(sys, x0, 0.0, tol)?;
    while st.t < t_end {
        st.step(t_end)?;
        if st.y.iter().any(|v| !v.is_finite()) {
            return Err(DynamicsError::NonFinite { t: st.t });
        }
    }
    Ok(st.y)
}
