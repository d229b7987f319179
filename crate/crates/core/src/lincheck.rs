//! Linear stability of three-dimensional (possibly reduced) equilibria.

use nalgebra::{Complex, DMatrix, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::massaction::MassActionSystem;
use crate::network;

/// Relative width of the Hopf band around `a2·a1 = a0`.
pub const HOPF_TOL: f64 = 1e-9;
/// Relative residual below which a point is accepted as an equilibrium.
pub const EQUILIBRIUM_CHECK_TOL: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StabilityError {
    #[error("reduction needs 3 species, or 4 with a conservation law; got {0}")]
    UnsupportedDimension(usize),
    #[error("4-species network has no positive conservation vector")]
    NoConservationLaw,
    #[error("point is not an equilibrium (relative residual {0:e})")]
    NotEquilibrium(f64),
    #[error("spectrum is not of the form {{±iω, ρ}}: {0}")]
    NotHopfSpectrum(String),
    #[error("real eigenvalue {0:e} is too close to zero")]
    RhoTooSmall(f64),
    #[error("canonical frame defect {defect:e} exceeds tolerance {tol:e}")]
    FrameDefect { defect: f64, tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CubicCoefficients {
    pub a2: f64,
    pub a1: f64,
    pub a0: f64,
}

impl CubicCoefficients {
    pub fn from_matrix(j: &Matrix3<f64>) -> Self {
        let minor = |a: usize, b: usize| j[(a, a)] * j[(b, b)] - j[(a, b)] * j[(b, a)];
        let det = j[(0, 0)] * minor(1, 2)
            - j[(0, 1)] * (j[(1, 0)] * j[(2, 2)] - j[(1, 2)] * j[(2, 0)])
            + j[(0, 2)] * (j[(1, 0)] * j[(2, 1)] - j[(1, 1)] * j[(2, 0)]);
        Self {
            a2: -j.trace(),
            a1: minor(0, 1) + minor(0, 2) + minor(1, 2),
            a0: -det,
        }
    }

    /// Monic cubic with the given roots (complex roots in conjugate pairs).
    pub fn from_roots(r: [Complex<f64>; 3]) -> Self {
        let a2 = -(r[0] + r[1] + r[2]);
        let a1 = r[0] * r[1] + r[0] * r[2] + r[1] * r[2];
        let a0 = -(r[0] * r[1] * r[2]);
        Self {
            a2: a2.re,
            a1: a1.re,
            a0: a0.re,
        }
    }

    pub fn eval(&self, z: Complex<f64>) -> Complex<f64> {
        ((z + self.a2) * z + self.a1) * z + self.a0
    }

    /// `a2·a1 − a0`, positive on the stable side of the Hopf boundary.
    pub fn hurwitz_gap(&self) -> f64 {
        self.a2 * self.a1 - self.a0
    }

    /// Roots via the companion matrix, polished by Newton steps.
    pub fn roots(&self) -> [Complex<f64>; 3] {
        let c = Matrix3::new(0.0, 0.0, -self.a0, 1.0, 0.0, -self.a1, 0.0, 1.0, -self.a2);
        let ev = c.complex_eigenvalues();
        let mut out = [ev[0], ev[1], ev[2]];
        for z in out.iter_mut() {
            for _ in 0..3 {
                let d = (Complex::new(3.0, 0.0) * *z + 2.0 * self.a2) * *z + self.a1;
                if d.norm() == 0.0 {
                    break;
                }
                let next = *z - self.eval(*z) / d;
                if self.eval(next).norm() < self.eval(*z).norm() {
                    *z = next;
                } else {
                    break;
                }
            }
        }
        // Real roots first, then the pair ordered by imaginary part.
        out.sort_by(|a, b| {
            (a.im.abs() > 1e-300)
                .cmp(&(b.im.abs() > 1e-300))
                .then(a.im.partial_cmp(&b.im).unwrap_or(std::cmp::Ordering::Equal))
        });
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Stable,
    #[serde(rename = "hopf")]
    HopfBoundary,
    Unstable,
    Degenerate,
}

impl Classification {
    pub fn as_str(self) -> &'static str {
        match self {
            Classification::Stable => "stable",
            Classification::HopfBoundary => "hopf",
            Classification::Unstable => "unstable",
            Classification::Degenerate => "degenerate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfData {
    pub omega: f64,
    pub rho: f64,
}

pub fn cubic_routh_hurwitz(c: &CubicCoefficients) -> Classification {
    cubic_routh_hurwitz_tol(c, HOPF_TOL)
}

pub fn cubic_routh_hurwitz_tol(c: &CubicCoefficients, tol: f64) -> Classification {
    let gap = c.hurwitz_gap();
    let band = tol * (c.a2 * c.a1).abs().max(c.a0.abs());
    // Homogeneous scale: a2 ~ λ, a1 ~ λ², a0 ~ λ³.
    let lam = c.a2.abs().max(c.a1.abs().sqrt()).max(c.a0.abs().cbrt());
    let zero_root = c.a0.abs() <= tol * lam.powi(3);
    if zero_root {
        return Classification::Degenerate;
    }
    if c.a0 > 0.0 && c.a2 > 0.0 {
        if gap.abs() <= band {
            Classification::HopfBoundary
        } else if gap > 0.0 {
            Classification::Stable
        } else {
            Classification::Unstable
        }
    } else if c.a0 > 0.0 && c.a2.abs() <= tol * lam && gap.abs() <= band.max(tol * lam.powi(3)) {
        Classification::Degenerate
    } else {
        Classification::Unstable
    }
}

pub fn hopf_data(c: &CubicCoefficients, class: Classification) -> Option<HopfData> {
    (class == Classification::HopfBoundary).then(|| HopfData {
        omega: c.a1.sqrt(),
        rho: -c.a2,
    })
}

/// Elimination of one species through a conservation law `d·x = c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduction {
    pub n: usize,
    pub keep: Vec<usize>,
    pub eliminated: Option<usize>,
    pub d: Vec<f64>,
}

impl Reduction {
    /// Default eliminates the last species of a 4-species network.
    pub fn for_system(
        sys: &MassActionSystem,
        eliminate: Option<usize>,
    ) -> Result<Self, StabilityError> {
        let n = sys.dim();
        match n {
            3 => Ok(Self {
                n,
                keep: vec![0, 1, 2],
                eliminated: None,
                d: vec![],
            }),
            4 => {
                let d = network::conservation_vector(sys.network())
                    .ok_or(StabilityError::NoConservationLaw)?;
                let e = eliminate.unwrap_or(3).min(3);
                Ok(Self {
                    n,
                    keep: (0..4).filter(|&i| i != e).collect(),
                    eliminated: Some(e),
                    d: d.iter().map(crate::exact::to_f64).collect(),
                })
            }
            other => Err(StabilityError::UnsupportedDimension(other)),
        }
    }

    /// `n × 3` matrix mapping reduced displacements to full displacements.
    pub fn embedding(&self) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.n, 3);
        for (c, &k) in self.keep.iter().enumerate() {
            e[(k, c)] = 1.0;
            if let Some(el) = self.eliminated {
                e[(el, c)] = -self.d[k] / self.d[el];
            }
        }
        e
    }

    /// `3 × n` selection of the kept equations.
    pub fn projection(&self) -> DMatrix<f64> {
        let mut p = DMatrix::zeros(3, self.n);
        for (r, &k) in self.keep.iter().enumerate() {
            p[(r, k)] = 1.0;
        }
        p
    }

    pub fn reduce(&self, x: &[f64]) -> Vector3<f64> {
        Vector3::new(x[self.keep[0]], x[self.keep[1]], x[self.keep[2]])
    }
}

pub fn reduced_jacobian(
    sys: &MassActionSystem,
    x: &[f64],
    eliminate: Option<usize>,
) -> Result<Matrix3<f64>, StabilityError> {
    let red = Reduction::for_system(sys, eliminate)?;
    let j = red.projection() * sys.jacobian(x) * red.embedding();
    Ok(Matrix3::from_iterator(j.iter().copied()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub reduced_jacobian: [[f64; 3]; 3],
    pub cubic: CubicCoefficients,
    /// `(re, im)` pairs.
    pub eigenvalues: [(f64, f64); 3],
    pub classification: Classification,
    pub hurwitz_gap: f64,
    pub hopf_data: Option<HopfData>,
}

impl StabilityReport {
    pub fn jacobian(&self) -> Matrix3<f64> {
        let r = &self.reduced_jacobian;
        Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        )
    }
}

pub fn stability_of_matrix(j: &Matrix3<f64>, tol: f64) -> StabilityReport {
    let cubic = CubicCoefficients::from_matrix(j);
    let classification = cubic_routh_hurwitz_tol(&cubic, tol);
    let roots = cubic.roots();
    StabilityReport {
        reduced_jacobian: [
            [j[(0, 0)], j[(0, 1)], j[(0, 2)]],
            [j[(1, 0)], j[(1, 1)], j[(1, 2)]],
            [j[(2, 0)], j[(2, 1)], j[(2, 2)]],
        ],
        cubic,
        eigenvalues: roots.map(|z| (z.re, z.im)),
        classification,
        hurwitz_gap: cubic.hurwitz_gap(),
        hopf_data: hopf_data(&cubic, classification),
    }
}

pub fn classify_equilibrium(
    sys: &MassActionSystem,
    x: &[f64],
) -> Result<StabilityReport, StabilityError> {
    classify_equilibrium_with(sys, x, None, HOPF_TOL)
}

pub fn classify_equilibrium_with(
    sys: &MassActionSystem,
    x: &[f64],
    eliminate: Option<usize>,
    tol: f64,
) -> Result<StabilityReport, StabilityError> {
    let res = sys.relative_residual(x);
    if !(res <= EQUILIBRIUM_CHECK_TOL) {
        return Err(StabilityError::NotEquilibrium(res));
    }
    let j = reduced_jacobian(sys, x, eliminate)?;
    Ok(stability_of_matrix(&j, tol))
}

/// Rows `v1, v2, v3` with `T J T⁻¹ = [[0,−ω,0],[ω,0,0],[0,0,ρ]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalFrame {
    pub t: Matrix3<f64>,
    pub omega: f64,
    pub rho: f64,
}

impl CanonicalFrame {
    pub fn canonical_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            0.0,
            -self.omega,
            0.0,
            self.omega,
            0.0,
            0.0,
            0.0,
            0.0,
            self.rho,
        )
    }

    /// Frobenius norm of `T J T⁻¹` minus the canonical matrix.
    pub fn defect(&self, j: &Matrix3<f64>) -> f64 {
        match self.t.try_inverse() {
            Some(inv) => (self.t * j * inv - self.canonical_matrix()).norm(),
            None => f64::INFINITY,
        }
    }
}

/// How the free scaling and rotation of `(v1, v2)` is fixed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrameChoice {
    /// `‖v1‖² + ‖v2‖² = 2` with `v1 ⟂ v2` and `‖v1‖ ≥ ‖v2‖`.
    Balanced,
    /// Prescribed first row; `v2 = −Jᵀv1/ω`.
    FirstRow(Vector3<f64>),
}

pub fn canonical_transform(j: &Matrix3<f64>) -> Result<CanonicalFrame, StabilityError> {
    canonical_transform_with(j, FrameChoice::Balanced)
}

pub(crate) fn complex_null_vector(m: &Matrix3<Complex<f64>>) -> Vector3<Complex<f64>> {
    let rows: Vec<Vector3<Complex<f64>>> = (0..3).map(|i| m.row(i).transpose()).collect();
    let cross = |a: &Vector3<Complex<f64>>, b: &Vector3<Complex<f64>>| {
        Vector3::new(
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        )
    };
    [(0, 1), (0, 2), (1, 2)]
        .iter()
        .map(|&(a, b)| cross(&rows[a], &rows[b]))
        .max_by(|a, b| {
            a.norm()
                .partial_cmp(&b.norm())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .expect("three candidates")
}

pub fn canonical_transform_with(
    j: &Matrix3<f64>,
    choice: FrameChoice,
) -> Result<CanonicalFrame, StabilityError> {
    let scale = j.norm();
    let cubic = CubicCoefficients::from_matrix(j);
    let roots = cubic.roots();
    let Some(pair) = roots
        .iter()
        .copied()
        .filter(|z| z.im > 0.0)
        .max_by(|a, b| a.im.total_cmp(&b.im))
    else {
        return Err(StabilityError::NotHopfSpectrum("no complex pair".into()));
    };
    let real = roots
        .iter()
        .copied()
        .min_by(|a, b| a.im.abs().total_cmp(&b.im.abs()))
        .expect("three roots");
    if pair.re.abs() > 1e-6 * scale.max(f64::MIN_POSITIVE) {
        return Err(StabilityError::NotHopfSpectrum(format!(
            "complex pair has real part {:e}",
            pair.re
        )));
    }
    let omega = pair.im;
    let rho = real.re;
    if rho.abs() < 1e-8 {
        return Err(StabilityError::RhoTooSmall(rho));
    }
    let jt = j.transpose();

    let (v1, v2) = match choice {
        FrameChoice::FirstRow(v1) => (v1, -(jt * v1) / omega),
        FrameChoice::Balanced => {
            let m = jt.map(|v| Complex::new(v, 0.0)) - Matrix3::from_diagonal_element(pair);
            let u = complex_null_vector(&m);
            // Rotate the phase so that Re u ⟂ Im u with |Re u| ≥ |Im u|.
            let s: Complex<f64> = u.iter().map(|c| c * c).sum();
            let theta = -0.5 * s.arg();
            let u = u * Complex::from_polar(1.0, theta);
            let mut a = u.map(|c| c.re);
            let mut b = u.map(|c| c.im);
            let norm = ((a.norm_squared() + b.norm_squared()) / 2.0).sqrt();
            a /= norm;
            b /= norm;
            let k = a.iamax();
            if a[k] < 0.0 {
                a = -a;
                b = -b;
            }
            (a, b)
        }
    };

    let mr = jt - Matrix3::from_diagonal_element(rho);
    let rows: Vec<Vector3<f64>> = (0..3).map(|i| mr.row(i).transpose()).collect();
    let mut v3 = [(0, 1), (0, 2), (1, 2)]
        .iter()
        .map(|&(a, b)| rows[a].cross(&rows[b]))
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .expect("three candidates");
    v3 /= v3.norm();
    if v3[v3.iamax()] < 0.0 {
        v3 = -v3;
    }

    let t = Matrix3::from_rows(&[v1.transpose(), v2.transpose(), v3.transpose()]);
    let frame = CanonicalFrame { t, omega, rho };
    let defect = frame.defect(j);
    let tol = 1e-9 * scale;
    if !(defect <= tol) {
        return Err(StabilityError::FrameDefect { defect, tol });
    }
    Ok(frame)
}

/// Coordinate reflections: `flips[i] = -1` replaces species `i` by its negative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignPattern {
    pub flips: Vec<i8>,
}

impl SignPattern {
    /// Names of the flipped species, e.g. `["Z"]`.
    pub fn flipped<'a>(&self, species: &'a [String]) -> Vec<&'a str> {
        self.flips
            .iter()
            .zip(species)
            .filter(|(f, _)| **f < 0)
            .map(|(_, s)| s.as_str())
            .collect()
    }

    pub fn holds_at(&self, j: &DMatrix<f64>) -> bool {
        let n = self.flips.len();
        (0..n).all(|a| {
            (0..n).all(|b| a == b || (self.flips[a] * self.flips[b]) as f64 * j[(a, b)] <= 0.0)
        })
    }
}

/// First reflection pattern, in the order none, x, y, z, xy, xz, yz, xyz,
/// that makes every off-diagonal Jacobian entry nonpositive at all samples.
pub fn competitive_pattern_search(
    sys: &MassActionSystem,
    samples: &[Vec<f64>],
) -> Option<SignPattern> {
    let n = sys.dim();
    if n != 3 {
        return None;
    }
    let order: [&[usize]; 8] = [&[], &[0], &[1], &[2], &[0, 1], &[0, 2], &[1, 2], &[0, 1, 2]];
    let jacs: Vec<DMatrix<f64>> = samples.iter().map(|x| sys.jacobian(x)).collect();
    order.iter().find_map(|flip| {
        let mut flips = vec![1i8; n];
        for &i in *flip {
            flips[i] = -1;
        }
        let p = SignPattern { flips };
        jacs.iter().all(|j| p.holds_at(j)).then_some(p)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cubic(a2: f64, a1: f64, a0: f64) -> CubicCoefficients {
        CubicCoefficients { a2, a1, a0 }
    }

    #[test]
    fn factored_cubics() {
        assert_eq!(
            cubic_routh_hurwitz(&cubic(6.0, 11.0, 6.0)),
            Classification::Stable
        );
        let c = cubic(1.0, 1.0, 1.0);
        assert_eq!(cubic_routh_hurwitz(&c), Classification::HopfBoundary);
        let h = hopf_data(&c, Classification::HopfBoundary).unwrap();
        assert_eq!((h.omega, h.rho), (1.0, -1.0));
        assert_eq!(
            cubic_routh_hurwitz(&cubic(6.0, 4.0, 24.0)),
            Classification::HopfBoundary
        );
        assert_eq!(
            cubic_routh_hurwitz(&cubic(1.0, 1.0, 2.0)),
            Classification::Unstable
        );
        assert_eq!(
            cubic_routh_hurwitz(&cubic(1.0, 1.0, -2.0)),
            Classification::Unstable
        );
        assert_eq!(
            cubic_routh_hurwitz(&cubic(1.0, 1.0, 0.0)),
            Classification::Degenerate
        );
    }

    #[test]
    fn roots_of_factored_cubic() {
        let r = cubic(6.0, 11.0, 6.0).roots();
        let mut re: Vec<f64> = r.iter().map(|z| z.re).collect();
        re.sort_by(f64::total_cmp);
        assert_relative_eq!(re[0], -3.0, epsilon = 1e-12);
        assert_relative_eq!(re[1], -2.0, epsilon = 1e-12);
        assert_relative_eq!(re[2], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn characteristic_polynomial() {
        let j = Matrix3::new(-4.0, 6.0, 2.0, 0.0, 0.0, -2.0, 2.0, 0.0, -2.0);
        let c = CubicCoefficients::from_matrix(&j);
        assert_eq!((c.a2, c.a1, c.a0), (6.0, 4.0, 24.0));
    }

    #[test]
    fn identity_frame() {
        let j = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, -1.0);
        let f = canonical_transform(&j).unwrap();
        assert_relative_eq!(f.omega, 1.0, epsilon = 1e-12);
        assert_relative_eq!(f.rho, -1.0, epsilon = 1e-12);
        assert!(f.defect(&j) < 1e-12);
        assert!(f.t[(0, 2)].abs() < 1e-12 && f.t[(2, 0)].abs() < 1e-12);
    }

    #[test]
    fn first_row_frame() {
        // q = 1, p = 6: first row (0, p, -2q²).
        let j = Matrix3::new(-4.0, 6.0, 2.0, 0.0, 0.0, -2.0, 2.0, 0.0, -2.0);
        let f = canonical_transform_with(&j, FrameChoice::FirstRow(Vector3::new(0.0, 6.0, -2.0)))
            .unwrap();
        assert_relative_eq!(f.t[(1, 0)], 2.0, epsilon = 1e-12);
        assert_relative_eq!(f.t[(1, 2)], 4.0, epsilon = 1e-12);
        assert!(f.defect(&j) < 1e-10);
    }

    #[test]
    fn not_hopf() {
        let j = Matrix3::from_diagonal(&Vector3::new(-1.0, -2.0, -3.0));
        assert!(matches!(
            canonical_transform(&j),
            Err(StabilityError::NotHopfSpectrum(_))
        ));
    }
}
