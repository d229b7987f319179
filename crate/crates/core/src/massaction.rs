//! Mass-action kinetics: `ẋ = Γ v(x)` with `v_j(x) = κ_j x^{y_j}`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact;
use crate::network::{self, ReactionNetwork};

/// Relative residual accepted by [`find_equilibrium`].
pub const EQUILIBRIUM_TOL: f64 = 1e-11;
/// Relative residual accepted for closed-form equilibria.
pub const CLOSED_FORM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MassActionError {
    #[error("expected a vector of length {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no rate given for reaction {0}")]
    MissingRate(String),
    #[error("rate {0} does not label any reaction")]
    UnknownRate(String),
    #[error("rate {label} = {value} is not a positive finite number")]
    InvalidRate { label: String, value: f64 },
    #[error("line {line}: {msg}")]
    Bindings { line: usize, msg: String },
    #[error("starting point must be strictly positive")]
    NonPositiveStart,
    #[error(
        "Newton iteration did not converge after {iterations} iterations (residual {residual:e})"
    )]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("Jacobian restricted to the stoichiometric class is singular")]
    SingularJacobian,
    #[error("network is not reversible")]
    NotReversible,
}

/// Rate constants keyed by reaction label.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RateAssignment {
    pub values: BTreeMap<String, f64>,
}

impl RateAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, label: &str, value: f64) -> Self {
        self.values.insert(label.to_string(), value);
        self
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.values.get(label).copied()
    }

    /// Parses `label = value` lines; `#` comments and blank lines are skipped.
    pub fn parse_bindings(text: &str) -> Result<Self, MassActionError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |msg: String| MassActionError::Bindings { line: i + 1, msg };
            let (label, value) = line
                .split_once('=')
                .ok_or_else(|| bad("expected `label = value`".into()))?;
            let label = label.trim();
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| bad(format!("cannot parse value for {label}")))?;
            if values.insert(label.to_string(), value).is_some() {
                return Err(bad(format!("{label} bound twice")));
            }
        }
        Ok(Self { values })
    }

    pub fn to_bindings(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MassActionSystem {
    network: ReactionNetwork,
    kappa: Vec<f64>,
    reactant: Vec<Vec<(usize, u32)>>,
    gamma: Vec<Vec<(usize, f64)>>,
}

impl MassActionSystem {
    pub fn new(network: ReactionNetwork, rates: &RateAssignment) -> Result<Self, MassActionError> {
        for label in rates.values.keys() {
            if !network.reactions().iter().any(|r| &r.label == label) {
                return Err(MassActionError::UnknownRate(label.clone()));
            }
        }
        let kappa = network
            .reactions()
            .iter()
            .map(|r| {
                rates
                    .get(&r.label)
                    .ok_or_else(|| MassActionError::MissingRate(r.label.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_kappa(network, kappa)
    }

    /// Rates given in reaction order.
    pub fn from_kappa(network: ReactionNetwork, kappa: Vec<f64>) -> Result<Self, MassActionError> {
        let m = network.reactions().len();
        if kappa.len() != m {
            return Err(MassActionError::DimensionMismatch {
                expected: m,
                got: kappa.len(),
            });
        }
        for (r, &k) in network.reactions().iter().zip(&kappa) {
            if !(k.is_finite() && k > 0.0) {
                return Err(MassActionError::InvalidRate {
                    label: r.label.clone(),
                    value: k,
                });
            }
        }
        let reactant = (0..m)
            .map(|j| network.reactant(j).support().collect())
            .collect();
        let gamma = (0..m)
            .map(|j| {
                network
                    .reaction_vector(j)
                    .into_iter()
                    .enumerate()
                    .filter(|(_, v)| *v != 0)
                    .map(|(i, v)| (i, v as f64))
                    .collect()
            })
            .collect();
        Ok(Self {
            network,
            kappa,
            reactant,
            gamma,
        })
    }

    pub fn network(&self) -> &ReactionNetwork {
        &self.network
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn dim(&self) -> usize {
        self.network.num_species()
    }

    pub fn rates(&self) -> RateAssignment {
        RateAssignment {
            values: self
                .network
                .reactions()
                .iter()
                .zip(&self.kappa)
                .map(|(r, &k)| (r.label.clone(), k))
                .collect(),
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), MassActionError> {
        if x.len() != self.dim() {
            return Err(MassActionError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Reaction rates `v(x)`.
    pub fn fluxes(&self, x: &[f64]) -> Vec<f64> {
        self.reactant
            .iter()
            .zip(&self.kappa)
            .map(|(mono, &k)| {
                k * mono
                    .iter()
                    .map(|&(i, a)| x[i].powi(a as i32))
                    .product::<f64>()
            })
            .collect()
    }

    pub fn rhs_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (j, mono) in self.reactant.iter().enumerate() {
            let v = self.kappa[j]
                * mono
                    .iter()
                    .map(|&(i, a)| x[i].powi(a as i32))
                    .product::<f64>();
            for &(i, g) in &self.gamma[j] {
                out[i] += g * v;
            }
        }
    }

    pub fn ode_rhs(&self, x: &[f64]) -> Result<Vec<f64>, MassActionError> {
        self.check_dim(x)?;
        let mut out = vec![0.0; self.dim()];
        self.rhs_into(x, &mut out);
        Ok(out)
    }

    /// Analytic Jacobian of the right-hand side.
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let mut jac = DMatrix::zeros(n, n);
        let mut beta = vec![0u32; n];
        for (j, mono) in self.reactant.iter().enumerate() {
            for &(k, _) in mono {
                beta[k] = 1;
                let d = self.kappa[j] * monomial_derivative(mono, &beta, x);
                beta[k] = 0;
                for &(i, g) in &self.gamma[j] {
                    jac[(i, k)] += g * d;
                }
            }
        }
        jac
    }

    /// Partial derivative of component `i` of the right-hand side with multi-index `beta`.
    pub fn rhs_derivative(&self, i: usize, beta: &[u32], x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (j, mono) in self.reactant.iter().enumerate() {
            if let Some(&(_, g)) = self.gamma[j].iter().find(|(r, _)| *r == i) {
                s += g * self.kappa[j] * monomial_derivative(mono, beta, x);
            }
        }
        s
    }

    /// `‖Γv(x)‖∞ / ‖|Γ| v(x)‖∞`; zero when all fluxes vanish.
    pub fn relative_residual(&self, x: &[f64]) -> f64 {
        let n = self.dim();
        let v = self.fluxes(x);
        let mut f = vec![0.0; n];
        let mut scale = vec![0.0; n];
        for (j, vj) in v.iter().enumerate() {
            for &(i, g) in &self.gamma[j] {
                f[i] += g * vj;
                scale[i] += g.abs() * vj;
            }
        }
        let num = f.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let den = scale.iter().fold(0.0f64, |a, &b| a.max(b));
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    pub fn stoichiometric_matrix(&self) -> DMatrix<f64> {
        let n = self.dim();
        let m = self.kappa.len();
        let mut g = DMatrix::zeros(n, m);
        for (j, col) in self.gamma.iter().enumerate() {
            for &(i, v) in col {
                g[(i, j)] = v;
            }
        }
        g
    }
}

/// `∂^β Π x_i^{a_i}` for a monomial given by its support.
pub fn monomial_derivative(mono: &[(usize, u32)], beta: &[u32], x: &[f64]) -> f64 {
    for (i, &b) in beta.iter().enumerate() {
        if b > 0 && !mono.iter().any(|&(k, a)| k == i && a >= b) {
            return 0.0;
        }
    }
    let mut p = 1.0;
    for &(i, a) in mono {
        let b = beta.get(i).copied().unwrap_or(0);
        for r in 0..b {
            p *= (a - r) as f64;
        }
        p *= x[i].powi((a - b) as i32);
    }
    p
}

/// Orthonormal basis (columns) of the stoichiometric subspace and of its complement.
pub fn class_bases(net: &ReactionNetwork) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = net.num_species();
    let g = network::stoichiometric_matrix(net);
    let cols = exact::independent_columns(&g.to_rows());
    let s = cols.len();
    let mut full = DMatrix::zeros(n, n);
    for (c, &j) in cols.iter().enumerate() {
        for i in 0..n {
            full[(i, c)] = g.get(i, j) as f64;
        }
    }
    let laws = network::conservation_laws(net);
    for (c, law) in laws.iter().enumerate() {
        for i in 0..n {
            full[(i, s + c)] = law[i] as f64;
        }
    }
    let q = full.qr().q();
    (
        q.columns(0, s).into_owned(),
        q.columns(s, n - s).into_owned(),
    )
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: EQUILIBRIUM_TOL,
            max_iter: 100,
        }
    }
}

pub fn find_equilibrium(
    sys: &MassActionSystem,
    anchor: &[f64],
) -> Result<Vec<f64>, MassActionError> {
    find_equilibrium_with(sys, anchor, NewtonOptions::default())
}

/// Damped Newton in logarithmic coordinates on the class of `anchor`.
///
/// Unknowns are `y = ln x`, so iterates stay positive. Equations are the
/// right-hand side projected onto the stoichiometric subspace together with
/// the conservation laws `Lᵀ(x − anchor) = 0`.
pub fn find_equilibrium_with(
    sys: &MassActionSystem,
    anchor: &[f64],
    opts: NewtonOptions,
) -> Result<Vec<f64>, MassActionError> {
    sys.check_dim(anchor)?;
    if anchor.iter().any(|&a| !(a > 0.0 && a.is_finite())) {
        return Err(MassActionError::NonPositiveStart);
    }
    let n = sys.dim();
    let (b, l) = class_bases(sys.network());
    let s = b.ncols();
    let a0 = DVector::from_column_slice(anchor);
    let mass = anchor.iter().fold(0.0f64, |m, &a| m.max(a));

    let flux_scale = |x: &[f64]| -> f64 {
        let v = sys.fluxes(x);
        v.iter()
            .fold(0.0f64, |m, &a| m.max(a))
            .max(f64::MIN_POSITIVE)
    };
    let residual = |x: &DVector<f64>| -> DVector<f64> {
        let f = DVector::from_vec(sys.ode_rhs(x.as_slice()).expect("dimension checked"));
        let fs = flux_scale(x.as_slice());
        let mut r = DVector::zeros(n);
        r.rows_mut(0, s).copy_from(&(b.transpose() * f / fs));
        r.rows_mut(s, n - s)
            .copy_from(&(l.transpose() * (x - &a0) / mass));
        r
    };

    let mut y = a0.map(f64::ln);
    let mut x = a0.clone();
    let mut r = residual(&x);
    for _ in 0..opts.max_iter {
        if sys.relative_residual(x.as_slice()) <= opts.tol && r.rows(s, n - s).amax() <= 1e-12 {
            return Ok(x.iter().copied().collect());
        }
        let j = sys.jacobian(x.as_slice());
        let fs = flux_scale(x.as_slice());
        let dx = DMatrix::from_diagonal(&x);
        let mut jac = DMatrix::zeros(n, n);
        jac.rows_mut(0, s)
            .copy_from(&(b.transpose() * &j * &dx / fs));
        jac.rows_mut(s, n - s)
            .copy_from(&(l.transpose() * &dx / mass));
        let lu = jac.lu();
        let step = lu.solve(&(-&r)).ok_or(MassActionError::SingularJacobian)?;
        if !step.iter().all(|v| v.is_finite()) {
            return Err(MassActionError::SingularJacobian);
        }
        let norm0 = r.norm();
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let ys = &y + &step * lambda;
            let xs = ys.map(f64::exp);
            if xs.iter().all(|v| v.is_finite() && *v > 0.0) {
                let rs = residual(&xs);
                if rs.norm() <= (1.0 - 1e-4 * lambda) * norm0 || rs.norm() < 1e-14 {
                    y = ys;
                    x = xs;
                    r = rs;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if sys.relative_residual(x.as_slice()) <= opts.tol && r.rows(s, n - s).amax() <= 1e-12 {
        return Ok(x.iter().copied().collect());
    }
    Err(MassActionError::NonConvergence {
        iterations: opts.max_iter,
        residual: sys.relative_residual(x.as_slice()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum BalanceVerdict {
    Balanced { witness: Vec<f64> },
    Unbalanced { residual: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetailedBalanceReport {
    #[serde(flatten)]
    pub verdict: BalanceVerdict,
    /// The undirected reaction graph is a forest, so complex balance coincides
    /// with detailed balance.
    pub complex_balance_equivalent: bool,
}

impl DetailedBalanceReport {
    pub fn is_balanced(&self) -> bool {
        matches!(self.verdict, BalanceVerdict::Balanced { .. })
    }
}

/// Looks for `x > 0` with forward and backward rates equal on every reversible pair.
///
/// Taking logarithms turns `κ_f x^a = κ_b x^b` into `(b − a)·ln x = ln(κ_f/κ_b)`,
/// solved in the least-squares sense.
pub fn detailed_balance_check(
    sys: &MassActionSystem,
) -> Result<DetailedBalanceReport, MassActionError> {
    let net = sys.network();
    if !network::is_reversible(net) {
        return Err(MassActionError::NotReversible);
    }
    let n = net.num_species();
    let mut pairs = Vec::new();
    for (j, r) in net.reactions().iter().enumerate() {
        if r.reactant < r.product {
            let back = net
                .reactions()
                .iter()
                .position(|s| s.reactant == r.product && s.product == r.reactant)
                .expect("network is reversible");
            pairs.push((j, back));
        }
    }
    let mut a = DMatrix::zeros(pairs.len().max(1), n);
    let mut c = DVector::zeros(pairs.len().max(1));
    for (row, &(f, b)) in pairs.iter().enumerate() {
        for (i, v) in net.reaction_vector(f).into_iter().enumerate() {
            a[(row, i)] = v as f64;
        }
        c[row] = (sys.kappa[f] / sys.kappa[b]).ln();
    }
    let svd = a.clone().svd(true, true);
    let y = svd
        .solve(&c, 1e-12)
        .map_err(|_| MassActionError::SingularJacobian)?;
    let res = (&a * &y - &c).amax();
    let forest = pairs.len() + network::linkage_classes(net) == net.complexes().len();
    let verdict = if res <= 1e-10 {
        BalanceVerdict::Balanced {
            witness: y.iter().map(|v| v.exp()).collect(),
        }
    } else {
        BalanceVerdict::Unbalanced { residual: res }
    };
    Ok(DetailedBalanceReport {
        verdict,
        complex_balance_equivalent: forest,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netdsl::{parse_network, NetworkSource};

    fn sys(text: &str, kappa: Vec<f64>) -> MassActionSystem {
        MassActionSystem::from_kappa(parse_network(&NetworkSource::new(text)).unwrap(), kappa)
            .unwrap()
    }

    #[test]
    fn linear_exchange() {
        let s = sys("A -> B ; k", vec![2.0]);
        let j = s.jacobian(&[1.0, 1.0]);
        assert_eq!(j, DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 2.0, 0.0]));
        assert_eq!(s.ode_rhs(&[1.0, 0.0]).unwrap(), vec![-2.0, 2.0]);
    }

    #[test]
    fn newton_on_exchange() {
        let s = sys("A <-> B ; k1, k2", vec![1.0, 1.0]);
        let x = find_equilibrium(&s, &[3.0, 1.0]).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bindings_round_trip() {
        let r = RateAssignment::parse_bindings("k1 = 1.5 # fast\n\nk2=2").unwrap();
        assert_eq!(r.get("k1"), Some(1.5));
        assert_eq!(RateAssignment::parse_bindings(&r.to_bindings()).unwrap(), r);
        assert!(RateAssignment::parse_bindings("k1 1").is_err());
    }

    #[test]
    fn rates_must_cover_reactions() {
        let net = parse_network(&NetworkSource::new("A -> B ; k")).unwrap();
        let err = MassActionSystem::new(net.clone(), &RateAssignment::new()).unwrap_err();
        assert_eq!(err, MassActionError::MissingRate("k".into()));
        let err = MassActionSystem::new(net, &RateAssignment::new().with("k", 1.0).with("j", 1.0))
            .unwrap_err();
        assert_eq!(err, MassActionError::UnknownRate("j".into()));
    }

    #[test]
    fn monomial_derivatives() {
        // x^2 y at (2, 3)
        let mono = [(0, 2), (1, 1)];
        let x = [2.0, 3.0];
        assert_eq!(monomial_derivative(&mono, &[0, 0], &x), 12.0);
        assert_eq!(monomial_derivative(&mono, &[2, 1], &x), 2.0);
        assert_eq!(monomial_derivative(&mono, &[3, 0], &x), 0.0);
        assert_eq!(monomial_derivative(&mono, &[1, 1], &x), 4.0);
    }
}
