//! The six builtin oscillators `fb`, `wh`, `w` and their
//! mass-conserving homogenisations
//! (`fb-h`, `wh-h`, `w-h`, with make-weight species `W`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::massaction::{MassActionError, MassActionSystem};
use crate::netdsl::{parse_network, NetworkSource};
use crate::network::ReactionNetwork;

pub const FB_SOURCE: &str = "\
X + Y <-> Z ; k1, k2
Z <-> X ; k3, k4
X <-> 2X ; k5, k6
Z <-> Y ; k7, k8
";

pub const FB_H_SOURCE: &str = "\
#! species: X, Y, Z, W
X + Y <-> Z + W ; k1, k2
Z <-> X ; k3, k4
X + W <-> 2X ; k5, k6
Z <-> Y ; k7, k8
";

pub const WH_SOURCE: &str = "\
#! species: X, Y, Z
X -> 2X ; k1
X + Y -> Y ; k2
Y -> 0 ; k3
X -> Z ; k4
Z -> Y ; k5
";

pub const WH_H_SOURCE: &str = "\
#! species: X, Y, Z, W
X + W -> 2X ; k1
X + Y -> Y + W ; k2
Y -> W ; k3
X -> Z ; k4
Z -> Y ; k5
";

pub const W_SOURCE: &str = "\
#! species: X, Y, Z
Y -> 2Y ; k1
2X -> Z ; k2
Y + Z -> X + Z ; k3
2Z -> 0 ; k4
";

pub const W_H_SOURCE: &str = "\
#! species: X, Y, Z, W
Y + W -> 2Y ; k1
2X -> Z + W ; k2
Y + Z -> X + Z ; k3
2Z -> 2W ; k4
";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("unknown model {0} (expected one of fb, fb-h, wh, wh-h, w, w-h)")]
    UnknownModel(String),
    #[error("model {model} has no parameter {name}")]
    UnknownParameter { model: ModelId, name: String },
    #[error("parameter {name} = {value} is outside the domain: {domain}")]
    OutOfDomain {
        name: String,
        value: f64,
        domain: String,
    },
    #[error("model {model} expects {expected} rate constants, got {got}")]
    WrongRateCount {
        model: ModelId,
        expected: usize,
        got: usize,
    },
    #[error("model {0} has no closed-form positive equilibrium for these parameters")]
    NoEquilibrium(ModelId),
    #[error(transparent)]
    MassAction(#[from] MassActionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelId {
    #[serde(rename = "fb")]
    Fb,
    #[serde(rename = "fb-h")]
    FbH,
    #[serde(rename = "wh")]
    Wh,
    #[serde(rename = "wh-h")]
    WhH,
    #[serde(rename = "w")]
    W,
    #[serde(rename = "w-h")]
    WH,
}

impl ModelId {
    pub const ALL: [ModelId; 6] = [
        ModelId::Fb,
        ModelId::FbH,
        ModelId::Wh,
        ModelId::WhH,
        ModelId::W,
        ModelId::WH,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::Fb => "fb",
            ModelId::FbH => "fb-h",
            ModelId::Wh => "wh",
            ModelId::WhH => "wh-h",
            ModelId::W => "w",
            ModelId::WH => "w-h",
        }
    }

    pub fn source(self) -> &'static str {
        match self {
            ModelId::Fb => FB_SOURCE,
            ModelId::FbH => FB_H_SOURCE,
            ModelId::Wh => WH_SOURCE,
            ModelId::WhH => WH_H_SOURCE,
            ModelId::W => W_SOURCE,
            ModelId::WH => W_H_SOURCE,
        }
    }

    pub fn network(self) -> ReactionNetwork {
        parse_network(&NetworkSource::named(self.source(), self.as_str()))
            .expect("builtin sources parse")
    }

    pub fn is_homogenised(self) -> bool {
        matches!(self, ModelId::FbH | ModelId::WhH | ModelId::WH)
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ModelId::ALL
            .into_iter()
            .find(|m| m.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| ModelError::UnknownModel(s.to_string()))
    }
}

/// Model parameters in the coordinates used to analyse each model.
///
/// `t` is the equilibrium-branch parameter of the homogenised models and
/// selects the stoichiometric class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelParams {
    Fb {
        k: [f64; 8],
    },
    /// `κ1 = 1, κ2 = κ3 = κ4 = 1/5, κ5 = κ6 + 4/5, κ7 = κ8 + 4/5`; equilibrium (1,1,1).
    FbSlice {
        k6: f64,
        k8: f64,
    },
    FbH {
        k: [f64; 8],
        t: f64,
    },
    Wh {
        k: [f64; 5],
    },
    /// `κ = (1, p, q, r, s)`.
    WhH {
        p: f64,
        q: f64,
        r: f64,
        s: f64,
        t: f64,
    },
    W {
        k: [f64; 4],
    },
    /// `κ = (p, r, pr, q²r/2)`, a time rescaling of the general rates.
    WH {
        p: f64,
        q: f64,
        r: f64,
        t: f64,
    },
}

impl ModelParams {
    pub fn id(&self) -> ModelId {
        match self {
            ModelParams::Fb { .. } | ModelParams::FbSlice { .. } => ModelId::Fb,
            ModelParams::FbH { .. } => ModelId::FbH,
            ModelParams::Wh { .. } => ModelId::Wh,
            ModelParams::WhH { .. } => ModelId::WhH,
            ModelParams::W { .. } => ModelId::W,
            ModelParams::WH { .. } => ModelId::WH,
        }
    }

    pub fn defaults(id: ModelId) -> Self {
        match id {
            ModelId::Fb => ModelParams::Fb { k: [1.0; 8] },
            ModelId::FbH => ModelParams::FbH {
                k: [1.0; 8],
                t: 1.0,
            },
            ModelId::Wh => ModelParams::Wh {
                k: [2.0, 1.0, 1.0, 1.0, 1.0],
            },
            ModelId::WhH => ModelParams::WhH {
                p: 8.0,
                q: 1.0,
                r: 2.0,
                s: 1.0,
                t: 1.0,
            },
            ModelId::W => ModelParams::W { k: [1.0; 4] },
            ModelId::WH => ModelParams::WH {
                p: 6.0,
                q: 1.0,
                r: 2.0,
                t: 1.0,
            },
        }
    }

    /// Rate constants in reaction order `k1, k2, ...`.
    pub fn from_rates(id: ModelId, k: &[f64]) -> Result<Self, ModelError> {
        let want = id.network().reactions().len();
        if k.len() != want {
            return Err(ModelError::WrongRateCount {
                model: id,
                expected: want,
                got: k.len(),
            });
        }
        Ok(match id {
            ModelId::Fb => ModelParams::Fb {
                k: k.try_into().unwrap(),
            },
            ModelId::FbH => ModelParams::FbH {
                k: k.try_into().unwrap(),
                t: 1.0,
            },
            ModelId::Wh => ModelParams::Wh {
                k: k.try_into().unwrap(),
            },
            ModelId::WhH => {
                // Time rescaling by κ1 normalises κ1 to 1.
                let c = k[0];
                ModelParams::WhH {
                    p: k[1] / c,
                    q: k[2] / c,
                    r: k[3] / c,
                    s: k[4] / c,
                    t: 1.0,
                }
            }
            ModelId::W => ModelParams::W {
                k: k.try_into().unwrap(),
            },
            ModelId::WH => {
                let (p, q, r) = w_pqr(k[0], k[1], k[2], k[3]);
                ModelParams::WH { p, q, r, t: 1.0 }
            }
        })
    }

    /// `w` rates with the given `(p, q, r)`.
    pub fn w_from_pqr(p: f64, q: f64, r: f64) -> Self {
        ModelParams::W {
            k: [p, r, p * r, q * q * r / 2.0],
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        match self {
            ModelParams::Fb { .. } => vec!["k1", "k2", "k3", "k4", "k5", "k6", "k7", "k8"],
            ModelParams::FbSlice { .. } => vec!["k6", "k8"],
            ModelParams::FbH { .. } => vec!["k1", "k2", "k3", "k4", "k5", "k6", "k7", "k8", "t"],
            ModelParams::Wh { .. } => vec!["k1", "k2", "k3", "k4", "k5"],
            ModelParams::WhH { .. } => vec!["p", "q", "r", "s", "t"],
            ModelParams::W { .. } => vec!["k1", "k2", "k3", "k4"],
            ModelParams::WH { .. } => vec!["p", "q", "r", "t"],
        }
    }

    fn slot(&mut self, name: &str) -> Option<&mut f64> {
        let k_index = |n: &str| {
            n.strip_prefix('k')
                .and_then(|d| d.parse::<usize>().ok())
                .filter(|&i| i >= 1)
        };
        match self {
            ModelParams::Fb { k } | ModelParams::FbH { k, .. }
                if k_index(name).is_some_and(|i| i <= 8) =>
            {
                Some(&mut k[k_index(name).unwrap() - 1])
            }
            ModelParams::Wh { k } if k_index(name).is_some_and(|i| i <= 5) => {
                Some(&mut k[k_index(name).unwrap() - 1])
            }
            ModelParams::W { k } if k_index(name).is_some_and(|i| i <= 4) => {
                Some(&mut k[k_index(name).unwrap() - 1])
            }
            ModelParams::FbSlice { k6, k8 } => match name {
                "k6" => Some(k6),
                "k8" => Some(k8),
                _ => None,
            },
            ModelParams::FbH { t, .. } if name == "t" => Some(t),
            ModelParams::WhH { p, q, r, s, t } => match name {
                "p" => Some(p),
                "q" => Some(q),
                "r" => Some(r),
                "s" => Some(s),
                "t" => Some(t),
                _ => None,
            },
            ModelParams::WH { p, q, r, t } => match name {
                "p" => Some(p),
                "q" => Some(q),
                "r" => Some(r),
                "t" => Some(t),
                _ => None,
            },
            _ => None,
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        let mut c = *self;
        c.slot(name).map(|v| *v)
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<(), ModelError> {
        let id = self.id();
        match self.slot(name) {
            Some(v) => {
                *v = value;
                Ok(())
            }
            None => Err(ModelError::UnknownParameter {
                model: id,
                name: name.to_string(),
            }),
        }
    }

    pub fn with(mut self, name: &str, value: f64) -> Result<Self, ModelError> {
        self.set(name, value)?;
        Ok(self)
    }

    /// Rate constants in reaction order.
    pub fn kappa(&self) -> Vec<f64> {
        match *self {
            ModelParams::Fb { k } | ModelParams::FbH { k, .. } => k.to_vec(),
            ModelParams::FbSlice { k6, k8 } => {
                vec![1.0, 0.2, 0.2, 0.2, k6 + 0.8, k6, k8 + 0.8, k8]
            }
            ModelParams::Wh { k } => k.to_vec(),
            ModelParams::WhH { p, q, r, s, .. } => vec![1.0, p, q, r, s],
            ModelParams::W { k } => k.to_vec(),
            ModelParams::WH { p, q, r, .. } => vec![p, r, p * r, q * q * r / 2.0],
        }
    }

    pub fn branch_parameter(&self) -> Option<f64> {
        match *self {
            ModelParams::FbH { t, .. } | ModelParams::WhH { t, .. } | ModelParams::WH { t, .. } => {
                Some(t)
            }
            _ => None,
        }
    }

    fn validate(&self) -> Result<(), ModelError> {
        let mut c = *self;
        for name in self.names() {
            let v = *c.slot(name).expect("listed names resolve");
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::OutOfDomain {
                    name: name.into(),
                    value: v,
                    domain: format!("{name} > 0"),
                });
            }
        }
        Ok(())
    }
}

/// `(p, q, r) = (κ3/κ2, √(2κ4/κ2), κ3/κ1)`.
pub fn w_pqr(k1: f64, k2: f64, k3: f64, k4: f64) -> (f64, f64, f64) {
    (k3 / k2, (2.0 * k4 / k2).sqrt(), k3 / k1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchKind {
    Point,
    Ray,
    Curve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumBranch {
    pub kind: BranchKind,
    pub domain: String,
}

#[derive(Debug, Clone)]
pub struct ModelInstance {
    pub id: ModelId,
    pub params: ModelParams,
    pub system: MassActionSystem,
    pub branch: EquilibriumBranch,
}

pub fn builtin_model(params: ModelParams) -> Result<ModelInstance, ModelError> {
    params.validate()?;
    let id = params.id();
    let system = MassActionSystem::from_kappa(id.network(), params.kappa())?;
    let branch = match id {
        ModelId::Fb => EquilibriumBranch {
            kind: BranchKind::Point,
            domain: "all positive rates".into(),
        },
        ModelId::Wh => EquilibriumBranch {
            kind: BranchKind::Point,
            domain: "k1 > k4".into(),
        },
        ModelId::W => EquilibriumBranch {
            kind: BranchKind::Point,
            domain: "all positive rates".into(),
        },
        ModelId::FbH => EquilibriumBranch {
            kind: BranchKind::Curve,
            domain: "t > 0".into(),
        },
        ModelId::WhH => EquilibriumBranch {
            kind: BranchKind::Ray,
            domain: "t > 0, class total c > r".into(),
        },
        ModelId::WH => EquilibriumBranch {
            kind: BranchKind::Ray,
            domain: "t > 0".into(),
        },
    };
    Ok(ModelInstance {
        id,
        params,
        system,
        branch,
    })
}

impl ModelInstance {
    /// Closed-form positive equilibrium on the branch; `t` is ignored for point branches.
    pub fn closed_form_equilibrium(&self, t: f64) -> Result<Vec<f64>, ModelError> {
        if self.branch.kind != BranchKind::Point && !(t.is_finite() && t > 0.0) {
            return Err(ModelError::OutOfDomain {
                name: "t".into(),
                value: t,
                domain: self.branch.domain.clone(),
            });
        }
        let k = self.params.kappa();
        Ok(match self.params {
            ModelParams::FbSlice { .. } => vec![1.0, 1.0, 1.0],
            ModelParams::Fb { .. } => fb_equilibrium(&k),
            ModelParams::FbH { .. } => {
                let [k1, k2, k3, k4, k5, k6, k7, k8] = k[..] else {
                    unreachable!()
                };
                let base = k2 * k4 + k3 * k5;
                let den = k1 * k3 * k5 * t + k8 * base;
                let y = (k2 * k3 * k6 * t + k7 * base) / den * k4 / k3 * t;
                let w = (k1 * k3 * k6 * t + (k1 * k4 * k7 + k3 * k6 * k8)) / den * t;
                vec![t, y, k4 / k3 * t, w]
            }
            ModelParams::Wh { .. } => {
                let [k1, k2, k3, k4, k5] = k[..] else {
                    unreachable!()
                };
                if k1 <= k4 {
                    return Err(ModelError::NoEquilibrium(self.id));
                }
                let a = (k1 - k4) / k2;
                vec![a * k3 / k4, a, a * k3 / k5]
            }
            ModelParams::WhH { p, q, r, s, .. } => vec![t, t * r / q, t * r / s, t * p * r / q + r],
            ModelParams::W { .. } => {
                let [k1, k2, k3, k4] = k[..] else {
                    unreachable!()
                };
                vec![
                    (2.0 * k4 / k2).sqrt() * k1 / k3,
                    4.0 * k1 * k4 / (k3 * k3),
                    k1 / k3,
                ]
            }
            ModelParams::WH { p, q, r, .. } => vec![t * q, t * 2.0 * q * q / p, t, t * r],
        })
    }

    /// Equilibrium at the instance's own branch parameter.
    pub fn equilibrium(&self) -> Result<Vec<f64>, ModelError> {
        self.closed_form_equilibrium(self.params.branch_parameter().unwrap_or(1.0))
    }

    /// Branch parameter of the equilibrium in the class with total `d·x = c`,
    /// for the ray-shaped branches.
    pub fn branch_parameter_for_total(&self, c: f64) -> Result<f64, ModelError> {
        match self.params {
            ModelParams::WhH { p, q, r, s, .. } => {
                if c <= r {
                    return Err(ModelError::NoEquilibrium(self.id));
                }
                Ok((c - r) / (1.0 + r / q + r / s + p * r / q))
            }
            ModelParams::WH { p, q, r, .. } => Ok(c / (q + 2.0 * q * q / p + 1.0 + r)),
            _ => Err(ModelError::UnknownParameter {
                model: self.id,
                name: "t".into(),
            }),
        }
    }
}

/// Unique positive equilibrium of the general `fb` system.
///
/// `z = κ4 x/κ3`, `y = (κ2+κ7)κ4 x / (κ3(κ1 x + κ8))` and `x` is the positive
/// root of `−κ1κ3κ6 x² + (κ1(κ3κ5 − κ4κ7) − κ3κ6κ8) x + κ8(κ3κ5 + κ2κ4) = 0`.
pub fn fb_equilibrium(k: &[f64]) -> Vec<f64> {
    let [k1, k2, k3, k4, k5, k6, k7, k8] = k[..] else {
        panic!("eight rates expected")
    };
    let a = -k1 * k3 * k6;
    let b = k1 * (k3 * k5 - k4 * k7) - k3 * k6 * k8;
    let c = k8 * (k3 * k5 + k2 * k4);
    // a < 0 < c: exactly one positive root; use the cancellation-free form.
    let disc = (b * b - 4.0 * a * c).sqrt();
    let x = if b >= 0.0 {
        (-b - disc) / (2.0 * a)
    } else {
        2.0 * c / (disc - b)
    };
    let z = k4 * x / k3;
    let y = (k2 + k7) * k4 * x / (k3 * (k1 * x + k8));
    vec![x, y, z]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network;

    #[test]
    fn ids_round_trip() {
        for id in ModelId::ALL {
            assert_eq!(id.as_str().parse::<ModelId>().unwrap(), id);
        }
        assert!("nope".parse::<ModelId>().is_err());
    }

    #[test]
    fn fb_slice_rates() {
        let p = ModelParams::FbSlice { k6: 1.0, k8: 1.0 };
        let k = p.kappa();
        let want = [1.0, 0.2, 0.2, 0.2, 1.8, 1.0, 1.8, 1.0];
        for (a, b) in k.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn whh_closed_form_example() {
        let m = builtin_model(ModelParams::defaults(ModelId::WhH)).unwrap();
        assert_eq!(
            m.closed_form_equilibrium(1.0).unwrap(),
            vec![1.0, 2.0, 2.0, 18.0]
        );
        assert!((m.branch_parameter_for_total(23.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(m.branch_parameter_for_total(2.0).is_err());
    }

    #[test]
    fn fb_h_all_ones() {
        let m = builtin_model(ModelParams::FbH {
            k: [1.0; 8],
            t: 2.0,
        })
        .unwrap();
        let x = m.equilibrium().unwrap();
        for v in x {
            assert!((v - 2.0).abs() < 1e-14);
        }
    }

    #[test]
    fn w_example_point() {
        let m = builtin_model(ModelParams::W {
            k: [1.0, 0.5, 1.0, 0.25],
        })
        .unwrap();
        let x = m.equilibrium().unwrap();
        for v in &x {
            assert!((v - 1.0).abs() < 1e-15);
        }
        assert!(m.system.relative_residual(&x) < 1e-15);
    }

    #[test]
    fn wh_equilibrium_needs_growth() {
        let m = builtin_model(ModelParams::Wh {
            k: [1.0, 1.0, 1.0, 2.0, 1.0],
        })
        .unwrap();
        assert_eq!(m.equilibrium(), Err(ModelError::NoEquilibrium(ModelId::Wh)));
        let m = builtin_model(ModelParams::Wh {
            k: [2.0, 1.0, 1.0, 1.0, 1.0],
        })
        .unwrap();
        assert_eq!(m.equilibrium().unwrap(), vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn named_parameters() {
        let mut p = ModelParams::defaults(ModelId::WhH);
        p.set("t", 2.84).unwrap();
        assert_eq!(p.get("t"), Some(2.84));
        assert!(p.set("k1", 1.0).is_err());
        let p = ModelParams::defaults(ModelId::Fb).with("k3", 4.0).unwrap();
        assert_eq!(p.kappa()[2], 4.0);
        assert!(builtin_model(ModelParams::FbSlice { k6: -1.0, k8: 1.0 }).is_err());
    }

    #[test]
    fn homogenised_sources_conserve_mass() {
        for id in ModelId::ALL {
            let r = network::structural_report(&id.network());
            assert_eq!(r.mass_conserving, id.is_homogenised(), "{id}");
            assert!(r.bimolecular);
        }
    }
}
