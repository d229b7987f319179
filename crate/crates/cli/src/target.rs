//! Resolving `--model`/`--file` plus parameter flags into a system to analyse.

use std::path::{Path, PathBuf};

use clap::Args;
use crnosc::massaction::{class_bases, find_equilibrium, MassActionSystem, RateAssignment};
use crnosc::models::{builtin_model, ModelError, ModelId, ModelInstance, ModelParams};
use crnosc::netdsl::{parse_bytes, NetworkSource, Severity};
use crnosc::network::ReactionNetwork;

use crate::CliError;

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Builtin model: fb, fb-h, wh, wh-h, w, w-h.
    #[arg(long, conflicts_with = "file")]
    pub model: Option<String>,
    /// Network file in the plain-text reaction format.
    #[arg(long)]
    pub file: Option<PathBuf>,
    /// Rate bindings file (`label = value` per line).
    #[arg(long)]
    pub rates: Option<PathBuf>,
    /// All rate constants in reaction order.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub k: Option<Vec<f64>>,
    #[arg(long, allow_negative_numbers = true)]
    pub k1: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub k2: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub k3: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub k4: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub k5: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub k6: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub k7: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub k8: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub p: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub q: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub r: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub s: Option<f64>,
    /// Equilibrium-branch parameter of the homogenised models.
    #[arg(long, allow_negative_numbers = true)]
    pub t: Option<f64>,
    /// Extra bindings, e.g. `--fix q=1,r=2`.
    #[arg(long, value_delimiter = ',')]
    pub fix: Vec<String>,
    /// Anchor state; selects the stoichiometric class for networks read from a file.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub x0: Option<Vec<f64>>,
}

pub enum Target {
    Builtin(ModelInstance),
    File {
        network: ReactionNetwork,
        system: Option<MassActionSystem>,
        anchor: Option<Vec<f64>>,
    },
}

impl ModelArgs {
    pub fn named(&self) -> Result<Vec<(String, f64)>, CliError> {
        let flags = [
            ("k1", self.k1),
            ("k2", self.k2),
            ("k3", self.k3),
            ("k4", self.k4),
            ("k5", self.k5),
            ("k6", self.k6),
            ("k7", self.k7),
            ("k8", self.k8),
            ("p", self.p),
            ("q", self.q),
            ("r", self.r),
            ("s", self.s),
            ("t", self.t),
        ];
        let mut out: Vec<(String, f64)> = flags
            .iter()
            .filter_map(|(n, v)| v.map(|v| (n.to_string(), v)))
            .collect();
        for item in &self.fix {
            let (name, value) = item.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("--fix expects name=value, got {item:?}"))
            })?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("--fix {name}: not a number: {value:?}")))?;
            out.push((name.trim().to_string(), value));
        }
        Ok(out)
    }

    pub fn model_id(&self) -> Result<Option<ModelId>, CliError> {
        self.model
            .as_deref()
            .map(|m| {
                m.parse()
                    .map_err(|e: ModelError| CliError::Usage(e.to_string()))
            })
            .transpose()
    }

    /// Builtin parameters; `extra` names parameters that a caller will set later
    /// (scan axes) and that count towards choosing the `fb` slice.
    pub fn params(&self, id: ModelId, extra: &[&str]) -> Result<ModelParams, CliError> {
        let named = self.named()?;
        let slice_only = named
            .iter()
            .map(|(n, _)| n.as_str())
            .chain(extra.iter().copied())
            .all(|n| n == "k6" || n == "k8");
        let uses_slice = id == ModelId::Fb
            && self.k.is_none()
            && (!named.is_empty() || !extra.is_empty())
            && slice_only;
        let mut params = if let Some(k) = &self.k {
            ModelParams::from_rates(id, k).map_err(usage)?
        } else if uses_slice {
            ModelParams::FbSlice { k6: 0.2, k8: 0.2 }
        } else {
            ModelParams::defaults(id)
        };
        for (name, value) in named {
            params.set(&name, value).map_err(usage)?;
        }
        Ok(params)
    }

    pub fn builtin(&self, id: ModelId, extra: &[&str]) -> Result<ModelInstance, CliError> {
        builtin_model(self.params(id, extra)?).map_err(usage)
    }

    pub fn resolve(&self) -> Result<Target, CliError> {
        if let Some(id) = self.model_id()? {
            if self.rates.is_some() {
                return Err(CliError::Usage("--rates applies to --file networks".into()));
            }
            return Ok(Target::Builtin(self.builtin(id, &[])?));
        }
        let Some(path) = &self.file else {
            return Err(CliError::Usage(
                "one of --model or --file is required".into(),
            ));
        };
        let network = read_network(path)?;
        let system = self.file_system(&network)?;
        Ok(Target::File {
            network,
            system,
            anchor: self.x0.clone(),
        })
    }

    fn file_system(&self, network: &ReactionNetwork) -> Result<Option<MassActionSystem>, CliError> {
        let named = self.named()?;
        if let Some(k) = &self.k {
            if self.rates.is_some() || !named.is_empty() {
                return Err(CliError::Usage(
                    "--k cannot be combined with other rate flags".into(),
                ));
            }
            return MassActionSystem::from_kappa(network.clone(), k.clone())
                .map(Some)
                .map_err(usage);
        }
        let mut rates = match &self.rates {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Analysis(format!("{}: {e}", p.display())))?;
                RateAssignment::parse_bindings(&text)
                    .map_err(|e| CliError::Analysis(format!("{}: {e}", p.display())))?
            }
            None => RateAssignment::new(),
        };
        for (name, value) in named {
            rates = rates.with(&name, value);
        }
        if rates.values.is_empty() {
            return Ok(None);
        }
        MassActionSystem::new(network.clone(), &rates)
            .map(Some)
            .map_err(usage)
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn read_network(path: &Path) -> Result<ReactionNetwork, CliError> {
    let bytes =
        std::fs::read(path).map_err(|e| CliError::Analysis(format!("{}: {e}", path.display())))?;
    let out = parse_bytes(&bytes, Some(&path.display().to_string()));
    for d in out
        .diagnostics
        .iter()
        .filter(|d| d.severity == Severity::Warning)
    {
        eprintln!("{d}");
    }
    match out.network {
        Some(n) => Ok(n),
        None => {
            let lines: Vec<String> = out.errors().map(|d| d.to_string()).collect();
            Err(CliError::Analysis(lines.join("\n")))
        }
    }
}

pub fn builtin_source(id: ModelId) -> NetworkSource {
    NetworkSource::named(id.source(), id.as_str())
}

impl Target {
    pub fn network(&self) -> &ReactionNetwork {
        match self {
            Target::Builtin(m) => m.system.network(),
            Target::File { network, .. } => network,
        }
    }

    pub fn system(&self) -> Result<&MassActionSystem, CliError> {
        match self {
            Target::Builtin(m) => Ok(&m.system),
            Target::File {
                system: Some(s), ..
            } => Ok(s),
            Target::File { .. } => Err(CliError::Usage(
                "rate constants are required (--k, --rates or --kN)".into(),
            )),
        }
    }

    /// Closed form for builtins, Newton from the anchor (or all ones) otherwise.
    pub fn equilibrium(&self) -> Result<Vec<f64>, CliError> {
        match self {
            Target::Builtin(m) => m
                .equilibrium()
                .map_err(|e| CliError::Analysis(e.to_string())),
            Target::File { anchor, .. } => {
                let sys = self.system()?;
                let a = anchor.clone().unwrap_or_else(|| vec![1.0; sys.dim()]);
                find_equilibrium(sys, &a).map_err(|e| CliError::Analysis(e.to_string()))
            }
        }
    }
}

/// `x + δ·b` for the first stoichiometric direction `b`, kept positive.
pub fn class_offset(net: &ReactionNetwork, x: &[f64], rel: f64) -> Vec<f64> {
    let (b, _) = class_bases(net);
    if b.ncols() == 0 {
        return x.to_vec();
    }
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let mut delta = rel * scale;
    loop {
        let y: Vec<f64> = x
            .iter()
            .enumerate()
            .map(|(i, v)| v + delta * b[(i, 0)])
            .collect();
        if y.iter().all(|v| *v > 0.0) || delta < 1e-12 * scale {
            return y;
        }
        delta *= 0.5;
    }
}
