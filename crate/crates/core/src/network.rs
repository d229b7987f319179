//! Reaction networks and their rate-independent structure.
//!
//! A network is a directed graph on complexes (formal nonnegative integer
//! combinations of species). Everything here is exact: stoichiometric
//! matrices are integer, ranks and conservation laws are rational.

use std::collections::BTreeSet;
use std::fmt;

use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use petgraph::algo::{connected_components, kosaraju_scc};
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exact::{self, Rational};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("complex has {got} coefficients but the network has {expected} species")]
    ComplexArity { expected: usize, got: usize },
    #[error("reaction {label} has identical reactant and product complex")]
    SelfLoop { label: String },
    #[error("duplicate rate label {0}")]
    DuplicateLabel(String),
    #[error("duplicate species {0}")]
    DuplicateSpecies(String),
    #[error("reaction {0} appears twice")]
    DuplicateReaction(String),
}

/// Formal linear combination of species with nonnegative integer coefficients.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Complex {
    coefficients: Vec<u32>,
}

impl Complex {
    pub fn new(coefficients: Vec<u32>) -> Self {
        Self { coefficients }
    }

    pub fn zero(n: usize) -> Self {
        Self {
            coefficients: vec![0; n],
        }
    }

    pub fn coefficients(&self) -> &[u32] {
        &self.coefficients
    }

    pub fn coefficient(&self, species: usize) -> u32 {
        self.coefficients[species]
    }

    pub fn molecularity(&self) -> u32 {
        self.coefficients.iter().sum()
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.iter().all(|&c| c == 0)
    }

    /// Nonzero `(species, coefficient)` pairs.
    pub fn support(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i, c))
    }

    fn extended(&self, n: usize) -> Self {
        let mut c = self.coefficients.clone();
        c.resize(n, 0);
        Self { coefficients: c }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reaction {
    pub reactant: usize,
    pub product: usize,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReactionNetwork {
    species: Vec<String>,
    complexes: Vec<Complex>,
    reactions: Vec<Reaction>,
}

impl ReactionNetwork {
    /// Builds a network from `(reactant, product, label)` triples.
    ///
    /// Complexes are numbered in order of first appearance (reactant before
    /// product), which makes the representation canonical.
    pub fn from_reactions<I>(species: Vec<String>, reactions: I) -> Result<Self, NetworkError>
    where
        I: IntoIterator<Item = (Complex, Complex, String)>,
    {
        let n = species.len();
        let mut seen_species = BTreeSet::new();
        for s in &species {
            if !seen_species.insert(s.as_str()) {
                return Err(NetworkError::DuplicateSpecies(s.clone()));
            }
        }
        let mut complexes: Vec<Complex> = Vec::new();
        let mut out: Vec<Reaction> = Vec::new();
        let mut labels = BTreeSet::new();
        let index_of = |c: Complex, complexes: &mut Vec<Complex>| -> usize {
            match complexes.iter().position(|x| *x == c) {
                Some(i) => i,
                None => {
                    complexes.push(c);
                    complexes.len() - 1
                }
            }
        };
        for (a, b, label) in reactions {
            for c in [&a, &b] {
                if c.coefficients.len() > n {
                    return Err(NetworkError::ComplexArity {
                        expected: n,
                        got: c.coefficients.len(),
                    });
                }
            }
            let (a, b) = (a.extended(n), b.extended(n));
            if a == b {
                return Err(NetworkError::SelfLoop { label });
            }
            if !labels.insert(label.clone()) {
                return Err(NetworkError::DuplicateLabel(label));
            }
            let reactant = index_of(a, &mut complexes);
            let product = index_of(b, &mut complexes);
            if out
                .iter()
                .any(|r| r.reactant == reactant && r.product == product)
            {
                return Err(NetworkError::DuplicateReaction(label));
            }
            out.push(Reaction {
                reactant,
                product,
                label,
            });
        }
        Ok(Self {
            species,
            complexes,
            reactions: out,
        })
    }

    pub fn species(&self) -> &[String] {
        &self.species
    }

    pub fn num_species(&self) -> usize {
        self.species.len()
    }

    pub fn complexes(&self) -> &[Complex] {
        &self.complexes
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn reactant(&self, j: usize) -> &Complex {
        &self.complexes[self.reactions[j].reactant]
    }

    pub fn product(&self, j: usize) -> &Complex {
        &self.complexes[self.reactions[j].product]
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s == name)
    }

    /// Reaction vector (product minus reactant) of reaction `j`.
    pub fn reaction_vector(&self, j: usize) -> Vec<i64> {
        let (a, b) = (self.reactant(j), self.product(j));
        a.coefficients
            .iter()
            .zip(&b.coefficients)
            .map(|(&x, &y)| y as i64 - x as i64)
            .collect()
    }

    /// Renders a complex with the species names, e.g. `X + 2Y` or `0`.
    pub fn complex_to_string(&self, c: &Complex) -> String {
        if c.is_zero() {
            return "0".to_string();
        }
        c.support()
            .map(|(i, k)| {
                if k == 1 {
                    self.species[i].clone()
                } else {
                    format!("{k}{}", self.species[i])
                }
            })
            .collect::<Vec<_>>()
            .join(" + ")
    }

    fn graph(&self) -> DiGraph<(), ()> {
        let mut g = DiGraph::new();
        let nodes: Vec<_> = (0..self.complexes.len()).map(|_| g.add_node(())).collect();
        for r in &self.reactions {
            g.add_edge(nodes[r.reactant], nodes[r.product], ());
        }
        g
    }
}

/// Integer matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntMatrix {
    pub rows: usize,
    pub cols: usize,
    data: Vec<i64>,
}

impl IntMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0; rows * cols],
        }
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: i64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[i64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<i64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<i64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    /// CSV with a header row of column names and a leading row-name column.
    pub fn to_csv(&self, row_names: &[String], col_names: &[String]) -> String {
        let mut s = String::from("species");
        for c in col_names {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for i in 0..self.rows {
            s.push_str(&row_names[i]);
            for j in 0..self.cols {
                s.push_str(&format!(",{}", self.get(i, j)));
            }
            s.push('\n');
        }
        s
    }
}

/// Species-by-reaction matrix whose columns are the reaction vectors.
pub fn stoichiometric_matrix(net: &ReactionNetwork) -> IntMatrix {
    let n = net.num_species();
    let m = net.reactions.len();
    let mut g = IntMatrix::zeros(n, m);
    for j in 0..m {
        for (i, v) in net.reaction_vector(j).into_iter().enumerate() {
            g.set(i, j, v);
        }
    }
    g
}

pub fn rank(net: &ReactionNetwork) -> usize {
    exact::rank(&stoichiometric_matrix(net).to_rows())
}

/// Number of weakly connected components of the complex graph.
pub fn linkage_classes(net: &ReactionNetwork) -> usize {
    connected_components(&net.graph())
}

pub fn deficiency(net: &ReactionNetwork) -> usize {
    let d = net.complexes.len() as i64 - linkage_classes(net) as i64 - rank(net) as i64;
    debug_assert!(d >= 0, "deficiency is nonnegative by construction");
    d.max(0) as usize
}

pub fn is_reversible(net: &ReactionNetwork) -> bool {
    net.reactions.iter().all(|r| {
        net.reactions
            .iter()
            .any(|s| s.reactant == r.product && s.product == r.reactant)
    })
}

/// True when every linkage class is strongly connected (weak reversibility).
pub fn is_strongly_connected(net: &ReactionNetwork) -> bool {
    let g = net.graph();
    kosaraju_scc(&g).len() == connected_components(&g)
}

pub fn is_bimolecular(net: &ReactionNetwork) -> bool {
    net.complexes.iter().all(|c| c.molecularity() <= 2)
}

/// Basis of the conservation laws `{d : dᵀΓ = 0}` as primitive integer vectors.
pub fn conservation_laws(net: &ReactionNetwork) -> Vec<Vec<i64>> {
    use num_traits::ToPrimitive;
    let gt = stoichiometric_matrix(net).transpose();
    exact::null_space(&gt.to_rows(), net.num_species())
        .iter()
        .map(|v| {
            exact::primitive_integer(v)
                .iter()
                .map(|x| x.to_i64().expect("conservation law entries fit in i64"))
                .collect()
        })
        .collect()
}

/// A strictly positive `d` with `dᵀΓ = 0`, scaled so its smallest entry is 1.
///
/// Solved as the exact feasibility problem `Γᵀ(1 + e) = 0, e >= 0`; a positive
/// conservation vector exists iff some vector has all entries >= 1.
pub fn conservation_vector(net: &ReactionNetwork) -> Option<Vec<Rational>> {
    let n = net.num_species();
    let g = stoichiometric_matrix(net);
    let a: Vec<Vec<Rational>> = (0..g.cols)
        .map(|j| {
            g.column(j)
                .into_iter()
                .map(|v| BigRational::from_integer(v.into()))
                .collect()
        })
        .collect();
    let b: Vec<Rational> = a.iter().map(|row| -row.iter().sum::<Rational>()).collect();
    let e = exact::nonneg_solution(&a, &b, n)?;
    let d: Vec<Rational> = e.into_iter().map(|x| x + Rational::one()).collect();
    let min = d.iter().min().cloned()?;
    Some(d.into_iter().map(|x| x / &min).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StructuralFlag {
    /// Deficiency zero: no periodic orbits in the positive orthant.
    NoPeriodicOrbits,
    /// Deficiency one, single strongly connected class, full rank.
    UniquePositiveEquilibrium,
    /// Every linkage class strongly connected.
    PermanentByStrongConnectivity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub schema_version: u32,
    pub num_species: usize,
    pub num_reactions: usize,
    pub rank: usize,
    pub num_complexes: usize,
    pub num_linkage_classes: usize,
    pub deficiency: usize,
    pub reversible: bool,
    pub strongly_connected: bool,
    pub bimolecular: bool,
    pub mass_conserving: bool,
    #[serde(with = "rational_strings")]
    pub conservation_vector: Option<Vec<Rational>>,
    pub flags: BTreeSet<StructuralFlag>,
    pub lint: Vec<String>,
}

pub fn structural_report(net: &ReactionNetwork) -> StructureReport {
    let rank = rank(net);
    let num_complexes = net.complexes.len();
    let num_linkage_classes = linkage_classes(net);
    let deficiency = deficiency(net);
    let reversible = is_reversible(net);
    let strongly_connected = is_strongly_connected(net);
    let bimolecular = is_bimolecular(net);
    let conservation_vector = conservation_vector(net);
    let n = net.num_species();

    let mut flags = BTreeSet::new();
    if deficiency == 0 {
        flags.insert(StructuralFlag::NoPeriodicOrbits);
    }
    if strongly_connected {
        flags.insert(StructuralFlag::PermanentByStrongConnectivity);
    }
    if deficiency == 1 && strongly_connected && num_linkage_classes == 1 && rank == n {
        flags.insert(StructuralFlag::UniquePositiveEquilibrium);
    }

    let mut lint = Vec::new();
    if strongly_connected && num_linkage_classes > 1 {
        lint.push(format!(
            "{num_linkage_classes} linkage classes, each strongly connected; uniqueness of positive equilibria is not claimed structurally"
        ));
    }
    let reversible_pairs = net
        .reactions
        .iter()
        .filter(|r| r.reactant < r.product && reversible)
        .count();
    if reversible && bimolecular && (num_complexes < 5 || reversible_pairs < 4) {
        lint.push(format!(
            "reversible bimolecular network with {num_complexes} complexes and {reversible_pairs} reversible reactions: at least 5 and 4 are needed for a limit cycle"
        ));
    }
    if bimolecular && rank <= 2 {
        lint.push(format!(
            "bimolecular network of rank {rank}: no limit cycles"
        ));
    }
    if bimolecular && net.reactions.len() < 4 {
        lint.push(format!(
            "bimolecular network with {} reactions: at least 4 are needed for a limit cycle",
            net.reactions.len()
        ));
    }

    StructureReport {
        schema_version: REPORT_SCHEMA_VERSION,
        num_species: n,
        num_reactions: net.reactions.len(),
        rank,
        num_complexes,
        num_linkage_classes,
        deficiency,
        reversible,
        strongly_connected,
        bimolecular,
        mass_conserving: conservation_vector.is_some(),
        conservation_vector,
        flags,
        lint,
    }
}

/// Serializes rational vectors as `"p/q"` strings.
mod rational_strings {
    use super::Rational;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<Rational>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(v) => s.collect_seq(v.iter().map(|r| r.to_string())),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<Rational>>, D::Error> {
        let raw: Option<Vec<String>> = Option::deserialize(d)?;
        raw.map(|v| {
            v.iter()
                .map(|s| s.parse::<Rational>().map_err(D::Error::custom))
                .collect()
        })
        .transpose()
    }
}

impl fmt::Display for StructureReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "species {}  reactions {}  complexes {}  linkage classes {}  rank {}  deficiency {}",
            self.num_species,
            self.num_reactions,
            self.num_complexes,
            self.num_linkage_classes,
            self.rank,
            self.deficiency
        )?;
        writeln!(
            f,
            "reversible {}  strongly connected {}  bimolecular {}  mass conserving {}",
            self.reversible, self.strongly_connected, self.bimolecular, self.mass_conserving
        )?;
        if let Some(d) = &self.conservation_vector {
            let s: Vec<String> = d.iter().map(|r| r.to_string()).collect();
            writeln!(f, "conservation vector ({})", s.join(", "))?;
        }
        for flag in &self.flags {
            writeln!(f, "flag {flag:?}")?;
        }
        for l in &self.lint {
            writeln!(f, "note: {l}")?;
        }
        Ok(())
    }
}

/// True if `dᵀΓ = 0` holds exactly.
pub fn annihilates(net: &ReactionNetwork, d: &[Rational]) -> bool {
    let g = stoichiometric_matrix(net);
    (0..g.cols).all(|j| {
        g.column(j)
            .iter()
            .zip(d)
            .map(|(&v, di)| di * BigRational::from_integer(v.into()))
            .sum::<Rational>()
            .is_zero()
    }) && d.iter().all(|x| x.is_positive())
}
