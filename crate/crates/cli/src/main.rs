mod target;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crnosc::dynamics::{
    bistability_probe, find_limit_cycle, integrate, permanence_probe, CycleOptions, CycleSearch,
    LimitCycleReport, PermanenceReport, ProbeOptions, SectionSpec, Tolerance, Trajectory,
};
use crnosc::export;
use crnosc::hopf::{
    closed_form_l1, focal_value_at_point, hopf_locus_eval, hopf_scan, AxisSpec, BoundaryPoint,
    CanonicalTaylorData, FocalValue, GridSpec, HopfError,
};
use crnosc::lincheck::{
    classify_equilibrium, competitive_pattern_search, Classification, FrameChoice, SignPattern,
    StabilityReport,
};
use crnosc::massaction::{
    detailed_balance_check, find_equilibrium, DetailedBalanceReport, MassActionSystem,
};
use crnosc::models::{EquilibriumBranch, ModelParams};
use crnosc::netdsl::{parse_network, render_network};
use crnosc::network::{is_reversible, stoichiometric_matrix, structural_report, StructureReport};
use crnosc::svg;
use nalgebra::Vector3;

use target::{builtin_source, class_offset, read_network, ModelArgs, Target};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Analysis(String),
}

fn analysis(e: impl std::fmt::Display) -> CliError {
    CliError::Analysis(e.to_string())
}

/// Exit status and the files a command wrote.
#[derive(Debug, Default)]
pub struct CommandOutcome {
    pub exit_code: u8,
    pub artifacts: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Parser)]
#[command(
    name = "crnosc",
    version,
    about = "Oscillations in bimolecular mass-action networks"
)]
struct Cli {
    /// Seed for every randomised step.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory receiving the artifacts.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Format of the summary printed on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Absolute integration tolerance.
    #[arg(long, global = true)]
    tol_abs: Option<f64>,
    /// Relative integration tolerance.
    #[arg(long, global = true)]
    tol_rel: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a network and print it in canonical form.
    Parse(ParseArgs),
    /// Structural report, plus equilibrium, stability, detailed balance and
    /// competitivity when rates are given.
    Analyze(ModelArgs),
    /// Positive equilibrium from the closed form and from Newton's method.
    Equilibria(ModelArgs),
    /// Routh–Hurwitz classification of the equilibrium.
    Stability(ModelArgs),
    /// Two-parameter scan of the Hopf boundary with focal values.
    HopfScan(ScanArgs),
    /// First focal value at an equilibrium on the Hopf boundary.
    Focal(FocalArgs),
    /// Integrate one trajectory.
    Simulate(SimArgs),
    /// Limit-cycle search and, for a stable equilibrium, the coexistence probe.
    Cycles(CycleArgs),
    /// Post-transient coordinate floor over random starts in the class.
    Permanence(PermArgs),
}

#[derive(Args)]
struct ParseArgs {
    #[arg(long, conflicts_with = "model", required_unless_present = "model")]
    file: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
}

#[derive(Args)]
struct ScanArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// First axis as `name:lo:hi`.
    #[arg(long)]
    p1: String,
    /// Second axis as `name:lo:hi`.
    #[arg(long)]
    p2: String,
    /// Grid points per axis.
    #[arg(long, default_value_t = 100)]
    res: usize,
}

#[derive(Args)]
struct FocalArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Prescribed first row of the canonical frame; balanced frame otherwise.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    first_row: Option<Vec<f64>>,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// `near-eq` starts 1% away from the equilibrium inside its class; `x0` uses `--x0`.
    #[arg(long)]
    t0: Option<String>,
    #[arg(long, default_value_t = 100.0)]
    horizon: f64,
    /// Rows of the resampled trajectory CSV; 0 writes every accepted step.
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    /// Coordinate pair for the phase portrait.
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    pair: Vec<usize>,
}

#[derive(Args)]
struct CycleArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Integration time before the section search starts.
    #[arg(long)]
    transient: Option<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    pair: Vec<usize>,
}

#[derive(Args)]
struct PermArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 20)]
    samples: usize,
    #[arg(long, default_value_t = 500.0)]
    transient: f64,
    #[arg(long, default_value_t = 500.0)]
    window: f64,
}

struct Ctx {
    seed: u64,
    out_dir: PathBuf,
    format: Format,
    tol_abs: Option<f64>,
    tol_rel: Option<f64>,
    outcome: CommandOutcome,
}

impl Ctx {
    fn tolerance(&self, default: Tolerance) -> Result<Tolerance, CliError> {
        let t = Tolerance {
            abs: self.tol_abs.unwrap_or(default.abs),
            rel: self.tol_rel.unwrap_or(default.rel),
        };
        if !(t.abs > 0.0 && t.rel > 0.0) {
            return Err(CliError::Usage("tolerances must be positive".into()));
        }
        Ok(t)
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out_dir)
            .map_err(|e| analysis(format!("{}: {e}", self.out_dir.display())))?;
        let path = self.out_dir.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| analysis(format!("{}: {e}", path.display())))?;
        self.outcome.artifacts.push(path);
        Ok(())
    }

    fn write_json<T: Serialize>(
        &mut self,
        name: &str,
        kind: &str,
        seed: Option<u64>,
        data: &T,
    ) -> Result<String, CliError> {
        let text = export::to_json(kind, seed, data).map_err(analysis)?;
        self.write(name, &text)?;
        Ok(text)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let mut ctx = Ctx {
        seed: cli.seed,
        out_dir: cli.out_dir,
        format: cli.format,
        tol_abs: cli.tol_abs,
        tol_rel: cli.tol_rel,
        outcome: CommandOutcome::default(),
    };
    let result = match &cli.command {
        Command::Parse(a) => cmd_parse(a),
        Command::Analyze(a) => cmd_analyze(&mut ctx, a),
        Command::Equilibria(a) => cmd_equilibria(&mut ctx, a),
        Command::Stability(a) => cmd_stability(&mut ctx, a),
        Command::HopfScan(a) => cmd_hopf_scan(&mut ctx, a),
        Command::Focal(a) => cmd_focal(&mut ctx, a),
        Command::Simulate(a) => cmd_simulate(&mut ctx, a),
        Command::Cycles(a) => cmd_cycles(&mut ctx, a),
        Command::Permanence(a) => cmd_permanence(&mut ctx, a),
    };
    let outcome = match result {
        Ok(stdout) => {
            print!("{stdout}");
            ctx.outcome
        }
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            CommandOutcome {
                exit_code: 2,
                ..ctx.outcome
            }
        }
        Err(CliError::Analysis(m)) => {
            eprintln!("error: {m}");
            CommandOutcome {
                exit_code: 1,
                ..ctx.outcome
            }
        }
    };
    for a in &outcome.artifacts {
        eprintln!("wrote {}", a.display());
    }
    ExitCode::from(outcome.exit_code)
}

fn cmd_parse(a: &ParseArgs) -> Result<String, CliError> {
    let net = match (&a.file, &a.model) {
        (Some(p), _) => read_network(p)?,
        (None, Some(m)) => {
            let id = m
                .parse::<crnosc::models::ModelId>()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            parse_network(&builtin_source(id)).map_err(|d| analysis(format!("{d:?}")))?
        }
        (None, None) => return Err(CliError::Usage("--file or --model is required".into())),
    };
    Ok(render_network(&net).text)
}

fn source_name(m: &ModelArgs) -> String {
    match (&m.model, &m.file) {
        (Some(id), _) => id.to_ascii_lowercase(),
        (None, Some(p)) => p.display().to_string(),
        _ => String::new(),
    }
}

fn csv_vector(names: &[String], cols: &[(&str, &[f64])]) -> String {
    let mut s = String::from("species");
    for (h, _) in cols {
        let _ = write!(s, ",{h}");
    }
    s.push('\n');
    for (i, n) in names.iter().enumerate() {
        s.push_str(n);
        for (_, v) in cols {
            let _ = write!(s, ",{:e}", v[i]);
        }
        s.push('\n');
    }
    s
}

#[derive(Serialize)]
struct Analysis {
    source: String,
    species: Vec<String>,
    structure: StructureReport,
    rates: Option<BTreeMap<String, f64>>,
    equilibrium: Option<Vec<f64>>,
    stability: Option<StabilityReport>,
    detailed_balance: Option<DetailedBalanceReport>,
    competitive_pattern: Option<SignPattern>,
    notes: Vec<String>,
}

fn cmd_analyze(ctx: &mut Ctx, m: &ModelArgs) -> Result<String, CliError> {
    let target = m.resolve()?;
    let net = target.network();
    let mut report = Analysis {
        source: source_name(m),
        species: net.species().to_vec(),
        structure: structural_report(net),
        rates: None,
        equilibrium: None,
        stability: None,
        detailed_balance: None,
        competitive_pattern: None,
        notes: Vec::new(),
    };
    if let Ok(sys) = target.system() {
        report.rates = Some(sys.rates().values);
        match target.equilibrium() {
            Ok(x) => {
                match classify_equilibrium(sys, &x) {
                    Ok(s) => report.stability = Some(s),
                    Err(e) => report.notes.push(format!("stability: {e}")),
                }
                if sys.dim() == 3 {
                    let mut samples = vec![x.clone()];
                    match crnosc::dynamics::random_class_points(sys, &x, 64, ctx.seed) {
                        Ok(pts) => samples.extend(pts),
                        Err(e) => report.notes.push(format!("competitivity samples: {e}")),
                    }
                    report.competitive_pattern = competitive_pattern_search(sys, &samples);
                }
                report.equilibrium = Some(x);
            }
            Err(CliError::Analysis(e) | CliError::Usage(e)) => {
                report.notes.push(format!("equilibrium: {e}"))
            }
        }
        if is_reversible(net) {
            match detailed_balance_check(sys) {
                Ok(d) => report.detailed_balance = Some(d),
                Err(e) => report.notes.push(format!("detailed balance: {e}")),
            }
        }
    }
    let json = ctx.write_json("analysis.json", "analysis", Some(ctx.seed), &report)?;
    let species = net.species().to_vec();
    let labels: Vec<String> = net.reactions().iter().map(|r| r.label.clone()).collect();
    let matrix = stoichiometric_matrix(net).to_csv(&species, &labels);
    ctx.write("stoichiometry.csv", &matrix)?;
    Ok(match ctx.format {
        Format::Json => json,
        Format::Csv => matrix,
    })
}

#[derive(Serialize)]
struct Equilibria {
    species: Vec<String>,
    branch: Option<EquilibriumBranch>,
    closed_form: Option<Vec<f64>>,
    closed_form_residual: Option<f64>,
    newton_start: Vec<f64>,
    newton: Vec<f64>,
    newton_residual: f64,
}

fn cmd_equilibria(ctx: &mut Ctx, m: &ModelArgs) -> Result<String, CliError> {
    let target = m.resolve()?;
    let sys = target.system()?;
    let (closed, branch) = match &target {
        Target::Builtin(inst) => (Some(target.equilibrium()?), Some(inst.branch.clone())),
        Target::File { .. } => (None, None),
    };
    let start = match (&closed, m.x0.clone()) {
        (_, Some(x)) => x,
        (Some(x), None) => class_offset(sys.network(), x, 0.2),
        (None, None) => vec![1.0; sys.dim()],
    };
    let newton = find_equilibrium(sys, &start).map_err(analysis)?;
    let rep = Equilibria {
        species: sys.network().species().to_vec(),
        branch,
        closed_form_residual: closed.as_ref().map(|x| sys.relative_residual(x)),
        closed_form: closed,
        newton_residual: sys.relative_residual(&newton),
        newton_start: start,
        newton,
    };
    let json = ctx.write_json("equilibria.json", "equilibria", None, &rep)?;
    Ok(match ctx.format {
        Format::Json => json,
        Format::Csv => {
            let mut cols: Vec<(&str, &[f64])> = Vec::new();
            if let Some(c) = &rep.closed_form {
                cols.push(("closed_form", c));
            }
            cols.push(("newton", &rep.newton));
            csv_vector(&rep.species, &cols)
        }
    })
}

#[derive(Serialize)]
struct Stability {
    species: Vec<String>,
    equilibrium: Vec<f64>,
    report: StabilityReport,
    /// Closed-form locus function, where one is known.
    locus: Option<f64>,
}

fn cmd_stability(ctx: &mut Ctx, m: &ModelArgs) -> Result<String, CliError> {
    let target = m.resolve()?;
    let sys = target.system()?;
    let x = target.equilibrium()?;
    let report = classify_equilibrium(sys, &x).map_err(analysis)?;
    let locus = match &target {
        Target::Builtin(inst) => hopf_locus_eval(&inst.params).ok(),
        Target::File { .. } => None,
    };
    let rep = Stability {
        species: sys.network().species().to_vec(),
        equilibrium: x,
        report,
        locus,
    };
    let json = ctx.write_json("stability.json", "stability", None, &rep)?;
    Ok(match ctx.format {
        Format::Json => json,
        Format::Csv => {
            let mut s = String::from("re,im\n");
            for (re, im) in rep.report.eigenvalues {
                let _ = writeln!(s, "{re:e},{im:e}");
            }
            s
        }
    })
}

fn parse_axis(spec: &str) -> Result<AxisSpec, CliError> {
    let bad = || CliError::Usage(format!("axis must be name:lo:hi, got {spec:?}"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [name, lo, hi] = parts[..] else {
        return Err(bad());
    };
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(bad());
    }
    if !(hi > lo) {
        return Err(CliError::Usage(format!(
            "axis {name} has an empty range [{lo}, {hi}]"
        )));
    }
    Ok(AxisSpec {
        name: name.trim().to_string(),
        lo,
        hi,
    })
}

#[derive(Serialize)]
struct ScanSummary {
    base: ModelParams,
    grid: GridSpec,
    boundary_points: usize,
    degenerate_points: Vec<BoundaryPoint>,
}

fn cmd_hopf_scan(ctx: &mut Ctx, a: &ScanArgs) -> Result<String, CliError> {
    let id = a
        .model
        .model_id()?
        .ok_or_else(|| CliError::Usage("hopf-scan needs --model".into()))?;
    let p1 = parse_axis(&a.p1)?;
    let p2 = parse_axis(&a.p2)?;
    if p1.name == p2.name {
        return Err(CliError::Usage("the two axes must differ".into()));
    }
    if a.res < 2 {
        return Err(CliError::Usage("--res must be at least 2".into()));
    }
    let base = a.model.params(id, &[&p1.name, &p2.name])?;
    let grid = GridSpec {
        p1,
        p2,
        n1: a.res,
        n2: a.res,
    };
    let res = hopf_scan(&base, &grid).map_err(|e| match e {
        HopfError::EmptyGrid | HopfError::Model(_) => CliError::Usage(e.to_string()),
        other => analysis(other),
    })?;
    ctx.write(
        "scan.csv",
        &export::scan_csv(&res.points).map_err(analysis)?,
    )?;
    let boundary = export::boundary_csv(&res.boundary_points).map_err(analysis)?;
    ctx.write("boundary.csv", &boundary)?;
    ctx.write(
        "diagram.svg",
        &svg::bifurcation_diagram(&res, &format!("{id}: Hopf boundary")),
    )?;
    let summary = ScanSummary {
        base,
        grid: res.grid.clone(),
        boundary_points: res.boundary_points.len(),
        degenerate_points: res.degenerate_points.clone(),
    };
    let json = ctx.write_json("scan.json", "hopf-scan", None, &summary)?;
    Ok(match ctx.format {
        Format::Json => json,
        Format::Csv => export::boundary_csv(&res.degenerate_points).map_err(analysis)?,
    })
}

#[derive(Serialize)]
struct Focal {
    equilibrium: Vec<f64>,
    frame: Option<Vec<f64>>,
    focal_value: FocalValue,
    closed_form: Option<FocalValue>,
    criticality: &'static str,
    taylor: CanonicalTaylorData,
}

fn cmd_focal(ctx: &mut Ctx, a: &FocalArgs) -> Result<String, CliError> {
    let target = a.model.resolve()?;
    let sys = target.system()?;
    let x = target.equilibrium()?;
    let choice = match &a.first_row {
        None => FrameChoice::Balanced,
        Some(v) if v.len() == 3 => FrameChoice::FirstRow(Vector3::new(v[0], v[1], v[2])),
        Some(_) => return Err(CliError::Usage("--first-row takes three numbers".into())),
    };
    let (fv, taylor) = focal_value_at_point(sys, &x, choice).map_err(analysis)?;
    let closed_form = match &target {
        Target::Builtin(inst) => closed_form_l1(&inst.params).ok(),
        Target::File { .. } => None,
    };
    let criticality = if fv.l1 < 0.0 {
        "supercritical"
    } else if fv.l1 > 0.0 {
        "subcritical"
    } else {
        "degenerate"
    };
    let rep = Focal {
        equilibrium: x,
        frame: a.first_row.clone(),
        focal_value: fv,
        closed_form,
        criticality,
        taylor,
    };
    let json = ctx.write_json("focal.json", "focal", None, &rep)?;
    Ok(match ctx.format {
        Format::Json => json,
        Format::Csv => {
            let mut s = String::from("quantity,value\n");
            let _ = writeln!(s, "L1,{:e}", rep.focal_value.l1);
            if let Some(c) = &rep.closed_form {
                let _ = writeln!(s, "L1_closed_form,{:e}", c.l1);
            }
            s
        }
    })
}

fn coordinate_pair(pair: &[usize], n: usize) -> Result<(usize, usize), CliError> {
    match pair {
        [i, j] if *i < n && *j < n && i != j => Ok((*i, *j)),
        _ => Err(CliError::Usage(format!(
            "--pair needs two distinct indices below {n}"
        ))),
    }
}

fn project(points: &[Vec<f64>], (i, j): (usize, usize)) -> Vec<(f64, f64)> {
    points.iter().map(|x| (x[i], x[j])).collect()
}

#[derive(Serialize)]
struct Simulation {
    species: Vec<String>,
    start: Vec<f64>,
    horizon: f64,
    equilibrium: Option<Vec<f64>>,
    classification: Option<Classification>,
    final_state: Vec<f64>,
    distance_to_equilibrium: Option<f64>,
    min_coordinate_second_half: f64,
    steps: usize,
}

fn cmd_simulate(ctx: &mut Ctx, a: &SimArgs) -> Result<String, CliError> {
    let target = a.model.resolve()?;
    let sys = target.system()?;
    let pair = coordinate_pair(&a.pair, sys.dim())?;
    let eq = target.equilibrium().ok();
    let start = match (a.t0.as_deref(), &a.model.x0, &eq) {
        (Some("near-eq"), _, Some(x)) | (None, None, Some(x)) => {
            class_offset(sys.network(), x, 1e-2)
        }
        (Some("near-eq"), _, None) => return Err(analysis("no equilibrium to start near")),
        (Some("x0") | None, Some(x0), _) => x0.clone(),
        (Some("x0"), None, _) => return Err(CliError::Usage("--t0 x0 needs --x0".into())),
        (None, None, None) => {
            return Err(CliError::Usage("no equilibrium found; give --x0".into()))
        }
        (Some(other), _, _) => {
            return Err(CliError::Usage(format!(
                "unknown --t0 {other:?} (near-eq or x0)"
            )))
        }
    };
    let tol = ctx.tolerance(Tolerance::default())?;
    let tr = integrate(sys, &start, a.horizon, tol).map_err(|e| match e {
        crnosc::dynamics::DynamicsError::InvalidHorizon(_)
        | crnosc::dynamics::DynamicsError::Dimension { .. } => CliError::Usage(e.to_string()),
        other => analysis(other),
    })?;
    let out = if a.samples == 0 {
        Trajectory {
            dense: Vec::new(),
            ..tr.clone()
        }
    } else {
        let (times, states) = tr.resample(a.samples).into_iter().unzip();
        Trajectory {
            species: tr.species.clone(),
            times,
            states,
            dense: Vec::new(),
        }
    };
    ctx.write(
        "trajectory.csv",
        &export::trajectory_csv(&out).map_err(analysis)?,
    )?;
    let species = sys.network().species().to_vec();
    let svg = svg::phase_portrait(
        &[("trajectory", project(&out.states, pair))],
        &species[pair.0],
        &species[pair.1],
        &format!("{} to t = {}", source_name(&a.model), a.horizon),
    );
    ctx.write("phase.svg", &svg)?;
    let final_state = tr.final_state().to_vec();
    let rep = Simulation {
        species,
        classification: eq
            .as_ref()
            .and_then(|x| classify_equilibrium(sys, x).ok())
            .map(|r| r.classification),
        distance_to_equilibrium: eq.as_ref().map(|x| {
            x.iter()
                .zip(&final_state)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        }),
        equilibrium: eq,
        start,
        horizon: a.horizon,
        min_coordinate_second_half: tr.min_coordinate_after(0.5 * a.horizon),
        final_state,
        steps: tr.times.len() - 1,
    };
    let json = ctx.write_json("simulation.json", "simulation", None, &rep)?;
    Ok(match ctx.format {
        Format::Json => json,
        Format::Csv => csv_vector(
            &rep.species,
            &[("start", &rep.start), ("final", &rep.final_state)],
        ),
    })
}

fn cycle_trajectory(species: &[String], c: &LimitCycleReport) -> Trajectory {
    let n = c.cycle_points.len().max(1);
    let times = (0..c.cycle_points.len())
        .map(|i| c.period * i as f64 / n as f64)
        .collect();
    Trajectory {
        species: species.to_vec(),
        times,
        states: c.cycle_points.clone(),
        dense: Vec::new(),
    }
}

#[derive(Serialize)]
struct Cycles {
    species: Vec<String>,
    equilibrium: Vec<f64>,
    classification: Classification,
    search: Option<CycleSearch>,
    bistability: Option<crnosc::dynamics::BistabilityReport>,
}

fn cmd_cycles(ctx: &mut Ctx, a: &CycleArgs) -> Result<String, CliError> {
    let target = a.model.resolve()?;
    let sys = target.system()?;
    let pair = coordinate_pair(&a.pair, sys.dim())?;
    let x = target.equilibrium()?;
    let class = classify_equilibrium(sys, &x)
        .map_err(analysis)?
        .classification;
    let mut opts = ProbeOptions::default();
    if let Some(t) = a.transient {
        opts.cycle.transient = t;
    }
    opts.cycle.tol = ctx.tolerance(opts.cycle.tol)?;
    let (search, bistability) = match (&target, class) {
        (Target::Builtin(inst), Classification::Stable) => (
            None,
            Some(bistability_probe(inst, &opts).map_err(analysis)?),
        ),
        (_, Classification::Stable) => (Some(search_from(sys, &x, 0.5, &opts.cycle)?), None),
        _ => (Some(search_from(sys, &x, 1e-2, &opts.cycle)?), None),
    };
    let species = sys.network().species().to_vec();
    let rep = Cycles {
        species: species.clone(),
        equilibrium: x.clone(),
        classification: class,
        search,
        bistability,
    };

    let mut found: Vec<(&str, &LimitCycleReport)> = Vec::new();
    if let Some(c) = rep.search.as_ref().and_then(CycleSearch::cycle) {
        found.push(("cycle", c));
    }
    if let Some(b) = &rep.bistability {
        if let Some(c) = &b.stable_cycle {
            found.push(("stable cycle", c));
        }
        if let Some(c) = &b.unstable_cycle {
            found.push(("unstable cycle", c));
        }
    }
    let json = ctx.write_json("cycles.json", "cycles", None, &rep)?;
    for (name, c) in &found {
        let file = if name.starts_with("unstable") {
            "unstable_cycle.csv"
        } else {
            "cycle.csv"
        };
        ctx.write(
            file,
            &export::trajectory_csv(&cycle_trajectory(&species, c)).map_err(analysis)?,
        )?;
    }
    let mut series: Vec<(&str, Vec<(f64, f64)>)> = found
        .iter()
        .map(|(n, c)| (*n, project(&c.cycle_points, pair)))
        .collect();
    series.push(("equilibrium", vec![(x[pair.0], x[pair.1])]));
    let title = format!("{}: limit cycles", source_name(&a.model));
    ctx.write(
        "phase.svg",
        &svg::phase_portrait(&series, &species[pair.0], &species[pair.1], &title),
    )?;
    Ok(match ctx.format {
        Format::Json => json,
        Format::Csv => {
            let mut s = String::from("cycle,period,spectral_radius,stability,residual\n");
            for (n, c) in &found {
                let _ = writeln!(
                    s,
                    "{n},{:e},{:e},{:?},{:e}",
                    c.period, c.spectral_radius, c.stability, c.residual
                );
            }
            s
        }
    })
}

fn search_from(
    sys: &MassActionSystem,
    x: &[f64],
    offset: f64,
    opts: &CycleOptions,
) -> Result<CycleSearch, CliError> {
    let section = SectionSpec::default_for(sys, x);
    let seed = class_offset(sys.network(), x, offset);
    find_limit_cycle(sys, &seed, &section, opts).map_err(analysis)
}

#[derive(Serialize)]
struct Permanence {
    anchor: Vec<f64>,
    transient: f64,
    window: f64,
    threshold: f64,
    floor_above_threshold: bool,
    report: PermanenceReport,
}

const PERMANENCE_THRESHOLD: f64 = 1e-4;

fn cmd_permanence(ctx: &mut Ctx, a: &PermArgs) -> Result<String, CliError> {
    let target = a.model.resolve()?;
    let sys = target.system()?;
    let anchor = match (&target, &a.model.x0) {
        (Target::Builtin(_), Some(x)) => x.clone(),
        _ => target.equilibrium()?,
    };
    if a.samples == 0 || !(a.transient >= 0.0) || !(a.window > 0.0) {
        return Err(CliError::Usage(
            "need --samples > 0, --transient >= 0 and --window > 0".into(),
        ));
    }
    let tol = ctx.tolerance(Tolerance::default())?;
    let report = permanence_probe(
        sys,
        &anchor,
        a.samples,
        a.transient,
        a.window,
        ctx.seed,
        tol,
    )
    .map_err(analysis)?;
    let rep = Permanence {
        anchor,
        transient: a.transient,
        window: a.window,
        threshold: PERMANENCE_THRESHOLD,
        floor_above_threshold: report.floor > PERMANENCE_THRESHOLD,
        report,
    };
    let json = ctx.write_json("permanence.json", "permanence", Some(ctx.seed), &rep)?;
    Ok(match ctx.format {
        Format::Json => json,
        Format::Csv => {
            let mut s = String::from("sample,floor\n");
            for (i, f) in rep.report.per_sample.iter().enumerate() {
                let _ = writeln!(s, "{i},{f:e}");
            }
            s
        }
    })
}
