// SPDX-License-Identifier: MIT
//! Batch front door for the inclusion-process toolkit. Every number printed
//! here comes from a library call that is independently unit-tested; this
//! binary only parses plans, loops over sweeps, and formats tables.
//!
//! Exit codes: 0 success, 1 I/O or parse failure, 2 model validation
//! failure, 3 numeric failure.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use inclusion_core::analysis::{
    level3_partition, limit_generator, marginal_check, mean_rate_via_capacities, AnalysisError,
    Scale,
};
use inclusion_core::measure::stationary_measure;
use inclusion_core::model::{condensate, ConfigurationSpace, InclusionModel, ModelError};
use inclusion_core::modelfile::{DiffusionRule, ModelFile, ModelFileError};
use inclusion_core::potential::EdgeList;
use inclusion_core::simulate::{hitting_time_samples, thermalization_probability, SimulateError};
use inclusion_core::variational::{capacity_sandwich, ResistanceSet, SandwichError};
use inclusion_core::Real;

/// Environment variable overriding the output directory.
const OUT_DIR_ENV: &str = "INCLUSION_OUT_DIR";

#[derive(Parser)]
#[command(name = "inclusion", about = "Exact and Monte Carlo analysis of inclusion processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct PlanArgs {
    /// Model file (TOML: sites, rates, measure, optional N and d_N)
    #[arg(long)]
    model: PathBuf,
    /// Particle counts, comma separated and increasing (default: model file's N)
    #[arg(long = "N", value_delimiter = ',')]
    n: Vec<usize>,
    /// Diffusion rule: a number, `N^-a`, or `c*N^-a` (default: model file's d_N)
    #[arg(long = "dN")]
    d_n: Option<String>,
    /// Side A of the component partition: component indices or top-site names
    #[arg(long, value_delimiter = ',')]
    partition: Vec<String>,
    /// RNG seed for Monte Carlo estimators
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Monte Carlo replica count
    #[arg(long, default_value_t = 2000)]
    replicas: usize,
    /// Output directory for CSV/JSON artifacts (also via INCLUSION_OUT_DIR)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Relative tolerance used when the report flags discrepancies
    #[arg(long, default_value_t = 1e-9)]
    tolerance: Real,
}

#[derive(Subcommand, Clone)]
enum Command {
    /// Check reversibility/irreducibility and print the top-site structure
    Validate(PlanArgs),
    /// Capacity sandwich (exact, variational lower/upper, limit target) over an N sweep
    Sandwich(PlanArgs),
    /// Monte Carlo estimators: hitting times, thermalization, time outside valleys
    Simulate(PlanArgs),
    /// Mean inter-component rates from exact capacities, against the limit chain
    Rates(PlanArgs),
    /// Consolidated report: structure, rates, coarse partition, marginal checks
    Report(PlanArgs),
}

impl Command {
    fn plan(&self) -> &PlanArgs {
        match self {
            Command::Validate(p)
            | Command::Sandwich(p)
            | Command::Simulate(p)
            | Command::Rates(p)
            | Command::Report(p) => p,
        }
    }
}

/// A fully resolved batch plan.
struct ExperimentPlan {
    model_path: PathBuf,
    file: ModelFile,
    n_list: Vec<usize>,
    rule: Option<DiffusionRule>,
    partition: Vec<String>,
    seed: u64,
    replicas: usize,
    out_dir: Option<PathBuf>,
    tolerance: Real,
}

#[derive(Debug)]
enum CliError {
    Io(String),
    Validation(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Validation(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
    fn message(&self) -> &str {
        match self {
            CliError::Io(m) | CliError::Validation(m) | CliError::Numeric(m) => m,
        }
    }
}

impl From<ModelFileError> for CliError {
    fn from(e: ModelFileError) -> Self {
        match e {
            ModelFileError::Io { .. } | ModelFileError::Parse { .. } => CliError::Io(e.to_string()),
            ModelFileError::Model(m) => CliError::from(m),
            other => CliError::Io(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<SandwichError> for CliError {
    fn from(e: SandwichError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<SimulateError> for CliError {
    fn from(e: SimulateError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl ExperimentPlan {
    fn resolve(args: &PlanArgs) -> Result<Self, CliError> {
        let file = ModelFile::load(&args.model)?;
        let mut n_list = args.n.clone();
        if n_list.is_empty() {
            if let Some(n) = file.particle_count {
                n_list.push(n);
            } else {
                return Err(CliError::Io(
                    "no particle count: pass --N or set `N` in the model file".into(),
                ));
            }
        }
        if !n_list.windows(2).all(|w| w[0] < w[1]) {
            return Err(CliError::Io("--N list must be strictly increasing".into()));
        }
        if args.replicas < 1 {
            return Err(CliError::Io("--replicas must be at least 1".into()));
        }
        let rule = match &args.d_n {
            Some(s) => Some(DiffusionRule::parse(s).map_err(|e| CliError::Io(e.to_string()))?),
            None => None,
        };
        let out_dir = args
            .out
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from));
        Ok(ExperimentPlan {
            model_path: args.model.clone(),
            file,
            n_list,
            rule,
            partition: args.partition.clone(),
            seed: args.seed,
            replicas: args.replicas,
            out_dir,
            tolerance: args.tolerance,
        })
    }

    fn instantiate(&self, n: usize) -> Result<InclusionModel, CliError> {
        Ok(self.file.instantiate(Some(n), self.rule.as_ref())?)
    }

    /// Side-A component indices from `--partition` tokens (indices or
    /// top-site names).
    fn partition_components(&self, model: &InclusionModel) -> Result<Vec<usize>, CliError> {
        if self.partition.is_empty() {
            return Err(CliError::Io(
                "--partition is required: list side-A component indices or top-site names".into(),
            ));
        }
        let g = model.graph();
        let kappa = g.components().len();
        let mut side_a = Vec::new();
        for tok in &self.partition {
            let comp = if let Ok(idx) = tok.parse::<usize>() {
                if idx >= kappa {
                    return Err(CliError::Io(format!(
                        "partition component {idx} out of range (κ = {kappa})"
                    )));
                }
                idx
            } else {
                let site = g
                    .site_index(tok)
                    .ok_or_else(|| CliError::Io(format!("unknown site {tok:?} in --partition")))?;
                g.component_of(site).ok_or_else(|| {
                    CliError::Io(format!("site {tok:?} is not a top site; cannot anchor a partition"))
                })?
            };
            if !side_a.contains(&comp) {
                side_a.push(comp);
            }
        }
        side_a.sort_unstable();
        Ok(side_a)
    }

    fn write_artifact(&self, name: &str, contents: &str) -> Result<Option<PathBuf>, CliError> {
        let Some(dir) = &self.out_dir else { return Ok(None) };
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("creating {}: {e}", dir.display())))?;
        let path = dir.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
        Ok(Some(path))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(command: &Command) -> Result<(), CliError> {
    let plan = ExperimentPlan::resolve(command.plan())?;
    match command {
        Command::Validate(_) => cmd_validate(&plan),
        Command::Sandwich(_) => cmd_sandwich(&plan),
        Command::Simulate(_) => cmd_simulate(&plan),
        Command::Rates(_) => cmd_rates(&plan),
        Command::Report(_) => cmd_report(&plan),
    }
}

fn cmd_validate(plan: &ExperimentPlan) -> Result<(), CliError> {
    // the graph was already validated by ModelFile::load; instantiation
    // checks N and d and surfaces advisory warnings
    let n = plan.n_list[0];
    let model = plan.instantiate(n)?;
    let report = model.graph().report();
    println!("model: {}", plan.model_path.display());
    println!("sites: {}", report.sites.join(", "));
    println!("top sites (S*): {{{}}}", report.star_sites.join(", "));
    println!("kappa* = {} components:", report.components.len());
    for (i, c) in report.components.iter().enumerate() {
        println!("  [{i}] {{{}}}", c.join(", "));
    }
    println!("intermediate sites: {{{}}}", report.non_star_sites.join(", "));
    println!(
        "N = {n}, d_N = {} ({}), theta1 = {:.6e}, theta2 = {:.6e}",
        model.diffusion(),
        model.schedule_tag().unwrap_or("literal"),
        model.theta1(),
        model.theta2()
    );
    for w in model.warnings() {
        println!("warning: {w}");
    }
    Ok(())
}

fn csv_real(v: Real) -> String {
    format!("{v:.12e}")
}

fn cmd_sandwich(plan: &ExperimentPlan) -> Result<(), CliError> {
    let mut csv = String::from(
        "N,d,capacity,lower,upper,target,normalized_capacity,normalized_lower,normalized_upper,runtime_s,status\n",
    );
    for &n in &plan.n_list {
        let model = plan.instantiate(n)?;
        let side_a = plan.partition_components(&model)?;
        let start = Instant::now();
        let space = match ConfigurationSpace::enumerate(&model) {
            Ok(s) => s,
            Err(ModelError::StateSpaceTooLarge { count, cap }) => {
                writeln!(csv, "{n},{},,,,,,,,,skipped({count}>{cap})", model.diffusion()).unwrap();
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let table = stationary_measure(&model, &space);
        let edges = EdgeList::build(&model, &space, &table);
        let report = capacity_sandwich(&model, &space, &table, &edges, &side_a)?;
        let dt = start.elapsed().as_secs_f64();
        writeln!(
            csv,
            "{n},{},{},{},{},{},{},{},{},{dt:.3},ok",
            model.diffusion(),
            csv_real(report.capacity),
            csv_real(report.lower_bound),
            csv_real(report.upper_bound),
            csv_real(report.target),
            csv_real(report.normalized(report.capacity)),
            csv_real(report.normalized(report.lower_bound)),
            csv_real(report.normalized(report.upper_bound)),
        )
        .unwrap();
    }
    print!("{csv}");
    if let Some(path) = plan.write_artifact("sandwich.csv", &csv)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct SimulateSummary {
    model: String,
    n: usize,
    d: Real,
    seed: u64,
    replicas: usize,
    hitting: Vec<HittingSummary>,
    thermalization: Vec<ThermalizationSummary>,
    occupation_outside_fraction: Real,
    horizon: Real,
}

#[derive(Serialize)]
struct HittingSummary {
    from_site: String,
    to_site: String,
    mean: Real,
    std_error: Real,
    mean_over_theta2: Real,
}

#[derive(Serialize)]
struct ThermalizationSummary {
    component: usize,
    pairs: Vec<(String, String)>,
    probabilities: Vec<Real>,
}

fn cmd_simulate(plan: &ExperimentPlan) -> Result<(), CliError> {
    let n = plan.n_list[0];
    let model = plan.instantiate(n)?;
    let g = model.graph();
    let s = g.site_count();
    let theta2 = model.theta2();

    // hitting times between the first valleys of consecutive components
    let mut hitting = Vec::new();
    let comps = g.components();
    for w in comps.windows(2) {
        let (x, y) = (w[0][0], w[1][0]);
        let stats = hitting_time_samples(
            &model,
            &condensate(s, n, x),
            &[condensate(s, n, y)],
            plan.replicas,
            plan.seed,
        )?;
        hitting.push(HittingSummary {
            from_site: g.names()[x].clone(),
            to_site: g.names()[y].clone(),
            mean: stats.mean,
            std_error: stats.std_error,
            mean_over_theta2: stats.mean / theta2,
        });
    }

    // thermalization matrices for every component with at least two top sites
    let mut thermalization = Vec::new();
    for (i, c) in comps.iter().enumerate() {
        if c.len() < 2 {
            continue;
        }
        let (pairs, probabilities) =
            thermalization_probability(&model, i, plan.replicas, plan.seed)?;
        thermalization.push(ThermalizationSummary {
            component: i,
            pairs: pairs
                .iter()
                .map(|&(x, y)| (g.names()[x].clone(), g.names()[y].clone()))
                .collect(),
            probabilities,
        });
    }

    // fraction of time outside the valleys over one theta2 horizon
    use inclusion_core::simulate::{simulate_path, trace_on_valleys, SimulationRun};
    let start = condensate(s, n, g.star_sites()[0]);
    let run = SimulationRun::new(plan.seed, u64::MAX).with_max_time(theta2).with_event_log();
    let path = simulate_path(&model, &run, &start, |_| false);
    let trace = trace_on_valleys(&model, &start, &path);
    let occupation_outside_fraction = trace.outside_time / path.elapsed.max(Real::MIN_POSITIVE);

    let summary = SimulateSummary {
        model: plan.model_path.display().to_string(),
        n,
        d: model.diffusion(),
        seed: plan.seed,
        replicas: plan.replicas,
        hitting,
        thermalization,
        occupation_outside_fraction,
        horizon: theta2,
    };
    let json = serde_json::to_string_pretty(&summary).expect("serializable summary");
    println!("{json}");
    if let Some(path) = plan.write_artifact("simulate.json", &json)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

#[derive(Serialize)]
struct RatesSummary {
    model: String,
    n: usize,
    d: Real,
    component_count: usize,
    /// row-major κ×κ
    r_star: Vec<Real>,
    normalized: Vec<Real>,
    target: Vec<Real>,
    h1_ratios: Vec<Real>,
    level3_partition: Vec<Vec<usize>>,
}

fn rates_summary(plan: &ExperimentPlan, n: usize) -> Result<RatesSummary, CliError> {
    let model = plan.instantiate(n)?;
    let space = ConfigurationSpace::enumerate(&model)?;
    let table = stationary_measure(&model, &space);
    let edges = EdgeList::build(&model, &space, &table);
    let res = ResistanceSet::build(model.graph(), n);
    let report = mean_rate_via_capacities(&model, &space, &table, &edges, &res)?;
    let chain = limit_generator(&model, Scale::Second, &res);
    Ok(RatesSummary {
        model: plan.model_path.display().to_string(),
        n,
        d: model.diffusion(),
        component_count: report.component_count,
        r_star: report.r_star,
        normalized: report.normalized,
        target: report.target,
        h1_ratios: report.h1_ratios,
        level3_partition: level3_partition(&chain),
    })
}

fn cmd_rates(plan: &ExperimentPlan) -> Result<(), CliError> {
    let mut all = Vec::new();
    for &n in &plan.n_list {
        all.push(rates_summary(plan, n)?);
    }
    let json = serde_json::to_string_pretty(&all).expect("serializable summary");
    println!("{json}");
    if let Some(path) = plan.write_artifact("rates.json", &json)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_report(plan: &ExperimentPlan) -> Result<(), CliError> {
    let n = *plan.n_list.last().expect("nonempty N list");
    let model = plan.instantiate(n)?;
    let g = model.graph();
    let report = g.report();
    let mut out = String::new();
    writeln!(out, "# Consolidated report for {}", plan.model_path.display()).unwrap();
    writeln!(out, "N = {n}, d = {}", model.diffusion()).unwrap();
    writeln!(out, "top sites: {{{}}}; kappa* = {}", report.star_sites.join(", "), report.components.len()).unwrap();
    if report.components.len() == 1 {
        writeln!(
            out,
            "single top component: the first-scale chain already captures the metastable motion; no second scale needed"
        )
        .unwrap();
        print!("{out}");
        if let Some(path) = plan.write_artifact("report.txt", &out)? {
            eprintln!("wrote {}", path.display());
        }
        return Ok(());
    }

    let rates = rates_summary(plan, n)?;
    let k = rates.component_count;
    writeln!(out, "\n## Second-scale rate matrix (theta2-normalized | limit)").unwrap();
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            writeln!(
                out,
                "  r*({i},{j}): {:.6} | {:.6}",
                rates.normalized[i * k + j],
                rates.target[i * k + j]
            )
            .unwrap();
        }
    }
    writeln!(out, "h1 ratios: {:?}", rates.h1_ratios).unwrap();
    writeln!(out, "coarse (level-3) partition: {:?}", rates.level3_partition).unwrap();

    // MC vs limit-chain marginals on a small grid, flagged beyond 3 sigma
    let res = ResistanceSet::build(g, n);
    let chain = limit_generator(&model, Scale::Second, &res);
    let times = [0.1, 0.25, 0.5];
    let check = marginal_check(&model, &chain, 0, &times, plan.replicas, plan.seed);
    writeln!(out, "\n## Marginals from component 0 (MC vs limit, {} replicas)", plan.replicas).unwrap();
    for (ti, &t) in times.iter().enumerate() {
        for c in 0..k {
            let mc = check.mc_marginals[ti][c];
            let lim = check.limit_marginals[ti][c];
            let sigma = (lim * (1.0 - lim) / plan.replicas as Real).sqrt();
            let flag = if (mc - lim).abs() > 3.0 * sigma + plan.tolerance {
                "  <-- beyond 3 sigma (finite-N bias or MC noise)"
            } else {
                ""
            };
            writeln!(out, "  t={t}: component {c}: mc {mc:.4} vs limit {lim:.4}{flag}").unwrap();
        }
        writeln!(out, "  t={t}: outside valleys: {:.4}", check.outside_fraction[ti]).unwrap();
    }
    print!("{out}");
    if let Some(path) = plan.write_artifact("report.txt", &out)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}
