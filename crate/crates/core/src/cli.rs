//! Command-line front end.
//!
//! Every subcommand writes `<out-dir>/<stem>.json` (a [`ResultFile`] that
//! embeds the [`RunManifest`]) and one or more CSV tables next to it. On
//! failure a JSON error record goes to stderr and the process exits with the
//! code from [`exit_code`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::ctmc;
use crate::desim::{self, SimConfig, SimEstimate, SimOutput};
use crate::error::{Error, Result};
use crate::linalg::{self, SolverOptions};
use crate::metrics::{self, ComparisonBlock, PerformanceReport};
use crate::model::{ConfigFile, NetworkParams, ValidationReport};
use crate::productform::{self, Convention, DistributionSource, NormalizationConstant, StationaryDistribution};
use crate::routing::{self, ReachableClass};
use crate::statespace::{SpaceKey, StateSpace};
use crate::traffic::{self, FixedPointOptions, FixedPointOutcome, VisitRatios};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "bikenet", version, about = "Closed queueing network model of a bike-sharing system")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Directory for result files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    /// File stem for outputs (defaults to the subcommand name).
    #[arg(long, global = true)]
    pub stem: Option<String>,

    /// Timestamp recorded in the manifest; pin it to reproduce outputs byte for byte.
    #[arg(long, global = true)]
    pub timestamp: Option<String>,

    /// Cap on the number of enumerated states.
    #[arg(long, global = true)]
    pub max_states: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConventionArg {
    Literal,
    Standard,
}

impl From<ConventionArg> for Convention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::Literal => Convention::Literal,
            ConventionArg::Standard => Convention::Standard,
        }
    }
}

/// How redirect probabilities are chosen for the product form.
#[derive(Debug, Clone, PartialEq)]
pub enum BetaMode {
    Zero,
    Fixed(Vec<f64>),
    FixedPoint,
}

impl std::str::FromStr for BetaMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "zero" => Ok(BetaMode::Zero),
            "fixed-point" => Ok(BetaMode::FixedPoint),
            _ => {
                let list = s
                    .strip_prefix("fixed=")
                    .ok_or_else(|| format!("expected zero, fixed=<list> or fixed-point, got {s:?}"))?;
                list.split(',')
                    .map(|x| x.trim().parse::<f64>().map_err(|e| format!("bad beta value {x:?}: {e}")))
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map(BetaMode::Fixed)
            }
        }
    }
}

impl std::fmt::Display for BetaMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BetaMode::Zero => f.write_str("zero"),
            BetaMode::FixedPoint => f.write_str("fixed-point"),
            BetaMode::Fixed(v) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "fixed={}", parts.join(","))
            }
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the model parameters and report the regime.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Count the state space, the unconstrained box and the reachable class.
    Enumerate {
        #[arg(long)]
        config: PathBuf,
        /// Write every state, one per line.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Exact stationary distribution from the CTMC generator.
    SolveCtmc {
        #[arg(long)]
        config: PathBuf,
        /// Write the generator in coordinate format.
        #[arg(long)]
        dump_generator: Option<PathBuf>,
        /// Write the literal routing matrix in coordinate format.
        #[arg(long)]
        dump_routing: Option<PathBuf>,
    },
    /// Product-form stationary distribution.
    SolvePf {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "standard")]
        convention: ConventionArg,
        /// zero | fixed=<b1,b2,...> | fixed-point
        #[arg(long, default_value = "zero")]
        beta: BetaMode,
    },
    /// Discrete-event simulation.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replications: Option<usize>,
        #[arg(long)]
        horizon: Option<f64>,
        #[arg(long)]
        warmup: Option<f64>,
        /// Record the first events of replication 0.
        #[arg(long, default_value_t = 0)]
        trace: usize,
    },
    /// Performance measures from a saved distribution.
    Metrics {
        #[arg(long)]
        source: PathBuf,
    },
    /// Total-variation table between saved distributions.
    Compare {
        #[arg(required = true, num_args = 2..)]
        results: Vec<PathBuf>,
    },
    /// CTMC, both product-form conventions with fixed-point redirects, and
    /// their distances, in one report.
    Crosscheck {
        #[arg(long)]
        config: PathBuf,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::Enumerate { .. } => "enumerate",
            Command::SolveCtmc { .. } => "solve-ctmc",
            Command::SolvePf { .. } => "solve-pf",
            Command::Simulate { .. } => "simulate",
            Command::Metrics { .. } => "metrics",
            Command::Compare { .. } => "compare",
            Command::Crosscheck { .. } => "crosscheck",
        }
    }

    fn config_path(&self) -> Option<&Path> {
        match self {
            Command::Validate { config }
            | Command::Enumerate { config, .. }
            | Command::SolveCtmc { config, .. }
            | Command::SolvePf { config, .. }
            | Command::Simulate { config, .. }
            | Command::Crosscheck { config } => Some(config),
            Command::Metrics { .. } | Command::Compare { .. } => None,
        }
    }

    fn options(&self) -> BTreeMap<String, String> {
        let mut o = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            o.insert(k.to_string(), v);
        };
        match self {
            Command::Enumerate { dump, .. } => {
                if let Some(d) = dump {
                    put("dump", d.display().to_string());
                }
            }
            Command::SolveCtmc { dump_generator, dump_routing, .. } => {
                if let Some(d) = dump_generator {
                    put("dump_generator", d.display().to_string());
                }
                if let Some(d) = dump_routing {
                    put("dump_routing", d.display().to_string());
                }
            }
            Command::SolvePf { convention, beta, .. } => {
                put("convention", format!("{:?}", Convention::from(*convention)).to_lowercase());
                put("beta", beta.to_string());
            }
            Command::Simulate { seed, replications, horizon, warmup, trace, .. } => {
                if let Some(s) = seed {
                    put("seed", s.to_string());
                }
                if let Some(r) = replications {
                    put("replications", r.to_string());
                }
                if let Some(h) = horizon {
                    put("horizon", h.to_string());
                }
                if let Some(w) = warmup {
                    put("warmup", w.to_string());
                }
                put("trace", trace.to_string());
            }
            Command::Metrics { source } => put("source", source.display().to_string()),
            Command::Compare { results } => {
                for (i, r) in results.iter().enumerate() {
                    put(&format!("result_{i}"), r.display().to_string());
                }
            }
            Command::Validate { .. } | Command::Crosscheck { .. } => {}
        }
        o
    }
}

/// Recorded verbatim in every output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_path: Option<String>,
    pub subcommand: String,
    pub options: BTreeMap<String, String>,
    pub tool_version: String,
    pub timestamp: String,
}

/// One nonzero entry of a saved distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionEntry {
    pub rank: usize,
    pub state: Vec<u32>,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRecord {
    pub source: DistributionSource,
    pub key: SpaceKey,
    pub entries: Vec<DistributionEntry>,
}

impl DistributionRecord {
    pub fn from_distribution(dist: &StationaryDistribution, space: &StateSpace) -> Self {
        let entries = dist
            .probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0.0)
            .map(|(rank, &probability)| DistributionEntry { rank, state: space.components(rank).to_vec(), probability })
            .collect();
        DistributionRecord { source: dist.source, key: dist.key, entries }
    }

    /// Rebuilds the dense distribution, locating entries by state vector.
    pub fn to_distribution(&self, space: &StateSpace) -> Result<StationaryDistribution> {
        if self.key != space.key() {
            return Err(Error::MismatchedSpace(format!("{:?} vs {:?}", self.key, space.key())));
        }
        let mut probs = vec![0.0; space.len()];
        for e in &self.entries {
            probs[space.rank_components(&e.state)?] = e.probability;
        }
        Ok(StationaryDistribution { source: self.source, key: self.key, probs })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerationSummary {
    pub states: usize,
    /// `(K+1)^N (NC+1)^(2N(N-1))`, as a decimal string (may exceed 64 bits).
    pub box_size: Option<String>,
    pub box_size_log10: f64,
    pub reachable_states: usize,
    pub literal_routing_nonzeros: usize,
    /// Closed-form zero count for the routing matrix over the box;
    /// diagnostic only.
    pub closed_form_zero_bound: Option<String>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtmcDiagnostics {
    pub reachable_states: usize,
    pub generator_residual: f64,
    pub jump_row_sum_max_error: f64,
    pub state_level_residual: f64,
    /// `max |pi - normalize(R / exit_rate)|` on the reachable class.
    pub embedded_identity_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductFormDiagnostics {
    pub convention: Convention,
    pub beta_mode: String,
    pub normalization: NormalizationConstant,
    pub convolution: Option<NormalizationConstant>,
    pub ratios: VisitRatios,
    pub fixed_point: Option<FixedPointOutcome>,
    /// Mass placed on states the chain never reaches from the start.
    pub unreachable_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub config: SimConfig,
    pub estimates: Vec<SimEstimate>,
    pub state_estimates: Vec<SimEstimate>,
    pub lost_customers: SimEstimate,
    pub events_per_replication: Vec<u64>,
    pub trace: Vec<desim::TraceEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckSummary {
    pub ctmc: PerformanceReport,
    pub standard: PerformanceReport,
    pub literal: PerformanceReport,
    pub fixed_point_standard: FixedPointOutcome,
    pub fixed_point_literal: FixedPointOutcome,
    pub tv_standard_vs_ctmc: f64,
    pub tv_literal_vs_ctmc: f64,
    pub tv_literal_vs_standard: f64,
    /// Full-station probabilities under the CTMC, next to the converged beta.
    pub ctmc_full_probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Payload {
    Validate { report: ValidationReport },
    Enumerate { summary: EnumerationSummary },
    Ctmc { distribution: DistributionRecord, metrics: PerformanceReport, diagnostics: CtmcDiagnostics },
    ProductForm { distribution: DistributionRecord, metrics: PerformanceReport, diagnostics: ProductFormDiagnostics },
    Simulation { distribution: DistributionRecord, metrics: PerformanceReport, simulation: SimulationSummary },
    Metrics { metrics: PerformanceReport },
    Compare { inputs: Vec<String>, comparison: ComparisonBlock },
    Crosscheck { summary: CrosscheckSummary },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub manifest: RunManifest,
    pub params: Option<NetworkParams>,
    #[serde(flatten)]
    pub payload: Payload,
}

impl ResultFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    fn distribution(&self) -> Option<&DistributionRecord> {
        match &self.payload {
            Payload::Ctmc { distribution, .. }
            | Payload::ProductForm { distribution, .. }
            | Payload::Simulation { distribution, .. } => Some(distribution),
            _ => None,
        }
    }

    /// Params and dense distribution of a saved solve.
    pub fn load_distribution(&self, cap: usize) -> Result<(NetworkParams, StateSpace, StationaryDistribution)> {
        let params =
            self.params.clone().ok_or_else(|| Error::Config("result file carries no model parameters".into()))?;
        let record = self
            .distribution()
            .ok_or_else(|| Error::Config(format!("result of {} carries no distribution", self.manifest.subcommand)))?;
        let space = StateSpace::enumerate_with_cap(&params, cap)?;
        let dist = record.to_distribution(&space)?;
        Ok((params, space, dist))
    }
}

/// Files written by one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub result: ResultFile,
    pub files: Vec<PathBuf>,
    /// Nonzero when the run completed but its finding is a failure
    /// (parameters that do not validate).
    pub exit_code: u8,
}

/// Distinct exit code per error family.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 3,
        Error::InvalidParams(_) => 4,
        Error::ResourceLimit { .. } => 5,
        Error::NonConvergence { .. } => 6,
        Error::AbsorbingState { .. }
        | Error::Reducible(_)
        | Error::Singular(_)
        | Error::Degenerate(_)
        | Error::Regime
        | Error::Conservation { .. } => 7,
        Error::Io(_) => 8,
        Error::NotAMember(_) | Error::OutOfRange { .. } | Error::StationIndex { .. } | Error::MismatchedSpace(_) => 9,
    }
}

pub fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Config(_) => "config",
        Error::InvalidParams(_) => "invalid-params",
        Error::ResourceLimit { .. } => "resource-limit",
        Error::NotAMember(_) => "not-a-member",
        Error::OutOfRange { .. } => "out-of-range",
        Error::AbsorbingState { .. } => "absorbing-state",
        Error::Reducible(_) => "reducible",
        Error::NonConvergence { .. } => "non-convergence",
        Error::Singular(_) => "singular",
        Error::Degenerate(_) => "degenerate",
        Error::Regime => "regime",
        Error::StationIndex { .. } => "station-index",
        Error::MismatchedSpace(_) => "mismatched-space",
        Error::Conservation { .. } => "conservation",
        Error::Io(_) => "io",
    }
}

/// Machine-readable error record written to stderr.
pub fn error_record(err: &Error) -> String {
    serde_json::json!({
        "error": {
            "code": exit_code(err),
            "kind": error_kind(err),
            "message": err.to_string(),
        }
    })
    .to_string()
}

struct Context {
    cfg: ConfigFile,
    cap: usize,
    solver: SolverOptions,
}

impl Context {
    fn load(path: &Path, cap_override: Option<usize>) -> Result<Self> {
        let cfg = ConfigFile::from_path(path)?;
        let cap = cap_override.unwrap_or(cfg.solver.max_states);
        let solver = SolverOptions {
            dense_limit: cfg.solver.dense_limit,
            max_iterations: cfg.solver.max_iterations,
            ..Default::default()
        };
        Ok(Context { cfg, cap, solver })
    }

    fn params(&self) -> &NetworkParams {
        &self.cfg.model
    }

    fn checked_space(&self) -> Result<StateSpace> {
        self.params().checked()?;
        StateSpace::enumerate_with_cap(self.params(), self.cap)
    }
}

fn write_json(path: &Path, value: &ResultFile) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::Io(std::io::Error::other(e)))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn manifest_comment(m: &RunManifest) -> String {
    format!(
        "# bikenet {} {} config={} options={} timestamp={}\n",
        m.tool_version,
        m.subcommand,
        m.config_path.as_deref().unwrap_or("-"),
        serde_json::to_string(&m.options).unwrap_or_default(),
        m.timestamp
    )
}

/// Writes a CSV table preceded by a `#` comment line carrying the manifest.
fn write_table(path: &Path, manifest: &RunManifest, header: &[&str], rows: Vec<Vec<String>>) -> Result<()> {
    {
        let mut w = csv_writer(path)?;
        w.write_record(header).map_err(csv_err)?;
        for r in rows {
            w.write_record(&r).map_err(csv_err)?;
        }
        w.flush()?;
    }
    let body = fs::read_to_string(path)?;
    fs::write(path, manifest_comment(manifest) + &body)?;
    Ok(())
}

fn distribution_rows(rec: &DistributionRecord) -> Vec<Vec<String>> {
    rec.entries
        .iter()
        .map(|e| {
            let state = e.state.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
            vec![e.rank.to_string(), state, format!("{:e}", e.probability)]
        })
        .collect()
}

fn metrics_rows(m: &PerformanceReport) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = m
        .stations
        .iter()
        .map(|s| {
            vec![
                s.station.to_string(),
                format!("{:e}", s.empty),
                format!("{:e}", s.full),
                format!("{:e}", s.problematic),
                format!("{:e}", s.mean_occupancy),
            ]
        })
        .collect();
    rows.push(vec![
        "all".into(),
        String::new(),
        String::new(),
        format!("{:e}", m.mean_problematic),
        format!("Q0_direct={:e};Q0_complement={:e}", m.q0_direct, m.q0_complement),
    ]);
    rows
}

const METRICS_HEADER: [&str; 5] = ["station", "empty", "full", "problematic", "mean_occupancy"];
const DIST_HEADER: [&str; 3] = ["rank", "state", "probability"];

/// Probability mass outside the reachable class.
fn unreachable_mass(dist: &StationaryDistribution, class: &ReachableClass) -> f64 {
    linalg::compensated_sum(dist.probs.iter().enumerate().filter(|(r, _)| !class.contains(*r)).map(|(_, &p)| p))
}

fn solve_product_form(
    params: &NetworkParams,
    space: &StateSpace,
    conv: Convention,
    beta: &BetaMode,
) -> Result<(VisitRatios, Option<FixedPointOutcome>, NormalizationConstant, StationaryDistribution)> {
    let (ratios, fp) = match beta {
        BetaMode::Zero => (traffic::solve_node_level(params, &vec![0.0; params.stations])?, None),
        BetaMode::Fixed(b) => (traffic::solve_node_level(params, b)?, None),
        BetaMode::FixedPoint => {
            let eval = productform::full_probability_evaluator(space, params, conv);
            let out = traffic::fixed_point_beta(params, eval, &FixedPointOptions::default())?;
            (out.ratios.clone(), Some(out))
        }
    };
    let (g, dist) = productform::normalize_direct(space, &ratios, params, conv)?;
    Ok((ratios, fp, g, dist))
}

/// Everything `solve-ctmc` reports besides the distribution.
pub fn ctmc_diagnostics(
    params: &NetworkParams,
    space: &StateSpace,
    dist: &StationaryDistribution,
    opts: &SolverOptions,
) -> Result<CtmcDiagnostics> {
    let class = ReachableClass::from_initial(space, params)?;
    let gen = ctmc::build_generator(space, params)?;
    let generator_residual = linalg::residual(gen.matrix(), &dist.probs);
    let jump = routing::jump_chain(space, params)?.restrict(&class.states);
    let jump_row_sum_max_error = jump.row_sums().iter().fold(0.0f64, |m, s| m.max((s - 1.0).abs()));
    let state = traffic::solve_state_level(&jump, opts)?;
    let scaled: Vec<f64> = class.states.iter().zip(&state.values).map(|(&g, &x)| x / gen.exit_rate(g)).collect();
    let s = linalg::compensated_sum(scaled.iter().copied());
    let pi = class.gather(&dist.probs);
    let embedded_identity_error = metrics::max_pointwise(&pi, &scaled.iter().map(|x| x / s).collect::<Vec<_>>());
    Ok(CtmcDiagnostics {
        reachable_states: class.len(),
        generator_residual,
        jump_row_sum_max_error,
        state_level_residual: state.residual,
        embedded_identity_error,
    })
}

/// Runs the CTMC and both product-form conventions with fixed-point redirects.
pub fn crosscheck(params: &NetworkParams, space: &StateSpace, opts: &SolverOptions) -> Result<CrosscheckSummary> {
    let ctmc_dist = ctmc::solve(space, params, opts)?;
    let (_, fp_std, _, std_dist) = solve_product_form(params, space, Convention::Standard, &BetaMode::FixedPoint)?;
    let (_, fp_lit, _, lit_dist) = solve_product_form(params, space, Convention::Literal, &BetaMode::FixedPoint)?;
    let ctmc_full = (0..params.stations)
        .map(|i| metrics::problematic(&ctmc_dist, space, i).map(|p| p.full))
        .collect::<Result<Vec<_>>>()?;
    Ok(CrosscheckSummary {
        ctmc: metrics::report(&ctmc_dist, space)?,
        standard: metrics::report(&std_dist, space)?,
        literal: metrics::report(&lit_dist, space)?,
        fixed_point_standard: fp_std.expect("fixed-point mode"),
        fixed_point_literal: fp_lit.expect("fixed-point mode"),
        tv_standard_vs_ctmc: metrics::total_variation(&std_dist.probs, &ctmc_dist.probs),
        tv_literal_vs_ctmc: metrics::total_variation(&lit_dist.probs, &ctmc_dist.probs),
        tv_literal_vs_standard: metrics::total_variation(&lit_dist.probs, &std_dist.probs),
        ctmc_full_probabilities: ctmc_full,
    })
}

/// Executes one parsed command line.
pub fn run(cli: &Cli) -> Result<Outcome> {
    let started = Instant::now();
    let name = cli.command.name();
    let manifest = RunManifest {
        config_path: cli.command.config_path().map(|p| p.display().to_string()),
        subcommand: name.to_string(),
        options: {
            let mut o = cli.command.options();
            if let Some(c) = cli.max_states {
                o.insert("max_states".into(), c.to_string());
            }
            o
        },
        tool_version: TOOL_VERSION.to_string(),
        timestamp: cli
            .timestamp
            .clone()
            .unwrap_or_else(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
    };
    fs::create_dir_all(&cli.out_dir)?;
    let stem = cli.stem.clone().unwrap_or_else(|| name.to_string());
    let path_for = |suffix: &str| cli.out_dir.join(format!("{stem}{suffix}"));
    let mut files = Vec::new();
    let mut exit = 0u8;

    let (params, payload) = match &cli.command {
        Command::Validate { config } => {
            let ctx = Context::load(config, cli.max_states)?;
            let report = ctx.params().validate();
            if !report.passed() {
                exit = exit_code(&Error::InvalidParams(String::new()));
            }
            let rows = report
                .violations
                .iter()
                .map(|v| vec![v.field.clone(), format!("{:?}", v.index), v.message.clone()])
                .collect();
            let csv = path_for(".csv");
            write_table(&csv, &manifest, &["field", "index", "message"], rows)?;
            files.push(csv);
            (Some(ctx.cfg.model.clone()), Payload::Validate { report })
        }
        Command::Enumerate { config, dump } => {
            let ctx = Context::load(config, cli.max_states)?;
            let space = ctx.checked_space()?;
            let p = ctx.params();
            if let Some(d) = dump {
                space.dump(std::io::BufWriter::new(fs::File::create(d)?))?;
                files.push(d.clone());
            }
            let class = ReachableClass::from_initial(&space, p)?;
            let literal = routing::literal_routing_entries(&space, p)?;
            let summary = EnumerationSummary {
                states: space.len(),
                box_size: StateSpace::box_size(p).map(|b| b.to_string()),
                box_size_log10: StateSpace::box_size_log10(p),
                reachable_states: class.len(),
                literal_routing_nonzeros: literal.nnz(),
                closed_form_zero_bound: routing::closed_form_zero_bound(p).map(|z| z.to_string()),
                note: "states counts the sum-constrained space; box_size counts the unconstrained box".into(),
            };
            let csv = path_for(".csv");
            write_table(
                &csv,
                &manifest,
                &["states", "box_size", "reachable_states", "literal_routing_nonzeros"],
                vec![vec![
                    summary.states.to_string(),
                    summary.box_size.clone().unwrap_or_else(|| format!("1e{:.3}", summary.box_size_log10)),
                    summary.reachable_states.to_string(),
                    summary.literal_routing_nonzeros.to_string(),
                ]],
            )?;
            files.push(csv);
            (Some(p.clone()), Payload::Enumerate { summary })
        }
        Command::SolveCtmc { config, dump_generator, dump_routing } => {
            let ctx = Context::load(config, cli.max_states)?;
            let space = ctx.checked_space()?;
            let p = ctx.params();
            let gen = ctmc::build_generator(&space, p)?;
            if let Some(d) = dump_generator {
                gen.matrix().dump(std::io::BufWriter::new(fs::File::create(d)?))?;
                files.push(d.clone());
            }
            if let Some(d) = dump_routing {
                routing::literal_routing_entries(&space, p)?.dump(std::io::BufWriter::new(fs::File::create(d)?))?;
                files.push(d.clone());
            }
            let dist = ctmc::stationary(&gen, &space, p, &ctx.solver)?;
            let diagnostics = ctmc_diagnostics(p, &space, &dist, &ctx.solver)?;
            let metrics = metrics::report(&dist, &space)?;
            let distribution = DistributionRecord::from_distribution(&dist, &space);
            files.extend(write_distribution_tables(&path_for, &manifest, &distribution, &metrics)?);
            (Some(p.clone()), Payload::Ctmc { distribution, metrics, diagnostics })
        }
        Command::SolvePf { config, convention, beta } => {
            let ctx = Context::load(config, cli.max_states)?;
            let space = ctx.checked_space()?;
            let p = ctx.params();
            let conv = Convention::from(*convention);
            let (ratios, fixed_point, g, dist) = solve_product_form(p, &space, conv, beta)?;
            let convolution = if conv == Convention::Standard && p.regime() == crate::model::Regime::NoFull {
                Some(productform::normalize_convolution(p, &ratios)?)
            } else {
                None
            };
            let class = ReachableClass::from_initial(&space, p)?;
            let diagnostics = ProductFormDiagnostics {
                convention: conv,
                beta_mode: beta.to_string(),
                normalization: g,
                convolution,
                ratios,
                fixed_point,
                unreachable_mass: unreachable_mass(&dist, &class),
            };
            let metrics = metrics::report(&dist, &space)?;
            let distribution = DistributionRecord::from_distribution(&dist, &space);
            files.extend(write_distribution_tables(&path_for, &manifest, &distribution, &metrics)?);
            (Some(p.clone()), Payload::ProductForm { distribution, metrics, diagnostics })
        }
        Command::Simulate { config, seed, replications, horizon, warmup, trace } => {
            let ctx = Context::load(config, cli.max_states)?;
            let space = ctx.checked_space()?;
            let p = ctx.params();
            let sim = &ctx.cfg.simulation;
            let cfg = SimConfig {
                horizon: horizon.unwrap_or(sim.horizon),
                warmup: warmup.unwrap_or(sim.warmup),
                replications: replications.unwrap_or(sim.replications),
                base_seed: seed.unwrap_or(sim.seed),
                trace_events: *trace,
                ..SimConfig::default()
            };
            let out: SimOutput = desim::simulate(p, &space, &cfg)?;
            let metrics = metrics::report(&out.distribution, &space)?;
            let distribution = DistributionRecord::from_distribution(&out.distribution, &space);
            files.extend(write_distribution_tables(&path_for, &manifest, &distribution, &metrics)?);
            let est_csv = path_for("_estimates.csv");
            let rows = out
                .estimates
                .iter()
                .chain(&out.state_estimates)
                .chain(std::iter::once(&out.lost_customers))
                .map(|e| {
                    vec![
                        e.target.clone(),
                        format!("{:e}", e.mean),
                        format!("{:e}", e.std_error),
                        format!("{:e}", e.ci_half_width),
                    ]
                })
                .collect();
            write_table(&est_csv, &manifest, &["target", "mean", "std_error", "ci_half_width"], rows)?;
            files.push(est_csv);
            let simulation = SimulationSummary {
                config: cfg,
                estimates: out.estimates,
                state_estimates: out.state_estimates,
                lost_customers: out.lost_customers,
                events_per_replication: out.events_per_replication,
                trace: out.trace,
            };
            (Some(p.clone()), Payload::Simulation { distribution, metrics, simulation })
        }
        Command::Metrics { source } => {
            let res = ResultFile::load(source)?;
            let (params, space, dist) =
                res.load_distribution(cli.max_states.unwrap_or(crate::statespace::DEFAULT_STATE_CAP))?;
            let metrics = metrics::report(&dist, &space)?;
            let csv = path_for(".csv");
            write_table(&csv, &manifest, &METRICS_HEADER, metrics_rows(&metrics))?;
            files.push(csv);
            (Some(params), Payload::Metrics { metrics })
        }
        Command::Compare { results } => {
            let cap = cli.max_states.unwrap_or(crate::statespace::DEFAULT_STATE_CAP);
            let loaded = results
                .iter()
                .map(|r| ResultFile::load(r).and_then(|f| f.load_distribution(cap)))
                .collect::<Result<Vec<_>>>()?;
            let first = &loaded[0].0;
            for (p, _, _) in &loaded[1..] {
                if SpaceKey::of(p) != SpaceKey::of(first) {
                    return Err(Error::MismatchedSpace(format!("{:?} vs {:?}", SpaceKey::of(first), SpaceKey::of(p))));
                }
            }
            let dists: Vec<&StationaryDistribution> = loaded.iter().map(|(_, _, d)| d).collect();
            let comparison = metrics::compare(&dists)?;
            let inputs: Vec<String> = results.iter().map(|r| r.display().to_string()).collect();
            let rows = comparison
                .pairs
                .iter()
                .map(|c| {
                    vec![
                        inputs[c.a].clone(),
                        inputs[c.b].clone(),
                        c.source_a.to_string(),
                        c.source_b.to_string(),
                        format!("{:e}", c.total_variation),
                        format!("{:e}", c.max_pointwise),
                    ]
                })
                .collect();
            let csv = path_for(".csv");
            write_table(
                &csv,
                &manifest,
                &["a", "b", "source_a", "source_b", "total_variation", "max_pointwise"],
                rows,
            )?;
            files.push(csv);
            (Some(first.clone()), Payload::Compare { inputs, comparison })
        }
        Command::Crosscheck { config } => {
            let ctx = Context::load(config, cli.max_states)?;
            let space = ctx.checked_space()?;
            let summary = crosscheck(ctx.params(), &space, &ctx.solver)?;
            let csv = path_for(".csv");
            let rows = vec![
                vec!["product-form-standard".into(), "ctmc".into(), format!("{:e}", summary.tv_standard_vs_ctmc)],
                vec!["product-form-literal".into(), "ctmc".into(), format!("{:e}", summary.tv_literal_vs_ctmc)],
                vec![
                    "product-form-literal".into(),
                    "product-form-standard".into(),
                    format!("{:e}", summary.tv_literal_vs_standard),
                ],
            ];
            write_table(&csv, &manifest, &["a", "b", "total_variation"], rows)?;
            files.push(csv);
            (Some(ctx.params().clone()), Payload::Crosscheck { summary })
        }
    };

    let result = ResultFile { manifest, params, payload };
    let json = path_for(".json");
    write_json(&json, &result)?;
    files.insert(0, json);
    log_elapsed(name, started);
    Ok(Outcome { result, files, exit_code: exit })
}

fn log_elapsed(name: &str, started: Instant) {
    if std::env::var_os("BIKENET_VERBOSE").is_some() {
        eprintln!("{name}: {:.3}s", started.elapsed().as_secs_f64());
    }
}

fn write_distribution_tables(
    path_for: &dyn Fn(&str) -> PathBuf,
    manifest: &RunManifest,
    dist: &DistributionRecord,
    metrics: &PerformanceReport,
) -> Result<Vec<PathBuf>> {
    let d = path_for(".csv");
    write_table(&d, manifest, &DIST_HEADER, distribution_rows(dist))?;
    let m = path_for("_metrics.csv");
    write_table(&m, manifest, &METRICS_HEADER, metrics_rows(metrics))?;
    Ok(vec![d, m])
}

/// Entry point for the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            ExitCode::from(outcome.exit_code)
        }
        Err(e) => {
            eprintln!("{}", error_record(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
