//! Command-line harness: flags, instance loading, experiment runs and
//! report files.
//!
//! Exit codes: 0 success, 1 invalid input, 2 resource-guard refusal,
//! 3 check violations (the report is still written).

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::diffusion::{derive_seed, Evaluator};
use crate::error::{Error, Resource, Result};
use crate::graph::InfluenceGraph;
use crate::oracle::{
    adaptivity_gap_with, opt_adaptive_with, opt_nonadaptive_with, DecisionTree, GapReport, OracleLimits,
};
use crate::policy::{adaptive_greedy, estimate_policy, evaluate_policy, nonadaptive_greedy, policy_prefix_values};
use crate::smsm::{check_lattice, random_suite, smsm_check_section2, smsm_greedy, smsm_opt_adaptive, SmsmInstance};
use crate::verify::{
    check_adaptive_submodularity, check_hybrid_bound, check_marginal_upper, check_opt_bound, check_rand_lower,
    check_strong_adaptive_submodularity, check_two_level_upper, gap_ceiling, search_gap_witness, sweep_theorems,
    CheckReport, Generator, Instance, InstanceFamily, PolicyChoice,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_GUARD: i32 = 2;
pub const EXIT_VIOLATIONS: i32 = 3;

/// Checks accepted by `verify --checks`.
pub const VERIFY_CHECKS: [&str; 13] = [
    "two_level_upper",
    "marginal_upper",
    "adaptive_submodularity",
    "strong_adaptive_submodularity",
    "rand_lower",
    "rand_lower_random",
    "hybrid_bound",
    "hybrid_bound_strong",
    "hybrid_bound_random",
    "opt_bound",
    "opt_bound_strong",
    "theorems",
    "gap_ceiling",
];

/// Checks run by `verify` without `--checks`: the lemma suite.
pub const DEFAULT_VERIFY_CHECKS: [&str; 9] = [
    "two_level_upper",
    "marginal_upper",
    "adaptive_submodularity",
    "strong_adaptive_submodularity",
    "rand_lower",
    "hybrid_bound",
    "hybrid_bound_strong",
    "opt_bound",
    "opt_bound_strong",
];

/// Checks accepted by `smsm-verify --checks`.
pub const SMSM_CHECKS: [&str; 2] = ["section2", "lattice"];

const DEFAULT_GAP_TRIALS: usize = 500;
const DEFAULT_SMSM_TRIALS: usize = 200;
const DEFAULT_GAP_GENERATOR: &str = "erdos_renyi(5,0.5)";
const DEFAULT_VERIFY_GENERATOR: &str = "exhaustive_small(3)";
const ADAPTIVE_POLICY_TAG: u64 = 0xada9;

#[derive(Parser, Debug)]
#[command(
    name = "adaptive-im",
    version,
    about = "Influence maximization with myopic feedback: greedy, exact oracles and checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Non-adaptive greedy seed selection.
    Greedy(Opts),
    /// Adaptive greedy under myopic feedback.
    AdaptiveGreedy(Opts),
    /// Exact OPT_N, OPT_A and the adaptivity gap, with the policy tree.
    Oracle(Opts),
    /// Largest adaptivity gap over a generated family.
    GapSearch(Opts),
    /// Lemma and theorem checks over a generated family.
    Verify(Opts),
    /// Non-adaptive greedy on an SMSM instance.
    SmsmGreedy(Opts),
    /// SMSM checks on one instance or a random suite.
    SmsmVerify(Opts),
}

/// Which experiment to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Greedy,
    AdaptiveGreedy,
    Oracle,
    GapSearch,
    Verify,
    SmsmGreedy,
    SmsmVerify,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Mc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Flags shared by every command; each command reads the ones it needs.
#[derive(Args, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Opts {
    /// Edge-list file: a node-count line, then `u v p` per edge.
    #[arg(long, value_name = "PATH", conflicts_with = "generator")]
    pub graph: Option<PathBuf>,
    /// Instance family, e.g. `erdos_renyi(5,0.5)` or `exhaustive_small(3)`.
    #[arg(long, value_name = "SPEC")]
    pub generator: Option<String>,
    /// SMSM instance JSON file.
    #[arg(long, value_name = "PATH")]
    pub instance: Option<PathBuf>,
    /// Budget: `2`, `2,3` or `2-4`.
    #[arg(long, value_name = "LIST")]
    pub k: Option<String>,
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    pub mode: Mode,
    /// Monte Carlo samples; ignored in exact mode.
    #[arg(long, default_value_t = 10_000)]
    pub samples: u64,
    /// Master seed of every random choice.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Report file, written atomically; stdout if absent.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Comma-separated check ids.
    #[arg(long, value_name = "LIST", value_delimiter = ',')]
    pub checks: Vec<String>,
    /// Refuse graphs with more nodes; also caps the exact oracles.
    #[arg(long, value_name = "INT")]
    pub max_nodes: Option<usize>,
    /// Refuse graphs with more edges.
    #[arg(long, value_name = "INT")]
    pub max_edges: Option<usize>,
    /// Draws of a random generator, or of the random SMSM suite.
    #[arg(long, value_name = "INT")]
    pub trials: Option<usize>,
    /// Policy-tree sidecar of `oracle`; defaults to `<out>.witness.json`.
    #[arg(long, value_name = "PATH")]
    pub witness: Option<PathBuf>,
    /// Gap at which `gap-search` stops early.
    #[arg(long, value_name = "REAL")]
    pub target: Option<f64>,
}

/// A parsed command line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: CommandKind,
    #[serde(flatten)]
    pub opts: Opts,
}

impl From<Command> for RunConfig {
    fn from(c: Command) -> Self {
        let (command, opts) = match c {
            Command::Greedy(o) => (CommandKind::Greedy, o),
            Command::AdaptiveGreedy(o) => (CommandKind::AdaptiveGreedy, o),
            Command::Oracle(o) => (CommandKind::Oracle, o),
            Command::GapSearch(o) => (CommandKind::GapSearch, o),
            Command::Verify(o) => (CommandKind::Verify, o),
            Command::SmsmGreedy(o) => (CommandKind::SmsmGreedy, o),
            Command::SmsmVerify(o) => (CommandKind::SmsmVerify, o),
        };
        RunConfig { command, opts }
    }
}

impl RunConfig {
    /// Parses a full argument list, program name first.
    pub fn parse_from<I, T>(args: I) -> std::result::Result<Self, clap::Error>
    where
        I: IntoIterator<Item = T>,
        T: Into<OsString> + Clone,
    {
        Ok(Cli::try_parse_from(args)?.command.into())
    }

    pub fn validate(&self) -> Result<()> {
        if self.opts.mode == Mode::Mc && self.opts.samples == 0 {
            return Err(Error::invalid("--mode mc needs --samples ≥ 1"));
        }
        if let Some(k) = &self.opts.k {
            parse_ks(k)?;
        }
        Ok(())
    }
}

/// Result of a run: the report text and whether any check failed.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub report: String,
    pub violations: bool,
}

/// Runs the command line `args` and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match RunConfig::parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INVALID,
            };
        }
    };
    match run(&config) {
        Ok(out) if out.violations => EXIT_VIOLATIONS,
        Ok(_) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_resource_guard() {
        EXIT_GUARD
    } else {
        EXIT_INVALID
    }
}

/// Runs one command and writes its report to `--out` or stdout.
pub fn run(config: &RunConfig) -> Result<Outcome> {
    config.validate()?;
    let o = &config.opts;
    let (report, violations) = match config.command {
        CommandKind::Greedy => (cmd_greedy(o)?, false),
        CommandKind::AdaptiveGreedy => (cmd_adaptive_greedy(o)?, false),
        CommandKind::Oracle => (cmd_oracle(o)?, false),
        CommandKind::GapSearch => cmd_gap_search(o)?,
        CommandKind::Verify => cmd_verify(o)?,
        CommandKind::SmsmGreedy => (cmd_smsm_greedy(o)?, false),
        CommandKind::SmsmVerify => cmd_smsm_verify(o)?,
    };
    let text = report.render(config.command, o)?;
    match &o.out {
        Some(path) => write_atomic(path, text.as_bytes())?,
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
        }
    }
    Ok(Outcome {
        report: text,
        violations,
    })
}

/// Writes through a temporary file in the target directory and renames
/// it into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// `2`, `2,3`, `2-4` or a mix such as `1,3-4`.
pub fn parse_ks(s: &str) -> Result<Vec<usize>> {
    let bad = || Error::invalid(format!("cannot parse budget list {s:?}"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (usize, usize) = (
                    a.trim().parse().map_err(|_| bad())?,
                    b.trim().parse().map_err(|_| bad())?,
                );
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.contains(&0) {
        return Err(Error::invalid("budgets must be at least 1"));
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

fn ks(o: &Opts, default: &[usize]) -> Result<Vec<usize>> {
    match &o.k {
        Some(s) => parse_ks(s),
        None if default.is_empty() => Err(Error::invalid("--k is required")),
        None => Ok(default.to_vec()),
    }
}

fn limits(o: &Opts, base: OracleLimits) -> OracleLimits {
    OracleLimits {
        max_nodes: o.max_nodes.map_or(base.max_nodes, |m| m.min(base.max_nodes)),
        ..base
    }
}

fn family(o: &Opts, default_spec: &str, default_trials: usize) -> Result<InstanceFamily> {
    let spec = o.generator.as_deref().unwrap_or(default_spec);
    let fam = InstanceFamily::new(Generator::from_str(spec)?)
        .with_seed(o.seed)
        .with_trials(o.trials.unwrap_or(default_trials));
    fam.validate()?;
    Ok(fam)
}

fn check_size(o: &Opts, g: &InfluenceGraph) -> Result<()> {
    if let Some(m) = o.max_nodes {
        if g.node_count() > m {
            return Err(Error::too_large(Resource::Nodes, g.node_count() as u64, m as u64));
        }
    }
    if let Some(m) = o.max_edges {
        if g.edge_count() > m {
            return Err(Error::too_large(Resource::Edges, g.edge_count() as u64, m as u64));
        }
    }
    Ok(())
}

// The graphs a per-instance command runs on: one file or a family.
fn instances(o: &Opts) -> Result<Vec<Instance>> {
    let list = match (&o.graph, &o.generator) {
        (Some(path), _) => {
            let graph = InfluenceGraph::parse(&std::fs::read_to_string(path)?)?;
            let label = path
                .file_stem()
                .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
            vec![Instance { label, graph }]
        }
        (None, Some(_)) => family(o, "", 1)?.instances().collect(),
        (None, None) => return Err(Error::invalid("one of --graph or --generator is required")),
    };
    for inst in &list {
        check_size(o, &inst.graph)?;
    }
    Ok(list)
}

fn check_budget(g: &InfluenceGraph, k: usize) -> Result<()> {
    if k > g.node_count() {
        return Err(Error::invalid(format!("budget k = {k} exceeds n = {}", g.node_count())));
    }
    Ok(())
}

// OPT_N / OPT_A for the ratio columns, when the oracle guards allow it.
fn reference(g: &InfluenceGraph, k: usize, o: &Opts) -> Result<Option<GapReport>> {
    match adaptivity_gap_with(
        g,
        k,
        &limits(o, OracleLimits::ADAPTIVE),
        &limits(o, OracleLimits::NONADAPTIVE),
    ) {
        Ok(r) => Ok(Some(r)),
        Err(e) if e.is_resource_guard() => Ok(None),
        Err(e) => Err(e),
    }
}

/// One CSV line per (instance, k, algorithm).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub instance: String,
    pub k: usize,
    pub algorithm: String,
    pub value: f64,
    pub ratio_vs_opt_a: Option<f64>,
    pub gap: Option<f64>,
    pub seconds: f64,
}

// A command's JSON body plus its CSV flattening.
struct Report {
    body: Value,
    rows: Vec<CsvRow>,
}

impl Report {
    fn render(self, command: CommandKind, o: &Opts) -> Result<String> {
        match o.format {
            Format::Json => {
                let mut body = self.body;
                let header = json!({ "command": command, "seed": o.seed, "mode": o.mode });
                if let (Value::Object(b), Value::Object(h)) = (&mut body, header) {
                    for (key, v) in h {
                        b.insert(key, v);
                    }
                }
                Ok(serde_json::to_string_pretty(&body)? + "\n")
            }
            Format::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                for r in &self.rows {
                    w.serialize(r).map_err(|e| Error::invalid(format!("csv: {e}")))?;
                }
                let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv: {e}")))?;
                let mut text = String::from_utf8(bytes).expect("csv is utf-8");
                if self.rows.is_empty() {
                    text = "instance,k,algorithm,value,ratio_vs_opt_a,gap,seconds\n".to_string();
                }
                Ok(format!("# seed={}\n{text}", o.seed))
            }
        }
    }
}

fn row(instance: &str, k: usize, algorithm: &str, value: f64, r: Option<GapReport>, seconds: f64) -> CsvRow {
    CsvRow {
        instance: instance.to_string(),
        k,
        algorithm: algorithm.to_string(),
        value,
        ratio_vs_opt_a: r.map(|r| value / r.opt_a),
        gap: r.map(|r| r.gap),
        seconds,
    }
}

fn evaluator(o: &Opts, tag: u64) -> Evaluator {
    match o.mode {
        Mode::Exact => Evaluator::exact(),
        Mode::Mc => Evaluator::monte_carlo(o.samples, derive_seed(o.seed, tag)),
    }
}

fn cmd_greedy(o: &Opts) -> Result<Report> {
    let ks = ks(o, &[])?;
    let mut results = Vec::new();
    let mut rows = Vec::new();
    for inst in instances(o)? {
        for &k in &ks {
            check_budget(&inst.graph, k)?;
            let start = Instant::now();
            let trace = nonadaptive_greedy(&inst.graph, k, evaluator(o, 0))?;
            let seconds = start.elapsed().as_secs_f64();
            let r = reference(&inst.graph, k, o)?;
            let value = trace.final_value();
            rows.push(row(&inst.label, k, "greedy", value, r, seconds));
            results.push(json!({
                "instance": inst.label,
                "k": k,
                "seeds": trace.seeds,
                "values": trace.values,
                "half_widths": trace.half_widths,
                "value": value,
                "reference": r,
                "seconds": seconds,
            }));
        }
    }
    Ok(Report {
        body: json!({ "results": results }),
        rows,
    })
}

fn cmd_adaptive_greedy(o: &Opts) -> Result<Report> {
    let ks = ks(o, &[])?;
    let mut results = Vec::new();
    let mut rows = Vec::new();
    for inst in instances(o)? {
        let g = &inst.graph;
        for &k in &ks {
            check_budget(g, k)?;
            let start = Instant::now();
            let pi = adaptive_greedy(g, k, evaluator(o, ADAPTIVE_POLICY_TAG))?;
            let (value, half_width, prefix) = match o.mode {
                Mode::Exact => {
                    let prefix = policy_prefix_values(g, &pi)?;
                    (evaluate_policy(g, &pi, Evaluator::exact())?, None, Some(prefix))
                }
                Mode::Mc => {
                    let est = estimate_policy(g, &pi, o.samples, o.seed)?;
                    (est.mean, Some(est.half_width), None)
                }
            };
            let seconds = start.elapsed().as_secs_f64();
            let r = reference(g, k, o)?;
            rows.push(row(&inst.label, k, "adaptive_greedy", value, r, seconds));
            results.push(json!({
                "instance": inst.label,
                "k": k,
                "value": value,
                "half_width": half_width,
                "prefix_values": prefix,
                "reference": r,
                "seconds": seconds,
            }));
        }
    }
    Ok(Report {
        body: json!({ "results": results }),
        rows,
    })
}

/// One entry of the `oracle` witness sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WitnessEntry {
    pub instance: String,
    pub k: usize,
    /// Edge-list text of the graph the tree plays on.
    pub graph: String,
    pub opt_a: f64,
    pub tree: DecisionTree,
}

fn cmd_oracle(o: &Opts) -> Result<Report> {
    let ks = ks(o, &[])?;
    let adaptive = limits(o, OracleLimits::ADAPTIVE);
    let nonadaptive = limits(o, OracleLimits::NONADAPTIVE);
    let mut results = Vec::new();
    let mut rows = Vec::new();
    let mut witnesses = Vec::new();
    for inst in instances(o)? {
        let g = &inst.graph;
        for &k in &ks {
            check_budget(g, k)?;
            let start = Instant::now();
            let n = opt_nonadaptive_with(g, k, &nonadaptive)?;
            let a = opt_adaptive_with(g, k, &adaptive)?;
            let seconds = start.elapsed().as_secs_f64();
            let gap = GapReport::new(n.value, a.value);
            rows.push(row(&inst.label, k, "opt_n", n.value, Some(gap), seconds));
            rows.push(row(&inst.label, k, "opt_a", a.value, Some(gap), seconds));
            results.push(json!({
                "instance": inst.label,
                "k": k,
                "opt_n": n.value,
                "opt_n_seeds": n.witness,
                "opt_a": a.value,
                "gap": gap.gap,
                "seconds": seconds,
            }));
            witnesses.push(WitnessEntry {
                instance: inst.label.clone(),
                k,
                graph: g.to_edge_list(),
                opt_a: a.value,
                tree: a.witness,
            });
        }
    }
    let sidecar = o
        .witness
        .clone()
        .or_else(|| o.out.as_ref().map(|p| p.with_extension("witness.json")));
    let mut body = json!({ "results": results });
    match &sidecar {
        Some(path) => {
            write_atomic(path, (serde_json::to_string_pretty(&witnesses)? + "\n").as_bytes())?;
            body["witness_file"] = json!(path.display().to_string());
        }
        None => body["witnesses"] = serde_json::to_value(&witnesses)?,
    }
    Ok(Report { body, rows })
}

fn cmd_gap_search(o: &Opts) -> Result<(Report, bool)> {
    let fam = family(o, DEFAULT_GAP_GENERATOR, DEFAULT_GAP_TRIALS)?;
    let ks = ks(o, &[2])?;
    let lim = limits(o, OracleLimits::VERIFY);
    let mut results = Vec::new();
    let mut rows = Vec::new();
    let mut violations = false;
    for &k in &ks {
        let start = Instant::now();
        let target = o.target.unwrap_or(f64::INFINITY);
        let s = search_gap_witness(&fam, k, target, &lim)?;
        let seconds = start.elapsed().as_secs_f64();
        violations |= !s.ceiling.passed();
        if let Some(b) = &s.best {
            rows.push(row(&b.instance, k, "opt_n", b.report.opt_n, Some(b.report), seconds));
        }
        results.push(json!({
            "k": k,
            "ceiling": gap_ceiling(k),
            "best": s.best,
            "reached_target": s.reached_target,
            "report": s.ceiling,
            "seconds": seconds,
        }));
    }
    Ok((
        Report {
            body: json!({ "family": fam, "results": results }),
            rows,
        },
        violations,
    ))
}

fn selected(o: &Opts, known: &[&str], default: &[&str]) -> Result<Vec<String>> {
    if o.checks.is_empty() {
        return Ok(default.iter().map(|s| s.to_string()).collect());
    }
    for c in &o.checks {
        if !known.contains(&c.as_str()) {
            return Err(Error::invalid(format!(
                "unknown check {c:?}; known: {}",
                known.join(", ")
            )));
        }
    }
    Ok(o.checks.clone())
}

fn verify_reports(
    check: &str,
    fam: &InstanceFamily,
    k: usize,
    seed: u64,
    lim: &OracleLimits,
) -> Result<Vec<CheckReport>> {
    let random = PolicyChoice::RandomTree { seed };
    Ok(match check {
        "two_level_upper" => vec![check_two_level_upper(fam)?],
        "marginal_upper" => vec![check_marginal_upper(fam)?],
        "adaptive_submodularity" => vec![check_adaptive_submodularity(fam)?],
        "strong_adaptive_submodularity" => vec![check_strong_adaptive_submodularity(fam)?],
        "rand_lower" => vec![check_rand_lower(fam, k, PolicyChoice::Optimal, lim)?],
        "rand_lower_random" => vec![check_rand_lower(fam, k, random, lim)?],
        "hybrid_bound" => vec![check_hybrid_bound(fam, k, false, PolicyChoice::Optimal, lim)?],
        "hybrid_bound_strong" => vec![check_hybrid_bound(fam, k, true, PolicyChoice::Optimal, lim)?],
        "hybrid_bound_random" => vec![
            check_hybrid_bound(fam, k, false, random, lim)?,
            check_hybrid_bound(fam, k, true, random, lim)?,
        ],
        "opt_bound" => vec![check_opt_bound(fam, k, false, lim)?],
        "opt_bound_strong" => vec![check_opt_bound(fam, k, true, lim)?],
        "theorems" => sweep_theorems(fam, k, lim)?.reports().into_iter().cloned().collect(),
        "gap_ceiling" => vec![search_gap_witness(fam, k, f64::INFINITY, lim)?.ceiling],
        other => unreachable!("unknown check {other}"),
    })
}

// Checks whose inequality does not involve the budget.
fn budget_free(check: &str) -> bool {
    matches!(
        check,
        "two_level_upper" | "marginal_upper" | "adaptive_submodularity" | "strong_adaptive_submodularity"
    )
}

fn cmd_verify(o: &Opts) -> Result<(Report, bool)> {
    let checks = selected(o, &VERIFY_CHECKS, &DEFAULT_VERIFY_CHECKS)?;
    let fam = family(o, DEFAULT_VERIFY_GENERATOR, 1)?;
    let ks = ks(o, &[2])?;
    let lim = limits(o, OracleLimits::VERIFY);
    let mut entries = Vec::new();
    let mut rows = Vec::new();
    let mut passed = true;
    for c in &checks {
        let budgets: Vec<Option<usize>> = if budget_free(c) {
            vec![None]
        } else {
            ks.iter().map(|&k| Some(k)).collect()
        };
        for k in budgets {
            let start = Instant::now();
            let reports = verify_reports(c, &fam, k.unwrap_or(1), o.seed, &lim)?;
            let seconds = start.elapsed().as_secs_f64();
            for r in reports {
                passed &= r.passed();
                rows.push(CsvRow {
                    instance: r.check.clone(),
                    k: k.unwrap_or(0),
                    algorithm: c.clone(),
                    value: r.violations.len() as f64,
                    ratio_vs_opt_a: r.minima.values().copied().reduce(f64::min),
                    gap: r.maxima.get("max_gap").copied(),
                    seconds,
                });
                entries.push(json!({ "id": c, "k": k, "seconds": seconds, "report": r }));
            }
        }
    }
    let body = json!({ "family": fam, "checks": checks, "passed": passed, "reports": entries });
    Ok((Report { body, rows }, !passed))
}

fn smsm_instance(o: &Opts) -> Result<Option<SmsmInstance>> {
    let Some(path) = &o.instance else { return Ok(None) };
    let mut inst = SmsmInstance::from_json(&std::fs::read_to_string(path)?)?;
    if let Some(s) = &o.k {
        let ks = parse_ks(s)?;
        let [k] = ks[..] else {
            return Err(Error::invalid("SMSM commands take a single budget"));
        };
        inst = inst.with_k(k)?;
    }
    Ok(Some(inst))
}

fn cmd_smsm_greedy(o: &Opts) -> Result<Report> {
    let inst = smsm_instance(o)?.ok_or_else(|| Error::invalid("--instance is required"))?;
    let start = Instant::now();
    let trace = smsm_greedy(&inst)?;
    let seconds = start.elapsed().as_secs_f64();
    let opt = match smsm_opt_adaptive(&inst) {
        Ok(r) => Some(r.value),
        Err(e) if e.is_resource_guard() => None,
        Err(e) => return Err(e),
    };
    let value = trace.final_value();
    let label = o
        .instance
        .as_ref()
        .and_then(|p| p.file_stem())
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let row = CsvRow {
        instance: label.clone(),
        k: inst.k,
        algorithm: "smsm_greedy".into(),
        value,
        ratio_vs_opt_a: opt.map(|a| value / a),
        gap: None,
        seconds,
    };
    let body = json!({
        "instance": label,
        "k": inst.k,
        "items": trace.items,
        "values": trace.values,
        "value": value,
        "opt_a": opt,
        "seconds": seconds,
    });
    Ok(Report { body, rows: vec![row] })
}

fn cmd_smsm_verify(o: &Opts) -> Result<(Report, bool)> {
    let checks = selected(o, &SMSM_CHECKS, &SMSM_CHECKS)?;
    let suite = match smsm_instance(o)? {
        Some(inst) => vec![inst],
        None => random_suite(o.trials.unwrap_or(DEFAULT_SMSM_TRIALS), o.seed),
    };
    let mut entries = Vec::new();
    let mut rows = Vec::new();
    let mut passed = true;
    for c in &checks {
        let start = Instant::now();
        let mut total = CheckReport::new(if c == "section2" { "smsm_section2" } else { "lattice" });
        for (i, inst) in suite.iter().enumerate() {
            let mut r = match c.as_str() {
                "section2" => smsm_check_section2(inst)?,
                _ => check_lattice(inst)?,
            };
            for v in &mut r.violations {
                v.instance = format!("smsm#{i}/{}", v.instance);
            }
            total.merge(r);
        }
        let seconds = start.elapsed().as_secs_f64();
        passed &= total.passed();
        rows.push(CsvRow {
            instance: total.check.clone(),
            k: 0,
            algorithm: c.clone(),
            value: total.violations.len() as f64,
            ratio_vs_opt_a: total.minima.get("worst_ratio").copied(),
            gap: None,
            seconds,
        });
        entries.push(json!({ "id": c, "instances": suite.len(), "seconds": seconds, "report": total }));
    }
    let body = json!({ "checks": checks, "passed": passed, "reports": entries });
    Ok((Report { body, rows }, !passed))
}
