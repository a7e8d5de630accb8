//! Command-line front door: config ingestion, subcommand dispatch,
//! reproducible runs, report emission.
//!
//! Experiments are definable as JSON config files (versionable) with CLI
//! flags taking precedence over config fields. Every emitted artifact embeds
//! the resolved configuration and seed, and files are written atomically
//! (temp file + rename) so failures never leave partial output.
//!
//! Exit codes: 0 success, 2 validation error, 3 capacity error, 4 internal
//! error.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{marton_sigma2, theorem1_bound, BoundValue, ConcentrationInputs};
use crate::error::{Error, Result};
use crate::experiments::{
    compare_bounds, complexity_table, exact_tail, mc_tail, ComplexityRow, EtaMode, ExpectedDevRule,
    IndexRule, TailReport,
};
use crate::markov::{dobrushin, ChainSpec, MarkovChainModel};
use crate::transport::{chain_path_law, hamming_space, tci_check, SPACE_CAP};

/// Chain given inline in a config file, or as a path to a JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ChainSource {
    Path(PathBuf),
    Inline(ChainSpec),
}

/// JSON experiment definition; any field may be overridden by a CLI flag.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Optional declaration of the intended subcommand; checked if present.
    pub subcommand: Option<String>,
    pub chain: Option<ChainSource>,
    pub n: Option<usize>,
    pub p: Option<f64>,
    pub eps: Option<f64>,
    pub eps_grid: Option<String>,
    pub delta: Option<f64>,
    pub trials: Option<usize>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub eta: Option<f64>,
    pub optimize_eta: Option<bool>,
    pub tau: Option<f64>,
    pub stationary: Option<bool>,
    pub k: Option<usize>,
    pub sigma2: Option<f64>,
    pub lip: Option<f64>,
    pub k_list: Option<Vec<usize>>,
    pub r: Option<f64>,
    pub index_rule: Option<String>,
    pub expected_dev: Option<f64>,
    pub h: Option<Vec<f64>>,
    pub lambdas: Option<Vec<f64>>,
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
}

impl RunConfig {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::parameter("config", format!("cannot read {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text).map_err(|e| {
            Error::parameter("config", format!("invalid config {}: {e}", path.display()))
        })
    }

    fn check_subcommand(&self, actual: &str) -> Result<()> {
        if let Some(declared) = &self.subcommand {
            if declared != actual {
                return Err(Error::parameter(
                    "subcommand",
                    format!("config declares subcommand {declared:?} but {actual:?} was invoked"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "conclab",
    version,
    about = "Concentration bounds for Markov chain estimators, with empirical verification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate the two-branch vector concentration tail bound.
    Bounds(BoundsArgs),
    /// Tail probability of the plug-in estimator (exact or Monte Carlo).
    Tail(TailArgs),
    /// Empirical tail versus the three bounds over an eps grid.
    Compare(CompareArgs),
    /// Brute-force transportation cost inequality check on the path space.
    Tci(TciArgs),
    /// Empirical moment-generating-function sub-Gaussianity check.
    Mgf(MgfArgs),
    /// Sample-complexity comparison table over state counts.
    Complexity(ComplexityArgs),
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    sigma2: Option<f64>,
    #[arg(long)]
    lip: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    /// Fixed net parameter; mutually exclusive with --optimize-eta.
    #[arg(long, conflicts_with = "optimize_eta")]
    eta: Option<f64>,
    /// Choose the net parameter by golden-section search (default).
    #[arg(long)]
    optimize_eta: bool,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TailArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    chain: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Evaluate under the stationary chain instead of the declared start.
    #[arg(long)]
    stationary: bool,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    chain: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    /// Threshold grid as A:B:STEP, inclusive of B.
    #[arg(long)]
    eps_grid: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TciArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    chain: Option<PathBuf>,
    /// Path length; the check runs on the K^n-point Hamming sequence space.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MgfArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    chain: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    /// Direction vector h as comma-separated reals, e.g. "1,0".
    #[arg(long)]
    h: Option<String>,
    /// Comma-separated lambda values, e.g. "-2,-1,-0.5,0.5,1,2".
    #[arg(long, allow_hyphen_values = true)]
    lambdas: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ComplexityArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated state counts, e.g. "4,16,64,256".
    #[arg(long = "K-list")]
    k_list: Option<String>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
    /// Index rule: power:M, exp, or value:V.
    #[arg(long)]
    index_rule: Option<String>,
    /// Fixed net parameter for approach 3; omitted means optimize.
    #[arg(long)]
    eta: Option<f64>,
    /// Expected deviation for approach 1; omitted means the K/sqrt(n) envelope.
    #[arg(long)]
    expected_dev: Option<f64>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

/// Dispatches a parsed command; artifacts land on disk, a table on stdout.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Bounds(args) => run_bounds(args),
        Command::Tail(args) => run_tail(args),
        Command::Compare(args) => run_compare(args),
        Command::Tci(args) => run_tci(args),
        Command::Mgf(args) => run_mgf(args),
        Command::Complexity(args) => run_complexity(args),
    }
}

fn require<T>(flag: Option<T>, cfg: Option<T>, name: &'static str) -> Result<T> {
    flag.or(cfg)
        .ok_or_else(|| Error::parameter(name, "required (flag or config field)"))
}

fn load_chain(
    flag: Option<&Path>,
    cfg: Option<&ChainSource>,
) -> Result<(MarkovChainModel, ChainSpec)> {
    let source = match (flag, cfg) {
        (Some(path), _) => ChainSource::Path(path.to_path_buf()),
        (None, Some(source)) => source.clone(),
        (None, None) => return Err(Error::parameter("chain", "required (flag or config field)")),
    };
    let spec = match source {
        ChainSource::Inline(spec) => spec,
        ChainSource::Path(path) => {
            let text = std::fs::read_to_string(&path).map_err(|e| {
                Error::parameter("chain", format!("cannot read {}: {e}", path.display()))
            })?;
            serde_json::from_str(&text).map_err(|e| {
                Error::parameter(
                    "chain",
                    format!("invalid chain spec {}: {e}", path.display()),
                )
            })?
        }
    };
    Ok((MarkovChainModel::from_spec(&spec)?, spec))
}

fn chain_hash(spec: &ChainSpec) -> String {
    let canonical = serde_json::to_string(spec).expect("chain spec serializes");
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().fold(String::new(), |mut acc, byte| {
        let _ = write!(acc, "{byte:02x}");
        acc
    })
}

fn parse_eps_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = |msg: String| Error::parameter("eps_grid", msg);
    if parts.len() != 3 {
        return Err(bad(format!("expected A:B:STEP, got {text:?}")));
    }
    let nums: Vec<f64> = parts
        .iter()
        .map(|part| {
            part.parse::<f64>()
                .map_err(|_| bad(format!("non-numeric component {part:?}")))
        })
        .collect::<Result<_>>()?;
    let (start, stop, step) = (nums[0], nums[1], nums[2]);
    if step <= 0.0 || stop < start {
        return Err(bad(format!("need STEP > 0 and B >= A in {text:?}")));
    }
    let mut grid = Vec::new();
    let mut i = 0u32;
    loop {
        let value = start + step * f64::from(i);
        if value > stop + 1e-9 {
            break;
        }
        grid.push(value);
        i += 1;
        if i > 1_000_000 {
            return Err(bad("grid has more than 10^6 points".into()));
        }
    }
    Ok(grid)
}

fn parse_f64_list(text: &str, name: &'static str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|part| {
            part.trim()
                .parse::<f64>()
                .map_err(|_| Error::parameter(name, format!("non-numeric component {part:?}")))
        })
        .collect()
}

fn parse_index_rule(text: &str) -> Result<IndexRule> {
    let bad = || {
        Error::parameter(
            "index_rule",
            format!("expected power:M, exp, or value:V, got {text:?}"),
        )
    };
    if text == "exp" {
        return Ok(IndexRule::Exponential);
    }
    if let Some(m) = text.strip_prefix("power:") {
        return Ok(IndexRule::PowerLaw {
            m: m.parse().map_err(|_| bad())?,
        });
    }
    if let Some(v) = text.strip_prefix("value:") {
        return Ok(IndexRule::Explicit {
            value: v.parse().map_err(|_| bad())?,
        });
    }
    Err(bad())
}

/// Atomic file write: temp file in the destination directory, then rename.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(parent) if !parent.as_os_str().is_empty() => parent,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| {
        Error::Internal(format!("cannot create temp file in {}: {e}", dir.display()))
    })?;
    tmp.write_all(contents.as_bytes())
        .map_err(|e| Error::Internal(format!("write failed: {e}")))?;
    tmp.persist(path)
        .map_err(|e| Error::Internal(format!("cannot persist {}: {e}", path.display())))?;
    Ok(())
}

fn provenance(
    resolved: serde_json::Value,
    chain: Option<&ChainSpec>,
    seed: u64,
) -> serde_json::Value {
    let mut block = serde_json::json!({
        "tool": "conclab",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": seed,
        "config": resolved,
    });
    if let Some(spec) = chain {
        block["chain_hash"] = serde_json::Value::String(chain_hash(spec));
    }
    block
}

fn emit_json(path: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    if let Some(path) = path {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| Error::Internal(format!("JSON serialization failed: {e}")))?;
        text.push('\n');
        write_atomic(path, &text)?;
    }
    Ok(())
}

fn fmt_bound(bound: &BoundValue) -> String {
    match bound.clamped() {
        Some(v) => format!("{v}"),
        None => "NA".to_string(),
    }
}

fn run_bounds(args: BoundsArgs) -> Result<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    cfg.check_subcommand("bounds")?;
    let optimize =
        args.optimize_eta || (args.eta.is_none() && cfg.optimize_eta.unwrap_or(cfg.eta.is_none()));
    let eta = args.eta.or(cfg.eta).unwrap_or(0.5);
    let inputs = ConcentrationInputs {
        k: require(args.k, cfg.k, "k")?,
        sigma2: require(args.sigma2, cfg.sigma2, "sigma2")?,
        lip: require(args.lip, cfg.lip, "lip")?,
        tau_p: args.tau.or(cfg.tau).unwrap_or(1.0),
        eps: require(args.eps, cfg.eps, "eps")?,
        eta,
    };
    let result = theorem1_bound(&inputs, optimize)?;

    println!(
        "two-branch tail bound (eps = {}, k = {})",
        inputs.eps, inputs.k
    );
    println!(
        "  covering branch : {:>14.6e}  (eta = {:.6})",
        result.covering, result.eta
    );
    println!("  gaussian branch : {:>14.6e}", result.gaussian);
    println!("  min (raw)       : {:>14.6e}", result.raw);
    println!("  min (clamped)   : {:>14.6e}", result.clamped);

    let resolved = serde_json::json!({
        "subcommand": "bounds",
        "inputs": inputs,
        "optimize_eta": optimize,
    });
    emit_json(
        args.json.as_deref().or(cfg.json.as_deref()),
        &serde_json::json!({
            "provenance": provenance(resolved, None, 0),
            "result": result,
        }),
    )
}

fn run_tail(args: TailArgs) -> Result<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    cfg.check_subcommand("tail")?;
    let (chain, spec) = load_chain(args.chain.as_deref(), cfg.chain.as_ref())?;
    let n = require(args.n, cfg.n, "n")?;
    let p = require(args.p, cfg.p, "p")?;
    let eps = require(args.eps, cfg.eps, "eps")?;
    let trials = args.trials.or(cfg.trials).unwrap_or(10_000);
    let seed = args.seed.or(cfg.seed).unwrap_or(0);
    let use_stationary = args.stationary || cfg.stationary.unwrap_or(false);

    let enumerable = chain.path_count(n as u32) <= SPACE_CAP;
    let (estimate, half_width) = if enumerable {
        (exact_tail(&chain, n, p, eps, use_stationary)?, 0.0)
    } else {
        mc_tail(&chain, n, p, eps, trials, seed, use_stationary)?
    };
    println!(
        "P(||pi_hat - pi||_{p} >= {eps}) = {estimate}  (half-width {half_width}, {})",
        if enumerable {
            "exact enumeration"
        } else {
            "Monte Carlo"
        }
    );

    let resolved = serde_json::json!({
        "subcommand": "tail",
        "n": n, "p": p, "eps": eps, "trials": trials, "seed": seed,
        "stationary": use_stationary,
    });
    emit_json(
        args.json.as_deref().or(cfg.json.as_deref()),
        &serde_json::json!({
            "provenance": provenance(resolved, Some(&spec), seed),
            "estimate": estimate,
            "half_width": half_width,
            "exact": enumerable,
        }),
    )
}

fn compare_csv(reports: &[TailReport]) -> String {
    let mut out =
        String::from("eps,empirical,half_width,exact_flag,bound1,bound2,bound3,eta_used\n");
    for report in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            report.eps,
            report.empirical,
            report.half_width,
            report.exact_flag,
            fmt_bound(&report.bound1),
            fmt_bound(&report.bound2),
            fmt_bound(&report.bound3),
            report.eta_used,
        );
    }
    out
}

fn run_compare(args: CompareArgs) -> Result<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    cfg.check_subcommand("compare")?;
    let (chain, spec) = load_chain(args.chain.as_deref(), cfg.chain.as_ref())?;
    let n = require(args.n, cfg.n, "n")?;
    let p = require(args.p, cfg.p, "p")?;
    let grid_text = require(args.eps_grid, cfg.eps_grid.clone(), "eps_grid")?;
    let grid = parse_eps_grid(&grid_text)?;
    let trials = args.trials.or(cfg.trials).unwrap_or(10_000);
    let seed = args.seed.or(cfg.seed).unwrap_or(0);

    let reports = compare_bounds(&chain, n, p, &grid, trials, seed)?;

    println!(
        "{:>6} {:>12} {:>12} {:>6} {:>12} {:>12} {:>12} {:>10}",
        "eps", "empirical", "half_width", "exact", "bound1", "bound2", "bound3", "eta"
    );
    for report in &reports {
        println!(
            "{:>6} {:>12.6} {:>12.6} {:>6} {:>12} {:>12} {:>12} {:>10.6}",
            report.eps,
            report.empirical,
            report.half_width,
            report.exact_flag,
            fmt_bound(&report.bound1),
            fmt_bound(&report.bound2),
            fmt_bound(&report.bound3),
            report.eta_used,
        );
    }

    if let Some(path) = args.csv.as_deref().or(cfg.csv.as_deref()) {
        write_atomic(path, &compare_csv(&reports))?;
    }
    let resolved = serde_json::json!({
        "subcommand": "compare",
        "n": n, "p": p, "eps_grid": grid_text, "trials": trials, "seed": seed,
    });
    emit_json(
        args.json.as_deref().or(cfg.json.as_deref()),
        &serde_json::json!({
            "provenance": provenance(resolved, Some(&spec), seed),
            "reports": reports,
        }),
    )
}

fn run_tci(args: TciArgs) -> Result<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    cfg.check_subcommand("tci")?;
    let (chain, spec) = load_chain(args.chain.as_deref(), cfg.chain.as_ref())?;
    let n = require(args.n, cfg.n, "n")?;
    let samples = args.samples.or(cfg.samples).unwrap_or(1000);
    let seed = args.seed.or(cfg.seed).unwrap_or(0);

    let r = dobrushin(&chain);
    let sigma2 = marton_sigma2(n, r)?;
    let nu = chain_path_law(&chain, n)?;
    let space = hamming_space(chain.state_count(), n)?;
    let report = tci_check(&nu, &space, sigma2, samples, seed)?;

    println!(
        "TCI check on {} paths (n = {n}, r = {r}, sigma2 = {sigma2})",
        space.size()
    );
    println!("  max ratio W1/sqrt(2 sigma2 D) : {}", report.max_ratio);
    println!(
        "  violations                    : {}",
        report.num_violations
    );
    println!("  skipped (mu ~ nu)             : {}", report.skipped);

    let resolved = serde_json::json!({
        "subcommand": "tci",
        "n": n, "samples": samples, "seed": seed, "r": r, "sigma2": sigma2,
    });
    emit_json(
        args.json.as_deref().or(cfg.json.as_deref()),
        &serde_json::json!({
            "provenance": provenance(resolved, Some(&spec), seed),
            "report": report,
        }),
    )
}

fn run_mgf(args: MgfArgs) -> Result<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    cfg.check_subcommand("mgf")?;
    let (chain, spec) = load_chain(args.chain.as_deref(), cfg.chain.as_ref())?;
    let n = require(args.n, cfg.n, "n")?;
    let p = require(args.p, cfg.p, "p")?;
    let h = match args.h {
        Some(text) => parse_f64_list(&text, "h")?,
        None => require(None, cfg.h.clone(), "h")?,
    };
    let lambdas = match args.lambdas {
        Some(text) => parse_f64_list(&text, "lambdas")?,
        None => require(None, cfg.lambdas.clone(), "lambdas")?,
    };
    let trials = args.trials.or(cfg.trials).unwrap_or(10_000);
    let seed = args.seed.or(cfg.seed).unwrap_or(0);

    let report = crate::bounds::mgf_check(&chain, n, p, &h, &lambdas, trials, seed)?;
    println!(
        "MGF check ({}; sigma2 = {}, lip = {}, ||h||_q = {})",
        if report.exact {
            "exact enumeration"
        } else {
            "Monte Carlo"
        },
        report.sigma2,
        report.lip,
        report.dual_norm
    );
    println!(
        "{:>8} {:>14} {:>14} {:>12} {:>10}",
        "lambda", "empirical", "bound", "std_err", "violation"
    );
    for point in &report.points {
        println!(
            "{:>8} {:>14.8} {:>14.8} {:>12.3e} {:>10}",
            point.lambda, point.empirical, point.bound, point.std_err, point.violation
        );
    }

    let resolved = serde_json::json!({
        "subcommand": "mgf",
        "n": n, "p": p, "h": h, "lambdas": lambdas, "trials": trials, "seed": seed,
    });
    emit_json(
        args.json.as_deref().or(cfg.json.as_deref()),
        &serde_json::json!({
            "provenance": provenance(resolved, Some(&spec), seed),
            "report": report,
        }),
    )
}

fn complexity_csv(rows: &[ComplexityRow]) -> String {
    let mut out =
        String::from("K,index,n1,n2,n3,eta3,ratio_2_3,ratio_2_3_per_log_k,ratio_2_3_per_k\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            row.k,
            row.index,
            row.n1.map_or("NA".to_string(), |v| format!("{v}")),
            row.n2,
            row.n3,
            row.eta3,
            row.ratio_2_3,
            row.ratio_2_3_per_log_k,
            row.ratio_2_3_per_k,
        );
    }
    out
}

fn run_complexity(args: ComplexityArgs) -> Result<()> {
    let cfg = RunConfig::load(args.config.as_deref())?;
    cfg.check_subcommand("complexity")?;
    let k_list: Vec<usize> = match args.k_list {
        Some(text) => text
            .split(',')
            .map(|part| {
                part.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::parameter("K_list", format!("bad state count {part:?}")))
            })
            .collect::<Result<_>>()?,
        None => require(None, cfg.k_list.clone(), "K_list")?,
    };
    let p = require(args.p, cfg.p, "p")?;
    let eps = require(args.eps, cfg.eps, "eps")?;
    let delta = require(args.delta, cfg.delta, "delta")?;
    let r = require(args.r, cfg.r, "r")?;
    let rule_text = require(args.index_rule, cfg.index_rule.clone(), "index_rule")?;
    let index_rule = parse_index_rule(&rule_text)?;
    let eta_mode = match args.eta.or(cfg.eta) {
        Some(eta) => EtaMode::Fixed { eta },
        None => EtaMode::Optimize,
    };
    let dev_rule = match args.expected_dev.or(cfg.expected_dev) {
        Some(value) => ExpectedDevRule::Explicit { value },
        None => ExpectedDevRule::Envelope,
    };

    let rows = complexity_table(&k_list, p, eps, delta, r, index_rule, eta_mode, dev_rule)?;

    println!(
        "{:>6} {:>12} {:>14} {:>14} {:>14} {:>10} {:>10} {:>12} {:>12}",
        "K", "index", "n1", "n2", "n3", "eta3", "n2/n3", "n2/(n3 lnK)", "n2/(n3 K)"
    );
    for row in &rows {
        println!(
            "{:>6} {:>12.4e} {:>14} {:>14.4e} {:>14.4e} {:>10.6} {:>10.4} {:>12.4} {:>12.4}",
            row.k,
            row.index,
            row.n1.map_or("NA".to_string(), |v| format!("{v:.4e}")),
            row.n2,
            row.n3,
            row.eta3,
            row.ratio_2_3,
            row.ratio_2_3_per_log_k,
            row.ratio_2_3_per_k,
        );
    }

    if let Some(path) = args.csv.as_deref().or(cfg.csv.as_deref()) {
        write_atomic(path, &complexity_csv(&rows))?;
    }
    let resolved = serde_json::json!({
        "subcommand": "complexity",
        "K_list": k_list, "p": p, "eps": eps, "delta": delta, "r": r,
        "index_rule": rule_text, "eta_mode": eta_mode, "expected_dev_rule": dev_rule,
    });
    emit_json(
        args.json.as_deref().or(cfg.json.as_deref()),
        &serde_json::json!({
            "provenance": provenance(resolved, None, 0),
            "rows": rows,
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eps_grid_parses_inclusive_range() {
        let grid = parse_eps_grid("0.1:0.9:0.1").unwrap();
        assert_eq!(grid.len(), 9);
        assert!((grid[0] - 0.1).abs() < 1e-12);
        assert!((grid[8] - 0.9).abs() < 1e-12);
        assert!(parse_eps_grid("1:0:0.1").is_err());
        assert!(parse_eps_grid("0:1").is_err());
    }

    #[test]
    fn index_rule_parses_all_forms() {
        assert_eq!(
            parse_index_rule("power:1").unwrap(),
            IndexRule::PowerLaw { m: 1.0 }
        );
        assert_eq!(parse_index_rule("exp").unwrap(), IndexRule::Exponential);
        assert_eq!(
            parse_index_rule("value:2.5").unwrap(),
            IndexRule::Explicit { value: 2.5 }
        );
        assert!(parse_index_rule("bogus").is_err());
    }

    #[test]
    fn chain_source_accepts_path_or_inline() {
        let from_path: ChainSource = serde_json::from_str("\"chain.json\"").unwrap();
        assert!(matches!(from_path, ChainSource::Path(_)));
        let inline: ChainSource =
            serde_json::from_str(r#"{"K":2,"P":[[0.5,0.5],[0.5,0.5]],"rho":[0.5,0.5]}"#).unwrap();
        assert!(matches!(inline, ChainSource::Inline(_)));
    }
}
