//! Command-line front end: `stability`, `variance`, `optimize`, `tradeoff`
//! and `simulate`, each reading one TOML config.
//!
//! Exit codes: 0 success, 1 I/O, 2 configuration, 3 unstable or infeasible,
//! 4 optimizer did not converge.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{Config, KEYS};
use crate::ct_double::phi_of_eta;
use crate::dt_double::{lambda_threshold, quadrature_dt_double, stability_dt_double, DtPdSubsystem};
use crate::dt_single::{
    dt_single_threshold, recursive_variance, root_radius, single_characteristic, wiener_khintchine_adaptive, DtDelay,
};
use crate::error::{Error, Result};
use crate::model::{ModelKind, VarianceModel};
use crate::optimizer::{design_exact, design_quadratic_approx, DesignResult};
use crate::report::{Cell, Table};
use crate::sim::{simulate, simulate_scalar};
use crate::topology::{circulant_eigenvalues, max_radius};
use crate::tradeoff::sweep;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceMethod {
    ClosedForm,
    Quadrature,
    MomentMatching,
    Recursive,
    MonteCarlo,
}

impl VarianceMethod {
    fn parse(s: &str) -> Result<Self> {
        <Self as ValueEnum>::from_str(s, false).map_err(|_| {
            Error::Config(format!(
                "variance.method: unknown `{s}` (expected closed-form, quadrature, moment-matching, recursive or monte-carlo)"
            ))
        })
    }

    fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::CtSingle | ModelKind::CtDouble => VarianceMethod::ClosedForm,
            ModelKind::DtSingle | ModelKind::DtDouble => VarianceMethod::MomentMatching,
        }
    }

    fn tag(self, kind: ModelKind) -> Result<&'static str> {
        use ModelKind::*;
        use VarianceMethod::*;
        Ok(match (kind, self) {
            (CtSingle, ClosedForm) => "ct-single-closed-form",
            (CtDouble, ClosedForm) => "ct-double-reduced",
            (DtSingle, Quadrature) => "dt-quadrature",
            (DtSingle, MomentMatching) => "dt-moment-matching",
            (DtSingle, Recursive) => "dt-recursive",
            (DtDouble, Quadrature) => "dt2-quadrature",
            (DtDouble, MomentMatching) => "dt2-moment-matching",
            (_, MonteCarlo) => "monte-carlo",
            (k, m) => {
                return Err(Error::Config(format!(
                    "variance.method `{}` is not available for {k}",
                    m.to_possible_value().expect("no skipped variants").get_name()
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DesignChoice {
    Exact,
    Approx,
    Both,
}

/// Record written next to (CSV) or inside (JSON) every output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub tool_version: String,
    pub seed: Option<u64>,
    pub timestamp_unix: u64,
    pub subcommand: String,
    pub outputs: Vec<String>,
    /// Subcommand-specific summary values.
    pub summary: BTreeMap<String, Value>,
}

/// Rows plus summary values for the manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct CommandOutput {
    pub table: Table,
    pub summary: BTreeMap<String, Value>,
    /// Optional per-step dump from `simulate`.
    pub trajectory: Option<Table>,
}

impl CommandOutput {
    fn new(table: Table) -> Self {
        Self { table, summary: BTreeMap::new(), trajectory: None }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidNetwork(_) | Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => 2,
        Error::Unstable(_) | Error::Infeasible(_) | Error::Singular(_) => 3,
        Error::NoConvergence { .. } => 4,
    }
}

/// Delay in the model's units for the configured architecture.
fn model_delay(cfg: &Config, tau: f64) -> Result<f64> {
    if cfg.model.is_discrete() {
        let ts = cfg.sampling_time.expect("validated");
        Ok(DtDelay::from_continuous(tau, ts)?.steps as f64)
    } else {
        Ok(tau)
    }
}

struct Classified {
    scaled: f64,
    bound: Option<f64>,
    margin: Option<f64>,
    radius: Option<f64>,
    stable: bool,
}

/// Stability of one decoupled subsystem. `eta` is the physical derivative gain.
fn classify(kind: ModelKind, lambda: f64, delay: f64, eta: Option<f64>) -> Result<Classified> {
    Ok(match kind {
        ModelKind::CtSingle => {
            let scaled = lambda * delay;
            Classified {
                scaled,
                bound: Some(FRAC_PI_2),
                margin: Some(FRAC_PI_2 - scaled),
                radius: None,
                stable: scaled > 0.0 && scaled < FRAC_PI_2 || (delay == 0.0 && lambda > 0.0),
            }
        }
        ModelKind::CtDouble => {
            let eta = eta.ok_or_else(|| Error::Config("missing field `gains.eta`".into()))?;
            let scaled = lambda * delay;
            let phi = phi_of_eta(eta * delay);
            Classified { scaled, bound: Some(phi), margin: Some(phi - scaled), radius: None, stable: scaled > 0.0 && scaled < phi }
        }
        ModelKind::DtSingle => {
            let steps = delay as usize;
            let bound = dt_single_threshold(steps);
            let radius = root_radius(&single_characteristic(lambda, steps))?;
            Classified { scaled: lambda, bound: Some(bound), margin: Some(bound - lambda), radius: Some(radius), stable: radius < 1.0 }
        }
        ModelKind::DtDouble => {
            let eta = eta.ok_or_else(|| Error::Config("missing field `gains.eta`".into()))?;
            let steps = delay as usize;
            let v = stability_dt_double(&DtPdSubsystem::new(eta, lambda, steps))?;
            let bound = lambda_threshold(eta, steps);
            Classified { scaled: lambda, bound, margin: bound.map(|b| b - lambda), radius: Some(v.radius), stable: v.stable }
        }
    })
}

fn physical_eta(cfg: &Config, tau: f64) -> Option<f64> {
    cfg.gains.eta.or(cfg.gains.eta_normalized.map(|e| e / tau))
}

pub fn cmd_stability(cfg: &Config) -> Result<CommandOutput> {
    if let Some(lambdas) = &cfg.stability.lambdas {
        let default_tau = match cfg.n {
            Some(_) => cfg.spec()?.tau(),
            None => cfg.delay_model()?.eval(1)?,
        };
        let delays = match &cfg.stability.delays {
            Some(d) => d.clone(),
            None => vec![model_delay(cfg, default_tau)?],
        };
        if cfg.model.is_discrete() {
            if let Some(bad) = delays.iter().find(|d| **d < 0.0 || d.fract() != 0.0) {
                return Err(Error::Config(format!("stability.delays must be whole steps for {}, got {bad}", cfg.model)));
            }
        }
        let mut t = Table::new(["delay", "lambda", "scaled", "bound", "margin", "radius", "stable"]);
        for &delay in &delays {
            let eta = match (cfg.gains.eta, cfg.gains.eta_normalized) {
                (Some(e), _) => Some(e),
                (None, Some(e)) if delay > 0.0 => Some(e / delay),
                _ => None,
            };
            for &l in lambdas {
                let c = classify(cfg.model, l, delay, eta)?;
                t.push(vec![delay.into(), l.into(), c.scaled.into(), c.bound.into(), c.margin.into(), c.radius.into(), c.stable.into()]);
            }
        }
        let mut out = CommandOutput::new(t);
        out.summary.insert("mode".into(), json!("scalar-grid"));
        return Ok(out);
    }

    let spec = cfg.spec()?;
    let gains = cfg.gains()?;
    let spectrum = circulant_eigenvalues(&spec, &gains)?;
    let delay = model_delay(cfg, spec.tau())?;
    let eta = physical_eta(cfg, spec.tau());
    let mut t = Table::new(["j", "lambda", "scaled", "bound", "margin", "radius", "stable"]);
    let mut all_stable = true;
    let mut worst_margin = f64::INFINITY;
    for (idx, &l) in spectrum.lambdas().iter().enumerate().skip(1) {
        let c = classify(cfg.model, l, delay, eta)?;
        all_stable &= c.stable;
        if let Some(m) = c.margin {
            worst_margin = worst_margin.min(m);
        }
        t.push(vec![(idx + 1).into(), l.into(), c.scaled.into(), c.bound.into(), c.margin.into(), c.radius.into(), c.stable.into()]);
    }
    let mut out = CommandOutput::new(t);
    out.summary.insert("stable".into(), json!(all_stable));
    out.summary.insert("min_margin".into(), json!(worst_margin));
    out.summary.insert("delay".into(), json!(delay));
    Ok(out)
}

fn analytic_variance(method: VarianceMethod, model: &VarianceModel, lambda: f64) -> Result<f64> {
    match (model, method) {
        (VarianceModel::DtSingle { steps }, VarianceMethod::Quadrature) => {
            wiener_khintchine_adaptive(&single_characteristic(lambda, *steps))
        }
        (VarianceModel::DtSingle { steps }, VarianceMethod::Recursive) => recursive_variance(lambda, *steps),
        (VarianceModel::DtDouble { eta, steps }, VarianceMethod::Quadrature) => {
            quadrature_dt_double(&DtPdSubsystem::new(*eta, lambda, *steps))
        }
        _ => model.variance(lambda),
    }
}

pub fn cmd_variance(cfg: &Config) -> Result<CommandOutput> {
    let spec = cfg.spec()?;
    let gains = cfg.gains()?;
    let method = match &cfg.variance.method {
        Some(m) => VarianceMethod::parse(m)?,
        None => VarianceMethod::default_for(cfg.model),
    };
    let tag = method.tag(cfg.model)?;
    let model = cfg.model_params().variance_model(&spec)?;
    let spectrum = circulant_eigenvalues(&spec, &gains)?;
    let approximate = cfg.model == ModelKind::CtDouble && method != VarianceMethod::MonteCarlo;
    let mut t = Table::new(["j", "lambda", "variance", "standard_error", "method", "approximate"]);
    let mut total = 0.0;
    let mut se_sq = 0.0;
    let mut diverged = false;
    for (idx, &l) in spectrum.lambdas().iter().enumerate().skip(1) {
        let (v, se) = if method == VarianceMethod::MonteCarlo {
            let mut settings = cfg.run_settings();
            settings.seed = settings.seed.wrapping_add((idx as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let r = simulate_scalar(cfg.model, l, gains.eta, model.delay(), &settings)?;
            diverged |= r.diverged;
            (r.variance_estimate, Some(r.standard_error))
        } else {
            (analytic_variance(method, &model, l)?, None)
        };
        total += v;
        if let Some(s) = se {
            se_sq += s * s;
        }
        t.push(vec![(idx + 1).into(), l.into(), v.into(), se.into(), tag.into(), approximate.into()]);
    }
    let total_se = (method == VarianceMethod::MonteCarlo).then(|| se_sq.sqrt());
    t.push(vec!["total".into(), None.into(), total.into(), total_se.into(), tag.into(), approximate.into()]);
    let mut out = CommandOutput::new(t);
    out.summary.insert("total".into(), json!(total));
    out.summary.insert("method".into(), json!(tag));
    if method == VarianceMethod::MonteCarlo {
        out.summary.insert("diverged".into(), json!(diverged));
    }
    Ok(out)
}

fn design_row(d: &DesignResult, radius: usize) -> Vec<Cell> {
    let method = match d.method {
        crate::optimizer::DesignMethod::Exact => "exact",
        crate::optimizer::DesignMethod::QuadraticApprox => "approx",
    };
    let mut row: Vec<Cell> = vec![
        method.into(),
        d.model.clone().into(),
        d.objective.into(),
        d.iterations.into(),
        d.converged.into(),
        d.gradient_norm.into(),
        d.spectrum.min_nontrivial().into(),
        d.spectrum.max_nontrivial().into(),
        d.gains.eta.into(),
    ];
    row.extend(d.gains.k.iter().take(radius).map(|&k| Cell::from(k)));
    row
}

pub fn cmd_optimize(cfg: &Config) -> Result<CommandOutput> {
    let spec = cfg.spec()?;
    let model = cfg.model_params().variance_model(&spec)?;
    let choice = match cfg.optimize.method.as_deref() {
        None | Some("both") => DesignChoice::Both,
        Some("exact") => DesignChoice::Exact,
        Some("approx") => DesignChoice::Approx,
        Some(other) => return Err(Error::Config(format!("optimize.method: unknown `{other}` (expected exact, approx or both)"))),
    };
    let mut columns: Vec<String> = ["method", "model", "objective", "iterations", "converged", "gradient_norm", "lambda_min", "lambda_max", "eta"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    columns.extend((1..=spec.radius()).map(|l| format!("k_{l}")));
    let mut t = Table::new(columns);
    let mut summary = BTreeMap::new();
    if choice != DesignChoice::Exact {
        match design_quadratic_approx(&spec, model) {
            Ok(d) => {
                summary.insert("objective_approx".into(), json!(d.objective));
                t.push(design_row(&d, spec.radius()));
            }
            Err(e) if choice == DesignChoice::Both && matches!(e, Error::Infeasible(_)) => {
                summary.insert("approx_infeasible".into(), json!(e.to_string()));
            }
            Err(e) => return Err(e),
        }
    }
    if choice != DesignChoice::Approx {
        let d = design_exact(&spec, model)?;
        summary.insert("objective_exact".into(), json!(d.objective));
        t.push(design_row(&d, spec.radius()));
    }
    Ok(CommandOutput { table: t, summary, trajectory: None })
}

pub fn cmd_tradeoff(cfg: &Config) -> Result<CommandOutput> {
    let delay = cfg.delay_model()?;
    let n_min = cfg.tradeoff.n_min.unwrap_or(1);
    let n_max = cfg.tradeoff.n_max.unwrap_or_else(|| max_radius(cfg.agents));
    if n_min > n_max {
        return Err(Error::Config(format!("tradeoff.n_min = {n_min} exceeds tradeoff.n_max = {n_max}")));
    }
    let curve = sweep(cfg.agents, &delay, &cfg.model_params(), n_min..=n_max).map_err(|e| match e {
        Error::InvalidNetwork(m) | Error::InvalidArgument(m) => Error::Config(format!("tradeoff: {m}")),
        other => other,
    })?;
    let mut out = CommandOutput::new(curve.table());
    out.summary.insert("n_star_exact".into(), json!(curve.n_star_exact));
    out.summary.insert("n_star_approx".into(), json!(curve.n_star_approx));
    out.summary.insert("local_minima_exact".into(), json!(curve.local_minima_exact));
    let notes: BTreeMap<String, String> =
        curve.rows.iter().filter_map(|r| r.note.clone().map(|n| (r.n.to_string(), n))).collect();
    if !notes.is_empty() {
        out.summary.insert("infeasible".into(), json!(notes));
    }
    Ok(out)
}

pub fn cmd_simulate(cfg: &Config) -> Result<CommandOutput> {
    let sim_cfg = cfg.sim_config()?;
    let r = simulate(&sim_cfg)?;
    let mut t = Table::new(["replicate", "variance_estimate", "standard_error", "diverged"]);
    for (i, &e) in r.replicate_estimates.iter().enumerate() {
        t.push(vec![i.into(), e.into(), None.into(), Cell::Num(None)]);
    }
    t.push(vec!["mean".into(), r.variance_estimate.into(), r.standard_error.into(), r.diverged.into()]);
    let mut out = CommandOutput::new(t);
    out.summary.insert("variance_estimate".into(), json!(r.variance_estimate));
    out.summary.insert("standard_error".into(), json!(r.standard_error));
    out.summary.insert("diverged".into(), json!(r.diverged));
    out.summary.insert("growth_ratio".into(), json!(r.growth_ratio));
    out.summary.insert("step_size".into(), json!(r.step_size));
    out.summary.insert("delay_steps".into(), json!(r.delay_steps));
    out.summary.insert("steps".into(), json!(r.steps));
    if !r.warnings.is_empty() {
        out.summary.insert("warnings".into(), json!(r.warnings));
    }
    let model = cfg.model_params().variance_model(&sim_cfg.spec)?;
    let spectrum = circulant_eigenvalues(&sim_cfg.spec, &sim_cfg.gains)?;
    let analytic: Result<f64> = spectrum.nontrivial().iter().map(|&l| model.variance(l)).sum();
    if let Ok(a) = analytic {
        let key = if cfg.model == ModelKind::CtDouble { "reduced_model_total" } else { "analytic_total" };
        out.summary.insert(key.into(), json!(a));
    }
    if let Some(traj) = r.trajectory {
        let mut cols = vec!["time".to_string()];
        cols.extend((1..=sim_cfg.spec.agents()).map(|i| format!("x_{i}")));
        let mut tt = Table::new(cols);
        for p in traj {
            let mut row = vec![Cell::from(p.time)];
            row.extend(p.error.into_iter().map(Cell::from));
            tt.push(row);
        }
        out.trajectory = Some(tt);
    }
    Ok(out)
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML configuration file.
    pub config: PathBuf,
    /// Override a config key, e.g. `--set N=20 --set gains.k=[0.1,0.05]`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Write here instead of stdout; CSV gets a `<path>.manifest.json` beside it.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify every nontrivial eigenvalue (or a scalar grid) as stable or not.
    Stability(CommonArgs),
    /// Per-eigenvalue and total steady-state variance.
    Variance {
        #[command(flatten)]
        common: CommonArgs,
        /// Overrides variance.method.
        #[arg(long, value_enum)]
        method: Option<VarianceMethod>,
        /// Overrides sim.seed (monte-carlo).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Minimum-variance gains.
    Optimize {
        #[command(flatten)]
        common: CommonArgs,
        /// Overrides optimize.method.
        #[arg(long, value_enum)]
        method: Option<DesignChoice>,
    },
    /// Sweep the neighborhood radius.
    Tradeoff(CommonArgs),
    /// Monte Carlo simulation of the full ring.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Overrides sim.seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides sim.replicates.
        #[arg(long)]
        replicates: Option<usize>,
        /// CSV file for the replicate-0 trajectory (needs sim.trajectory_stride).
        #[arg(long)]
        trajectory: Option<PathBuf>,
    },
}

#[derive(Debug, Parser)]
#[command(name = "consensus-latency", version, about = "Ring consensus under connectivity-dependent delay")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

fn keys_help(prefixes: &[&str]) -> String {
    let mut s = String::from("Config keys read:\n");
    for (k, d) in KEYS {
        if prefixes.iter().any(|p| k == p || k.starts_with(&format!("{p}."))) {
            s.push_str(&format!("  {k:<22} {d}\n"));
        }
    }
    s
}

const NETWORK: [&str; 6] = ["model", "N", "n", "sampling_time", "delay", "gains"];

/// Clap command with per-subcommand key listings in `--help`.
pub fn command() -> clap::Command {
    let with = |extra: &[&'static str]| {
        let mut v: Vec<&str> = NETWORK.to_vec();
        v.extend_from_slice(extra);
        keys_help(&v)
    };
    Cli::command()
        .mut_subcommand("stability", |c| c.after_help(with(&["stability"])))
        .mut_subcommand("variance", |c| c.after_help(with(&["variance", "sim"])))
        .mut_subcommand("optimize", |c| {
            c.after_help(keys_help(&["model", "N", "n", "sampling_time", "delay", "gains.eta", "gains.eta_normalized", "optimize"]))
        })
        .mut_subcommand("tradeoff", |c| {
            c.after_help(keys_help(&["model", "N", "sampling_time", "delay", "gains.eta", "gains.eta_normalized", "tradeoff"]))
        })
        .mut_subcommand("simulate", |c| c.after_help(with(&["sim"])))
}

fn load(common: &CommonArgs, extra: Vec<String>) -> Result<Config> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", common.config.display())))?;
    let mut overrides = common.overrides.clone();
    overrides.extend(extra);
    Config::with_overrides(&text, &overrides)
        .map_err(|e| Error::Config(format!("{}: {}", common.config.display(), e.to_string().trim_start_matches("config: "))))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Render `out` in `format`; returns the main payload and, for CSV written
/// to a file, the manifest to place beside it.
pub fn render(out: &CommandOutput, manifest: &RunManifest, format: Format) -> (String, Option<String>) {
    let manifest_json = serde_json::to_value(manifest).expect("manifest serializes");
    match format {
        Format::Csv => (out.table.to_csv(), Some(serde_json::to_string_pretty(&manifest_json).unwrap() + "\n")),
        Format::Json => {
            let doc = json!({ "manifest": manifest_json, "rows": out.table.to_json_rows() });
            (serde_json::to_string_pretty(&doc).unwrap() + "\n", None)
        }
    }
}

fn execute(cli: Cli) -> std::result::Result<(), (i32, String)> {
    let cfg_err = |e: Error| (exit_code(&e), e.to_string());
    let (name, common, cfg, trajectory_path) = match &cli.command {
        Command::Stability(c) => ("stability", c, load(c, vec![]).map_err(cfg_err)?, None),
        Command::Variance { common, method, seed } => {
            let mut extra = Vec::new();
            if let Some(m) = method {
                extra.push(format!("variance.method=\"{}\"", m.to_possible_value().unwrap().get_name()));
            }
            if let Some(s) = seed {
                extra.push(format!("sim.seed={s}"));
            }
            ("variance", common, load(common, extra).map_err(cfg_err)?, None)
        }
        Command::Optimize { common, method } => {
            let extra = method
                .map(|m| vec![format!("optimize.method=\"{}\"", m.to_possible_value().unwrap().get_name())])
                .unwrap_or_default();
            ("optimize", common, load(common, extra).map_err(cfg_err)?, None)
        }
        Command::Tradeoff(c) => ("tradeoff", c, load(c, vec![]).map_err(cfg_err)?, None),
        Command::Simulate { common, seed, replicates, trajectory } => {
            let mut extra = Vec::new();
            if let Some(s) = seed {
                extra.push(format!("sim.seed={s}"));
            }
            if let Some(r) = replicates {
                extra.push(format!("sim.replicates={r}"));
            }
            ("simulate", common, load(common, extra).map_err(cfg_err)?, trajectory.clone())
        }
    };
    let out = match name {
        "stability" => cmd_stability(&cfg),
        "variance" => cmd_variance(&cfg),
        "optimize" => cmd_optimize(&cfg),
        "tradeoff" => cmd_tradeoff(&cfg),
        _ => cmd_simulate(&cfg),
    }
    .map_err(cfg_err)?;

    let mut outputs = Vec::new();
    if let Some(p) = &common.output {
        outputs.push(p.display().to_string());
    }
    if let Some(p) = &trajectory_path {
        outputs.push(p.display().to_string());
    }
    let uses_seed = name == "simulate" || (name == "variance" && cfg.variance.method.as_deref() == Some("monte-carlo"));
    let manifest = RunManifest {
        config_digest: cfg.digest(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: uses_seed.then(|| cfg.run_settings().seed),
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        subcommand: name.to_string(),
        outputs,
        summary: out.summary.clone(),
    };
    let io = |e: std::io::Error| (1, format!("write failed: {e}"));
    let (payload, side) = render(&out, &manifest, common.format);
    match &common.output {
        Some(path) => {
            fs::write(path, payload).map_err(io)?;
            if let Some(m) = side {
                fs::write(sidecar(path), m).map_err(io)?;
            }
        }
        None => print!("{payload}"),
    }
    if let Some(path) = trajectory_path {
        let table = out
            .trajectory
            .as_ref()
            .ok_or((2, "--trajectory needs sim.trajectory_stride in the config".to_string()))?;
        fs::write(path, table.to_csv()).map_err(io)?;
    }
    Ok(())
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return 2;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err((code, msg)) => {
            eprintln!("error: {msg}");
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 2);
        assert_eq!(exit_code(&Error::Unstable("x".into())), 3);
        assert_eq!(exit_code(&Error::Infeasible("x".into())), 3);
        assert_eq!(exit_code(&Error::NoConvergence { iterations: 1, gradient_norm: 1.0 }), 4);
    }

    #[test]
    fn method_availability() {
        assert!(VarianceMethod::Recursive.tag(ModelKind::DtSingle).is_ok());
        assert!(VarianceMethod::Recursive.tag(ModelKind::DtDouble).is_err());
        assert!(VarianceMethod::Quadrature.tag(ModelKind::CtSingle).is_err());
        assert_eq!(VarianceMethod::parse("moment-matching").unwrap(), VarianceMethod::MomentMatching);
    }

    #[test]
    fn help_lists_keys() {
        let mut cmd = command();
        let help = cmd.find_subcommand_mut("simulate").unwrap().render_long_help().to_string();
        for key in ["gains.k", "sim.seed", "sim.horizon", "delay.kind", "N"] {
            assert!(help.contains(key), "{key}");
        }
    }
}
