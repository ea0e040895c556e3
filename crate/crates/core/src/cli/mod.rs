//! Command-line front end.
//!
//! Every command builds its complete output in memory and only prints (or
//! writes the metric dump) once all computation has succeeded.
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure.

mod specfile;

pub use specfile::{MethodSpec, SimulateSpec, StudySpec, Timing};

use crate::design::{mcp_critical_value, mcp_power, mcp_sample_size, single_power, single_sample_size, Allocation, Rounding};
use crate::error::SsrError;
use crate::freqpower::{AnalysisPlan, InterimState, Zone};
use crate::simengine::{simulate, summarize, MetricDistribution, Scenario, SsrRule};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

/// Environment variable read when `--threads` is not given.
pub const THREADS_ENV: &str = "ADAPTIVE_SSR_THREADS";

#[derive(Debug, Parser)]
#[command(name = "adaptive-ssr", version, about = "Two-stage adaptive dose-finding designs with sample size re-estimation")]
pub struct Cli {
    /// Worker threads for simulation.
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RoundingArg {
    PerArmEqual,
    None,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the contrast matrix as CSV.
    Contrast {
        #[arg(long)]
        spec: PathBuf,
    },
    /// Fixed-design power at a total sample size.
    Power {
        #[arg(long)]
        spec: PathBuf,
        /// True arm means, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        mu: Vec<f64>,
        /// Total sample size; defaults to n1 + n2.
        #[arg(long)]
        n: Option<f64>,
        #[arg(long)]
        timing: Option<String>,
    },
    /// Total sample size reaching the target power.
    Samplesize {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        mu: Vec<f64>,
        #[arg(long, value_enum, default_value = "per-arm-equal")]
        rounding: RoundingArg,
        #[arg(long)]
        timing: Option<String>,
    },
    /// Interim decision from observed stage-1 arm means.
    Ssr {
        #[arg(long)]
        spec: PathBuf,
        /// Stage-1 arm means, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        means: Vec<f64>,
        /// Stage-1 arm sizes; default to the planned n1 and allocation.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<f64>>,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        timing: Option<String>,
    },
    /// Simulate every (scenario, timing, method) cell and print CSV.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        /// Overrides the seed in the file.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the replicate count in the file.
        #[arg(long)]
        replicates: Option<u64>,
        /// Write per-replicate CP/PP(N₂) values and quartiles as JSON.
        #[arg(long)]
        dump_metrics: Option<PathBuf>,
    },
}

/// A failure reported to the user.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: &'static str,
    pub path: String,
    pub message: String,
    pub exit_code: u8,
}

impl CliError {
    pub fn validation(code: &'static str, path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            code,
            path: path.into(),
            message: message.into(),
            exit_code: 2,
        }
    }

    fn from_lib(path: impl Into<String>, e: SsrError) -> Self {
        let (code, exit_code) = match &e {
            SsrError::Convergence(_) | SsrError::Numeric(_) | SsrError::Curvature(_) => ("E_NUMERIC", 3),
            SsrError::Infeasible(_) => ("E_INFEASIBLE", 2),
            SsrError::DegenerateProfile(_) => ("E_CONTRAST", 2),
            SsrError::UnsupportedDimension { .. } => ("E_DIMENSION", 2),
            _ => ("E_INVALID", 2),
        };
        Self {
            code,
            path: path.into(),
            message: e.to_string(),
            exit_code,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "error[{}]: {}", self.code, self.message)
        } else {
            write!(f, "error[{}] {}: {}", self.code, self.path, self.message)
        }
    }
}

/// Everything a successful command produces.
#[derive(Debug, Default)]
pub struct CommandOutput {
    pub stdout: String,
    /// Metric dump to write, if requested.
    pub dump: Option<(PathBuf, String)>,
}

fn load(path: &Path) -> Result<StudySpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation("E_IO", path.display().to_string(), e.to_string()))?;
    StudySpec::parse(&text)
}

fn lib<T>(path: &str, r: crate::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::from_lib(path, e))
}

/// `-0.000` prints as `0.000`.
fn fixed3(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

fn cmd_contrast(spec: &StudySpec) -> String {
    let mut out = String::from("shape");
    for d in &spec.doses {
        out.push_str(&format!(",{d}"));
    }
    out.push('\n');
    for (label, row) in spec.contrast_labels.iter().zip(spec.contrasts.rows()) {
        out.push_str(&csv_field(label));
        for v in row {
            out.push(',');
            out.push_str(&fixed3(*v));
        }
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn check_mu(spec: &StudySpec, mu: &[f64]) -> Result<(), CliError> {
    if mu.len() != spec.doses.len() {
        return Err(CliError::validation(
            "E_DIMENSION",
            "--mu",
            format!("expected {} arm means, got {}", spec.doses.len(), mu.len()),
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct PowerReport {
    contrasts: usize,
    mu: Vec<f64>,
    n: f64,
    alpha: f64,
    critical_value: f64,
    power: f64,
}

fn cmd_power(spec: &StudySpec, mu: &[f64], n: Option<f64>, timing: Option<&str>) -> Result<String, CliError> {
    check_mu(spec, mu)?;
    let design = &spec.timing(timing)?.design;
    let n = n.unwrap_or(design.n1 + design.n2);
    if !(n > 0.0 && n.is_finite()) {
        return Err(CliError::validation("E_STAGE_SIZE", "--n", format!("must be positive, got {n}")));
    }
    let (critical, power) = if design.contrasts.len() == 1 {
        let c = design.contrasts.row(0);
        let delta: f64 = c.iter().zip(mu).map(|(a, b)| a * b).sum();
        let p = lib("--mu", single_power(delta, c, &design.alloc1, design.sigma, n, design.alpha))?;
        (design.z_alpha(), p)
    } else {
        let u = lib("test", mcp_critical_value(design, &spec.qmc))?;
        (u, lib("--mu", mcp_power(mu, design, u, n, &spec.qmc))?)
    };
    let report = PowerReport {
        contrasts: design.contrasts.len(),
        mu: mu.to_vec(),
        n,
        alpha: design.alpha,
        critical_value: critical,
        power,
    };
    Ok(json_line(&report))
}

#[derive(Serialize)]
struct SampleSizeReport {
    contrasts: usize,
    mu: Vec<f64>,
    target_power: f64,
    rounding: Rounding,
    n_continuous: f64,
    n: f64,
    power_at_n: f64,
    critical_value: f64,
}

fn cmd_samplesize(spec: &StudySpec, mu: &[f64], rounding: RoundingArg, timing: Option<&str>) -> Result<String, CliError> {
    check_mu(spec, mu)?;
    let design = &spec.timing(timing)?.design;
    let rounding = match rounding {
        RoundingArg::PerArmEqual => Rounding::PerArmEqual,
        RoundingArg::None => Rounding::None,
    };
    let arms = design.arms();
    let report = if design.contrasts.len() == 1 {
        let c = design.contrasts.row(0);
        let phi: &Allocation = &design.alloc1;
        let delta: f64 = c.iter().zip(mu).map(|(a, b)| a * b).sum();
        let cont = lib(
            "--mu",
            single_sample_size(delta, c, phi, design.sigma, design.alpha, design.beta, Rounding::None),
        )?;
        let n = rounding.apply(cont, arms);
        SampleSizeReport {
            contrasts: 1,
            mu: mu.to_vec(),
            target_power: design.target_power(),
            rounding,
            n_continuous: cont,
            n,
            power_at_n: lib("--mu", single_power(delta, c, phi, design.sigma, n, design.alpha))?,
            critical_value: design.z_alpha(),
        }
    } else {
        let u = lib("test", mcp_critical_value(design, &spec.qmc))?;
        let cont = lib("--mu", mcp_sample_size(mu, design, u, Rounding::None, &spec.qmc))?;
        let n = rounding.apply(cont, arms);
        SampleSizeReport {
            contrasts: design.contrasts.len(),
            mu: mu.to_vec(),
            target_power: design.target_power(),
            rounding,
            n_continuous: cont,
            n,
            power_at_n: lib("--mu", mcp_power(mu, design, u, n, &spec.qmc))?,
            critical_value: u,
        }
    };
    Ok(json_line(&report))
}

#[derive(Serialize)]
struct SsrReport {
    method: String,
    timing: String,
    zone: Zone,
    metric: &'static str,
    metric_at_n2: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pp_at_zero: Option<f64>,
    n2_planned: f64,
    n2_new: f64,
    t1: Vec<f64>,
    critical_value: f64,
}

fn cmd_ssr(
    spec: &StudySpec,
    means: &[f64],
    sizes: Option<&[f64]>,
    method: Option<&str>,
    timing: Option<&str>,
) -> Result<String, CliError> {
    let timing = spec.timing(timing)?;
    let method = spec.method(method)?;
    let mut design = timing.design.clone();
    design.promising_min = method.promising_min;
    let k = design.arms();
    if means.len() != k {
        return Err(CliError::validation(
            "E_DIMENSION",
            "--means",
            format!("expected {k} arm means, got {}", means.len()),
        ));
    }
    if means.iter().any(|m| !m.is_finite()) {
        return Err(CliError::validation("E_VALUE", "--means", "arm means must be finite"));
    }
    let (n1, phi1) = match sizes {
        None => (design.n1, design.alloc1.clone()),
        Some(s) => {
            if s.len() != k {
                return Err(CliError::validation(
                    "E_DIMENSION",
                    "--sizes",
                    format!("expected {k} arm sizes, got {}", s.len()),
                ));
            }
            if s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(CliError::validation("E_STAGE_SIZE", "--sizes", "arm sizes must be positive"));
            }
            let n: f64 = s.iter().sum();
            let phi = Allocation::new(s.iter().map(|v| v / n).collect()).map_err(|e| CliError::from_lib("--sizes", e))?;
            (n, phi)
        }
    };
    // the pre-declared weights use the realized stage-1 size
    design.n1 = n1;
    design.alloc1 = phi1.clone();
    let plan = lib("stages", AnalysisPlan::new(design, spec.qmc))?;
    let interim = lib(
        "--means",
        InterimState::from_means(means.to_vec(), n1, phi1, &plan.design.contrasts, plan.design.sigma),
    )?;
    let decision = lib("ssr", method.method.decide(&interim, &plan))?;
    let metric = match method.method.rule {
        SsrRule::Conditional(_) => "cp",
        SsrRule::Predictive(_) => "pp",
    };
    let report = SsrReport {
        method: method.method.label.clone(),
        timing: timing.label.clone(),
        zone: decision.zone,
        metric,
        metric_at_n2: decision.metric_at_n2,
        pp_at_zero: decision.metric_at_zero,
        n2_planned: plan.design.n2,
        n2_new: decision.n2_new,
        t1: interim.t1().to_vec(),
        critical_value: plan.critical,
    };
    Ok(json_line(&report))
}

/// Column header of the simulation table.
pub const SIMULATE_HEADER: &str = "scenario,timing,method,pct_unfavorable,pct_favorable,pct_promising,metric_mean,metric_sd,power,mean_ss,mean_incr,replicates,mc_se_power";

#[derive(Serialize)]
struct MetricDump<'a> {
    scenario: &'a str,
    timing: &'a str,
    method: &'a str,
    quartiles: [f64; 3],
    values: Vec<f64>,
}

fn cmd_simulate(
    spec: &StudySpec,
    seed: Option<u64>,
    replicates: Option<u64>,
    dump: Option<&Path>,
) -> Result<CommandOutput, CliError> {
    let sim = spec
        .simulate
        .as_ref()
        .ok_or_else(|| CliError::validation("E_MISSING", "simulate", "this command needs a `simulate` section"))?;
    if spec.timings.is_empty() {
        return Err(CliError::validation("E_MISSING", "stages", "this command needs a `stages` section"));
    }
    if spec.methods.is_empty() {
        return Err(CliError::validation("E_MISSING", "ssr", "this command needs an `ssr` section with a rule"));
    }
    let seed = seed.unwrap_or(sim.seed);
    let replicates = replicates.unwrap_or(sim.replicates);
    if replicates < crate::simengine::MIN_REPLICATES {
        return Err(CliError::validation(
            "E_SIMULATE",
            "--replicates",
            format!("at least {} replicates are required", crate::simengine::MIN_REPLICATES),
        ));
    }
    // critical values once per timing
    let mut plans = Vec::with_capacity(spec.timings.len());
    for t in &spec.timings {
        plans.push(lib("stages", AnalysisPlan::new(t.design.clone(), spec.qmc))?);
    }
    let mut csv = String::from(SIMULATE_HEADER);
    csv.push('\n');
    let mut dumps = Vec::new();
    for (scenario_label, mu) in &sim.scenarios {
        for (timing, plan) in spec.timings.iter().zip(&plans) {
            for m in &spec.methods {
                let mut design = plan.design.clone();
                design.promising_min = m.promising_min;
                let plan = Arc::new(lib("stages", AnalysisPlan::with_critical(design, plan.critical, plan.cfg))?);
                let scenario = lib(
                    "simulate",
                    Scenario::new(plan, mu.clone(), m.method.clone(), replicates, seed),
                )?;
                let outcomes = lib("simulate", simulate(&scenario))?;
                let r = summarize(&outcomes, scenario.design());
                csv.push_str(&format!(
                    "{},{},{},{:.2},{:.2},{:.2},{:.4},{:.4},{:.4},{:.2},{:.2},{},{:.5}\n",
                    csv_field(scenario_label),
                    csv_field(&timing.label),
                    csv_field(&m.method.label),
                    r.pct_unfavorable,
                    r.pct_favorable,
                    r.pct_promising,
                    r.metric_mean,
                    r.metric_sd,
                    r.power,
                    r.mean_ss,
                    r.mean_incr,
                    r.replicates,
                    r.mc_se_power
                ));
                if dump.is_some() {
                    let d = MetricDistribution::from_outcomes(&outcomes);
                    dumps.push((scenario_label.clone(), timing.label.clone(), m.method.label.clone(), d));
                }
            }
        }
    }
    let dump = dump.map(|path| {
        let records: Vec<MetricDump> = dumps
            .iter()
            .map(|(s, t, m, d)| MetricDump {
                scenario: s,
                timing: t,
                method: m,
                quartiles: d.quartiles,
                values: d.values.clone(),
            })
            .collect();
        (path.to_path_buf(), serde_json::to_string(&records).expect("serializable") + "\n")
    });
    Ok(CommandOutput { stdout: csv, dump })
}

fn json_line<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

/// Runs a parsed command without touching stdout or the file system.
pub fn execute(cli: &Cli) -> Result<CommandOutput, CliError> {
    let text = |s: String| CommandOutput { stdout: s, dump: None };
    match &cli.command {
        Command::Contrast { spec } => Ok(text(cmd_contrast(&load(spec)?))),
        Command::Power { spec, mu, n, timing } => cmd_power(&load(spec)?, mu, *n, timing.as_deref()).map(text),
        Command::Samplesize {
            spec,
            mu,
            rounding,
            timing,
        } => cmd_samplesize(&load(spec)?, mu, *rounding, timing.as_deref()).map(text),
        Command::Ssr {
            spec,
            means,
            sizes,
            method,
            timing,
        } => cmd_ssr(&load(spec)?, means, sizes.as_deref(), method.as_deref(), timing.as_deref()).map(text),
        Command::Simulate {
            spec,
            seed,
            replicates,
            dump_metrics,
        } => cmd_simulate(&load(spec)?, *seed, *replicates, dump_metrics.as_deref()),
    }
}

/// Writes `contents` next to `path` first, then renames it into place.
fn write_atomically(path: &Path, contents: &str) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.partial"));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}

/// Parses arguments, runs the command, prints results; returns the exit code.
pub fn run_from_args<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match cli.threads {
        Some(0) => Err(CliError::validation("E_THREADS", "--threads", "must be at least 1")),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| execute(&cli)),
            Err(e) => Err(CliError::validation("E_THREADS", "--threads", e.to_string())),
        },
        None => execute(&cli),
    };
    match result {
        Ok(out) => {
            if let Some((path, contents)) = &out.dump {
                if let Err(e) = write_atomically(path, contents) {
                    eprintln!("{}", CliError::validation("E_IO", path.display().to_string(), e.to_string()));
                    return 2;
                }
            }
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(out.stdout.as_bytes()).and_then(|_| stdout.flush()).is_err() {
                return 2;
            }
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_by_error_kind() {
        let numeric = CliError::from_lib("ssr", SsrError::Convergence("no root".into()));
        assert_eq!(numeric.exit_code, 3);
        let curvature = CliError::from_lib("ssr", SsrError::Curvature("flat".into()));
        assert_eq!(curvature.exit_code, 3);
        let invalid = CliError::from_lib("--mu", SsrError::Invalid("bad".into()));
        assert_eq!(invalid.exit_code, 2);
        assert_eq!(CliError::validation("E_ALPHA", "test.alpha", "x").exit_code, 2);
    }

    #[test]
    fn display_format() {
        let e = CliError::validation("E_ALPHA", "test.alpha", "must be in (0, 0.5)");
        assert_eq!(e.to_string(), "error[E_ALPHA] test.alpha: must be in (0, 0.5)");
    }

    #[test]
    fn negative_zero_is_printed_unsigned() {
        assert_eq!(fixed3(-0.0001), "0.000");
        assert_eq!(fixed3(-0.3162), "-0.316");
    }
}
