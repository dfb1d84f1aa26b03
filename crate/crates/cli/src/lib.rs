//! `effbound`: information bounds, refinement studies, msd remainders, quotient checks and
//! rate experiments driven by JSON config files.
//!
//! Exit codes: 0 success, 1 internal error, 2 usage or config error (nothing written),
//! 3 inconsistent verdict (report written).

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use effbound_core::models::{
    density_model_closed_form, density_msd_bound, mean_model_closed_form, msd_remainder_density,
    msd_remainder_mean, refinement_study, MsdStudy, RefinementReport,
};
use effbound_core::ratelab::{run_experiment, RateExperiment, RateReport};
use effbound_core::{
    compute_information, quotient_information, serde_float, verdict_from_report, Error, InfoReport,
    QuotientCheck, TheoremVerdict,
};
use serde::{Deserialize, Serialize};

use config::{Built, Config, ModelConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Largest tolerated gap between original and quotient information.
pub const QUOTIENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Info,
    Refine,
    Rates,
    Msd,
    Quotient,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Info => "info",
            Command::Refine => "refine",
            Command::Rates => "rates",
            Command::Msd => "msd",
            Command::Quotient => "quotient",
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "effbound",
    version,
    about = "Semiparametric information bounds on grids"
)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the seed of a rates experiment.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the relative residual tolerance for range membership.
    #[arg(long)]
    pub tol_residual: Option<f64>,
    /// Overrides the threshold below which information counts as zero.
    #[arg(long)]
    pub tol_info_zero: Option<f64>,
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Internal(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Internal(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "config error: {m}"),
            Failure::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

/// Errors raised while solving; those caused by the configuration map to exit code 2.
fn solve_err(e: Error) -> Failure {
    match e {
        Error::PathLeavesModel { .. }
        | Error::InvalidSpec(_)
        | Error::InvalidGrid(_)
        | Error::InvalidDensity(_)
        | Error::DimensionMismatch { .. }
        | Error::InvalidExperiment(_)
        | Error::UnsupportedFamily(_)
        | Error::ZeroMassAtPoint { .. }
        | Error::Domain(_) => Failure::Config(e.to_string()),
        other => Failure::Internal(other.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<R> {
    pub command: String,
    pub config_echo: Config,
    pub results: R,
    pub verdict: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoResults {
    pub model: String,
    #[serde(with = "serde_float::option")]
    pub estimand: Option<f64>,
    /// Closed-form information of the named models (absent for custom operators).
    #[serde(with = "serde_float::option")]
    pub closed_form: Option<f64>,
    pub report: InfoReport,
    pub theorem: TheoremVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuotientResults {
    pub model: String,
    pub check: QuotientCheck,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsdResults {
    pub model: String,
    pub study: MsdStudy,
    /// Upper bounds on the remainder (density model only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound_respected: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatesResults {
    pub experiment: RateExperiment,
    pub report: RateReport,
}

/// Files produced by a command, written only after everything has been computed.
struct Output {
    files: Vec<(&'static str, String)>,
    summary: String,
    code: i32,
}

fn json<T: Serialize>(v: &T) -> Result<String, Failure> {
    serde_json::to_string_pretty(v)
        .map(|s| s + "\n")
        .map_err(|e| Failure::Internal(e.to_string()))
}

/// Shortest round-trip decimal, `inf`/`-inf`/`nan` for non-finite values.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        serde_json::to_string(&v).expect("finite floats serialize")
    } else if v.is_nan() {
        "nan".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

fn csv(header: &str, rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for row in rows {
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

fn report<R: Serialize>(config: &Config, results: R, verdict: &str) -> Result<String, Failure> {
    json(&Report {
        command: config.command().to_string(),
        config_echo: config.clone(),
        results,
        verdict: verdict.to_string(),
        version: VERSION.to_string(),
    })
}

/// Parses the config and applies command-line overrides.
pub fn load_config(cli: &Cli) -> Result<Config, Failure> {
    let text = fs::read_to_string(&cli.config)
        .map_err(|e| Failure::Config(format!("cannot read {}: {e}", cli.config.display())))?;
    let mut config: Config =
        serde_json::from_str(&text).map_err(|e| Failure::Config(e.to_string()))?;
    if config.command() != cli.command.name() {
        return Err(Failure::Config(format!(
            "config is for `{}` but the command is `{}`",
            config.command(),
            cli.command.name()
        )));
    }
    for (flag, v) in [
        ("--tol-residual", cli.tol_residual),
        ("--tol-info-zero", cli.tol_info_zero),
    ] {
        if let Some(v) = v {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Failure::Config(format!("{flag} must be positive")));
            }
        }
    }
    let tolerances = match &mut config {
        Config::Info(m) | Config::Quotient(m) => Some(&mut m.tolerances),
        Config::Refine(r) => Some(&mut r.tolerances),
        _ => None,
    };
    if let Some(t) = tolerances {
        if cli.tol_residual.is_some() {
            t.residual_tol = cli.tol_residual;
        }
        if cli.tol_info_zero.is_some() {
            t.info_zero_tol = cli.tol_info_zero;
        }
    }
    if let (Config::Rates(r), Some(seed)) = (&mut config, cli.seed) {
        r.seed = seed;
    }
    Ok(config)
}

fn closed_form(built: &Built, m: &ModelConfig) -> Option<f64> {
    if !m.zero_columns.is_empty() {
        return None;
    }
    match built {
        Built::Mean(s) => mean_model_closed_form(s).ok(),
        Built::Density(s) => Some(density_model_closed_form(s)),
        Built::Custom(_) => None,
    }
}

fn cmd_info(config: &Config, m: &ModelConfig) -> Result<Output, Failure> {
    let (built, p) = m.problem().map_err(Failure::Config)?;
    let r = compute_information(&p).map_err(solve_err)?;
    let theorem = verdict_from_report(&r, p.tolerances());
    let passed = theorem.passed;
    let summary = format!(
        "info = {}  representer_norm = {}  identifiable = {}  theorem = {}",
        r.info,
        r.representer_norm,
        r.identifiable,
        if passed { "pass" } else { "INCONSISTENT" }
    );
    let results = InfoResults {
        model: built.kind().to_string(),
        estimand: p.estimand(),
        closed_form: closed_form(&built, m),
        report: r,
        theorem,
    };
    let verdict = if passed { "pass" } else { "inconsistent" };
    Ok(Output {
        files: vec![("report.json", report(config, results, verdict)?)],
        summary,
        code: if passed { 0 } else { 3 },
    })
}

fn cmd_quotient(config: &Config, m: &ModelConfig) -> Result<Output, Failure> {
    let (built, p) = m.problem().map_err(Failure::Config)?;
    let check = quotient_information(&p).map_err(solve_err)?;
    let consistent = check.difference.is_none_or(|d| d <= QUOTIENT_TOL);
    let verdict = match (check.identifiable, consistent) {
        (_, false) => "inconsistent",
        (true, true) => "identifiable",
        (false, true) => "not identifiable",
    };
    let summary = format!(
        "nullity = {}  identifiable = {}  info = {}  reduced_info = {}",
        check.nullity,
        check.identifiable,
        check.original_info,
        check
            .reduced_info
            .map_or("none".to_string(), |v| v.to_string())
    );
    let results = QuotientResults {
        model: built.kind().to_string(),
        check,
        tolerance: QUOTIENT_TOL,
    };
    Ok(Output {
        files: vec![("report.json", report(config, results, verdict)?)],
        summary,
        code: if consistent { 0 } else { 3 },
    })
}

fn cmd_refine(config: &Config, r: &config::RefineConfig) -> Result<Output, Failure> {
    let family = r.family().map_err(Failure::Config)?;
    let rep: RefinementReport = refinement_study(&family, &r.m_values).map_err(solve_err)?;
    let rows = (0..rep.m_values.len()).map(|i| {
        vec![
            rep.m_values[i].to_string(),
            fmt_f64(rep.info_values[i]),
            fmt_f64(rep.representer_norms[i]),
            fmt_f64(rep.residuals[i]),
        ]
    });
    let table = csv("m,info,representer_norm,residual", rows);
    let summary = format!(
        "levels = {}  decay_slope = {}",
        rep.m_values.len(),
        rep.decay_slope
            .map_or("none".to_string(), |s| s.to_string())
    );
    Ok(Output {
        files: vec![
            ("refine.csv", table),
            ("report.json", report(config, rep, "ok")?),
        ],
        summary,
        code: 0,
    })
}

fn cmd_msd(config: &Config, c: &config::MsdConfig) -> Result<Output, Failure> {
    let built = c.model.build().map_err(Failure::Config)?;
    let (study, bounds) = match &built {
        Built::Mean(s) => {
            let alpha = c.direction.build(s.grid()).map_err(Failure::Config)?;
            (
                msd_remainder_mean(s, &alpha, &c.t_values).map_err(solve_err)?,
                None,
            )
        }
        Built::Density(s) => {
            let alpha = c.direction.build(s.grid()).map_err(Failure::Config)?;
            let study = msd_remainder_density(s, &alpha, &c.t_values).map_err(solve_err)?;
            let bounds = c
                .t_values
                .iter()
                .map(|&t| {
                    let lambda: Vec<f64> = alpha.iter().map(|a| t * a).collect();
                    density_msd_bound(s, &alpha, &lambda, t)
                })
                .collect::<effbound_core::Result<Vec<f64>>>()
                .map_err(solve_err)?;
            (study, Some(bounds))
        }
        Built::Custom(_) => {
            return Err(Failure::Config(
                "msd needs a mean or density model".to_string(),
            ))
        }
    };
    let bound_respected = bounds
        .as_ref()
        .map(|b| study.remainders.iter().zip(b).all(|(r, b)| r <= b));
    let rows = study
        .t_values
        .iter()
        .zip(&study.remainders)
        .map(|(t, r)| vec![fmt_f64(*t), fmt_f64(*r)]);
    let table = csv("t,r", rows);
    let mut summary = format!(
        "fitted_slope = {}",
        study
            .fitted_slope
            .map_or("none".to_string(), |s| s.to_string())
    );
    if let Some(ok) = bound_respected {
        let _ = write!(summary, "  bound_respected = {ok}");
    }
    let results = MsdResults {
        model: built.kind().to_string(),
        study,
        bounds,
        bound_respected,
    };
    Ok(Output {
        files: vec![
            ("msd.csv", table),
            ("report.json", report(config, results, "ok")?),
        ],
        summary,
        code: 0,
    })
}

fn cmd_rates(config: &Config, c: &config::RatesConfig) -> Result<Output, Failure> {
    let experiment = c.experiment().map_err(Failure::Config)?;
    let rep = run_experiment(&experiment).map_err(solve_err)?;
    let rows = rep
        .per_n
        .iter()
        .map(|p| vec![p.n.to_string(), fmt_f64(p.rmse), fmt_f64(p.rmse_stderr)]);
    let table = csv("n,rmse,rmse_stderr", rows);
    let summary = format!(
        "fitted_slope = {}  slope_stderr = {}",
        rep.fitted_slope
            .map_or("none".to_string(), |s| s.to_string()),
        rep.slope_stderr
            .map_or("none".to_string(), |s| s.to_string())
    );
    let results = RatesResults {
        experiment,
        report: rep,
    };
    Ok(Output {
        files: vec![
            ("rates.csv", table),
            ("report.json", report(config, results, "ok")?),
        ],
        summary,
        code: 0,
    })
}

fn write_outputs(dir: &Path, out: &Output) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::Internal(format!("cannot create {}: {e}", dir.display())))?;
    for (name, body) in &out.files {
        let path = dir.join(name);
        fs::write(&path, body)
            .map_err(|e| Failure::Internal(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

/// Runs one invocation and returns the exit code.
pub fn run(cli: &Cli) -> i32 {
    let result = load_config(cli).and_then(|config| {
        let out = match &config {
            Config::Info(m) => cmd_info(&config, m),
            Config::Quotient(m) => cmd_quotient(&config, m),
            Config::Refine(r) => cmd_refine(&config, r),
            Config::Msd(c) => cmd_msd(&config, c),
            Config::Rates(c) => cmd_rates(&config, c),
        }?;
        write_outputs(&cli.out, &out)?;
        Ok(out)
    });
    match result {
        Ok(out) => {
            println!("{}", out.summary);
            out.code
        }
        Err(f) => {
            eprintln!("effbound: {f}");
            f.code()
        }
    }
}

/// Entry point shared by the binary: parses arguments (usage errors exit 2) and runs.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            code
        }
    }
}
