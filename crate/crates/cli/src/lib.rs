//! Command-line front end: CSV ingestion, configuration resolution and the
//! `select`, `fit`, `simulate`, `generate` and `report` subcommands.

pub mod config;
pub mod ingest;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gpardsel::inference::{fit_map, predict, FitResult, OptimizerKind};
use gpardsel::kernelmath::{standardize, Standardization};
use gpardsel::model::{Family, HyperPriors};
use gpardsel::selection::{
    run_selection_standardized, BoxplotDocument, NuisanceKind, NuisanceSource, SelectionConfig, SelectionReport,
    SCHEMA_VERSION,
};
use gpardsel::simlab::{generate, grid, run_study_with, SimDesign, SimTag, StudyOptions, StudyProfile, StudyResult};
use serde::{Deserialize, Serialize};

use config::{resolve, FitCmdConfig, SelectConfig, SimulateConfig};
pub use ingest::{ingest_csv, ingest_features, IngestError};

pub const EXIT_INPUT: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn internal(e: impl std::fmt::Display) -> Self {
        Self::input(format!("internal serialization error: {e}"))
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<gpardsel::Error> for CliError {
    fn from(e: gpardsel::Error) -> Self {
        Self {
            code: if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_INPUT },
            message: e.to_string(),
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        Self::input(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "gpardsel", version, about = "Variable selection for Gaussian-process models")]
pub struct Cli {
    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true, env = "GPARDSEL_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select active features of a CSV data set.
    Select(SelectArgs),
    /// Fit one model and optionally predict a test set.
    Fit(FitArgs),
    /// Run a repetition study on a simulated design.
    Simulate(SimulateArgs),
    /// Write one simulated data set as CSV.
    Generate(GenerateArgs),
    /// Summarize a report written by another subcommand.
    Report(ReportArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct FitFlags {
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub restarts: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct SelectArgs {
    /// Flat `key = value` TOML file; flags override its values.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Name of the response column.
    #[arg(long)]
    pub response: Option<String>,
    /// gaussian, bernoulli or poisson.
    #[arg(long)]
    pub family: Option<Family>,
    /// Rate of the exponential prior on the inverse length-scales (0 = none).
    #[arg(long)]
    pub tau: Option<f64>,
    /// Number of augmentation iterations.
    #[arg(short = 'M', long = "iterations")]
    pub m: Option<usize>,
    /// Percentile thresholds, comma separated.
    #[arg(long = "q", value_delimiter = ',')]
    pub q_list: Option<Vec<f64>>,
    /// random, permuted or pca.
    #[arg(long)]
    pub algorithm: Option<NuisanceKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub boxplot: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitFlags,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub train: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub response: Option<String>,
    #[arg(long)]
    pub family: Option<Family>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitFlags,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// ex1, ex2, ex2-binary, ex2-correlated, ex3, ex3-correlated,
    /// null-bernoulli, gauss-ex2, gauss-ex2-all-binary or gauss-ex3.
    #[arg(long)]
    pub design: Option<SimTag>,
    /// paper (50 reps), desk (25 reps) or ci (10 reps, half the rows).
    #[arg(long)]
    pub profile: Option<StudyProfile>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub algorithms: Option<Vec<NuisanceKind>>,
    #[arg(long, value_delimiter = ',')]
    pub taus: Option<Vec<f64>>,
    #[arg(long = "q", value_delimiter = ',')]
    pub q_list: Option<Vec<f64>>,
    #[arg(short = 'M', long = "iterations")]
    pub m: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitFlags,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub design: SimTag,
    /// Number of rows; defaults to the published size.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON written by `select`, `fit` or `simulate`.
    #[arg(long)]
    pub input: PathBuf,
    /// Also write the box-plot document of a selection report here.
    #[arg(long)]
    pub boxplot: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SelectOutput {
    #[serde(flatten)]
    pub report: SelectionReport,
    pub feature_names: Vec<String>,
    pub standardization: Standardization,
    pub run_config: SelectConfig,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BoxplotOutput {
    pub schema_version: u32,
    #[serde(flatten)]
    pub document: BoxplotDocument,
    pub feature_names: Vec<String>,
    pub run_config: SelectConfig,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct FitOutput {
    pub schema_version: u32,
    pub family: Family,
    pub feature_names: Vec<String>,
    pub standardization: Standardization,
    pub fit: FitResult,
    pub seed: u64,
    pub run_config: FitCmdConfig,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StudyOutput {
    #[serde(flatten)]
    pub result: StudyResult,
    pub run_config: SimulateConfig,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::internal)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::input(format!("cannot write {}: {e}", path.display())))
}

fn names_of(indices: &[usize], names: &[String]) -> String {
    indices
        .iter()
        .map(|&k| names[k - 1].as_str())
        .collect::<Vec<_>>()
        .join(",")
}

pub fn cmd_select(args: &SelectArgs, out: &mut impl Write) -> Result<(), CliError> {
    let cfg: SelectConfig = resolve(args.config.as_deref(), args)?;
    let (data, family) = cfg.check()?;
    let (x, y, names) = ingest_csv(data, &cfg.response, Some(family))?;
    let sd = standardize(&x)?;
    let sel = SelectionConfig {
        m: cfg.m,
        q_list: cfg.q_list.clone(),
        tau: cfg.tau,
        family,
        fit: cfg.fit.fit_config(cfg.seed),
        source: NuisanceSource::new(cfg.algorithm, cfg.seed),
    };
    let report = run_selection_standardized(&y, &sd, &sel)?;
    let boxplot = BoxplotOutput {
        schema_version: SCHEMA_VERSION,
        document: report.boxplot()?,
        feature_names: names.clone(),
        run_config: cfg.clone(),
    };
    for (q, idx) in &report.active_indices {
        writeln!(
            out,
            "q={q} alpha={:.6} active=[{}]",
            report.alpha[q],
            names_of(idx, &names)
        )
        .map_err(CliError::internal)?;
    }
    if report.failed_iterations() > 0 {
        eprintln!(
            "warning: {} of {} augmentation fits failed and were dropped",
            report.failed_iterations(),
            cfg.m
        );
    }
    let output = SelectOutput {
        report,
        feature_names: names,
        standardization: sd.stats().clone(),
        run_config: cfg.clone(),
    };
    write_json(&cfg.out, &output)?;
    write_json(&cfg.boxplot, &boxplot)
}

pub fn cmd_fit(args: &FitArgs, out: &mut impl Write) -> Result<(), CliError> {
    let cfg: FitCmdConfig = resolve(args.config.as_deref(), args)?;
    let (train, family) = cfg.check()?;
    let (x, y, names) = ingest_csv(train, &cfg.response, Some(family))?;
    let test = match &cfg.test {
        Some(path) => {
            let t = ingest_features(path, &cfg.response)?;
            if t.names != names {
                return Err(CliError::input(format!(
                    "test columns {:?} do not match training columns {:?}",
                    t.names, names
                )));
            }
            Some(t)
        }
        None => None,
    };
    let sd = standardize(&x)?;
    let fit = fit_map(
        &y,
        &sd,
        family,
        &HyperPriors::with_tau(cfg.tau),
        &cfg.fit.fit_config(cfg.seed),
    )?;
    writeln!(
        out,
        "objective={:.6} converged={} sigma2={:.6}",
        fit.objective, fit.converged, fit.hp_hat.sigma2
    )
    .map_err(CliError::internal)?;
    for (name, l) in names.iter().zip(&fit.hp_hat.ell2) {
        writeln!(out, "ell2[{name}]={l:.6}").map_err(CliError::internal)?;
    }
    if let Some(t) = test {
        let xs = sd.apply(&t.x)?;
        let pred = predict(&fit, &sd, &y, xs.as_ref(), family)?;
        let mut text = String::from("row,latent_mean,response\n");
        for (i, (m, r)) in pred.latent_mean.iter().zip(&pred.response).enumerate() {
            text.push_str(&format!("{},{m},{r}\n", i + 1));
        }
        write_text(&cfg.predictions, &text)?;
    }
    let output = FitOutput {
        schema_version: SCHEMA_VERSION,
        family,
        feature_names: names,
        standardization: sd.stats().clone(),
        fit,
        seed: cfg.seed,
        run_config: cfg.clone(),
    };
    write_json(&cfg.out, &output)
}

pub fn cmd_simulate(args: &SimulateArgs, out: &mut impl Write) -> Result<(), CliError> {
    let cfg: SimulateConfig = resolve(args.config.as_deref(), args)?;
    let tag = cfg.check()?;
    let mut design = cfg.profile.design(tag, cfg.seed);
    if let Some(n) = cfg.n {
        design.n = n;
    }
    let reps = cfg.reps.unwrap_or(cfg.profile.reps());
    let cells = grid(&cfg.algorithms, &cfg.taus, &cfg.q_list);
    let opts = StudyOptions {
        m: cfg.m,
        fit: cfg.fit.fit_config(cfg.seed),
    };
    let result = run_study_with(&design, reps, &cells, cfg.seed, &opts)?;
    let csv = result.to_csv();
    out.write_all(csv.as_bytes()).map_err(CliError::internal)?;
    if !result.failures.is_empty() {
        eprintln!("warning: {} selection runs failed", result.failures.len());
    }
    write_text(&cfg.out_csv, &csv)?;
    write_json(
        &cfg.out_json,
        &StudyOutput {
            result,
            run_config: cfg.clone(),
        },
    )
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let mut design = SimDesign::paper(args.design, args.seed);
    if let Some(n) = args.n {
        design.n = n;
    }
    let data = generate(&design)?;
    let names: Vec<String> = (1..=design.k).map(|k| format!("x{k}")).collect();
    ingest::write_csv(&args.out, &names, &data.x, Some(("y", &data.y)))
        .map_err(|e| CliError::input(format!("cannot write {}: {e}", args.out.display())))
}

pub fn cmd_report(args: &ReportArgs, out: &mut impl Write) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.input)
        .map_err(|e| CliError::input(format!("cannot read {}: {e}", args.input.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", args.input.display())))?;
    let bad = |e: serde_json::Error| CliError::input(format!("{}: {e}", args.input.display()));
    let w = |out: &mut dyn Write, s: String| writeln!(out, "{s}").map_err(CliError::internal);
    if value.get("medians").is_some() {
        let sel: SelectOutput = serde_json::from_value(value).map_err(bad)?;
        let r = &sel.report;
        w(
            out,
            format!(
                "algorithm={} M={} tau={} seed={}",
                r.algorithm, r.config.m, r.config.tau, r.seed
            ),
        )?;
        w(out, format!("failed_iterations={}", r.failed_iterations()))?;
        let keys: Vec<&String> = r.alpha.keys().collect();
        let mut header = String::from("feature,median");
        for q in &keys {
            header.push_str(&format!(",active_q{q}"));
        }
        w(out, header)?;
        for (k, name) in sel.feature_names.iter().enumerate() {
            let mut line = format!("{name},{}", r.medians[k]);
            for q in &keys {
                line.push_str(&format!(",{}", u8::from(r.active[*q][k])));
            }
            w(out, line)?;
        }
        for q in &keys {
            w(out, format!("alpha_q{q}={}", r.alpha[*q]))?;
        }
        if let Some(path) = &args.boxplot {
            write_json(
                path,
                &BoxplotOutput {
                    schema_version: SCHEMA_VERSION,
                    document: r.boxplot()?,
                    feature_names: sel.feature_names.clone(),
                    run_config: sel.run_config.clone(),
                },
            )?;
        }
        Ok(())
    } else if value.get("cells").is_some() {
        let study: StudyOutput = serde_json::from_value(value).map_err(bad)?;
        let r = &study.result;
        w(
            out,
            format!(
                "design={} n={} reps={} base_seed={}",
                r.design.tag, r.design.n, r.reps, r.base_seed
            ),
        )?;
        out.write_all(r.to_csv().as_bytes()).map_err(CliError::internal)
    } else if value.get("fit").is_some() {
        let fit: FitOutput = serde_json::from_value(value).map_err(bad)?;
        w(
            out,
            format!(
                "family={} objective={} converged={}",
                fit.family.name(),
                fit.fit.objective,
                fit.fit.converged
            ),
        )?;
        for (name, l) in fit.feature_names.iter().zip(&fit.fit.hp_hat.ell2) {
            w(out, format!("ell2[{name}]={l}"))?;
        }
        Ok(())
    } else {
        Err(CliError::input(format!(
            "{} is not a selection, fit or study report",
            args.input.display()
        )))
    }
}

fn set_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::input("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::input(format!("cannot configure threads: {e}")))?;
    }
    Ok(())
}

/// Runs a parsed command line, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut impl Write) -> Result<(), CliError> {
    set_threads(cli.threads)?;
    match &cli.command {
        Command::Select(a) => cmd_select(a, out),
        Command::Fit(a) => cmd_fit(a, out),
        Command::Simulate(a) => cmd_simulate(a, out),
        Command::Generate(a) => cmd_generate(a),
        Command::Report(a) => cmd_report(a, out),
    }
}
