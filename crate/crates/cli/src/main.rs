//! `envelopes`: configure the exchange-paradox models, run seeded
//! experiments, and emit JSON or CSV reports.
//!
//! Machine output goes to stdout (or `--output`); a one-line human summary
//! goes to stderr. Exit codes: 0 success, 1 model/domain error, 2 usage or
//! configuration error.

mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use envelopes_core::envelope::{
    bayesian_envelope_report, build_bayesian_envelope, lln_experiment, naive_other_expectation,
    pure_switch_gain, DensitySpec, DyadicGridParams, EnvelopePairModel, McOptions,
};
use envelopes_core::measure::PureState;
use envelopes_core::measurement::{RngStream, RNG_ALGORITHM};
use envelopes_core::report::{LlnRecord, SwitchAdvice};
use envelopes_core::stpetersburg::{
    build_stp_with_labeling, stp_parallel_experiment, stp_prob_other_greater,
    stp_truncated_expectation, switch_advice, StpFormulation, StpLabeling,
};
use envelopes_core::Error as CoreError;

use config::{resolve, resolve_opt, FileConfig, GridConfig, RunConfig};

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or config file: exit 2.
    Usage(String),
    /// The models rejected the run: exit 1.
    Run(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Run(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Json,
    Csv,
}

impl OutputFormat {
    fn name(&self) -> &'static str {
        match self {
            OutputFormat::Json => "json",
            OutputFormat::Csv => "csv",
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "envelopes",
    version,
    about = "Exchange-paradox models: exact laws, inference, seeded experiments",
    after_help = "Defaults can also come from a flat `key = value` config file (--config) \
and the ENVELOPES_SEED environment variable; flags win over the file, the file over the \
environment."
)]
struct Cli {
    /// Flat key = value config file providing defaults.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// RNG seed (default: $ENVELOPES_SEED, then 0).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// RNG stream id (default 0).
    #[arg(long, global = true)]
    stream: Option<u64>,

    /// Write the report here instead of stdout.
    #[arg(short, long, global = true, value_name = "PATH")]
    output: Option<PathBuf>,

    /// Output format; inferred from the --output extension when omitted.
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// The folk calculation E_other(α) = 1.25α, annotated as invalid.
    EnvelopeNaive {
        /// Observed amount in dollars [default: 100].
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Exact switching gain at a known payout pair (always zero).
    EnvelopePure {
        /// Your envelope's amount [default: 10].
        #[arg(long)]
        v1: Option<f64>,
        /// The other envelope's amount [default: 20].
        #[arg(long)]
        v2: Option<f64>,
    },
    /// Repeated paired measurements: running averages of both envelopes.
    EnvelopeLln {
        /// First payout [default: 10].
        #[arg(long)]
        v1: Option<f64>,
        /// Second payout [default: 20].
        #[arg(long)]
        v2: Option<f64>,
        /// Number of paired draws [default: 100000].
        #[arg(long)]
        trials: Option<u64>,
    },
    /// Bayesian analysis at a measured value under a prior density.
    EnvelopeBayes {
        /// Prior density spec: exp:RATE, uniform:LO,HI, gamma:SHAPE,RATE,
        /// pareto:EXPONENT [default: exp:1].
        #[arg(long)]
        density: Option<String>,
        /// Measured value; must be a grid point with alpha/2 on-grid
        /// [default: 2].
        #[arg(long)]
        alpha: Option<f64>,
        /// Grid lower bound; 0 selects the default octave span
        /// [default: 0].
        #[arg(long)]
        grid_lo: Option<f64>,
        /// Grid upper bound [default: 30].
        #[arg(long)]
        grid_hi: Option<f64>,
        /// Total grid points [default: 30000].
        #[arg(long)]
        grid_n: Option<u64>,
        /// Monte Carlo cross-check trials for the unconditional gain;
        /// 0 disables the cross-check [default: 0].
        #[arg(long)]
        mc_trials: Option<u64>,
    },
    /// Truncated St. Petersburg two-envelope model.
    Stpetersburg {
        /// Truncation depth, at most 60 [default: 10].
        #[arg(long)]
        k_max: Option<u32>,
        /// Model formulation: pure or statistical; they agree table-exactly
        /// [default: pure].
        #[arg(long)]
        formulation: Option<String>,
        /// Which switching criterion to report: expectation, probability,
        /// or both [default: both].
        #[arg(long)]
        criterion: Option<String>,
        /// Observed exponent for the probability criterion (x = 2^m)
        /// [default: 1].
        #[arg(long)]
        m: Option<u32>,
        /// Paired-draw experiment size; 0 skips the experiment
        /// [default: 0].
        #[arg(long)]
        trials: Option<u64>,
        /// Label outcomes as pins over (2^-k, 2^(1-k)] instead of dollars.
        #[arg(long)]
        pin_labels: bool,
    },
}

#[derive(Serialize)]
struct Meta {
    tool: String,
    generated_unix_ms: u128,
    rng_algorithm: String,
}

#[derive(Serialize)]
struct Body<R: Serialize> {
    version: String,
    config: RunConfig,
    report: R,
}

#[derive(Serialize)]
struct Document<R: Serialize> {
    meta: Meta,
    body: Body<R>,
}

#[derive(Serialize)]
struct PureGainReport {
    model: String,
    v1: f64,
    v2: f64,
    switch_gain: f64,
    note: String,
}

#[derive(Serialize)]
struct LlnSummary {
    model: String,
    v1: f64,
    v2: f64,
    target_mean: f64,
    trials: u64,
    rng_algorithm: String,
    rng: RngStream,
    final_avg_you: f64,
    final_avg_host: f64,
    trace_rows: u64,
}

#[derive(Serialize)]
struct StpReport {
    model: String,
    formulation: String,
    labeling: String,
    k_max: u32,
    tail_mass: f64,
    /// Pre-normalization partial sum of the dollar payoff (equals k_max).
    truncated_expectation: f64,
    truncated_expectation_renormalized: f64,
    divergence_flag: bool,
    criterion: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    m: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prob_other_greater_exact: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    prob_other_greater_truncated: Option<f64>,
    advice: SwitchAdvice,
    #[serde(skip_serializing_if = "Option::is_none")]
    experiment: Option<envelopes_core::report::StpExperimentRecord>,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Run(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    };
    std::process::exit(code);
}

fn env_seed() -> u64 {
    std::env::var("ENVELOPES_SEED")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(0)
}

fn infer_format(flag: Option<OutputFormat>, output: Option<&Path>) -> OutputFormat {
    if let Some(f) = flag {
        return f;
    }
    match output.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some("csv") => OutputFormat::Csv,
        _ => OutputFormat::Json,
    }
}

fn dyadic_params_from(grid: GridConfig) -> Result<DyadicGridParams, CliError> {
    if grid.lo < 0.0 || !grid.lo.is_finite() {
        return Err(CliError::Usage(format!("grid lo must be >= 0, got {}", grid.lo)));
    }
    if grid.lo > 0.0 {
        if grid.lo >= grid.hi {
            return Err(CliError::Usage(format!(
                "grid needs lo < hi, got {} and {}",
                grid.lo, grid.hi
            )));
        }
        let min_exp = grid.lo.log2().floor() as i32;
        let max_exp = grid.hi.log2().ceil() as i32;
        let octaves = (max_exp - min_exp).max(1) as usize;
        Ok(DyadicGridParams {
            min_exp,
            max_exp,
            points_per_octave: (grid.n / octaves).max(1),
        })
    } else {
        DyadicGridParams::for_range(grid.hi, grid.n)
            .map_err(|e| CliError::Usage(e.to_string()))
    }
}

fn now_unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

fn emit_json<R: Serialize>(
    config: RunConfig,
    report: R,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let doc = Document {
        meta: Meta {
            tool: "envelopes".into(),
            generated_unix_ms: now_unix_ms(),
            rng_algorithm: RNG_ALGORITHM.into(),
        },
        body: Body { version: envelopes_core::VERSION.into(), config, report },
    };
    let mut text = serde_json::to_string_pretty(&doc)
        .map_err(|e| CliError::Run(format!("serialization failed: {e}")))?;
    text.push('\n');
    write_out(text.as_bytes(), output)
}

fn emit_lln_csv(
    config: &RunConfig,
    record: &LlnRecord,
    output: Option<&Path>,
) -> Result<(), CliError> {
    let mut buf: Vec<u8> = Vec::new();
    let config_json = serde_json::to_string(config)
        .map_err(|e| CliError::Run(format!("serialization failed: {e}")))?;
    writeln!(buf, "# version: {}", envelopes_core::VERSION)
        .and_then(|_| writeln!(buf, "# config: {config_json}"))
        .map_err(|e| CliError::Run(e.to_string()))?;
    record.write_trace_csv(&mut buf)?;
    write_out(&buf, output)
}

fn write_out(bytes: &[u8], output: Option<&Path>) -> Result<(), CliError> {
    match output {
        Some(path) => std::fs::write(path, bytes)
            .map_err(|e| CliError::Run(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(bytes)
            .map_err(|e| CliError::Run(format!("cannot write stdout: {e}"))),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };
    let seed = resolve(cli.seed, file.seed, env_seed());
    let stream = resolve(cli.stream, file.stream, 0);
    let format = infer_format(
        cli.format.or(match file.format.as_deref() {
            Some("json") => Some(OutputFormat::Json),
            Some("csv") => Some(OutputFormat::Csv),
            Some(other) => {
                return Err(CliError::Usage(format!("unknown format `{other}` in config")))
            }
            None => None,
        }),
        cli.output.as_deref(),
    );
    let output = cli.output.as_deref();
    let rng = RngStream::new(seed, stream);

    let base_config = RunConfig {
        subcommand: String::new(),
        seed,
        stream,
        alpha: None,
        v1: None,
        v2: None,
        trials: None,
        grid: None,
        density: None,
        mc_trials: None,
        k_max: None,
        m: None,
        criterion: None,
        formulation: None,
        pin_labels: None,
        format: format.name().into(),
    };

    if format == OutputFormat::Csv && !matches!(cli.command, Command::EnvelopeLln { .. }) {
        return Err(CliError::Usage(
            "csv output carries running-average traces and is only available for envelope-lln"
                .into(),
        ));
    }

    match cli.command {
        Command::EnvelopeNaive { alpha } => {
            let alpha = resolve(alpha, file.alpha, 100.0);
            let config = RunConfig {
                subcommand: "envelope-naive".into(),
                alpha: Some(alpha),
                ..base_config
            };
            let report = naive_other_expectation(alpha)?;
            eprintln!(
                "envelope-naive: alpha = {alpha} -> e_other = {} (invalid reasoning, see annotation)",
                report.e_other
            );
            emit_json(config, report, output)
        }
        Command::EnvelopePure { v1, v2 } => {
            let v1 = resolve(v1, file.v1, 10.0);
            let v2 = resolve(v2, file.v2, 20.0);
            let config = RunConfig {
                subcommand: "envelope-pure".into(),
                v1: Some(v1),
                v2: Some(v2),
                ..base_config
            };
            let model = EnvelopePairModel::single_state(v1, v2)?;
            let s = PureState::new(model.space(), 0)?;
            let gain = pure_switch_gain(&model, s)?;
            eprintln!("envelope-pure: payouts ({v1}, {v2}) -> switch gain {gain}");
            let report = PureGainReport {
                model: "envelope-pure".into(),
                v1,
                v2,
                switch_gain: gain,
                note: "computed as (v2-v1)/2 + (v1-v2)/2; zero for every state".into(),
            };
            emit_json(config, report, output)
        }
        Command::EnvelopeLln { v1, v2, trials } => {
            let v1 = resolve(v1, file.v1, 10.0);
            let v2 = resolve(v2, file.v2, 20.0);
            let trials = resolve(trials, file.trials, 100_000);
            if trials == 0 {
                return Err(CliError::Usage("need trials >= 1".into()));
            }
            let config = RunConfig {
                subcommand: "envelope-lln".into(),
                v1: Some(v1),
                v2: Some(v2),
                trials: Some(trials),
                ..base_config
            };
            let model = EnvelopePairModel::single_state(v1, v2)?;
            let s = PureState::new(model.space(), 0)?;
            let record = lln_experiment(&model, s, trials as usize, rng)?;
            eprintln!(
                "envelope-lln: {trials} trials, final averages you = {} host = {} (target {})",
                record.final_avg_you, record.final_avg_host, record.target_mean
            );
            match format {
                OutputFormat::Csv => emit_lln_csv(&config, &record, output),
                OutputFormat::Json => {
                    let summary = LlnSummary {
                        model: record.model.clone(),
                        v1: record.v1,
                        v2: record.v2,
                        target_mean: record.target_mean,
                        trials: record.trials,
                        rng_algorithm: record.rng_algorithm.clone(),
                        rng: record.rng,
                        final_avg_you: record.final_avg_you,
                        final_avg_host: record.final_avg_host,
                        trace_rows: record.trace.len() as u64,
                    };
                    emit_json(config, summary, output)
                }
            }
        }
        Command::EnvelopeBayes { density, alpha, grid_lo, grid_hi, grid_n, mc_trials } => {
            let density_spec = resolve_opt(density.as_deref(), file.density.as_deref())
                .unwrap_or("exp:1")
                .to_string();
            let alpha = resolve(alpha, file.alpha, 2.0);
            let grid = GridConfig {
                lo: resolve(grid_lo, file.grid_lo, 0.0),
                hi: resolve(grid_hi, file.grid_hi, 30.0),
                n: resolve(grid_n, file.grid_n, 30_000) as usize,
            };
            let mc_trials = resolve(mc_trials, file.mc_trials, 0);
            let config = RunConfig {
                subcommand: "envelope-bayes".into(),
                alpha: Some(alpha),
                grid: Some(grid),
                density: Some(density_spec.clone()),
                mc_trials: Some(mc_trials),
                ..base_config
            };
            let spec = DensitySpec::parse(&density_spec)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let params = dyadic_params_from(grid)?;
            let env = build_bayesian_envelope(&spec, &params)?;
            let mc = (mc_trials > 0)
                .then_some(McOptions { trials: mc_trials as usize, rng });
            let report = bayesian_envelope_report(&env, alpha, seed, mc)?;
            eprintln!(
                "envelope-bayes: alpha = {alpha}, p(alpha) = {:.6}, w(other = alpha/2) = {:.6}, \
conditional gain = {:.6}, unconditional gain = {:.3e}{}",
                report.p_alpha,
                report.posterior_weights.other_half,
                report.conditional_gain,
                report.unconditional_gain,
                if report.divergence_warning {
                    " [warning: prior mean not finite; zero gain is a truncation artifact]"
                } else {
                    ""
                }
            );
            emit_json(config, report, output)
        }
        Command::Stpetersburg { k_max, formulation, criterion, m, trials, pin_labels } => {
            let k_max = resolve(k_max, file.k_max, 10);
            let formulation_name = resolve_opt(formulation.as_deref(), file.formulation.as_deref())
                .unwrap_or("pure")
                .to_string();
            let formulation = match formulation_name.as_str() {
                "pure" => StpFormulation::Pure,
                "statistical" => StpFormulation::Statistical,
                other => {
                    return Err(CliError::Usage(format!(
                        "unknown formulation `{other}` (expected pure or statistical)"
                    )))
                }
            };
            let criterion = resolve_opt(criterion.as_deref(), file.criterion.as_deref())
                .unwrap_or("both")
                .to_string();
            if !matches!(criterion.as_str(), "expectation" | "probability" | "both") {
                return Err(CliError::Usage(format!(
                    "unknown criterion `{criterion}` (expected expectation, probability, or both)"
                )));
            }
            let m = resolve(m, file.m, 1);
            let trials = resolve(trials, file.trials, 0);
            let pin_labels = pin_labels || file.pin_labels.unwrap_or(false);
            let labeling = if pin_labels { StpLabeling::Pins } else { StpLabeling::Dollars };
            let config = RunConfig {
                subcommand: "stpetersburg".into(),
                trials: Some(trials),
                k_max: Some(k_max),
                m: Some(m),
                criterion: Some(criterion.clone()),
                formulation: Some(formulation_name.clone()),
                pin_labels: Some(pin_labels),
                ..base_config
            };
            let model = build_stp_with_labeling(formulation, k_max, labeling)?;
            let expectation = stp_truncated_expectation(&model);
            let prob = if criterion != "expectation" {
                Some(stp_prob_other_greater(&model, m)?)
            } else {
                None
            };
            let experiment = if trials > 0 {
                Some(stp_parallel_experiment(&model, trials as usize, rng)?)
            } else {
                None
            };
            eprintln!(
                "stpetersburg: k_max = {k_max} ({formulation_name}), truncated expectation = {} \
({}), P(other > 2^{m}) = {}",
                expectation.partial_sum,
                if expectation.diverges { "diverging" } else { "convergent" },
                prob.map(|p| p.exact.to_string()).unwrap_or_else(|| "-".into()),
            );
            let report = StpReport {
                model: "stpetersburg".into(),
                formulation: formulation_name,
                labeling: labeling.name().into(),
                k_max,
                tail_mass: model.tail_mass(),
                truncated_expectation: expectation.partial_sum,
                truncated_expectation_renormalized: expectation.renormalized,
                divergence_flag: expectation.diverges,
                criterion,
                m: prob.map(|p| p.m),
                prob_other_greater_exact: prob.map(|p| p.exact),
                prob_other_greater_truncated: prob.map(|p| p.truncated),
                advice: switch_advice(&model),
                experiment,
            };
            emit_json(config, report, output)
        }
    }
}
