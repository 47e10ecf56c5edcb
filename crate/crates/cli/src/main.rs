use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use maseptide::data_io::{censor, empirical_marks, write_corpus, CascadeFile, CorpusIndex};
use maseptide::evaluate::{run_evaluate, write_evaluation, write_rows, EvaluateConfig, Method};
use maseptide::simulation::{predict_by_simulation, simulate_cascade, substream, synthetic_marks, SimConfig};
use maseptide::{fit, goodness_of_fit, predict_mean_count, Cascade64, ContinuationModel, MarkDistribution, Params64, SimplexConfig, SolverSettings};

const DAY: f64 = 86_400.0;
const HOUR: f64 = 3_600.0;

#[derive(Parser, Debug)]
#[command(name = "maseptide", version, about = "Fit, check and predict retweet cascades with a marked self-exciting process")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Maximum-likelihood fit of one cascade.
    Fit(FitArgs),
    /// Residual K-S test of one cascade.
    Gof(GofArgs),
    /// Simulate a synthetic corpus.
    Simulate(SimulateArgs),
    /// Predict the final popularity of one cascade.
    Predict(PredictArgs),
    /// Fit and predict every cascade of a corpus.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// Censoring times in hours; repeatable.
    #[arg(long = "censor-hours", value_name = "H")]
    censor_hours: Vec<f64>,

    #[arg(long, default_value_t = 7.0)]
    horizon_days: f64,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Output file; `.json` selects JSON, anything else CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// Cascade file.
    input: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct GofArgs {
    input: PathBuf,
    /// Use these parameters (α,β,γ,δ₁,δ₂) instead of fitting.
    #[arg(long, value_delimiter = ',')]
    params: Option<Vec<f64>>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Output corpus directory.
    #[arg(long)]
    corpus: PathBuf,
    /// Number of cascades.
    #[arg(long, default_value_t = 50)]
    count: usize,
    /// Parameters α,β,γ,δ₁,δ₂.
    #[arg(long, value_delimiter = ',', default_values_t = [5.711, 0.024, 1.455, 1.254, 0.173])]
    params: Vec<f64>,
    /// Median follower count of the synthetic mark pool.
    #[arg(long, default_value_t = 100.0)]
    mark_median: f64,
    /// Log-scale spread of the synthetic mark pool.
    #[arg(long, default_value_t = 1.5)]
    mark_sigma: f64,
    #[arg(long, default_value_t = 1_000_000)]
    max_events: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct PredictArgs {
    input: PathBuf,
    /// eq, sim-mean or sim-median; repeatable.
    #[arg(long = "method", default_value = "eq")]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 100)]
    nsim: usize,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Corpus directory.
    corpus: PathBuf,
    #[arg(long = "method", default_values = ["eq", "sim-mean", "sim-median"])]
    methods: Vec<Method>,
    #[arg(long, default_value_t = 100)]
    nsim: usize,
    #[command(flatten)]
    common: Common,
}

/// A failure caused by bad input rather than by the computation.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(Usage(msg.into()).into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let is_usage = e.downcast_ref::<Usage>().is_some()
                || matches!(e.downcast_ref::<maseptide::Error>(), Some(maseptide::Error::Config(_)));
            ExitCode::from(if is_usage { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Fit(a) => cmd_fit(a),
        Command::Gof(a) => cmd_gof(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    }
    .map(|()| ExitCode::SUCCESS)
}

fn horizon_seconds(common: &Common) -> anyhow::Result<f64> {
    if !(common.horizon_days > 0.0) || !common.horizon_days.is_finite() {
        return usage(format!("--horizon-days must be > 0, got {}", common.horizon_days));
    }
    Ok(common.horizon_days * DAY)
}

/// Censoring times in seconds; the horizon when none are given.
fn censor_seconds(common: &Common) -> anyhow::Result<Vec<(f64, f64)>> {
    let horizon = horizon_seconds(common)?;
    if common.censor_hours.is_empty() {
        return Ok(vec![(horizon / HOUR, horizon)]);
    }
    common
        .censor_hours
        .iter()
        .map(|&h| {
            if !(h >= 0.0) || !h.is_finite() {
                return usage(format!("--censor-hours must be >= 0, got {h}"));
            }
            Ok((h, (h * HOUR).min(horizon)))
        })
        .collect()
}

fn read_cascade(path: &Path) -> anyhow::Result<Cascade64> {
    Ok(CascadeFile::<f64>::read(path)
        .with_context(|| format!("reading {}", path.display()))?
        .cascade)
}

fn params_from(v: &[f64]) -> anyhow::Result<Params64> {
    match <[f64; 5]>::try_from(v) {
        Ok(a) => Params64::from_array(a).map_err(|e| Usage(e.to_string()).into()),
        Err(_) => usage("--params needs five values α,β,γ,δ₁,δ₂"),
    }
}

fn emit<S: Serialize>(out: Option<&Path>, rows: &[S]) -> anyhow::Result<()> {
    match out {
        Some(p) => write_rows(p, rows).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{}", serde_json::to_string_pretty(rows)?);
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct FitRow {
    #[serde(rename = "T_hours")]
    t_hours: f64,
    n_observed: usize,
    alpha: f64,
    beta: f64,
    gamma: f64,
    delta1: f64,
    delta2: f64,
    loglik: f64,
    converged: bool,
    evaluations: usize,
}

fn cmd_fit(a: FitArgs) -> anyhow::Result<()> {
    let cascade = read_cascade(&a.input)?;
    let mut rows = Vec::new();
    for (hours, t) in censor_seconds(&a.common)? {
        let c = censor(&cascade, t)?;
        let cfg = SimplexConfig {
            seed: a.common.seed,
            ..SimplexConfig::default()
        };
        let f = fit(&c, t, &cfg).with_context(|| format!("fitting at T = {hours} h"))?;
        let [alpha, beta, gamma, delta1, delta2] = f.theta_hat.to_array();
        rows.push(FitRow {
            t_hours: hours,
            n_observed: c.len(),
            alpha,
            beta,
            gamma,
            delta1,
            delta2,
            loglik: f.loglik,
            converged: f.converged,
            evaluations: f.evaluations,
        });
    }
    emit(a.common.out.as_deref(), &rows)
}

#[derive(Serialize)]
struct GofRow {
    #[serde(rename = "T_hours")]
    t_hours: f64,
    n_observed: usize,
    ks_statistic: f64,
    p_value: f64,
    /// Rescaled residuals `Λ̂(τᵢ)/Λ̂(T)`, space separated.
    residuals: String,
}

fn cmd_gof(a: GofArgs) -> anyhow::Result<()> {
    let cascade = read_cascade(&a.input)?;
    let fixed = a.params.as_deref().map(params_from).transpose()?;
    let mut rows = Vec::new();
    for (hours, t) in censor_seconds(&a.common)? {
        let c = censor(&cascade, t)?;
        let params = match fixed {
            Some(p) => p,
            None => {
                let cfg = SimplexConfig {
                    seed: a.common.seed,
                    ..SimplexConfig::default()
                };
                fit(&c, t, &cfg).with_context(|| format!("fitting at T = {hours} h"))?.theta_hat
            }
        };
        let g = goodness_of_fit(&c, t, &params)?;
        let residuals = g
            .residuals
            .iter()
            .map(|r| (r / g.horizon).to_string())
            .collect::<Vec<_>>()
            .join(" ");
        rows.push(GofRow {
            t_hours: hours,
            n_observed: c.len(),
            ks_statistic: g.ks_statistic,
            p_value: g.p_value,
            residuals,
        });
    }
    emit(a.common.out.as_deref(), &rows)
}

fn cmd_simulate(a: SimulateArgs) -> anyhow::Result<()> {
    let params = params_from(&a.params)?;
    let horizon = horizon_seconds(&a.common)?;
    if a.count == 0 {
        return usage("--count must be >= 1");
    }
    let mut pool_rng = substream(a.common.seed, u64::MAX);
    let pool = MarkDistribution::new(synthetic_marks(4096, a.mark_median, a.mark_sigma, &mut pool_rng)?);
    let width = a.count.to_string().len();
    let mut cascades = Vec::with_capacity(a.count);
    for i in 0..a.count {
        let mut rng = substream(a.common.seed, i as u64);
        let origin = pool.sample(&mut rng).unwrap_or(0);
        let c = simulate_cascade(&params, &pool, origin, horizon, a.max_events, &mut rng)?;
        cascades.push((format!("c{i:0width$}"), c));
    }
    write_corpus(&a.corpus, &cascades).with_context(|| format!("writing {}", a.corpus.display()))?;
    eprintln!("wrote {} cascades to {}", cascades.len(), a.corpus.display());
    Ok(())
}

#[derive(Serialize)]
struct PredictRow {
    #[serde(rename = "T_hours")]
    t_hours: f64,
    method: Method,
    n_observed: usize,
    n_pred: f64,
}

fn cmd_predict(a: PredictArgs) -> anyhow::Result<()> {
    if a.methods.is_empty() {
        return usage("no --method given");
    }
    let cascade = read_cascade(&a.input)?;
    let horizon = horizon_seconds(&a.common)?;
    let mut rows = Vec::new();
    for (hours, t) in censor_seconds(&a.common)? {
        let c = censor(&cascade, t)?;
        let cfg = SimplexConfig {
            seed: a.common.seed,
            ..SimplexConfig::default()
        };
        let f = fit(&c, t, &cfg).with_context(|| format!("fitting at T = {hours} h"))?;
        let cont = ContinuationModel::new(&c, t, f.theta_hat, empirical_marks(&c, t))?;
        let remaining = horizon - t;
        let sim = if a.methods.iter().any(|m| *m != Method::Equation) && remaining > 0.0 {
            let sc = SimConfig {
                replications: a.nsim,
                seed: a.common.seed,
                ..SimConfig::default()
            };
            Some(predict_by_simulation(&cont, remaining, &sc)?)
        } else {
            None
        };
        for &method in &a.methods {
            let future = match (method, &sim) {
                _ if remaining <= 0.0 => 0.0,
                (Method::Equation, _) => predict_mean_count(&cont, remaining, &SolverSettings::default())?.count,
                (Method::SimMean, Some(s)) => s.mean,
                (Method::SimMedian, Some(s)) => s.median,
                _ => bail!("simulation missing"),
            };
            rows.push(PredictRow {
                t_hours: hours,
                method,
                n_observed: c.len(),
                n_pred: c.len() as f64 + future,
            });
        }
    }
    emit(a.common.out.as_deref(), &rows)
}

fn cmd_evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    let corpus = CorpusIndex::load(&a.corpus).with_context(|| format!("indexing {}", a.corpus.display()))?;
    let defaults = EvaluateConfig::default();
    let config = EvaluateConfig {
        censor_hours: if a.common.censor_hours.is_empty() {
            defaults.censor_hours.clone()
        } else {
            a.common.censor_hours.clone()
        },
        horizon_days: a.common.horizon_days,
        methods: a.methods,
        sim: SimConfig {
            replications: a.nsim,
            seed: a.common.seed,
            ..defaults.sim
        },
        ..defaults
    };
    let output = run_evaluate(&corpus, &config)?;
    match &a.common.out {
        Some(p) => {
            let summary = write_evaluation(p, &output).with_context(|| format!("writing {}", p.display()))?;
            eprintln!("wrote {} and {}", p.display(), summary.display());
        }
        None => println!("{}", serde_json::to_string_pretty(&output.summary)?),
    }
    if output.all_failed() {
        bail!("every cascade failed");
    }
    Ok(())
}
