//! Corpus evaluation: fit on each censored cascade, predict the seven-day
//! popularity with each requested method and score it.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data_io::{censor, empirical_marks, CorpusIndex};
use crate::error::{domain, Error, Result};
use crate::estimation::{fit, SimplexConfig};
use crate::prediction::{predict_mean_count, ContinuationModel, SolverSettings};
use crate::simulation::{predict_by_simulation, SimConfig};

/// `|p − t| / t`.
pub fn metric_ape(pred: f64, truth: f64) -> Result<f64> {
    if !(truth > 0.0) {
        return domain(format!("APE needs a positive true count, got {truth}"));
    }
    Ok((pred - truth).abs() / truth)
}

/// `(p − t)²`.
pub fn metric_se(pred: f64, truth: f64) -> f64 {
    (pred - truth).powi(2)
}

/// `|p − t|`.
pub fn metric_ae(pred: f64, truth: f64) -> f64 {
    (pred - truth).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "eq")]
    Equation,
    #[serde(rename = "sim-mean")]
    SimMean,
    #[serde(rename = "sim-median")]
    SimMedian,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Equation, Method::SimMean, Method::SimMedian];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Equation => "eq",
            Method::SimMean => "sim-mean",
            Method::SimMedian => "sim-median",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?} (expected eq, sim-mean or sim-median)")))
    }
}

/// One cascade × censoring time × method. Metrics are empty when
/// `fail_code` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub id: String,
    #[serde(rename = "T_hours")]
    pub t_hours: f64,
    pub method: Method,
    pub n_observed: usize,
    pub n_true: usize,
    pub n_pred: Option<f64>,
    pub ape: Option<f64>,
    pub se: Option<f64>,
    pub ae: Option<f64>,
    pub fail_code: Option<String>,
}

impl EvaluationRecord {
    fn scored(id: &str, t_hours: f64, method: Method, n_observed: usize, n_true: usize, pred: f64) -> Result<Self> {
        let truth = n_true as f64;
        Ok(Self {
            id: id.to_string(),
            t_hours,
            method,
            n_observed,
            n_true,
            n_pred: Some(pred),
            ape: Some(metric_ape(pred, truth)?),
            se: Some(metric_se(pred, truth)),
            ae: Some(metric_ae(pred, truth)),
            fail_code: None,
        })
    }

    fn failed(id: &str, t_hours: f64, method: Method, n_observed: usize, n_true: usize, code: &str) -> Self {
        Self {
            id: id.to_string(),
            t_hours,
            method,
            n_observed,
            n_true,
            n_pred: None,
            ape: None,
            se: None,
            ae: None,
            fail_code: Some(code.to_string()),
        }
    }

    pub fn is_failure(&self) -> bool {
        self.fail_code.is_some()
    }
}

/// Aggregates for one censoring time and method over the scored records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    #[serde(rename = "T_hours")]
    pub t_hours: f64,
    pub method: Method,
    pub n_scored: usize,
    pub n_failed: usize,
    pub median_ape: Option<f64>,
    pub mean_ape: Option<f64>,
    pub rmse: Option<f64>,
    pub mae: Option<f64>,
}

fn sorted_mean(mut xs: Vec<f64>) -> f64 {
    // summing in sorted order makes the result independent of record order
    xs.sort_by(f64::total_cmp);
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Median and mean APE, RMSE and MAE per `(T, method)`, ordered by `T`
/// then method.
pub fn aggregate(records: &[EvaluationRecord]) -> Result<Vec<Summary>> {
    if records.is_empty() {
        return Err(Error::Empty("evaluation records"));
    }
    let mut groups: BTreeMap<(u64, Method), Vec<&EvaluationRecord>> = BTreeMap::new();
    for r in records {
        if !(r.t_hours >= 0.0) {
            return domain(format!("record {} has invalid T_hours {}", r.id, r.t_hours));
        }
        // bit patterns of nonnegative floats order like the floats
        groups.entry((r.t_hours.to_bits(), r.method)).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((bits, method), rs)| {
            let ok: Vec<_> = rs.iter().filter(|r| !r.is_failure()).collect();
            let pick = |f: fn(&EvaluationRecord) -> Option<f64>| ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>();
            let (apes, ses, aes) = (pick(|r| r.ape), pick(|r| r.se), pick(|r| r.ae));
            let some = !ok.is_empty();
            Summary {
                t_hours: f64::from_bits(bits),
                method,
                n_scored: ok.len(),
                n_failed: rs.len() - ok.len(),
                median_ape: some.then(|| median(apes.clone())),
                mean_ape: some.then(|| sorted_mean(apes)),
                rmse: some.then(|| sorted_mean(ses).sqrt()),
                mae: some.then(|| sorted_mean(aes)),
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct EvaluateConfig {
    pub censor_hours: Vec<f64>,
    pub horizon_days: f64,
    pub methods: Vec<Method>,
    pub sim: SimConfig,
    pub fit: SimplexConfig<f64>,
    pub solver: SolverSettings<f64>,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            censor_hours: vec![2.0, 4.0, 6.0, 8.0, 10.0, 12.0],
            horizon_days: 7.0,
            methods: Method::ALL.to_vec(),
            sim: SimConfig::default(),
            fit: SimplexConfig::default(),
            solver: SolverSettings::default(),
        }
    }
}

impl EvaluateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("no prediction methods requested".into()));
        }
        if self.censor_hours.is_empty() {
            return Err(Error::Config("no censoring times requested".into()));
        }
        if let Some(t) = self.censor_hours.iter().find(|&&t| !(t >= 0.0) || !t.is_finite()) {
            return Err(Error::Config(format!("censoring time must be >= 0 hours, got {t}")));
        }
        if !(self.horizon_days > 0.0) || !self.horizon_days.is_finite() {
            return Err(Error::Config(format!("horizon must be > 0 days, got {}", self.horizon_days)));
        }
        self.sim.validate()?;
        self.fit.validate()
    }
}

/// SplitMix64 finalizer, used to derive per-task seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for cascade `index` at censoring-time slot `slot`.
pub fn task_seed(seed: u64, index: usize, slot: usize) -> u64 {
    mix(mix(seed ^ mix(index as u64)) ^ slot as u64)
}

/// All records for one cascade at one censoring time.
pub fn evaluate_one(
    id: &str,
    cascade: &crate::model::Cascade<f64>,
    t_hours: f64,
    seed: u64,
    config: &EvaluateConfig,
) -> Vec<EvaluationRecord> {
    let horizon = config.horizon_days * 86_400.0;
    let censor_time = (t_hours * 3600.0).min(horizon);
    let n_true = cascade.count_until(horizon);
    let observed = match censor(cascade, censor_time) {
        Ok(c) => c,
        Err(_) => return fail_all(id, t_hours, 0, n_true, config, "bad_censor"),
    };
    let n_obs = observed.len();
    let fail = |code: &str| fail_all(id, t_hours, n_obs, n_true, config, code);
    if n_true == 0 {
        return fail("zero_truth");
    }
    if n_obs == 0 {
        return fail("no_events");
    }
    let fit_cfg = SimplexConfig {
        seed,
        ..config.fit.clone()
    };
    let fitted = match fit(&observed, censor_time, &fit_cfg) {
        Ok(f) if f.converged => f,
        Ok(_) => return fail("fit_nonconvergence"),
        Err(_) => return fail("fit_error"),
    };
    let cont = match ContinuationModel::new(&observed, censor_time, fitted.theta_hat, empirical_marks(&observed, censor_time)) {
        Ok(c) => c,
        Err(_) => return fail("continuation_error"),
    };
    let remaining = horizon - censor_time;
    let n_obs_f = n_obs as f64;

    let mut sim_result = None;
    let needs_sim = config.methods.iter().any(|m| *m != Method::Equation);
    if needs_sim && remaining > 0.0 {
        let sim_cfg = SimConfig { seed, ..config.sim };
        sim_result = Some(predict_by_simulation(&cont, remaining, &sim_cfg));
    }
    config
        .methods
        .iter()
        .map(|&method| {
            let pred: std::result::Result<f64, &str> = match method {
                _ if remaining <= 0.0 => Ok(n_obs_f),
                Method::Equation => predict_mean_count(&cont, remaining, &config.solver)
                    .map_err(|_| "solver_failure")
                    .map(|p| p.final_popularity()),
                Method::SimMean | Method::SimMedian => match sim_result.as_ref().expect("simulated") {
                    Ok(s) if s.capped > 0 => Err("sim_cap"),
                    Ok(s) => Ok(n_obs_f + if method == Method::SimMean { s.mean } else { s.median }),
                    Err(_) => Err("sim_failure"),
                },
            };
            match pred {
                Ok(p) if p.is_finite() => EvaluationRecord::scored(id, t_hours, method, n_obs, n_true, p)
                    .unwrap_or_else(|_| EvaluationRecord::failed(id, t_hours, method, n_obs, n_true, "zero_truth")),
                Ok(_) => EvaluationRecord::failed(id, t_hours, method, n_obs, n_true, "non_finite"),
                Err(code) => EvaluationRecord::failed(id, t_hours, method, n_obs, n_true, code),
            }
        })
        .collect()
}

fn fail_all(id: &str, t_hours: f64, n_obs: usize, n_true: usize, config: &EvaluateConfig, code: &str) -> Vec<EvaluationRecord> {
    config
        .methods
        .iter()
        .map(|&m| EvaluationRecord::failed(id, t_hours, m, n_obs, n_true, code))
        .collect()
}

#[derive(Debug, Clone)]
pub struct EvaluationOutput {
    pub records: Vec<EvaluationRecord>,
    pub summary: Vec<Summary>,
}

impl EvaluationOutput {
    /// True when every record carries a failure code.
    pub fn all_failed(&self) -> bool {
        self.records.iter().all(EvaluationRecord::is_failure)
    }
}

/// Evaluates every corpus cascade at every censoring time. Records come
/// out in corpus order, then censoring-time order, then method order,
/// regardless of how the work is scheduled.
pub fn run_evaluate(corpus: &CorpusIndex, config: &EvaluateConfig) -> Result<EvaluationOutput> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let per_cascade: Vec<Vec<EvaluationRecord>> = corpus
        .entries()
        .par_iter()
        .enumerate()
        .map(|(i, entry)| {
            let file = match corpus.read::<f64>(entry) {
                Ok(f) => f,
                Err(e) => {
                    log::error!("{}: {e}", entry.id);
                    return config
                        .censor_hours
                        .iter()
                        .flat_map(|&t| fail_all(&entry.id, t, 0, entry.final_count, config, "io_error"))
                        .collect();
                }
            };
            config
                .censor_hours
                .iter()
                .enumerate()
                .flat_map(|(slot, &t)| evaluate_one(&entry.id, &file.cascade, t, task_seed(config.sim.seed, i, slot), config))
                .collect()
        })
        .collect();
    let records: Vec<_> = per_cascade.into_iter().flatten().collect();
    let summary = aggregate(&records)?;
    Ok(EvaluationOutput { records, summary })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    /// JSON for a `.json` extension, CSV otherwise.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => OutputFormat::Json,
            _ => OutputFormat::Csv,
        }
    }
}

/// `<stem>.summary.<ext>` next to `path`.
pub fn summary_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("evaluation");
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("csv");
    path.with_file_name(format!("{stem}.summary.{ext}"))
}

/// Serializes rows as CSV (header from the field names) or a JSON array.
pub fn write_rows<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    match OutputFormat::from_path(path) {
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_path(path)?;
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            let mut text = serde_json::to_string_pretty(rows)?;
            text.push('\n');
            fs::write(path, text)?;
        }
    }
    Ok(())
}

/// Reads records written by [`write_rows`].
pub fn read_records(path: &Path) -> Result<Vec<EvaluationRecord>> {
    match OutputFormat::from_path(path) {
        OutputFormat::Csv => csv::Reader::from_path(path)?
            .deserialize()
            .map(|r| r.map_err(Error::from))
            .collect(),
        OutputFormat::Json => Ok(serde_json::from_str(&fs::read_to_string(path)?)?),
    }
}

/// Writes the records to `path` and the summary beside it.
pub fn write_evaluation(path: &Path, output: &EvaluationOutput) -> Result<PathBuf> {
    write_rows(path, &output.records)?;
    let summary = summary_path(path);
    write_rows(&summary, &output.summary)?;
    Ok(summary)
}
