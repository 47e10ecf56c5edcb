//! Cluster-Poisson simulation.
//!
//! Immigrants (generation 0) arrive as an inhomogeneous Poisson process with
//! rate `ν̃`; every event `(τ, m)` of any generation independently spawns
//! children at rate `p̃(τ) r(m) φ(· − τ)`, with marks drawn from the mark
//! pool, until a generation comes up empty.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Cascade, Event, MarkDistribution, ModelParams};
use crate::prediction::ContinuationModel;
use crate::scalar::Scalar;

/// Number of geometric segments used for the piecewise-constant majorant.
pub const MAJORANT_SEGMENTS: usize = 32;

/// Expected generation-0 size targeted by the automatic scale factor.
pub const AUTO_SCALE_TARGET: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ScaleFactor {
    /// `S = max(1, ⌈∫ν̃ / 500⌉)`.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub replications: usize,
    pub seed: u64,
    pub scale_factor: ScaleFactor,
    pub max_events_per_path: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            replications: 100,
            seed: 0,
            scale_factor: ScaleFactor::Auto,
            max_events_per_path: 1_000_000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        if let ScaleFactor::Fixed(s) = self.scale_factor {
            if !(s >= 1.0) || !s.is_finite() {
                return Err(Error::Config(format!("scale factor must be >= 1, got {s}")));
            }
        }
        Ok(())
    }

    /// Resolves `S` for a continuation over `horizon`.
    pub fn resolve_scale<T: Scalar>(&self, cont: &ContinuationModel<T>, horizon: T) -> f64 {
        match self.scale_factor {
            ScaleFactor::Fixed(s) => s,
            ScaleFactor::Auto => (cont.baseline_integral(horizon).as_f64() / AUTO_SCALE_TARGET).ceil().max(1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent<T> {
    pub time: T,
    pub mark: u64,
    pub generation: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimPath<T> {
    /// Simulated events in time order, times relative to the censoring time.
    pub events: Vec<SimEvent<T>>,
    /// Scale factor the immigrant rate was divided by.
    pub scale: f64,
}

impl<T: Scalar> SimPath<T> {
    /// Event count inflated by the scale factor.
    pub fn count(&self) -> f64 {
        self.events.len() as f64 * self.scale
    }
}

#[inline]
fn uniform<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> T {
    T::lit(rng.random::<f64>())
}

fn poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if mean <= 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean).map_err(|e| Error::Domain(format!("poisson mean {mean}: {e}")))?;
    Ok(dist.sample(rng) as u64)
}

/// Exact sample of an inhomogeneous Poisson process with a nonincreasing
/// rate on `(0, length]`, by thinning against the left-endpoint rate on
/// [`MAJORANT_SEGMENTS`] geometric segments. Times are returned sorted.
pub fn sim_inhom_poisson<T, F, R>(rate: F, length: T, rng: &mut R) -> Result<Vec<T>>
where
    T: Scalar,
    F: Fn(T) -> T,
    R: Rng + ?Sized,
{
    if !(length >= T::zero()) || !length.is_finite() {
        return Err(Error::Domain(format!("window length must be finite and >= 0, got {length}")));
    }
    if length == T::zero() {
        return Ok(Vec::new());
    }
    let edges = geometric_edges(length);
    let mut bounds = Vec::with_capacity(MAJORANT_SEGMENTS);
    let mut cumulative = Vec::with_capacity(MAJORANT_SEGMENTS);
    let mut total = 0.0f64;
    for w in edges.windows(2) {
        let m = rate(w[0]);
        if !m.is_finite() || m < T::zero() {
            return Err(Error::Domain(format!("rate function returned {m} at {}", w[0])));
        }
        bounds.push(m);
        total += (m * (w[1] - w[0])).as_f64();
        cumulative.push(total);
    }
    let n = poisson(total, rng)?;
    let mut times = Vec::new();
    for _ in 0..n {
        let target = rng.random::<f64>() * total;
        let seg = cumulative.partition_point(|&c| c <= target).min(bounds.len() - 1);
        let (lo, hi) = (edges[seg], edges[seg + 1]);
        let t = lo + (hi - lo) * uniform::<T, _>(rng);
        if t <= T::zero() {
            continue;
        }
        let r = rate(t);
        if !r.is_finite() || r < T::zero() || r > bounds[seg] * T::lit(1.0 + 1e-9) {
            return Err(Error::Domain(format!(
                "rate function is negative, non-finite or increasing at {t} ({r} > {})",
                bounds[seg]
            )));
        }
        if uniform::<T, _>(rng) * bounds[seg] < r {
            times.push(t);
        }
    }
    times.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    Ok(times)
}

fn geometric_edges<T: Scalar>(length: T) -> Vec<T> {
    let n = MAJORANT_SEGMENTS;
    let first = T::one().min(length / T::from_count(n));
    let ratio = length / first;
    let mut edges = Vec::with_capacity(n + 1);
    edges.push(T::zero());
    for i in 0..n {
        edges.push(first * ratio.powf(T::from_count(i) / T::from_count(n - 1)));
    }
    edges[n] = length;
    edges
}

fn draw_mark<T: Scalar, R: Rng + ?Sized>(marks: &MarkDistribution, params: &ModelParams<T>, rng: &mut R) -> Result<u64> {
    match marks.sample(rng) {
        Some(m) => Ok(m),
        None if params.gamma() == T::zero() => Ok(0),
        None => Err(Error::Empty("mark pool (needed when gamma > 0)")),
    }
}

/// One path of the continuation over `(0, horizon]`, with the immigrant
/// rate divided by `scale`.
pub fn sim_cascade_continuation<T: Scalar, R: Rng + ?Sized>(
    cont: &ContinuationModel<T>,
    horizon: T,
    scale: f64,
    max_events: usize,
    rng: &mut R,
) -> Result<SimPath<T>> {
    if !(horizon > T::zero()) || !horizon.is_finite() {
        return Err(Error::Domain(format!("simulation horizon must be > 0, got {horizon}")));
    }
    if !(scale >= 1.0) {
        return Err(Error::Config(format!("scale factor must be >= 1, got {scale}")));
    }
    let params = *cont.params();
    let marks = cont.marks();
    if marks.is_empty() && params.gamma() > T::zero() {
        return Err(Error::Empty("mark pool (needed when gamma > 0)"));
    }
    let inv_scale = T::lit(1.0 / scale);
    let immigrants = sim_inhom_poisson(|t| cont.baseline_at(t) * inv_scale, horizon, rng)?;

    let mut events = Vec::with_capacity(immigrants.len());
    for t in immigrants {
        events.push(SimEvent {
            time: t,
            mark: draw_mark(marks, &params, rng)?,
            generation: 0,
        });
    }
    if events.len() > max_events {
        return Err(Error::CapExceeded {
            cap: max_events,
            partial: events.len(),
        });
    }
    let mut next = 0usize;
    while next < events.len() {
        let parent = events[next];
        next += 1;
        let b = cont.shifted_infectivity(parent.time) * params.impact_of(parent.mark);
        if !(b > T::zero()) {
            continue;
        }
        let remaining = horizon - parent.time;
        let offsets = sim_inhom_poisson(|s| b * params.kernel(s), remaining, rng)?;
        for s in offsets {
            events.push(SimEvent {
                time: parent.time + s,
                mark: draw_mark(marks, &params, rng)?,
                generation: parent.generation + 1,
            });
        }
        if events.len() > max_events {
            return Err(Error::CapExceeded {
                cap: max_events,
                partial: events.len(),
            });
        }
    }
    events.sort_by(|a, b| a.time.partial_cmp(&b.time).expect("finite"));
    Ok(SimPath { events, scale })
}

/// Deterministic random stream for replication `index` under `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimPrediction {
    pub mean: f64,
    pub median: f64,
    /// Standard error of `mean`.
    pub std_error: f64,
    /// Inflated count of each replication, in replication order.
    pub counts: Vec<f64>,
    pub scale: f64,
    /// Replications that hit the event cap; their partial counts are kept.
    pub capped: usize,
    /// Set when `scale > 1`: the counts are multiples of `S`, which
    /// coarsens the median.
    pub median_coarsened: bool,
}

/// Runs `replications` independent paths and summarizes their counts. Add
/// `N(T)` to get final popularity.
pub fn predict_by_simulation<T: Scalar>(cont: &ContinuationModel<T>, horizon: T, config: &SimConfig) -> Result<SimPrediction> {
    config.validate()?;
    let scale = config.resolve_scale(cont, horizon);
    let outcomes: Vec<Result<(f64, bool)>> = (0..config.replications)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(config.seed, i as u64);
            match sim_cascade_continuation(cont, horizon, scale, config.max_events_per_path, &mut rng) {
                Ok(path) => Ok((path.count(), false)),
                Err(Error::CapExceeded { partial, .. }) => Ok((partial as f64 * scale, true)),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut counts = Vec::with_capacity(outcomes.len());
    let mut capped = 0;
    for o in outcomes {
        let (c, hit) = o?;
        counts.push(c);
        capped += usize::from(hit);
    }
    if capped > 0 {
        log::warn!("{capped} of {} simulated paths hit the event cap", counts.len());
    }
    let summary = summarize(&counts);
    Ok(SimPrediction {
        mean: summary.mean,
        median: summary.median,
        std_error: summary.std_error,
        counts,
        scale,
        capped,
        median_coarsened: scale > 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSummary {
    pub mean: f64,
    pub median: f64,
    pub std_error: f64,
}

/// Mean, median and standard error of the mean.
pub fn summarize(xs: &[f64]) -> SampleSummary {
    let n = xs.len();
    if n == 0 {
        return SampleSummary {
            mean: f64::NAN,
            median: f64::NAN,
            std_error: f64::NAN,
        };
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let mut sorted = xs.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    SampleSummary {
        mean,
        median,
        std_error: (var / n as f64).sqrt(),
    }
}

/// Simulates a complete cascade from its origin over `[0, horizon]`.
pub fn simulate_cascade<T: Scalar, R: Rng + ?Sized>(
    params: &ModelParams<T>,
    marks: &MarkDistribution,
    origin_mark: u64,
    horizon: T,
    max_events: usize,
    rng: &mut R,
) -> Result<Cascade<T>> {
    let cont = ContinuationModel::unconditional(*params, marks.clone())?;
    let path = sim_cascade_continuation(&cont, horizon, 1.0, max_events, rng)?;
    Cascade::new(origin_mark, path.events.into_iter().map(|e| Event::new(e.time, e.mark)).collect())
}

/// Log-normal follower counts with the given median and log-scale spread,
/// rounded down.
pub fn synthetic_marks<R: Rng + ?Sized>(n: usize, median: f64, sigma: f64, rng: &mut R) -> Result<Vec<u64>> {
    let dist = LogNormal::new(median.ln(), sigma).map_err(|e| Error::Config(format!("log-normal marks: {e}")))?;
    Ok((0..n).map(|_| dist.sample(rng).floor() as u64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_rate_gives_nothing() {
        let mut rng = substream(1, 0);
        for _ in 0..100 {
            assert!(sim_inhom_poisson(|_: f64| 0.0, 100.0, &mut rng).unwrap().is_empty());
        }
        assert!(sim_inhom_poisson(|_: f64| 1.0, 0.0, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn constant_rate_mean() {
        let (c, l, runs) = (0.7, 30.0, 10_000);
        let mut rng = substream(2, 0);
        let mut total = 0usize;
        for _ in 0..runs {
            let ts = sim_inhom_poisson(|_: f64| c, l, &mut rng).unwrap();
            assert!(ts.iter().all(|&t| t > 0.0 && t <= l));
            assert!(ts.windows(2).all(|w| w[0] <= w[1]));
            total += ts.len();
        }
        let mean = total as f64 / runs as f64;
        assert!((mean - c * l).abs() <= 3.0 * (c * l / runs as f64).sqrt(), "{mean}");
    }

    #[test]
    fn bad_rates_rejected() {
        let mut rng = substream(3, 0);
        assert!(sim_inhom_poisson(|_: f64| -1.0, 10.0, &mut rng).is_err());
        assert!(sim_inhom_poisson(|_: f64| f64::NAN, 10.0, &mut rng).is_err());
        assert!(sim_inhom_poisson(|t: f64| 1.0 + t, 10.0, &mut rng).is_err());
    }

    #[test]
    fn empty_mark_pool_with_excitation_rejected() {
        let th = ModelParams::new(2.0, 0.1, 1.0, 2.0, 1.0).unwrap();
        let mut rng = substream(4, 0);
        assert!(simulate_cascade(&th, &MarkDistribution::new(vec![]), 0, 100.0, 1000, &mut rng).is_err());
    }

    #[test]
    fn single_replication_mean_is_median() {
        let th = ModelParams::new(2.0, 0.1, 1.0, 2.0, 1.0).unwrap();
        let cont = ContinuationModel::unconditional(th, MarkDistribution::new(vec![3, 8])).unwrap();
        let cfg = SimConfig {
            replications: 1,
            seed: 9,
            ..SimConfig::default()
        };
        let p = predict_by_simulation(&cont, 100.0, &cfg).unwrap();
        assert_eq!(p.counts.len(), 1);
        assert_eq!(p.mean, p.median);
        assert_eq!(p.mean, p.counts[0]);
    }

    #[test]
    fn deterministic_under_seed() {
        let th = ModelParams::sample_cascade_1();
        let cont = ContinuationModel::unconditional(th, MarkDistribution::new(vec![3, 80, 1000])).unwrap();
        let cfg = SimConfig {
            replications: 20,
            seed: 77,
            ..SimConfig::default()
        };
        let a = predict_by_simulation(&cont, 3600.0, &cfg).unwrap();
        let b = predict_by_simulation(&cont, 3600.0, &cfg).unwrap();
        assert_eq!(a.counts, b.counts);
        let mut r1 = substream(5, 3);
        let mut r2 = substream(5, 3);
        let p1 = sim_cascade_continuation(&cont, 3600.0, 1.0, 10_000, &mut r1).unwrap();
        let p2 = sim_cascade_continuation(&cont, 3600.0, 1.0, 10_000, &mut r2).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn generations_are_consistent() {
        let th = ModelParams::sample_cascade_1();
        let cont = ContinuationModel::unconditional(th, MarkDistribution::new(vec![50, 300])).unwrap();
        let mut rng = substream(6, 0);
        let path = sim_cascade_continuation(&cont, 86_400.0, 1.0, 100_000, &mut rng).unwrap();
        assert!(path.events.iter().all(|e| e.time > 0.0 && e.time <= 86_400.0));
        assert!(path.events.iter().any(|e| e.generation == 0));
    }

    #[test]
    fn cap_reports_partial_count() {
        let th = ModelParams::new(100.0, 0.0, 0.0, 2.0, 1.0).unwrap();
        let cont = ContinuationModel::unconditional(th, MarkDistribution::new(vec![])).unwrap();
        let mut rng = substream(7, 0);
        match sim_cascade_continuation(&cont, 1e6, 1.0, 10, &mut rng) {
            Err(Error::CapExceeded { cap: 10, partial }) => assert!(partial > 10),
            other => panic!("expected cap error, got {other:?}"),
        }
    }

    #[test]
    fn summary_statistics() {
        let s = summarize(&[1.0, 5.0, 3.0, 7.0]);
        assert_eq!(s.mean, 4.0);
        assert_eq!(s.median, 4.0);
        assert!((s.std_error - (20.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-12);
    }
}
