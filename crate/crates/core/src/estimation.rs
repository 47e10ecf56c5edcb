//! Maximum-likelihood fitting.
//!
//! The objective is `ℓ(θ) = Σ log λ(τᵢ) − Λ(T)`. The mark density does not
//! depend on `θ` and is dropped. The simplex search runs over
//! `(ln α, ln β, ln γ, ln(δ₁ − 1), ln δ₂)` with `β` and `γ` floored at
//! [`CLAMP_FLOOR`] so the `β = 0` and `γ = 0` boundaries stay reachable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::model::{compensator_from, Cascade, Event, ModelParams, DELTA1_MARGIN};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::scalar::Scalar;

/// Lower clamp for `β` and `γ` in log space.
pub const CLAMP_FLOOR: f64 = 1e-12;

/// Bound on unconstrained coordinates so `exp` stays finite.
const LOG_BOUND: f64 = 700.0;

/// Terms whose largest possible contribution is below this fraction of the
/// baseline part of `λ(τᵢ)` are skipped in the likelihood sum.
const NEGLIGIBLE: f64 = 1e-17;

/// `ℓ(θ)` for a cascade observed on `[0, horizon]`.
pub fn log_likelihood<T: Scalar>(cascade: &Cascade<T>, horizon: T, params: &ModelParams<T>) -> Result<T> {
    if !(horizon >= T::zero()) || !horizon.is_finite() {
        return domain(format!("censoring time must be >= 0, got {horizon}"));
    }
    if let Some(last) = cascade.last_time() {
        if last > horizon {
            return domain(format!("event at {last} lies beyond the censoring time {horizon}"));
        }
    }
    Ok(log_likelihood_unchecked(cascade.events(), horizon, params))
}

fn log_likelihood_unchecked<T: Scalar>(events: &[Event<T>], horizon: T, params: &ModelParams<T>) -> T {
    let branching: Vec<T> = events.iter().map(|e| params.branching(e)).collect();
    let phi0 = params.kernel(T::zero());
    let negligible = T::lit(NEGLIGIBLE);

    let mut log_sum = T::zero();
    let mut group_start = 0usize;
    for (i, e) in events.iter().enumerate() {
        if i > 0 && events[i - 1].time < e.time {
            group_start = i;
        }
        let base = params.baseline(e.time);
        let cutoff = negligible * base / phi0;
        let mut lambda = base;
        // left limit: events tied with τᵢ do not excite it
        for (prev, &b) in events[..group_start].iter().zip(&branching[..group_start]) {
            if b > cutoff {
                lambda = lambda + b * params.kernel(e.time - prev.time);
            }
        }
        log_sum = log_sum + lambda.ln();
    }
    let n = events.partition_point(|e| e.time < horizon);
    log_sum - compensator_from(horizon, &events[..n], params)
}

/// Maps parameters to the unconstrained search space.
pub fn to_unconstrained<T: Scalar>(params: &ModelParams<T>) -> [T; 5] {
    let floor = T::lit(CLAMP_FLOOR);
    [
        params.alpha().ln(),
        params.beta().max(floor).ln(),
        params.gamma().max(floor).ln(),
        (params.delta1() - T::one()).ln(),
        params.delta2().ln(),
    ]
}

/// Inverse of [`to_unconstrained`]; every finite input gives valid parameters.
pub fn from_unconstrained<T: Scalar>(x: &[T]) -> Result<ModelParams<T>> {
    if x.len() != 5 {
        return Err(Error::InvalidParams(format!("expected 5 coordinates, got {}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParams(format!("non-finite coordinate in {x:?}")));
    }
    let bound = T::lit(LOG_BOUND);
    let e = |v: T| v.max(-bound).min(bound).exp();
    let floor = T::lit(CLAMP_FLOOR);
    ModelParams::new(
        e(x[0]),
        e(x[1]).max(floor),
        e(x[2]).max(floor),
        T::one() + e(x[3]).max(T::lit(DELTA1_MARGIN)),
        e(x[4]),
    )
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimplexConfig<T> {
    pub initial_point: ModelParams<T>,
    pub relative_tolerance: T,
    /// Budget per simplex run.
    pub max_evaluations: usize,
    pub n_restarts: usize,
    /// Initial simplex edge in log-parameter units.
    pub initial_step: T,
    /// Log-scale half-width of the random restart perturbation.
    pub perturbation: T,
    pub seed: u64,
}

impl<T: Scalar> Default for SimplexConfig<T> {
    fn default() -> Self {
        Self {
            initial_point: ModelParams::new(T::lit(10.0), T::lit(0.01), T::lit(1.0), T::lit(1.5), T::lit(0.05))
                .expect("valid default start"),
            relative_tolerance: T::lit(1e-8),
            max_evaluations: 2000,
            n_restarts: 3,
            initial_step: T::lit(0.5),
            perturbation: T::lit(0.7),
            seed: 0x5eed,
        }
    }
}

impl<T: Scalar> SimplexConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.relative_tolerance > T::zero()) {
            return Err(Error::Config("relative tolerance must be > 0".into()));
        }
        if self.max_evaluations < 1 {
            return Err(Error::Config("max_evaluations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult<T> {
    pub theta_hat: ModelParams<T>,
    pub loglik: T,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub restarts_used: usize,
}

/// Maximizes `ℓ` for a cascade already censored at `horizon`.
///
/// The first simplex starts at `config.initial_point`. A converged run is
/// followed by a fresh simplex at its optimum until the likelihood stops
/// improving; a run that exhausts its budget is followed by one started
/// from a randomly perturbed copy of the best point. At most
/// `n_restarts` extra runs are made and the best vertex is returned.
pub fn fit<T: Scalar>(cascade: &Cascade<T>, horizon: T, config: &SimplexConfig<T>) -> Result<FitResult<T>> {
    config.validate()?;
    if cascade.is_empty() {
        return Err(Error::Empty("cascade has no retweets to fit"));
    }
    // validates the censoring
    log_likelihood(cascade, horizon, &config.initial_point)?;

    let events = cascade.events();
    let objective = |x: &[T]| match from_unconstrained(x) {
        Ok(p) => {
            let ll = log_likelihood_unchecked(events, horizon, &p);
            if ll.is_finite() {
                -ll
            } else {
                T::infinity()
            }
        }
        Err(_) => T::infinity(),
    };
    let opts = NelderMeadOptions {
        initial_step: config.initial_step,
        rel_tol: config.relative_tolerance,
        max_evaluations: config.max_evaluations,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let start = to_unconstrained(&config.initial_point);
    let mut run = nelder_mead(objective, &start, &opts);
    let mut best_x = run.x.clone();
    let mut best_value = run.value;
    let mut iterations = run.iterations;
    let mut evaluations = run.evaluations;
    let mut converged = run.converged;
    let mut restarts_used = 0;

    while restarts_used < config.n_restarts {
        let from: Vec<T> = if run.converged {
            best_x.clone()
        } else {
            best_x
                .iter()
                .map(|&v| v + config.perturbation * T::lit(rng.random_range(-1.0..1.0)))
                .collect()
        };
        run = nelder_mead(objective, &from, &opts);
        restarts_used += 1;
        iterations += run.iterations;
        evaluations += run.evaluations;
        let improvement = best_value - run.value;
        if run.value < best_value {
            best_x = run.x.clone();
            best_value = run.value;
        }
        let tol = config.relative_tolerance * (best_value.abs() + config.relative_tolerance);
        if run.converged {
            converged = true;
            if improvement <= tol {
                break;
            }
        }
    }

    let theta_hat = from_unconstrained(&best_x)?;
    let loglik = log_likelihood_unchecked(events, horizon, &theta_hat);
    if !loglik.is_finite() {
        return Err(Error::Solver(format!("non-finite log-likelihood at {theta_hat:?}")));
    }
    Ok(FitResult {
        theta_hat,
        loglik,
        iterations,
        evaluations,
        converged,
        restarts_used,
    })
}
