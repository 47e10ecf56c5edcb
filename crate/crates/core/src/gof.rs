//! Residual analysis by the random time change.
//!
//! Under a correctly specified model the transformed times `Λ̂(τᵢ)` are the
//! points of a unit-rate Poisson process on `(0, Λ̂(T)]`; conditional on
//! their number they are uniform order statistics, which is checked with a
//! one-sample Kolmogorov–Smirnov test.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{compensator, compensator_from, Cascade, ModelParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofReport<T> {
    pub residuals: Vec<T>,
    pub horizon: T,
    pub ks_statistic: T,
    pub p_value: T,
}

impl<T: Scalar> GofReport<T> {
    pub fn passes(&self, level: T) -> bool {
        self.p_value > level
    }
}

/// Transformed event times `Λ̂(τᵢ)` (counting only events strictly before
/// `τᵢ`) and the transformed horizon `Λ̂(T)`.
pub fn residual_times<T: Scalar>(cascade: &Cascade<T>, horizon: T, params: &ModelParams<T>) -> Result<(Vec<T>, T)> {
    let total = compensator(horizon, cascade, params)?;
    let events = cascade.events();
    let upto = cascade.count_until(horizon);
    let residuals = events[..upto]
        .iter()
        .map(|e| {
            let before = events.partition_point(|x| x.time < e.time);
            compensator_from(e.time, &events[..before], params)
        })
        .collect();
    Ok((residuals, total))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult<T> {
    pub statistic: T,
    pub p_value: T,
}

/// `D = max(D⁺, D⁻)` for the sample rescaled to `(0, 1]`, with the
/// asymptotic Kolmogorov p-value at `x = (√n + 0.12 + 0.11/√n) D`.
pub fn ks_uniform_test<T: Scalar>(residuals: &[T], horizon: T) -> Result<KsResult<T>> {
    if residuals.is_empty() {
        return Err(Error::Empty("residual sample"));
    }
    if !(horizon > T::zero()) {
        return Err(Error::Domain(format!("horizon must be > 0, got {horizon}")));
    }
    let mut u: Vec<T> = residuals.iter().map(|&r| r / horizon).collect();
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite residual".into()));
    }
    u.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let statistic = ks_statistic_sorted(&u);
    let sqrt_n = T::from_count(u.len()).sqrt();
    let x = (sqrt_n + T::lit(0.12) + T::lit(0.11) / sqrt_n) * statistic;
    Ok(KsResult {
        statistic,
        p_value: kolmogorov_sf(x),
    })
}

/// `D` for a sorted sample of values in `[0, 1]`; ties are kept.
pub fn ks_statistic_sorted<T: Scalar>(u: &[T]) -> T {
    let n = T::from_count(u.len());
    let mut d = T::zero();
    for (i, &ui) in u.iter().enumerate() {
        let upper = T::from_count(i + 1) / n - ui;
        let lower = ui - T::from_count(i) / n;
        d = d.max(upper).max(lower);
    }
    d.min(T::one())
}

/// Kolmogorov survival function `Q(x) = 2 Σ_{j≥1} (−1)^{j−1} e^{−2j²x²}`.
///
/// For small `x` the alternating series converges poorly, so the
/// complementary Jacobi-theta form of the CDF is used there instead.
pub fn kolmogorov_sf<T: Scalar>(x: T) -> T {
    if !(x > T::zero()) {
        return T::one();
    }
    let xf = x.as_f64();
    let q = if xf < 1.18 {
        let pi = std::f64::consts::PI;
        let w = -pi * pi / (8.0 * xf * xf);
        let mut cdf = 0.0;
        for j in 1..=8 {
            let k = (2 * j - 1) as f64;
            cdf += (k * k * w).exp();
        }
        1.0 - (2.0 * pi).sqrt() / xf * cdf
    } else {
        let mut sum = 0.0;
        let mut sign = 1.0;
        for j in 1..=100 {
            let jf = j as f64;
            let term = (-2.0 * jf * jf * xf * xf).exp();
            sum += sign * term;
            if term < 1e-18 {
                break;
            }
            sign = -sign;
        }
        2.0 * sum
    };
    T::lit(q.clamp(0.0, 1.0))
}

/// Residuals plus the K-S test for a cascade censored at `horizon`.
pub fn goodness_of_fit<T: Scalar>(cascade: &Cascade<T>, horizon: T, params: &ModelParams<T>) -> Result<GofReport<T>> {
    let (residuals, total) = residual_times(cascade, horizon, params)?;
    let ks = ks_uniform_test(&residuals, total)?;
    Ok(GofReport {
        residuals,
        horizon: total,
        ks_statistic: ks.statistic,
        p_value: ks.p_value,
    })
}

/// Fraction of reports whose p-value exceeds `level`.
pub fn batch_pass_rate<T: Scalar>(reports: &[GofReport<T>], level: T) -> Result<T> {
    if reports.is_empty() {
        return Err(Error::Empty("report list"));
    }
    if !(level > T::zero() && level < T::one()) {
        return Err(Error::Domain(format!("level must be in (0, 1), got {level}")));
    }
    let passed = reports.iter().filter(|r| r.passes(level)).count();
    Ok(T::from_count(passed) / T::from_count(reports.len()))
}
