//! Cascade data model, the parametric component functions and the exact
//! intensity/compensator of the marked self-exciting process.
//!
//! The conditional intensity is
//!
//! ```text
//! λ(t) = α φ(t) + Σ_{τᵢ < t} p(τᵢ) r(mᵢ) φ(t − τᵢ)
//! p(τ) = exp(−β τ)
//! r(m) = γ ln(m + 1)
//! φ(t) = δ₂(δ₁ − 1)/δ₁ · (1 + δ₂ t/δ₁)^(−δ₁)
//! ```
//!
//! and its integral over `[0, T]` has the closed form
//! `Λ(T) = α Φ(T) + Σ_{τᵢ < T} p(τᵢ) r(mᵢ) Φ(T − τᵢ)` with
//! `Φ(t) = 1 − (1 + δ₂ t/δ₁)^(1 − δ₁)`.
//!
//! Times are seconds since the original post.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::scalar::Scalar;

/// Smallest admissible gap between `δ₁` and 1.
pub const DELTA1_MARGIN: f64 = 1e-6;

/// One retweet: time in seconds since the origin and the follower count
/// of the retweeting account.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event<T> {
    pub time: T,
    pub mark: u64,
}

impl<T> Event<T> {
    pub fn new(time: T, mark: u64) -> Self {
        Self { time, mark }
    }
}

/// An original post (time 0, follower count `origin_mark`) and its retweets
/// in nondecreasing time order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cascade<T> {
    origin_mark: u64,
    events: Vec<Event<T>>,
}

impl<T: Scalar> Cascade<T> {
    /// Builds a cascade, stably sorting the events by time.
    pub fn new(origin_mark: u64, mut events: Vec<Event<T>>) -> Result<Self> {
        for (i, e) in events.iter().enumerate() {
            if !e.time.is_finite() || e.time < T::zero() {
                return domain(format!("event {i} has invalid time {}", e.time));
            }
        }
        // stable: equal timestamps keep their input order
        events.sort_by(|a, b| a.time.partial_cmp(&b.time).expect("finite times"));
        Ok(Self {
            origin_mark,
            events,
        })
    }

    /// A cascade with no retweets.
    pub fn origin_only(origin_mark: u64) -> Self {
        Self {
            origin_mark,
            events: Vec::new(),
        }
    }

    pub fn origin_mark(&self) -> u64 {
        self.origin_mark
    }

    pub fn events(&self) -> &[Event<T>] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Time of the last retweet, if any.
    pub fn last_time(&self) -> Option<T> {
        self.events.last().map(|e| e.time)
    }

    /// `N(t)`: number of retweets with time `≤ t`.
    pub fn count_until(&self, t: T) -> usize {
        self.events.partition_point(|e| e.time <= t)
    }

    /// Number of retweets with time strictly before `t`.
    pub fn count_before(&self, t: T) -> usize {
        self.events.partition_point(|e| e.time < t)
    }

    /// Retweet marks in event order.
    pub fn marks(&self) -> impl Iterator<Item = u64> + '_ {
        self.events.iter().map(|e| e.mark)
    }

    pub(crate) fn truncated(&self, n: usize) -> Self {
        Self {
            origin_mark: self.origin_mark,
            events: self.events[..n].to_vec(),
        }
    }
}

/// Parameter vector `θ = (α, β, γ, δ₁, δ₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    alpha: T,
    beta: T,
    gamma: T,
    delta1: T,
    delta2: T,
}

impl<T: Scalar> ModelParams<T> {
    /// Validates `α > 0, β ≥ 0, γ ≥ 0, δ₁ > 1, δ₂ > 0`, all finite.
    pub fn new(alpha: T, beta: T, gamma: T, delta1: T, delta2: T) -> Result<Self> {
        let all = [alpha, beta, gamma, delta1, delta2];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams(format!("non-finite value in {all:?}")));
        }
        if alpha <= T::zero() {
            return Err(Error::InvalidParams(format!("alpha must be > 0, got {alpha}")));
        }
        if beta < T::zero() {
            return Err(Error::InvalidParams(format!("beta must be >= 0, got {beta}")));
        }
        if gamma < T::zero() {
            return Err(Error::InvalidParams(format!("gamma must be >= 0, got {gamma}")));
        }
        if delta1 <= T::one() {
            return Err(Error::InvalidParams(format!("delta1 must be > 1, got {delta1}")));
        }
        if delta2 <= T::zero() {
            return Err(Error::InvalidParams(format!("delta2 must be > 0, got {delta2}")));
        }
        Ok(Self {
            alpha,
            beta,
            gamma,
            delta1,
            delta2,
        })
    }

    /// Builds from `[α, β, γ, δ₁, δ₂]`.
    pub fn from_array(v: [T; 5]) -> Result<Self> {
        Self::new(v[0], v[1], v[2], v[3], v[4])
    }

    pub fn to_array(&self) -> [T; 5] {
        [self.alpha, self.beta, self.gamma, self.delta1, self.delta2]
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }
    pub fn beta(&self) -> T {
        self.beta
    }
    pub fn gamma(&self) -> T {
        self.gamma
    }
    pub fn delta1(&self) -> T {
        self.delta1
    }
    pub fn delta2(&self) -> T {
        self.delta2
    }

    /// Copy with a different `α`.
    pub fn with_alpha(&self, alpha: T) -> Result<Self> {
        Self::new(alpha, self.beta, self.gamma, self.delta1, self.delta2)
    }

    /// Copy with a different `β`.
    pub fn with_beta(&self, beta: T) -> Result<Self> {
        Self::new(self.alpha, beta, self.gamma, self.delta1, self.delta2)
    }

    /// Copy with a different `γ`.
    pub fn with_gamma(&self, gamma: T) -> Result<Self> {
        Self::new(self.alpha, self.beta, gamma, self.delta1, self.delta2)
    }

    /// Memory kernel `φ(t)`; `t ≥ 0` is the caller's responsibility.
    #[inline]
    pub fn kernel(&self, t: T) -> T {
        let d1 = self.delta1;
        let d2 = self.delta2;
        let scale = d2 * (d1 - T::one()) / d1;
        scale * (-d1 * (d2 * t / d1).ln_1p()).exp()
    }

    /// Memory kernel CDF `Φ(t)`; `t ≥ 0` is the caller's responsibility.
    #[inline]
    pub fn kernel_cdf(&self, t: T) -> T {
        let d1 = self.delta1;
        // 1 − (1 + x)^(1−δ₁) = −expm1((1−δ₁) ln1p(x))
        -(((T::one() - d1) * (self.delta2 * t / d1).ln_1p()).exp_m1())
    }

    /// Inverse of `Φ` on `[0, 1)`.
    pub fn kernel_cdf_inverse(&self, u: T) -> T {
        let d1 = self.delta1;
        // (1 + δ₂t/δ₁) = (1 − u)^(1/(1−δ₁))
        let x = ((-u).ln_1p() / (T::one() - d1)).exp_m1();
        x * d1 / self.delta2
    }

    /// Infectivity `p(τ) = e^{−βτ}`.
    #[inline]
    pub fn infectivity_at(&self, tau: T) -> T {
        (-self.beta * tau).exp()
    }

    /// Impact `r(m) = γ ln(m + 1)`.
    #[inline]
    pub fn impact_of(&self, mark: u64) -> T {
        self.gamma * log1p_mark::<T>(mark)
    }

    /// Branching ratio `p(τ) r(m)` of an event.
    #[inline]
    pub fn branching(&self, event: &Event<T>) -> T {
        self.infectivity_at(event.time) * self.impact_of(event.mark)
    }

    /// Baseline intensity `ν(t) = α φ(t)`.
    #[inline]
    pub fn baseline(&self, t: T) -> T {
        self.alpha * self.kernel(t)
    }
}

impl ModelParams<f64> {
    /// Fitted values for a sample retweet cascade:
    /// `(5.711, 0.024, 1.455, 1.254, 0.173)`.
    pub fn sample_cascade_1() -> Self {
        Self::new(5.711, 0.024, 1.455, 1.254, 0.173).expect("valid")
    }

    /// Fitted parameters of five sample cascades; the first is [`Self::sample_cascade_1`].
    pub fn sample_cascades() -> [Self; 5] {
        [
            Self::new(5.711, 0.024, 1.455, 1.254, 0.173).expect("valid"),
            Self::new(3.075, 0.021, 6.351, 1.414, 0.029).expect("valid"),
            Self::new(58.136, 0.246, 1.144, 1.490, 0.001).expect("valid"),
            Self::new(8.209, 0.031, 2.095, 1.444, 0.040).expect("valid"),
            Self::new(4.173, 0.019, 5.049, 1.229, 0.046).expect("valid"),
        ]
    }
}

#[inline]
pub(crate) fn log1p_mark<T: Scalar>(mark: u64) -> T {
    T::from_u64(mark).unwrap_or_else(T::infinity).ln_1p()
}

/// `φ(t; δ)`, the memory-kernel density.
pub fn memory_kernel<T: Scalar>(t: T, params: &ModelParams<T>) -> Result<T> {
    if !(t >= T::zero()) {
        return domain(format!("memory kernel needs t >= 0, got {t}"));
    }
    Ok(params.kernel(t))
}

/// `Φ(t; δ) = ∫₀ᵗ φ`.
pub fn memory_kernel_cdf<T: Scalar>(t: T, params: &ModelParams<T>) -> Result<T> {
    if !(t >= T::zero()) {
        return domain(format!("memory kernel cdf needs t >= 0, got {t}"));
    }
    Ok(params.kernel_cdf(t))
}

/// `p(τ; β)`.
pub fn infectivity<T: Scalar>(tau: T, params: &ModelParams<T>) -> Result<T> {
    if !(tau >= T::zero()) {
        return domain(format!("infectivity needs tau >= 0, got {tau}"));
    }
    Ok(params.infectivity_at(tau))
}

/// `r(m; γ)` for a real-valued follower count.
pub fn impact<T: Scalar>(followers: T, params: &ModelParams<T>) -> Result<T> {
    if !(followers >= T::zero()) {
        return domain(format!("impact needs m >= 0, got {followers}"));
    }
    Ok(params.gamma() * followers.ln_1p())
}

/// Conditional intensity `λ(t)` with left-limit semantics: only events
/// strictly before `t` contribute.
pub fn intensity<T: Scalar>(t: T, cascade: &Cascade<T>, params: &ModelParams<T>) -> Result<T> {
    if !(t > T::zero()) || !t.is_finite() {
        return domain(format!("intensity needs t > 0, got {t}"));
    }
    let n = cascade.count_before(t);
    Ok(intensity_from(t, &cascade.events()[..n], params))
}

/// `α φ(t) + Σ p(τⱼ) r(mⱼ) φ(t − τⱼ)` over all of `history`.
pub(crate) fn intensity_from<T: Scalar>(t: T, history: &[Event<T>], params: &ModelParams<T>) -> T {
    let mut sum = params.baseline(t);
    for e in history {
        let b = params.branching(e);
        if b > T::zero() {
            sum = sum + b * params.kernel(t - e.time);
        }
    }
    sum
}

/// Closed-form compensator `Λ(T) = ∫₀ᵀ λ`.
pub fn compensator<T: Scalar>(horizon: T, cascade: &Cascade<T>, params: &ModelParams<T>) -> Result<T> {
    if !(horizon >= T::zero()) || !horizon.is_finite() {
        return domain(format!("compensator needs T >= 0, got {horizon}"));
    }
    let n = cascade.count_before(horizon);
    Ok(compensator_from(horizon, &cascade.events()[..n], params))
}

pub(crate) fn compensator_from<T: Scalar>(horizon: T, history: &[Event<T>], params: &ModelParams<T>) -> T {
    let mut sum = params.alpha() * params.kernel_cdf(horizon);
    for e in history {
        let b = params.branching(e);
        if b > T::zero() {
            sum = sum + b * params.kernel_cdf(horizon - e.time);
        }
    }
    sum
}

/// Empirical distribution of retweet marks. The mean of `ln(m + 1)` is
/// cached so that `R = γ · mean_log1p` for any `γ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkDistribution {
    marks: Vec<u64>,
    mean_log1p: f64,
}

impl MarkDistribution {
    pub fn new(marks: Vec<u64>) -> Self {
        let mean_log1p = if marks.is_empty() {
            0.0
        } else {
            marks.iter().map(|&m| (m as f64).ln_1p()).sum::<f64>() / marks.len() as f64
        };
        Self { marks, mean_log1p }
    }

    pub fn marks(&self) -> &[u64] {
        &self.marks
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    /// Mean of `ln(m + 1)` over the multiset.
    pub fn mean_log1p(&self) -> f64 {
        self.mean_log1p
    }

    /// Draws one mark uniformly from the multiset.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<u64> {
        if self.marks.is_empty() {
            None
        } else {
            Some(self.marks[rng.random_range(0..self.marks.len())])
        }
    }
}

/// `R = mean r(mᵢ)` over the retweet marks.
pub fn mean_impact<T: Scalar>(marks: &MarkDistribution, params: &ModelParams<T>) -> Result<T> {
    if marks.is_empty() {
        return Err(Error::Empty("mark distribution"));
    }
    Ok(params.gamma() * T::lit(marks.mean_log1p()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(a: f64, b: f64, g: f64, d1: f64, d2: f64) -> ModelParams<f64> {
        ModelParams::new(a, b, g, d1, d2).unwrap()
    }

    #[test]
    fn kernel_hand_values() {
        let th = p(1.0, 0.0, 0.0, 2.0, 1.0);
        assert_relative_eq!(memory_kernel(0.0, &th).unwrap(), 0.5, max_relative = 1e-15);
        assert_relative_eq!(memory_kernel(2.0, &th).unwrap(), 0.125, max_relative = 1e-15);
        assert!(memory_kernel(-1.0, &th).is_err());
    }

    #[test]
    fn kernel_cdf_hand_values() {
        let th = p(1.0, 0.0, 0.0, 2.0, 1.0);
        assert_eq!(memory_kernel_cdf(0.0, &th).unwrap(), 0.0);
        assert_relative_eq!(memory_kernel_cdf(2.0, &th).unwrap(), 0.5, max_relative = 1e-15);
        assert!(memory_kernel_cdf(-0.5, &th).is_err());
        let table = ModelParams::sample_cascade_1();
        let cdf = memory_kernel_cdf(604_800.0, &table).unwrap();
        assert!((cdf - 0.9437).abs() < 5e-4, "{cdf}");
        let share = 5.711 * cdf / 159.0;
        assert!((share - 0.034).abs() < 5e-4, "{share}");
    }

    #[test]
    fn kernel_cdf_inverse_roundtrip() {
        let th = ModelParams::sample_cascade_1();
        for &t in &[0.0, 0.3, 7.0, 1e3, 5e5] {
            let u = th.kernel_cdf(t);
            assert_relative_eq!(th.kernel_cdf_inverse(u), t, max_relative = 1e-8, epsilon = 1e-12);
        }
    }

    #[test]
    fn infectivity_values() {
        let th = p(1.0, 0.246, 0.0, 2.0, 1.0);
        assert_eq!(infectivity(0.0, &th).unwrap(), 1.0);
        // time for p to fall to 1%
        assert!((100f64.ln() / 0.246 - 18.7).abs() < 0.05);
        assert!((100f64.ln() / 0.019 - 242.4).abs() < 0.05);
        assert_relative_eq!(infectivity(100f64.ln() / 0.246, &th).unwrap(), 0.01, max_relative = 1e-12);
        assert!(infectivity(-1.0, &th).is_err());
    }

    #[test]
    fn impact_values() {
        let th = p(1.0, 0.0, 2.0, 2.0, 1.0);
        assert_relative_eq!(th.impact_of(1), 2.0 * 2f64.ln(), max_relative = 1e-15);
        assert_eq!(th.impact_of(0), 0.0);
        let one = p(1.0, 0.0, 1.0, 2.0, 1.0);
        assert_relative_eq!(impact(std::f64::consts::E - 1.0, &one).unwrap(), 1.0, max_relative = 1e-15);
        assert_eq!(p(1.0, 0.0, 0.0, 2.0, 1.0).impact_of(12345), 0.0);
        assert!(impact(-1.0, &one).is_err());
    }

    #[test]
    fn intensity_hand_values() {
        let th = p(2.0, 0.0, 1.0, 2.0, 1.0);
        let empty = Cascade::origin_only(10);
        assert_relative_eq!(intensity(1e-12, &empty, &th).unwrap(), 1.0, max_relative = 1e-9);
        // r(m) = 1 requires ln(m + 1) = 1; use γ = 1/ln 2 with m = 1
        let th = p(2.0, 0.0, 1.0 / 2f64.ln(), 2.0, 1.0);
        let c = Cascade::new(0, vec![Event::new(2.0, 1)]).unwrap();
        let lam = intensity(3.0, &c, &th).unwrap();
        assert_relative_eq!(lam, 0.16 + 2.0 / 9.0, max_relative = 1e-12);
        // the event at t itself does not contribute
        let at = intensity(2.0, &c, &th).unwrap();
        assert_relative_eq!(at, 2.0 * th.kernel(2.0), max_relative = 1e-15);
        assert!(intensity(0.0, &c, &th).is_err());
    }

    #[test]
    fn compensator_hand_values() {
        let th = p(2.0, 0.0, 1.0 / 2f64.ln(), 2.0, 1.0);
        let c = Cascade::new(0, vec![Event::new(2.0, 1)]).unwrap();
        assert_eq!(compensator(0.0, &c, &th).unwrap(), 0.0);
        assert_relative_eq!(compensator(4.0, &c, &th).unwrap(), 4.0 / 3.0 + 0.5, max_relative = 1e-12);
        assert!(compensator(-1.0, &c, &th).is_err());
    }

    #[test]
    fn mean_impact_values() {
        let th = p(1.0, 0.0, 5.0, 2.0, 1.0);
        assert_eq!(mean_impact(&MarkDistribution::new(vec![0]), &th).unwrap(), 0.0);
        let th1 = p(1.0, 0.0, 1.0, 2.0, 1.0);
        assert_relative_eq!(
            mean_impact(&MarkDistribution::new(vec![1, 1]), &th1).unwrap(),
            2f64.ln(),
            max_relative = 1e-15
        );
        // ln(m+1) = 2 is not an integer count; ln(0+1)=0 and ln(e²) averaged
        let marks = MarkDistribution::new(vec![0, 3]);
        assert_relative_eq!(mean_impact(&marks, &th1).unwrap(), 4f64.ln() / 2.0, max_relative = 1e-15);
        assert!(mean_impact(&MarkDistribution::new(vec![]), &th1).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(ModelParams::new(0.0, 0.0, 0.0, 2.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, -1e-9, 0.0, 2.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, -1.0, 2.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, 0.0, 1.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, 0.0, 2.0, 0.0).is_err());
        assert!(ModelParams::new(f64::NAN, 0.0, 0.0, 2.0, 1.0).is_err());
        assert!(ModelParams::new(1.0, 0.0, 0.0, 1.0 + DELTA1_MARGIN, 1.0).is_ok());
    }

    #[test]
    fn cascade_sorts_stably() {
        let c = Cascade::new(5, vec![Event::new(3.0, 1), Event::new(1.0, 2), Event::new(3.0, 3)]).unwrap();
        let marks: Vec<u64> = c.marks().collect();
        assert_eq!(marks, vec![2, 1, 3]);
        assert_eq!(c.count_until(3.0), 3);
        assert_eq!(c.count_before(3.0), 1);
        assert!(Cascade::new(0, vec![Event::new(-1.0, 1)]).is_err());
        assert!(Cascade::new(0, vec![Event::new(f64::INFINITY, 1)]).is_err());
    }

    #[test]
    fn single_precision_kernel() {
        let th: ModelParams<f32> = ModelParams::new(2.0, 0.0, 1.0, 2.0, 1.0).unwrap();
        assert!((th.kernel(2.0) - 0.125).abs() < 1e-6);
        assert!((th.kernel_cdf(2.0) - 0.5).abs() < 1e-6);
    }
}
