//! Expected future counts by solving the mean-intensity integral equation.
//!
//! Conditional on the history up to the censoring time `T`, the future
//! process `Ñ(t) = N(T + t) − N(T)` is again a process of the same family
//! with baseline `ν̃(t) = λ(T + t)` (history frozen at `T`) and infectivity
//! `p̃(τ) = p(T + τ)`. Its mean intensity solves the Volterra equation
//!
//! ```text
//! λ̄(t) = ν̃(t) + R ∫₀ᵗ p̃(τ) φ(t − τ) λ̄(τ) dτ
//! ```
//!
//! where `R` is the mean impact of a mark. Writing `λ̄ = ν̃ + ψ`, the
//! excitation part `ψ` is approximated by a cubic B-spline `B(t)ᵀη` and `η`
//! is found by weighted least squares over a collocation grid:
//!
//! ```text
//! B(t)ᵀη − R ∫₀ᵗ p̃(τ) φ(t − τ) B(τ)ᵀη dτ = R ∫₀ᵗ p̃(τ) φ(t − τ) ν̃(τ) dτ
//! ```
//!
//! The expected count over `(T, T + H]` is `∫₀ᴴ ν̃ + (∫₀ᴴ B)ᵀη`, the first
//! term in closed form.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bspline::SplineBasis;
use crate::error::{domain, Error, Result};
use crate::linalg::{least_squares, Matrix};
use crate::model::{Cascade, Event, MarkDistribution, ModelParams};
use crate::quadrature::{integrate_pieces, QuadConfig};
use crate::scalar::Scalar;

/// The future of a cascade observed up to `censor_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationModel<T> {
    censor_time: T,
    history: Vec<Event<T>>,
    history_branching: Vec<T>,
    params: ModelParams<T>,
    marks: MarkDistribution,
    mean_impact: T,
}

impl<T: Scalar> ContinuationModel<T> {
    /// Freezes the events with `τ ≤ censor_time`. The mark pool is normally
    /// the empirical distribution of the observed retweet marks; it may be
    /// empty only when `γ = 0`.
    pub fn new(cascade: &Cascade<T>, censor_time: T, params: ModelParams<T>, marks: MarkDistribution) -> Result<Self> {
        if !(censor_time >= T::zero()) || !censor_time.is_finite() {
            return domain(format!("censoring time must be >= 0, got {censor_time}"));
        }
        let n = cascade.count_until(censor_time);
        let history = cascade.events()[..n].to_vec();
        let mean_impact = if marks.is_empty() {
            if params.gamma() > T::zero() {
                return Err(Error::Empty("mark distribution (needed when gamma > 0)"));
            }
            T::zero()
        } else {
            params.gamma() * T::lit(marks.mean_log1p())
        };
        let history_branching = history.iter().map(|e| params.branching(e)).collect();
        Ok(Self {
            censor_time,
            history,
            history_branching,
            params,
            marks,
            mean_impact,
        })
    }

    /// A fresh cascade seen from its origin (`T = 0`, no history).
    pub fn unconditional(params: ModelParams<T>, marks: MarkDistribution) -> Result<Self> {
        Self::new(&Cascade::origin_only(0), T::zero(), params, marks)
    }

    /// Same continuation with `R` overridden.
    pub fn with_mean_impact(mut self, mean_impact: T) -> Result<Self> {
        if !(mean_impact >= T::zero()) || !mean_impact.is_finite() {
            return domain(format!("mean impact must be finite and >= 0, got {mean_impact}"));
        }
        self.mean_impact = mean_impact;
        Ok(self)
    }

    pub fn censor_time(&self) -> T {
        self.censor_time
    }

    pub fn history(&self) -> &[Event<T>] {
        &self.history
    }

    /// `N(T)`.
    pub fn observed(&self) -> usize {
        self.history.len()
    }

    pub fn params(&self) -> &ModelParams<T> {
        &self.params
    }

    pub fn marks(&self) -> &MarkDistribution {
        &self.marks
    }

    /// `R`.
    pub fn mean_impact(&self) -> T {
        self.mean_impact
    }

    /// `ν̃(t)`, checked.
    pub fn shifted_baseline(&self, t: T) -> Result<T> {
        if !(t >= T::zero()) {
            return domain(format!("shifted baseline needs t >= 0, got {t}"));
        }
        Ok(self.baseline_at(t))
    }

    #[inline]
    pub(crate) fn baseline_at(&self, t: T) -> T {
        let s = self.censor_time + t;
        let mut sum = self.params.baseline(s);
        for (e, &b) in self.history.iter().zip(&self.history_branching) {
            if b > T::zero() {
                sum = sum + b * self.params.kernel(s - e.time);
            }
        }
        sum
    }

    /// `p̃(τ) = p(T + τ)`.
    #[inline]
    pub fn shifted_infectivity(&self, tau: T) -> T {
        self.params.infectivity_at(self.censor_time + tau)
    }

    /// `∫₀ᵘ ν̃` in closed form.
    pub fn baseline_integral(&self, upper: T) -> T {
        let t0 = self.censor_time;
        let t1 = t0 + upper;
        let p = &self.params;
        let mut sum = p.alpha() * (p.kernel_cdf(t1) - p.kernel_cdf(t0));
        for (e, &b) in self.history.iter().zip(&self.history_branching) {
            if b > T::zero() {
                sum = sum + b * (p.kernel_cdf(t1 - e.time) - p.kernel_cdf(t0 - e.time));
            }
        }
        sum
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverSettings<T> {
    pub order: usize,
    pub initial_k: usize,
    pub max_k: usize,
    /// Collocation points per basis function.
    pub collocation_factor: usize,
    /// First interior knot, seconds.
    pub first_knot: T,
    pub quad_abs_tol: T,
    pub quad_rel_tol: T,
    /// Relative change between successive `k` that counts as converged.
    pub refinement_tol: T,
    pub rcond_floor: T,
}

impl<T: Scalar> Default for SolverSettings<T> {
    fn default() -> Self {
        Self {
            order: 4,
            initial_k: 8,
            max_k: 64,
            collocation_factor: 4,
            first_knot: T::one(),
            quad_abs_tol: T::lit(1e-8),
            quad_rel_tol: T::lit(1e-6),
            refinement_tol: T::lit(5e-3),
            rcond_floor: T::lit(1e-13),
        }
    }
}

#[derive(Debug, Clone)]
pub struct MeanIntensitySolution<T> {
    pub basis: SplineBasis<T>,
    /// Spline coefficients of the excitation part `λ̄ − ν̃`.
    pub eta: Vec<T>,
    pub collocation_points: Vec<T>,
    /// Weighted least-squares residual norm.
    pub collocation_residual_norm: T,
    /// `∫₀ᴴ ν̃`.
    pub baseline_integral: T,
}

impl<T: Scalar> MeanIntensitySolution<T> {
    /// `λ̄(t) − ν̃(t)`.
    pub fn excitation(&self, t: T) -> T {
        self.basis.combine(t, &self.eta)
    }

    /// `λ̄(t) = ν̃(t) + B(t)ᵀη`.
    pub fn mean_intensity(&self, cont: &ContinuationModel<T>, t: T) -> T {
        cont.baseline_at(t) + self.excitation(t)
    }

    /// `∫₀ᴴ λ̄`.
    pub fn expected_count(&self) -> T {
        let ints = self
            .basis
            .integrals(self.basis.end())
            .expect("end of span is in the domain");
        self.baseline_integral + ints.iter().zip(&self.eta).map(|(&a, &b)| a * b).sum::<T>()
    }
}

/// Collocation grid on `[0, horizon]`: the origin plus `count − 1`
/// log-spaced points from a quarter of the first interior knot to `horizon`.
pub fn collocation_points<T: Scalar>(basis: &SplineBasis<T>, count: usize) -> Vec<T> {
    let horizon = basis.end();
    let bp = basis.breakpoints();
    let first = if bp.len() > 2 { bp[1] } else { horizon };
    let start = first / T::lit(4.0);
    let mut pts = vec![T::zero()];
    if count > 1 {
        let m = count - 1;
        let ratio = horizon / start;
        for i in 0..m {
            let frac = if m == 1 { T::one() } else { T::from_count(i) / T::from_count(m - 1) };
            pts.push(start * ratio.powf(frac));
        }
        *pts.last_mut().expect("nonempty") = horizon;
    }
    pts
}

/// Solves the mean-intensity equation on `[0, horizon]` for the given basis.
pub fn solve_mean_intensity<T: Scalar>(
    cont: &ContinuationModel<T>,
    horizon: T,
    basis: &SplineBasis<T>,
    collocation_count: usize,
    settings: &SolverSettings<T>,
) -> Result<MeanIntensitySolution<T>> {
    if !(horizon > T::zero()) || !horizon.is_finite() {
        return domain(format!("prediction horizon must be > 0, got {horizon}"));
    }
    if basis.start() != T::zero() || (basis.end() - horizon).abs() > horizon * T::lit(1e-12) {
        return Err(Error::Config("basis must span [0, horizon]".into()));
    }
    let k = basis.len();
    if collocation_count < k {
        return Err(Error::Config(format!(
            "need at least k = {k} collocation points, got {collocation_count}"
        )));
    }
    let points = collocation_points(basis, collocation_count);
    let breaks = basis.breakpoints();
    let r = cont.mean_impact();
    let params = cont.params();
    let order = basis.order();

    let rows: Vec<(Vec<T>, T)> = points
        .par_iter()
        .map(|&t| {
            let nu = cont.baseline_at(t);
            let weight = T::one() / nu;
            let mut local = Vec::with_capacity(order);
            let first = basis.nonzero_into(t, &mut local);
            let mut row = vec![T::zero(); k];
            for (i, &v) in local.iter().enumerate() {
                row[first + i] = v * weight;
            }
            let mut rhs = T::zero();
            if r > T::zero() && t > T::zero() {
                let cfg = QuadConfig::new(settings.quad_abs_tol * nu / r, settings.quad_rel_tol);
                let kernel = |tau: T| cont.shifted_infectivity(tau) * params.kernel(t - tau);
                let mut buf = Vec::with_capacity(order);
                for j in 0..k {
                    let (lo, hi) = basis.support(j);
                    if lo >= t {
                        break;
                    }
                    let hi = hi.min(t);
                    let conv = integrate_pieces(
                        |tau| {
                            let f = basis.nonzero_into(tau, &mut buf);
                            if j >= f && j < f + order {
                                kernel(tau) * buf[j - f]
                            } else {
                                T::zero()
                            }
                        },
                        lo,
                        hi,
                        &breaks,
                        &cfg,
                    );
                    row[j] = row[j] - r * conv.value * weight;
                }
                let forcing = integrate_pieces(|tau| kernel(tau) * cont.baseline_at(tau), T::zero(), t, &breaks, &cfg);
                rhs = r * forcing.value * weight;
            }
            (row, rhs)
        })
        .collect();

    let mut a = Matrix::zeros(rows.len(), k);
    let mut b = Vec::with_capacity(rows.len());
    for (i, (row, rhs)) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            a.set(i, j, v);
        }
        b.push(rhs);
    }
    let ls = least_squares(&a, &b, settings.rcond_floor)?;

    let solution = MeanIntensitySolution {
        basis: basis.clone(),
        eta: ls.solution,
        collocation_points: points,
        collocation_residual_norm: ls.residual_norm,
        baseline_integral: cont.baseline_integral(horizon),
    };
    let values: Vec<T> = solution
        .collocation_points
        .iter()
        .map(|&t| solution.mean_intensity(cont, t))
        .collect();
    let peak = values.iter().copied().fold(T::zero(), T::max);
    if values.iter().any(|v| !v.is_finite() || *v < -T::lit(1e-6) * peak) {
        return Err(Error::Solver("reconstructed mean intensity is negative or non-finite".into()));
    }
    Ok(solution)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeanCountPrediction<T> {
    /// Expected number of events in `(T, T + horizon]`.
    pub count: T,
    /// `N(T)`.
    pub observed: usize,
    /// Basis size used for `count`.
    pub k: usize,
    pub converged: bool,
    /// `(k, count)` for each refinement step.
    pub refinement: Vec<(usize, T)>,
}

impl<T: Scalar> MeanCountPrediction<T> {
    /// `N(T) + count`.
    pub fn final_popularity(&self) -> T {
        T::from_count(self.observed) + self.count
    }
}

/// Solves with `k = initial_k, 2·initial_k, …` until two successive
/// predictions differ by less than `refinement_tol` (relative) or `max_k`
/// is reached. A solver failure below `max_k` moves on to the next `k`.
pub fn predict_mean_count<T: Scalar>(
    cont: &ContinuationModel<T>,
    horizon: T,
    settings: &SolverSettings<T>,
) -> Result<MeanCountPrediction<T>> {
    if horizon == T::zero() {
        return Ok(MeanCountPrediction {
            count: T::zero(),
            observed: cont.observed(),
            k: 0,
            converged: true,
            refinement: Vec::new(),
        });
    }
    if !(horizon > T::zero()) || !horizon.is_finite() {
        return domain(format!("prediction horizon must be >= 0, got {horizon}"));
    }
    if settings.initial_k < settings.order || settings.max_k < settings.initial_k {
        return Err(Error::Config("need order <= initial_k <= max_k".into()));
    }
    let mut refinement = Vec::new();
    let mut k = settings.initial_k;
    let mut previous: Option<T> = None;
    loop {
        let basis = SplineBasis::geometric(settings.order, k, settings.first_knot, horizon)?;
        let sol = match solve_mean_intensity(cont, horizon, &basis, settings.collocation_factor * k, settings) {
            Ok(sol) => sol,
            // a basis too coarse for the span can oscillate below zero
            Err(Error::Solver(msg)) if 2 * k <= settings.max_k => {
                log::debug!("k = {k}: {msg}; refining");
                previous = None;
                k *= 2;
                continue;
            }
            Err(e) => return Err(e),
        };
        let count = sol.expected_count().max(T::zero());
        refinement.push((k, count));
        let converged = previous.is_some_and(|p| {
            let scale = count.abs().max(p.abs());
            (count - p).abs() <= settings.refinement_tol * scale || scale == T::zero()
        });
        if converged || 2 * k > settings.max_k {
            if !converged {
                log::warn!("basis refinement stopped at k = {k} without converging");
            }
            return Ok(MeanCountPrediction {
                count,
                observed: cont.observed(),
                k,
                converged,
                refinement,
            });
        }
        previous = Some(count);
        k *= 2;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn history() -> Cascade<f64> {
        Cascade::new(
            500,
            vec![
                Event::new(3.0, 120),
                Event::new(10.0, 4),
                Event::new(11.0, 900),
                Event::new(40.0, 30),
            ],
        )
        .unwrap()
    }

    #[test]
    fn shifted_baseline_is_frozen_intensity() {
        let th = ModelParams::new(3.0, 0.02, 1.2, 1.5, 0.2).unwrap();
        let c = history();
        let cont = ContinuationModel::new(&c, 60.0, th, MarkDistribution::new(vec![1, 2])).unwrap();
        for &t in &[0.0, 1.0, 100.0] {
            let direct = crate::model::intensity(60.0 + t + 1e-300, &c, &th).unwrap();
            assert_relative_eq!(cont.shifted_baseline(t).unwrap(), direct, max_relative = 1e-12);
        }
        assert!(cont.shifted_baseline(-1.0).is_err());
        let empty = ContinuationModel::unconditional(th, MarkDistribution::new(vec![3])).unwrap();
        assert_relative_eq!(empty.shifted_baseline(5.0).unwrap(), th.baseline(5.0));
    }

    #[test]
    fn one_event_history_at_zero() {
        let th = ModelParams::new(3.0, 0.02, 1.2, 1.5, 0.2).unwrap();
        let c = Cascade::new(1, vec![Event::new(4.0, 10)]).unwrap();
        let cont = ContinuationModel::new(&c, 9.0, th, MarkDistribution::new(vec![10])).unwrap();
        let expected = 3.0 * th.kernel(9.0) + th.branching(&c.events()[0]) * th.kernel(5.0);
        assert_relative_eq!(cont.shifted_baseline(0.0).unwrap(), expected, max_relative = 1e-14);
    }

    #[test]
    fn baseline_integral_matches_quadrature() {
        let th = ModelParams::new(3.0, 0.02, 1.2, 1.5, 0.2).unwrap();
        let cont = ContinuationModel::new(&history(), 50.0, th, MarkDistribution::new(vec![7])).unwrap();
        let cfg = QuadConfig::new(1e-13, 1e-11);
        let q = integrate_pieces(|t| cont.baseline_at(t), 0.0, 1e4, &[1.0, 10.0, 100.0, 1000.0], &cfg);
        assert_relative_eq!(cont.baseline_integral(1e4), q.value, max_relative = 1e-9);
    }

    #[test]
    fn zero_impact_gives_baseline_exactly() {
        let th = ModelParams::new(2.0, 0.0, 0.0, 2.0, 1.0).unwrap();
        let cont = ContinuationModel::unconditional(th, MarkDistribution::new(vec![])).unwrap();
        let p = predict_mean_count(&cont, 2.0, &SolverSettings::default()).unwrap();
        assert_relative_eq!(p.count, 1.0, max_relative = 1e-12);
        let basis = SplineBasis::geometric(4, 8, 1.0, 2.0).unwrap();
        let sol = solve_mean_intensity(&cont, 2.0, &basis, 32, &SolverSettings::default()).unwrap();
        for &t in &sol.collocation_points {
            assert_eq!(sol.mean_intensity(&cont, t), cont.baseline_at(t));
        }
    }

    #[test]
    fn zero_horizon_predicts_zero() {
        let th = ModelParams::sample_cascade_1();
        let cont = ContinuationModel::unconditional(th, MarkDistribution::new(vec![50])).unwrap();
        assert_eq!(predict_mean_count(&cont, 0.0, &SolverSettings::default()).unwrap().count, 0.0);
        let tiny = predict_mean_count(&cont, 1e-6, &SolverSettings::default()).unwrap();
        assert!(tiny.count < 1e-5);
        assert!(predict_mean_count(&cont, -1.0, &SolverSettings::default()).is_err());
    }

    #[test]
    fn large_decay_kills_excitation() {
        let th = ModelParams::new(2.0, 1e3, 3.0, 2.0, 1.0).unwrap();
        let cont = ContinuationModel::new(&history(), 50.0, th, MarkDistribution::new(vec![100])).unwrap();
        let basis = SplineBasis::geometric(4, 16, 1.0, 500.0).unwrap();
        let sol = solve_mean_intensity(&cont, 500.0, &basis, 64, &SolverSettings::default()).unwrap();
        for &t in &sol.collocation_points {
            assert!((sol.mean_intensity(&cont, t) - cont.baseline_at(t)).abs() < 1e-6);
        }
    }

    #[test]
    fn empty_marks_with_positive_gamma_rejected() {
        let th = ModelParams::new(2.0, 0.1, 1.0, 2.0, 1.0).unwrap();
        assert!(ContinuationModel::unconditional(th, MarkDistribution::new(vec![])).is_err());
    }

    #[test]
    fn constant_branching_matches_renewal_solution() {
        // β = 0 and δ = (3, 1) with R = 0.5: the excitation is a standard
        // renewal equation; at a long horizon the mean count is α/(1 − R).
        let th = ModelParams::new(2.0, 0.0, 0.5 / 2f64.ln(), 3.0, 1.0).unwrap();
        let cont = ContinuationModel::unconditional(th, MarkDistribution::new(vec![1])).unwrap();
        assert_relative_eq!(cont.mean_impact(), 0.5, max_relative = 1e-14);
        let p = predict_mean_count(&cont, 1e6, &SolverSettings::default()).unwrap();
        assert!(p.converged);
        assert_relative_eq!(p.count, 4.0, max_relative = 1e-3);
    }
}
