//! Downhill simplex (Nelder–Mead) minimization.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions<T> {
    /// Edge length of the axis-aligned initial simplex.
    pub initial_step: T,
    /// Stop once `|f_worst − f_best| ≤ rel_tol · (|f_best| + rel_tol)`.
    pub rel_tol: T,
    pub max_evaluations: usize,
}

impl<T: Scalar> Default for NelderMeadOptions<T> {
    fn default() -> Self {
        Self {
            initial_step: T::lit(0.5),
            rel_tol: T::lit(1e-8),
            max_evaluations: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult<T> {
    pub x: Vec<T>,
    pub value: T,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Minimizes `objective` from `x0`. Non-finite objective values are treated
/// as `+∞`, so infeasible regions simply repel the simplex. Never fails:
/// running out of budget is reported through `converged`.
pub fn nelder_mead<T, F>(mut objective: F, x0: &[T], opts: &NelderMeadOptions<T>) -> NelderMeadResult<T>
where
    T: Scalar,
    F: FnMut(&[T]) -> T,
{
    let n = x0.len();
    let mut evaluations = 0usize;
    let mut eval = |x: &[T], evaluations: &mut usize| {
        *evaluations += 1;
        let v = objective(x);
        if v.is_nan() {
            T::infinity()
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(n + 1);
    let f0 = eval(x0, &mut evaluations);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] = x[i] + opts.initial_step;
        let f = eval(&x, &mut evaluations);
        simplex.push((x, f));
    }

    let mut iterations = 0usize;
    let converged = loop {
        // stable sort keeps the initial point first among ties
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if n == 0 || (worst - best).abs() <= opts.rel_tol * (best.abs() + opts.rel_tol) {
            break true;
        }
        if evaluations >= opts.max_evaluations {
            break false;
        }
        iterations += 1;

        let mut centroid = vec![T::zero(); n];
        for (x, _) in &simplex[..n] {
            for (c, &xi) in centroid.iter_mut().zip(x) {
                *c = *c + xi;
            }
        }
        let inv = T::one() / T::from_count(n);
        centroid.iter_mut().for_each(|c| *c = *c * inv);

        let toward = |coef: f64, from: &[T]| -> Vec<T> {
            centroid
                .iter()
                .zip(from)
                .map(|(&c, &w)| c + T::lit(coef) * (c - w))
                .collect()
        };

        let worst_x = simplex[n].0.clone();
        let xr = toward(REFLECT, &worst_x);
        let fr = eval(&xr, &mut evaluations);

        if fr < best {
            let xe = toward(EXPAND, &worst_x);
            let fe = eval(&xe, &mut evaluations);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
            continue;
        }
        let (xc, fc, accept) = if fr < worst {
            let xc = toward(-CONTRACT, &xr);
            let fc = eval(&xc, &mut evaluations);
            let ok = fc <= fr;
            (xc, fc, ok)
        } else {
            let xc = toward(-CONTRACT, &worst_x);
            let fc = eval(&xc, &mut evaluations);
            let ok = fc < worst;
            (xc, fc, ok)
        };
        if accept {
            simplex[n] = (xc, fc);
            continue;
        }
        let best_x = simplex[0].0.clone();
        for (x, f) in simplex.iter_mut().skip(1) {
            for (xi, &bi) in x.iter_mut().zip(&best_x) {
                *xi = bi + T::lit(SHRINK) * (*xi - bi);
            }
            *f = eval(x, &mut evaluations);
        }
    };

    let (x, value) = simplex.swap_remove(0);
    NelderMeadResult {
        x,
        value,
        evaluations,
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let opts = NelderMeadOptions {
            initial_step: 1.0,
            rel_tol: 1e-14,
            max_evaluations: 5000,
        };
        let r = nelder_mead(|x: &[f64]| (x[0] - 3.0).powi(2) + (x[1] + 1.0).powi(2), &[0.0, 0.0], &opts);
        assert!(r.converged);
        assert!((r.x[0] - 3.0).abs() < 1e-4 && (r.x[1] + 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn constant_objective_stays_put() {
        let r = nelder_mead(|_: &[f64]| 7.0, &[1.5, -2.0, 0.25], &NelderMeadOptions::default());
        assert!(r.converged);
        assert_eq!(r.x, vec![1.5, -2.0, 0.25]);
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn rosenbrock() {
        let opts = NelderMeadOptions {
            initial_step: 0.5,
            rel_tol: 1e-16,
            max_evaluations: 20_000,
        };
        let f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let r = nelder_mead(f, &[-1.2, 1.0], &opts);
        assert!((r.x[0] - 1.0).abs() < 1e-3 && (r.x[1] - 1.0).abs() < 1e-3, "{:?}", r.x);
    }

    #[test]
    fn budget_exhaustion_reported() {
        let opts = NelderMeadOptions {
            initial_step: 0.5,
            rel_tol: 0.0,
            max_evaluations: 20,
        };
        let r = nelder_mead(|x: &[f64]| x[0] * x[0] + x[1].abs(), &[5.0, 5.0], &opts);
        assert!(!r.converged);
        assert!(r.value <= 50.0);
    }

    #[test]
    fn nan_regions_are_avoided() {
        let f = |x: &[f64]| if x[0] < 0.0 { f64::NAN } else { (x[0] - 0.5).powi(2) };
        let opts = NelderMeadOptions {
            initial_step: 1.0,
            rel_tol: 1e-14,
            max_evaluations: 2000,
        };
        let r = nelder_mead(f, &[2.0], &opts);
        assert!((r.x[0] - 0.5).abs() < 1e-5);
    }
}
