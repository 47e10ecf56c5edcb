//! Clamped B-spline bases: Cox–de Boor evaluation and exact integrals.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAX_ORDER: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct SplineBasis<T> {
    order: usize,
    knots: Vec<T>,
}

impl<T: Scalar> SplineBasis<T> {
    /// Clamped basis of the given order (degree + 1) on strictly increasing
    /// `breakpoints`; the end breakpoints are repeated `order` times.
    pub fn clamped(order: usize, breakpoints: &[T]) -> Result<Self> {
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(Error::Config(format!("spline order must be in 1..={MAX_ORDER}")));
        }
        if breakpoints.len() < 2 {
            return Err(Error::Config("need at least two breakpoints".into()));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config("breakpoints must be strictly increasing".into()));
        }
        let (first, last) = (breakpoints[0], *breakpoints.last().expect("nonempty"));
        let mut knots = vec![first; order];
        knots.extend_from_slice(&breakpoints[1..breakpoints.len() - 1]);
        knots.extend(std::iter::repeat(last).take(order));
        Ok(Self { order, knots })
    }

    /// `k` functions of the given order on `[0, span]`, with interior knots
    /// log-spaced from `first_knot` upwards. Falls back to uniform spacing
    /// when `span ≤ first_knot`.
    pub fn geometric(order: usize, k: usize, first_knot: T, span: T) -> Result<Self> {
        if k < order {
            return Err(Error::Config(format!("need k >= order, got k={k}, order={order}")));
        }
        if !(span > T::zero()) {
            return Err(Error::Domain(format!("span must be > 0, got {span}")));
        }
        let interior = k - order;
        let mut bp = Vec::with_capacity(interior + 2);
        bp.push(T::zero());
        if interior > 0 {
            let denom = T::from_count(interior);
            if span > first_knot && first_knot > T::zero() {
                let ratio = span / first_knot;
                bp.extend((0..interior).map(|j| first_knot * ratio.powf(T::from_count(j) / denom)));
            } else {
                let step = span / (denom + T::one());
                bp.extend((1..=interior).map(|j| step * T::from_count(j)));
            }
        }
        bp.push(span);
        Self::clamped(order, &bp)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn knots(&self) -> &[T] {
        &self.knots
    }

    /// Number of basis functions.
    pub fn len(&self) -> usize {
        self.knots.len() - self.order
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn start(&self) -> T {
        self.knots[0]
    }

    pub fn end(&self) -> T {
        *self.knots.last().expect("nonempty knots")
    }

    /// Distinct knot values (the polynomial pieces' boundaries).
    pub fn breakpoints(&self) -> Vec<T> {
        let mut bp = self.knots.clone();
        bp.dedup();
        bp
    }

    /// Support `[t_j, t_{j+order}]` of basis function `j`.
    pub fn support(&self, j: usize) -> (T, T) {
        (self.knots[j], self.knots[j + self.order])
    }

    fn span_index(&self, t: T) -> usize {
        let p = self.order - 1;
        let n = self.len();
        if t >= self.knots[n] {
            return n - 1;
        }
        // last μ in [p, n) with knots[μ] ≤ t
        let idx = self.knots[..=n].partition_point(|&k| k <= t);
        idx.saturating_sub(1).clamp(p, n - 1)
    }

    /// Values of the `order` possibly nonzero basis functions at `t`,
    /// written to `out`; returns the index of the first one.
    pub fn nonzero_into(&self, t: T, out: &mut Vec<T>) -> usize {
        let p = self.order - 1;
        let mu = self.span_index(t);
        out.clear();
        out.resize(self.order, T::zero());
        out[0] = T::one();
        let mut left = [T::zero(); MAX_ORDER];
        let mut right = [T::zero(); MAX_ORDER];
        for j in 1..=p {
            left[j] = t - self.knots[mu + 1 - j];
            right[j] = self.knots[mu + j] - t;
            let mut saved = T::zero();
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom > T::zero() { out[r] / denom } else { T::zero() };
                out[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            out[j] = saved;
        }
        mu - p
    }

    /// All `k` basis values at `t` (Cox–de Boor).
    pub fn eval(&self, t: T) -> Result<Vec<T>> {
        self.check_domain(t)?;
        let mut local = Vec::with_capacity(self.order);
        let first = self.nonzero_into(t, &mut local);
        let mut all = vec![T::zero(); self.len()];
        all[first..first + self.order].copy_from_slice(&local);
        Ok(all)
    }

    /// `∫_{start}^{upper} B_j` for every `j`, exact up to rounding: each
    /// polynomial piece is integrated with an `order`-point Gauss–Legendre
    /// rule, exact for degree `2·order − 1`.
    pub fn integrals(&self, upper: T) -> Result<Vec<T>> {
        self.check_domain(upper)?;
        let (nodes, weights) = gauss_legendre::<T>(self.order);
        let mut out = vec![T::zero(); self.len()];
        let mut local = Vec::with_capacity(self.order);
        let bp = self.breakpoints();
        for w in bp.windows(2) {
            let a = w[0];
            if a >= upper {
                break;
            }
            let b = w[1].min(upper);
            let half = (b - a) * T::lit(0.5);
            let mid = a + half;
            for (&x, &wt) in nodes.iter().zip(&weights) {
                let first = self.nonzero_into(mid + half * x, &mut local);
                for (i, &v) in local.iter().enumerate() {
                    out[first + i] = out[first + i] + wt * half * v;
                }
            }
        }
        Ok(out)
    }

    /// `B(t)ᵀ coef`.
    pub fn combine(&self, t: T, coef: &[T]) -> T {
        let mut local = Vec::with_capacity(self.order);
        let first = self.nonzero_into(t, &mut local);
        local.iter().zip(&coef[first..]).map(|(&b, &c)| b * c).sum()
    }

    fn check_domain(&self, t: T) -> Result<()> {
        if !(t >= self.start() && t <= self.end()) {
            return Err(Error::Domain(format!(
                "{t} outside the knot span [{}, {}]",
                self.start(),
                self.end()
            )));
        }
        Ok(())
    }
}

/// Gauss–Legendre nodes and weights on `[−1, 1]` by Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre<T: Scalar>(n: usize) -> (Vec<T>, Vec<T>) {
    let mut nodes = vec![0.0f64; n];
    let mut weights = vec![0.0f64; n];
    let nf = n as f64;
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { x } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = nf * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes.into_iter().map(T::lit).collect(), weights.into_iter().map(T::lit).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn partition_of_unity() {
        let b = SplineBasis::geometric(4, 12, 1.0, 5e5).unwrap();
        for &t in &[0.0, 0.3, 1.0, 2.7, 1e3, 4.9e5, 5e5] {
            let s: f64 = b.eval(t).unwrap().iter().sum();
            assert_relative_eq!(s, 1.0, max_relative = 1e-13);
            assert!(b.eval(t).unwrap().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn piecewise_constant_indicator() {
        let b = SplineBasis::clamped(1, &[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b.eval(0.25).unwrap(), vec![1.0, 0.0]);
        assert_eq!(b.eval(0.75).unwrap(), vec![0.0, 1.0]);
    }

    #[test]
    fn integrals_sum_to_span() {
        for &(k, l) in &[(8usize, 1e3), (16, 6e5), (5, 2.0)] {
            let b = SplineBasis::geometric(4, k, 1.0, l).unwrap();
            let ints = b.integrals(l).unwrap();
            assert_relative_eq!(ints.iter().sum::<f64>(), l, max_relative = 1e-12);
            for j in 0..b.len() {
                let (a, c) = b.support(j);
                assert_relative_eq!(ints[j], (c - a) / 4.0, max_relative = 1e-11);
            }
            let half: f64 = b.integrals(l / 3.0).unwrap().iter().sum();
            assert_relative_eq!(half, l / 3.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn outside_span_rejected() {
        let b = SplineBasis::geometric(4, 8, 1.0, 10.0).unwrap();
        assert!(b.eval(-0.1).is_err());
        assert!(b.eval(10.5).is_err());
        assert!(b.integrals(11.0).is_err());
    }

    #[test]
    fn cubic_reproduces_polynomials() {
        let b = SplineBasis::clamped(4, &[0.0, 1.0, 3.0, 4.0]).unwrap();
        // t = Σ ξ_j B_j(t) with Greville abscissae ξ_j
        let knots = b.knots().to_vec();
        let greville: Vec<f64> = (0..b.len()).map(|j| (knots[j + 1] + knots[j + 2] + knots[j + 3]) / 3.0).collect();
        for &t in &[0.0, 0.5, 2.2, 4.0] {
            assert_relative_eq!(b.combine(t, &greville), t, max_relative = 1e-13, epsilon = 1e-14);
        }
    }

    #[test]
    fn gauss_legendre_exactness() {
        for n in 1..8 {
            let (x, w) = gauss_legendre::<f64>(n);
            for deg in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(&xi, &wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }
}
