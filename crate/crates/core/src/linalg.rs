//! Dense least squares by Householder QR.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Config("ragged rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct LeastSquares<T> {
    pub solution: Vec<T>,
    pub residual_norm: T,
    /// Ratio of smallest to largest `|R_ii|`.
    pub reciprocal_condition: T,
}

/// Solves `min ‖A x − b‖₂` for a tall matrix. Columns are scaled to unit
/// norm before factorizing; fails when the scaled matrix is numerically
/// rank deficient (`min |R_ii| ≤ rcond_floor · max |R_ii|`).
pub fn least_squares<T: Scalar>(a: &Matrix<T>, b: &[T], rcond_floor: T) -> Result<LeastSquares<T>> {
    let (m, n) = (a.rows, a.cols);
    if b.len() != m {
        return Err(Error::Config(format!("rhs has {} rows, matrix has {m}", b.len())));
    }
    if m < n || n == 0 {
        return Err(Error::Solver(format!("system is {m}x{n}; need rows >= cols > 0")));
    }
    let mut r = a.clone();
    let col_scale: Vec<T> = (0..n)
        .map(|j| {
            let norm = (0..m).map(|i| a.get(i, j).powi(2)).sum::<T>().sqrt();
            if norm > T::zero() && norm.is_finite() {
                norm
            } else {
                T::one()
            }
        })
        .collect();
    for i in 0..m {
        for (j, &s) in col_scale.iter().enumerate() {
            r.set(i, j, r.get(i, j) / s);
        }
    }
    let mut rhs = b.to_vec();
    for k in 0..n {
        let norm = (k..m).map(|i| r.get(i, k).powi(2)).sum::<T>().sqrt();
        if norm == T::zero() {
            continue;
        }
        let alpha = if r.get(k, k) > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = (k..m).map(|i| r.get(i, k)).collect();
        v[0] = v[0] - alpha;
        let vnorm2: T = v.iter().map(|&x| x * x).sum();
        if vnorm2 == T::zero() {
            continue;
        }
        let scale = T::lit(2.0) / vnorm2;
        for j in k..n {
            let dot: T = v.iter().enumerate().map(|(i, &vi)| vi * r.get(k + i, j)).sum();
            let f = dot * scale;
            for (i, &vi) in v.iter().enumerate() {
                r.set(k + i, j, r.get(k + i, j) - f * vi);
            }
        }
        let dot: T = v.iter().enumerate().map(|(i, &vi)| vi * rhs[k + i]).sum();
        let f = dot * scale;
        for (i, &vi) in v.iter().enumerate() {
            rhs[k + i] = rhs[k + i] - f * vi;
        }
    }

    let diag: Vec<T> = (0..n).map(|k| r.get(k, k).abs()).collect();
    let dmax = diag.iter().copied().fold(T::zero(), T::max);
    let dmin = diag.iter().copied().fold(T::infinity(), T::min);
    let reciprocal_condition = if dmax > T::zero() { dmin / dmax } else { T::zero() };
    if !(reciprocal_condition > rcond_floor) {
        return Err(Error::Solver(format!(
            "collocation matrix is numerically rank deficient (rcond {reciprocal_condition})"
        )));
    }

    let mut x = vec![T::zero(); n];
    for k in (0..n).rev() {
        let s: T = ((k + 1)..n).map(|j| r.get(k, j) * x[j]).sum();
        x[k] = (rhs[k] - s) / r.get(k, k);
    }
    for (xj, &s) in x.iter_mut().zip(&col_scale) {
        *xj = *xj / s;
    }
    let residual_norm = rhs[n..].iter().map(|&v| v * v).sum::<T>().sqrt();
    Ok(LeastSquares {
        solution: x,
        residual_norm,
        reciprocal_condition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_square_system() {
        let a = Matrix::from_rows(vec![vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let ls = least_squares(&a, &[3.0, 5.0], 1e-12).unwrap();
        assert_relative_eq!(ls.solution[0], 0.8, max_relative = 1e-14);
        assert_relative_eq!(ls.solution[1], 1.4, max_relative = 1e-14);
        assert!(ls.residual_norm < 1e-14);
    }

    #[test]
    fn line_fit_matches_normal_equations() {
        let xs = [0.0, 1.0, 2.0, 3.0, 4.0];
        let ys = [1.1, 2.9, 5.2, 7.1, 8.8];
        let a = Matrix::from_rows(xs.iter().map(|&x| vec![1.0, x]).collect()).unwrap();
        let ls = least_squares(&a, &ys, 1e-12).unwrap();
        let n = xs.len() as f64;
        let (sx, sy) = (xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let icpt = (sy - slope * sx) / n;
        assert_relative_eq!(ls.solution[0], icpt, max_relative = 1e-12);
        assert_relative_eq!(ls.solution[1], slope, max_relative = 1e-12);
        let fitted = a.mul_vec(&ls.solution);
        let rss: f64 = fitted.iter().zip(&ys).map(|(f, y)| (f - y).powi(2)).sum();
        assert_relative_eq!(ls.residual_norm, rss.sqrt(), max_relative = 1e-10);
    }

    #[test]
    fn badly_scaled_columns_are_fine() {
        let a = Matrix::from_rows(vec![vec![1e-12, 1e9], vec![2e-12, -1e9], vec![0.0, 3e9]]).unwrap();
        let ls = least_squares(&a, &[1.0, 2.0, 0.0], 1e-12).unwrap();
        let fitted = a.mul_vec(&ls.solution);
        let rss: f64 = fitted.iter().zip(&[1.0f64, 2.0, 0.0]).map(|(f, y)| (f - y).powi(2)).sum();
        assert_relative_eq!(ls.residual_norm, rss.sqrt(), max_relative = 1e-8);
        assert!(ls.reciprocal_condition > 0.1);
    }

    #[test]
    fn rank_deficiency_detected() {
        let a = Matrix::from_rows(vec![vec![1.0, 2.0], vec![2.0, 4.0], vec![3.0, 6.0]]).unwrap();
        assert!(matches!(least_squares(&a, &[1.0, 2.0, 3.0], 1e-12), Err(Error::Solver(_))));
    }
}
