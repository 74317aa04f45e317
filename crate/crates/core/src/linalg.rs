//! Small dense linear-algebra helpers over row-major `f64` buffers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solves `a x = b` for a square row-major `a` using LU with partial pivoting.
pub(crate) fn solve(n: usize, a: &[f64], b: &[f64], context: &str) -> Result<Vec<f64>> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    let m = DMatrix::from_row_slice(n, n, a);
    let rhs = DVector::from_column_slice(b);
    let x = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical {
            context: format!("{context}: singular system"),
            residual: f64::INFINITY,
            tolerance: 0.0,
        })?;
    Ok(x.iter().copied().collect())
}

/// Solves `a X = B` where `B` has `k` columns, all row-major.
pub(crate) fn solve_many(
    n: usize,
    k: usize,
    a: &[f64],
    b: &[f64],
    context: &str,
) -> Result<Vec<f64>> {
    let m = DMatrix::from_row_slice(n, n, a);
    let rhs = DMatrix::from_row_slice(n, k, b);
    let x = m.lu().solve(&rhs).ok_or_else(|| Error::Numerical {
        context: format!("{context}: singular system"),
        residual: f64::INFINITY,
        tolerance: 0.0,
    })?;
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        for j in 0..k {
            out[i * k + j] = x[(i, j)];
        }
    }
    Ok(out)
}

pub(crate) fn span(v: &[f64]) -> f64 {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    if v.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let x = solve(2, &[2.0, 1.0, 1.0, 3.0], &[3.0, 5.0], "test").unwrap();
        assert!((x[0] - 0.8).abs() < 1e-14);
        assert!((x[1] - 1.4).abs() < 1e-14);
    }

    #[test]
    fn singular_system_is_an_error() {
        assert!(solve(2, &[1.0, 1.0, 1.0, 1.0], &[1.0, 2.0], "test").is_err());
    }

    #[test]
    fn span_of_vector() {
        assert_eq!(span(&[0.25, -0.25, 0.0]), 0.5);
        assert_eq!(span(&[]), 0.0);
    }
}
