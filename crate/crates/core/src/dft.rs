//! Truncated DFT matrices and small complex linear solves shared by the
//! channel model and the classic estimators.

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use std::f64::consts::PI;

/// Truncated DFT matrix: `bins.len()` rows selected from a `k`-point DFT,
/// first `l` columns (delay taps). Entry `(r, c) = exp(-j 2π bins[r] c / k)`.
pub fn truncated_dft(bins: &[usize], k: usize, l: usize) -> Array2<Complex64> {
    let mut f = Array2::zeros((bins.len(), l));
    for (r, &bin) in bins.iter().enumerate() {
        for c in 0..l {
            let phase = -2.0 * PI * (bin as f64) * (c as f64) / (k as f64);
            f[[r, c]] = Complex64::from_polar(1.0, phase);
        }
    }
    f
}

/// Solve `A x = b` for square complex `A` by Gaussian elimination with
/// partial pivoting. Returns `None` when a pivot vanishes.
pub fn solve_complex(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Option<Array2<Complex64>> {
    let n = a.nrows();
    assert_eq!(a.ncols(), n);
    assert_eq!(b.nrows(), n);
    let m = b.ncols();
    let mut aug = Array2::<Complex64>::zeros((n, n + m));
    for i in 0..n {
        for j in 0..n {
            aug[[i, j]] = a[[i, j]];
        }
        for j in 0..m {
            aug[[i, n + j]] = b[[i, j]];
        }
    }
    for col in 0..n {
        let mut pivot = col;
        let mut best = aug[[col, col]].norm();
        for row in col + 1..n {
            let mag = aug[[row, col]].norm();
            if mag > best {
                best = mag;
                pivot = row;
            }
        }
        if best < 1e-300 {
            return None;
        }
        if pivot != col {
            for j in 0..n + m {
                let tmp = aug[[col, j]];
                aug[[col, j]] = aug[[pivot, j]];
                aug[[pivot, j]] = tmp;
            }
        }
        let inv = Complex64::new(1.0, 0.0) / aug[[col, col]];
        for j in col..n + m {
            aug[[col, j]] *= inv;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = aug[[row, col]];
            if factor.norm() == 0.0 {
                continue;
            }
            for j in col..n + m {
                let v = aug[[col, j]];
                aug[[row, j]] -= factor * v;
            }
        }
    }
    let mut x = Array2::zeros((n, m));
    for i in 0..n {
        for j in 0..m {
            x[[i, j]] = aug[[i, n + j]];
        }
    }
    Some(x)
}

/// Solve a small real symmetric system `A x = b` (used for 2x2 interpolation
/// weights). Panics on dimension mismatch, returns `None` when singular.
pub fn solve_real(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    let ac = a.mapv(|v| Complex64::new(v, 0.0));
    let bc = Array2::from_shape_fn((n, 1), |(i, _)| Complex64::new(b[i], 0.0));
    solve_complex(&ac, &bc).map(|x| Array1::from_shape_fn(n, |i| x[[i, 0]].re))
}
