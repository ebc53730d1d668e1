//! Small banded and dense solvers used by the eigen and PDE code.

use nalgebra::{DMatrix, DVector};

/// Solves a tridiagonal system with the Thomas algorithm.
///
/// `lower[i]` multiplies `x[i-1]` in row `i` (`lower[0]` unused), `upper[i]`
/// multiplies `x[i+1]` (`upper[n-1]` unused). Returns `None` on a zero pivot.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Option<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv == 0.0 {
        return None;
    }
    c[0] = if n > 1 { upper[0] / piv } else { 0.0 };
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - lower[i] * c[i - 1];
        if piv == 0.0 {
            return None;
        }
        if i + 1 < n {
            c[i] = upper[i] / piv;
        }
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / piv;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    Some(d)
}

/// Periodic (cyclic) tridiagonal system: row `i` couples `x[i-1]`, `x[i]`,
/// `x[i+1]` with indices taken modulo `n`.
///
/// Solved with the Sherman–Morrison correction of the Thomas algorithm.
/// Requires `n >= 3`.
pub fn solve_cyclic_tridiagonal(
    lower: &[f64],
    diag: &[f64],
    upper: &[f64],
    rhs: &[f64],
) -> Option<Vec<f64>> {
    let n = diag.len();
    debug_assert!(n >= 3);
    let alpha = upper[n - 1]; // row n-1, column 0
    let beta = lower[0]; // row 0, column n-1
    let gamma = -diag[0];
    let mut bb = diag.to_vec();
    bb[0] -= gamma;
    bb[n - 1] -= alpha * beta / gamma;
    let x = solve_tridiagonal(lower, &bb, upper, rhs)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = alpha;
    let z = solve_tridiagonal(lower, &bb, upper, &u)?;
    let fact = (x[0] + beta * x[n - 1] / gamma) / (1.0 + z[0] + beta * z[n - 1] / gamma);
    if !fact.is_finite() {
        return None;
    }
    Some(x.iter().zip(&z).map(|(xi, zi)| xi - fact * zi).collect())
}

/// Dense LU solve returning the solution together with an estimate of the
/// 1-norm condition number (Hager's method on the LU factors).
pub fn solve_dense_with_condition(a: DMatrix<f64>, b: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = a.nrows();
    let norm_a = (0..n)
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let lu = a.lu();
    let x = lu.solve(&DVector::from_column_slice(b))?;
    if x.iter().any(|v| !v.is_finite()) {
        return None;
    }

    // Hager / Higham estimate of ||A^{-1}||_1.
    let mut v = DVector::from_element(n, 1.0 / n as f64);
    let mut est = 0.0;
    for _ in 0..5 {
        let y = lu.solve(&v)?;
        let new_est: f64 = y.iter().map(|e| e.abs()).sum();
        let xi = y.map(|e| if e >= 0.0 { 1.0 } else { -1.0 });
        let z = lu.solve_transpose(&xi)?;
        let (jmax, zmax) = z
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |acc, (j, e)| if e.abs() > acc.1 { (j, e.abs()) } else { acc });
        if new_est <= est || zmax <= z.dot(&v) {
            est = est.max(new_est);
            break;
        }
        est = new_est;
        v = DVector::zeros(n);
        v[jmax] = 1.0;
    }
    Some((x.iter().copied().collect(), norm_a * est))
}

/// Helper used by `solve_dense_with_condition`: nalgebra's LU does not expose
/// a transposed solve, so it is provided here.
trait LuTransposeSolve {
    fn solve_transpose(&self, b: &DVector<f64>) -> Option<DVector<f64>>;
}

impl LuTransposeSolve for nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn> {
    fn solve_transpose(&self, b: &DVector<f64>) -> Option<DVector<f64>> {
        // A = P^T L U  =>  A^T = U^T L^T P, so A^T x = b is U^T L^T (P x) = b.
        let l = self.l();
        let u = self.u();
        let w = u.transpose().solve_lower_triangular(b)?;
        let mut px = l.transpose().solve_upper_triangular(&w)?;
        // Undo the row permutation: px = P x.
        self.p().inv_permute_rows(&mut px);
        Some(px)
    }
}
