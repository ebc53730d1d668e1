//! Interpolation of 1-periodic grid functions.

use crate::linalg::solve_cyclic_tridiagonal;

/// Periodic C² cubic spline through `n` equispaced samples on `[0, 1)`.
///
/// Sample `j` sits at `x = j / n`; the spline has period 1.
#[derive(Debug, Clone)]
pub struct PeriodicSpline {
    values: Vec<f64>,
    second: Vec<f64>,
}

impl PeriodicSpline {
    /// Builds the spline. Requires at least 2 samples; with 2 samples the
    /// interpolant degenerates to a piecewise cubic through both points.
    pub fn new(values: &[f64]) -> Self {
        let n = values.len();
        assert!(n >= 2, "periodic spline needs at least two samples");
        let second = if n < 3 || values.iter().all(|v| *v == values[0]) {
            vec![0.0; n]
        } else {
            let h = 1.0 / n as f64;
            let lower = vec![h / 6.0; n];
            let upper = vec![h / 6.0; n];
            let diag = vec![2.0 * h / 3.0; n];
            let rhs: Vec<f64> = (0..n)
                .map(|j| (values[(j + 1) % n] - 2.0 * values[j] + values[(j + n - 1) % n]) / h)
                .collect();
            solve_cyclic_tridiagonal(&lower, &diag, &upper, &rhs)
                .expect("periodic spline system is diagonally dominant")
        };
        Self { values: values.to_vec(), second }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    fn locate(&self, x: f64) -> (usize, usize, f64, f64) {
        let n = self.values.len();
        let h = 1.0 / n as f64;
        let s = x.rem_euclid(1.0) * n as f64;
        let mut j = s.floor() as usize;
        let mut frac = s - j as f64;
        if j >= n {
            j = n - 1;
            frac = 1.0;
        }
        (j, (j + 1) % n, frac, h)
    }

    /// Value at any real `x` (periodic extension).
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let (j0, j1, t, h) = self.locate(x);
        let a = 1.0 - t;
        let (y0, y1) = (self.values[j0], self.values[j1]);
        let (m0, m1) = (self.second[j0], self.second[j1]);
        a * y0 + t * y1 + ((a * a * a - a) * m0 + (t * t * t - t) * m1) * h * h / 6.0
    }

    /// First derivative at `x`.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        let (j0, j1, t, h) = self.locate(x);
        let a = 1.0 - t;
        let (y0, y1) = (self.values[j0], self.values[j1]);
        let (m0, m1) = (self.second[j0], self.second[j1]);
        (y1 - y0) / h + (-(3.0 * a * a - 1.0) * m0 + (3.0 * t * t - 1.0) * m1) * h / 6.0
    }
}

/// Piecewise-linear periodic interpolation of equispaced samples on `[0, 1)`.
///
/// Interpolated values never leave the range of the samples.
#[inline]
pub fn periodic_linear(values: &[f64], x: f64) -> f64 {
    let n = values.len();
    let s = x.rem_euclid(1.0) * n as f64;
    let j = (s.floor() as usize).min(n - 1);
    let t = (s - j as f64).clamp(0.0, 1.0);
    (1.0 - t) * values[j] + t * values[(j + 1) % n]
}
