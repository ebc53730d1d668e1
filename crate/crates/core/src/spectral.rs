//! Periodic principal eigenproblem
//!
//! ```text
//! ½ψ'' − λψ' + (½λ² + m·g)ψ = γ(λ)ψ,   ψ(x+1) = ψ(x),   ψ > 0,   ∫₀¹ψ = 1
//! ```
//!
//! discretised with second-order central differences on `N` uniform points
//! of `[0, 1)`. The principal pair is found by shifted inverse power
//! iteration; `γ'` by Richardson-refined central differences in `λ`; `ψ_λ`
//! from the bordered linear system obtained by differentiating the
//! eigen-equation in `λ`. The minimal speed `ν* = min_{λ>0} γ(λ)/λ` is found
//! by golden-section search.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::env::PeriodicEnv;
use crate::interp::{periodic_linear, PeriodicSpline};
use crate::linalg::{solve_cyclic_tridiagonal, solve_dense_with_condition};

/// Default number of grid points per period.
pub const DEFAULT_GRID: usize = 256;
/// Step used for the central difference of `γ` in `λ`.
pub const GAMMA_FD_DELTA: f64 = 1e-4;
const EIGEN_REL_TOL: f64 = 1e-12;
const EIGEN_MAX_ITER: usize = 10_000;
const EIGEN_MAX_SWEEPS: usize = 200;
const RICHARDSON_REL_TOL: f64 = 1e-6;
const MAX_CONDITION: f64 = 1e12;
const H_INVERSE_TOL: f64 = 1e-12;
const GOLDEN_WIDTH: f64 = 1e-8;
const BRACKET_LIMIT: f64 = 1e3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpectralError {
    #[error("grid must have at least 32 points, got {0}")]
    GridTooSmall(usize),
    #[error("inverse iteration did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("eigenvector has non-positive component {value} at index {index}; refine the grid")]
    NegativeComponent { index: usize, value: f64 },
    #[error("Richardson estimates of γ' disagree: {coarse} vs {fine}")]
    RichardsonMismatch { coarse: f64, fine: f64 },
    #[error("bordered system for ψ_λ is ill-conditioned (condition estimate {0:e})")]
    IllConditioned(f64),
    #[error("h' is not strictly positive: h'[{index}] = {value}")]
    NonMonotoneH { index: usize, value: f64 },
    #[error("ψ_λ is not available at |λ| < 1e-6 (got λ = {0})")]
    LambdaTooSmall(f64),
    #[error("no bracket for the minimal speed below λ = {0}")]
    NoBracket(f64),
    #[error("speed {nu} is below the minimal speed {nu_star}")]
    BelowMinimalSpeed { nu: f64, nu_star: f64 },
    #[error("linear solve failed: {0}")]
    Singular(&'static str),
}

/// Finite-difference form of the operator `½∂² − λ∂ + (½λ² + m·g)` on the
/// periodic grid.
#[derive(Debug, Clone)]
struct Operator {
    n: usize,
    dx: f64,
    /// coefficient of `ψ_{j-1}`
    lo: f64,
    /// coefficient of `ψ_{j+1}`
    up: f64,
    diag: Vec<f64>,
    /// `½λ² + m g_j`
    reaction: Vec<f64>,
}

impl Operator {
    fn new(env: &PeriodicEnv, lambda: f64, n: usize) -> Self {
        let dx = 1.0 / n as f64;
        let half_inv_dx2 = 0.5 / (dx * dx);
        let adv = lambda / (2.0 * dx);
        let m = env.m();
        let reaction: Vec<f64> = (0..n).map(|j| 0.5 * lambda * lambda + m * env.g(j as f64 * dx)).collect();
        let diag = reaction.iter().map(|r| r - 2.0 * half_inv_dx2).collect();
        Self { n, dx, lo: half_inv_dx2 + adv, up: half_inv_dx2 - adv, diag, reaction }
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.n;
        (0..n)
            .map(|j| self.lo * v[(j + n - 1) % n] + self.diag[j] * v[j] + self.up * v[(j + 1) % n])
            .collect()
    }

    fn gershgorin_upper(&self) -> f64 {
        let r = self.lo.abs() + self.up.abs();
        self.diag.iter().map(|d| d + r).fold(f64::MIN, f64::max)
    }
}

/// Periodic central difference `(v_{j+1} − v_{j−1}) / 2dx`.
fn central_diff(v: &[f64], dx: f64) -> Vec<f64> {
    let n = v.len();
    (0..n).map(|j| (v[(j + 1) % n] - v[(j + n - 1) % n]) / (2.0 * dx)).collect()
}

fn check_grid(n: usize) -> Result<(), SpectralError> {
    if n < 32 {
        Err(SpectralError::GridTooSmall(n))
    } else {
        Ok(())
    }
}

/// Principal eigenvalue and eigenvector (normalised to unit mean) of the
/// discretised periodic problem at `lambda` on `n` points.
pub fn principal_eigenpair(env: &PeriodicEnv, lambda: f64, n: usize) -> Result<(f64, Vec<f64>), SpectralError> {
    check_grid(n)?;
    let op = Operator::new(env, lambda, n);
    let sigma = op.gershgorin_upper() + 1.0;
    let lower = vec![-op.lo; n];
    let upper = vec![-op.up; n];
    let diag: Vec<f64> = op.diag.iter().map(|d| sigma - d).collect();

    let mut v = vec![1.0; n];
    let mut gamma = f64::NAN;
    for it in 0..EIGEN_MAX_ITER {
        let w = solve_cyclic_tridiagonal(&lower, &diag, &upper, &v)
            .ok_or(SpectralError::Singular("shifted operator"))?;
        let sw: f64 = w.iter().sum();
        let sv: f64 = v.iter().sum();
        let next = sigma - sv / sw;
        let mean = sw / n as f64;
        v = w.into_iter().map(|e| e / mean).collect();
        if it > 0 && (next - gamma).abs() <= EIGEN_REL_TOL * next.abs().max(1.0) {
            // Settle the eigenvector to rounding level, then read γ off the
            // summed eigen-equation: the difference part sums to zero over
            // the period, so γ Σψ = Σ (½λ² + m g_j) ψ_j with no 1/dx² terms.
            for _ in 0..EIGEN_MAX_SWEEPS {
                let w = solve_cyclic_tridiagonal(&lower, &diag, &upper, &v)
                    .ok_or(SpectralError::Singular("shifted operator"))?;
                let mean = w.iter().sum::<f64>() / n as f64;
                let w: Vec<f64> = w.into_iter().map(|e| e / mean).collect();
                let change = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                v = w;
                if change <= 4.0 * f64::EPSILON {
                    break;
                }
            }
            let sv: f64 = v.iter().sum();
            gamma = op.reaction.iter().zip(&v).map(|(c, e)| c * e).sum::<f64>() / sv;
            if let Some((index, value)) = v.iter().copied().enumerate().find(|(_, e)| !(*e > 0.0)) {
                return Err(SpectralError::NegativeComponent { index, value });
            }
            return Ok((gamma, v));
        }
        gamma = next;
    }
    Err(SpectralError::NoConvergence(EIGEN_MAX_ITER))
}

/// Principal eigenvalue only.
pub fn gamma(env: &PeriodicEnv, lambda: f64, n: usize) -> Result<f64, SpectralError> {
    principal_eigenpair(env, lambda, n).map(|(g, _)| g)
}

/// Max-norm residual `‖Lψ − γψ‖∞` of the discretised eigen-equation.
pub fn eigen_residual(env: &PeriodicEnv, lambda: f64, gamma: f64, psi: &[f64]) -> f64 {
    let op = Operator::new(env, lambda, psi.len());
    op.apply(psi)
        .iter()
        .zip(psi)
        .map(|(l, p)| (l - gamma * p).abs())
        .fold(0.0, f64::max)
}

/// `γ'(λ)` by central differences with step `1e-4`, Richardson-refined with
/// the half step.
pub fn gamma_derivative(env: &PeriodicEnv, lambda: f64, n: usize) -> Result<f64, SpectralError> {
    let d = GAMMA_FD_DELTA;
    let diff = |h: f64| -> Result<f64, SpectralError> {
        Ok((gamma(env, lambda + h, n)? - gamma(env, lambda - h, n)?) / (2.0 * h))
    };
    let coarse = diff(d)?;
    let fine = diff(d / 2.0)?;
    let refined = (4.0 * fine - coarse) / 3.0;
    if (coarse - fine).abs() > RICHARDSON_REL_TOL * refined.abs().max(1.0) {
        return Err(SpectralError::RichardsonMismatch { coarse, fine });
    }
    Ok(refined)
}

/// Solves `(L − γ)ψ_λ = γ'ψ − λψ + Dψ` together with `∫ψ_λ = 0`.
///
/// `L − γ` is singular with kernel spanned by `ψ`; the system is bordered
/// with a constant column and the mean-zero row.
pub fn psi_lambda(
    env: &PeriodicEnv,
    lambda: f64,
    gamma: f64,
    gamma_prime: f64,
    psi: &[f64],
) -> Result<Vec<f64>, SpectralError> {
    if lambda.abs() < 1e-6 {
        return Err(SpectralError::LambdaTooSmall(lambda));
    }
    let n = psi.len();
    check_grid(n)?;
    let op = Operator::new(env, lambda, n);
    let scale = 1.0 / (op.dx * op.dx);
    let mut a = DMatrix::<f64>::zeros(n + 1, n + 1);
    for j in 0..n {
        a[(j, (j + n - 1) % n)] += op.lo;
        a[(j, j)] += op.diag[j] - gamma;
        a[(j, (j + 1) % n)] += op.up;
        a[(j, n)] = scale;
        a[(n, j)] = scale / n as f64;
    }
    let dpsi = central_diff(psi, op.dx);
    let mut rhs: Vec<f64> = (0..n).map(|j| gamma_prime * psi[j] - lambda * psi[j] + dpsi[j]).collect();
    rhs.push(0.0);
    let (sol, cond) = solve_dense_with_condition(a, &rhs).ok_or(SpectralError::Singular("bordered system"))?;
    if !(cond <= MAX_CONDITION) {
        return Err(SpectralError::IllConditioned(cond));
    }
    Ok(sol[..n].to_vec())
}

/// `h = x − ψ_λ/ψ` on the grid and `h'` by periodic central differences.
pub fn h_functions(psi: &[f64], psi_lambda: &[f64]) -> Result<(Vec<f64>, Vec<f64>), SpectralError> {
    let n = psi.len();
    let dx = 1.0 / n as f64;
    let ratio: Vec<f64> = psi_lambda.iter().zip(psi).map(|(a, b)| a / b).collect();
    let h = (0..n).map(|j| j as f64 * dx - ratio[j]).collect();
    let dr = central_diff(&ratio, dx);
    let h_prime: Vec<f64> = dr.iter().map(|d| 1.0 - d).collect();
    if let Some((index, value)) = h_prime.iter().copied().enumerate().find(|(_, v)| !(*v > 0.0)) {
        return Err(SpectralError::NonMonotoneH { index, value });
    }
    Ok((h, h_prime))
}

/// Everything the other modules need at one `λ`.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralSolution {
    pub lambda: f64,
    pub grid_n: usize,
    pub gamma: f64,
    pub gamma_prime: f64,
    pub psi: Vec<f64>,
    pub psi_lambda: Vec<f64>,
    pub h: Vec<f64>,
    pub h_prime: Vec<f64>,
    #[serde(skip)]
    psi_interp: PeriodicSpline,
    #[serde(skip)]
    ratio_interp: PeriodicSpline,
    #[serde(skip)]
    drift_interp: PeriodicSpline,
    #[serde(skip)]
    ratio_bound: f64,
}

impl SpectralSolution {
    /// Computes `γ, γ', ψ, ψ_λ, h, h'` at `lambda` on `n` grid points.
    /// Requires `|λ| ≥ 1e-6` (ψ_λ is only defined off 0).
    pub fn compute(env: &PeriodicEnv, lambda: f64, n: usize) -> Result<Self, SpectralError> {
        let (gamma, psi) = principal_eigenpair(env, lambda, n)?;
        let gamma_prime = gamma_derivative(env, lambda, n)?;
        let psi_l = psi_lambda(env, lambda, gamma, gamma_prime, &psi)?;
        Self::assemble(lambda, gamma, gamma_prime, psi, psi_l)
    }

    fn assemble(
        lambda: f64,
        gamma: f64,
        gamma_prime: f64,
        psi: Vec<f64>,
        psi_lambda: Vec<f64>,
    ) -> Result<Self, SpectralError> {
        let n = psi.len();
        let dx = 1.0 / n as f64;
        let (h, h_prime) = h_functions(&psi, &psi_lambda)?;
        let ratio: Vec<f64> = psi_lambda.iter().zip(&psi).map(|(a, b)| a / b).collect();
        let dpsi = central_diff(&psi, dx);
        let drift: Vec<f64> = dpsi.iter().zip(&psi).map(|(d, p)| d / p - lambda).collect();
        let ratio_bound = ratio.iter().fold(0.0f64, |a, r| a.max(r.abs()));
        Ok(Self {
            lambda,
            grid_n: n,
            gamma,
            gamma_prime,
            psi_interp: PeriodicSpline::new(&psi),
            ratio_interp: PeriodicSpline::new(&ratio),
            drift_interp: PeriodicSpline::new(&drift),
            ratio_bound,
            psi,
            psi_lambda,
            h,
            h_prime,
        })
    }

    /// Grid abscissae `x_j = j / N`.
    pub fn grid(&self) -> Vec<f64> {
        (0..self.grid_n).map(|j| j as f64 / self.grid_n as f64).collect()
    }

    /// `ψ(x, λ)` at any real `x` (periodic cubic interpolation).
    #[inline]
    pub fn psi_at(&self, x: f64) -> f64 {
        self.psi_interp.eval(x)
    }

    /// `ψ_λ(x, λ) / ψ(x, λ)` at any real `x`.
    #[inline]
    pub fn ratio_at(&self, x: f64) -> f64 {
        self.ratio_interp.eval(x)
    }

    /// `ψ_λ(x, λ)` at any real `x`.
    pub fn psi_lambda_at(&self, x: f64) -> f64 {
        self.ratio_at(x) * self.psi_at(x)
    }

    /// `φ(x, λ) = e^{−λx} ψ(x, λ)`.
    pub fn phi(&self, x: f64) -> f64 {
        (-self.lambda * x).exp() * self.psi_at(x)
    }

    /// `h(x) = x − ψ_λ/ψ`, extended to ℝ with `h(x+1) = h(x) + 1`.
    #[inline]
    pub fn h_at(&self, x: f64) -> f64 {
        x - self.ratio_at(x)
    }

    /// `h'` by piecewise-linear interpolation of the grid values, so it
    /// stays within `[min h', max h']`.
    #[inline]
    pub fn h_prime_at(&self, x: f64) -> f64 {
        periodic_linear(&self.h_prime, x)
    }

    /// Drift `ψ_x/ψ − λ` of the spine diffusion.
    #[inline]
    pub fn spine_drift(&self, x: f64) -> f64 {
        self.drift_interp.eval(x)
    }

    /// `h⁻¹(y)` by bisection on the monotone extension of `h`.
    pub fn h_inverse(&self, y: f64) -> f64 {
        let pad = self.ratio_bound * 1.5 + 1.0;
        let (mut lo, mut hi) = (y - pad, y + pad);
        while hi - lo > H_INVERSE_TOL * y.abs().max(1.0) {
            let mid = 0.5 * (lo + hi);
            if self.h_at(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// `(min h'², max h'²)` over the grid: the constants `c₁`, `c₂` bounding
    /// the quadratic variation of the `M` martingale.
    pub fn qv_bounds(&self) -> (f64, f64) {
        let (lo, hi) = self
            .h_prime
            .iter()
            .fold((f64::MAX, f64::MIN), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        (lo * lo, hi * hi)
    }

    /// Minimum of `ψ` over the grid.
    pub fn psi_min(&self) -> f64 {
        self.psi.iter().copied().fold(f64::MAX, f64::min)
    }
}

/// Minimal wave speed and its minimiser.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedResult {
    pub nu_star: f64,
    pub lambda_star: f64,
    /// `|λ*γ'(λ*) − γ(λ*)|`
    pub residual: f64,
}

/// `ν* = min_{λ>0} γ(λ)/λ` on the default grid.
pub fn minimal_speed(env: &PeriodicEnv) -> Result<SpeedResult, SpectralError> {
    minimal_speed_on(env, DEFAULT_GRID)
}

/// `ν*` and `λ*` with the eigenproblem discretised on `n` points.
pub fn minimal_speed_on(env: &PeriodicEnv, n: usize) -> Result<SpeedResult, SpectralError> {
    let speed = |l: f64| -> Result<f64, SpectralError> { Ok(gamma(env, l, n)? / l) };

    // Bracket (lo, mid, hi) with f(mid) <= f(lo), f(hi).
    let (mut lo, mut mid, mut hi);
    let start = 0.1;
    let f0 = speed(start)?;
    let f1 = speed(2.0 * start)?;
    if f1 < f0 {
        lo = start;
        mid = 2.0 * start;
        hi = 4.0 * start;
        let mut fmid = f1;
        loop {
            let fhi = speed(hi)?;
            if fhi >= fmid {
                break;
            }
            if hi > BRACKET_LIMIT {
                return Err(SpectralError::NoBracket(BRACKET_LIMIT));
            }
            lo = mid;
            mid = hi;
            fmid = fhi;
            hi *= 2.0;
        }
    } else {
        hi = 2.0 * start;
        mid = start;
        lo = start / 2.0;
        let mut fmid = f0;
        loop {
            let flo = speed(lo)?;
            if flo >= fmid {
                break;
            }
            if lo < 1e-6 {
                return Err(SpectralError::NoBracket(lo));
            }
            hi = mid;
            mid = lo;
            fmid = flo;
            lo /= 2.0;
        }
    }
    let _ = mid;

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = lo;
    let mut b = hi;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = speed(c)?;
    let mut fd = speed(d)?;
    while b - a > GOLDEN_WIDTH {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = speed(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = speed(d)?;
        }
    }
    let lambda_star = 0.5 * (a + b);
    let g = gamma(env, lambda_star, n)?;
    let gp = gamma_derivative(env, lambda_star, n)?;
    Ok(SpeedResult { nu_star: g / lambda_star, lambda_star, residual: (lambda_star * gp - g).abs() })
}

/// The `λ ∈ (0, λ*]` with `γ(λ)/λ = ν` (the slow-decay branch), by
/// bisection; `λ*` itself when `ν` is within `1e-9` of `ν*`.
pub fn lambda_for_speed(env: &PeriodicEnv, nu: f64, speed: &SpeedResult, n: usize) -> Result<f64, SpectralError> {
    if nu < speed.nu_star * (1.0 - 1e-9) {
        return Err(SpectralError::BelowMinimalSpeed { nu, nu_star: speed.nu_star });
    }
    if nu <= speed.nu_star * (1.0 + 1e-9) {
        return Ok(speed.lambda_star);
    }
    let excess = |l: f64| -> Result<f64, SpectralError> { Ok(gamma(env, l, n)? / l - nu) };
    let mut lo = speed.lambda_star;
    while excess(lo)? < 0.0 {
        lo *= 0.5;
        if lo < 1e-8 {
            return Err(SpectralError::NoBracket(lo));
        }
    }
    let mut hi = speed.lambda_star;
    while hi - lo > 1e-12 * speed.lambda_star {
        let mid = 0.5 * (lo + hi);
        if excess(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{GSpec, OffspringDist};

    fn flat() -> PeriodicEnv {
        PeriodicEnv::new(GSpec::Constant(1.0), 16, OffspringDist::binary()).unwrap()
    }

    fn sinus() -> PeriodicEnv {
        PeriodicEnv::new(GSpec::sinusoid(1.0, 0.5), 256, OffspringDist::binary()).unwrap()
    }

    #[test]
    fn constant_environment_is_exact() {
        let env = flat();
        let (g, psi) = principal_eigenpair(&env, 1.0, 256).unwrap();
        assert!((g - 1.5).abs() < 1e-12);
        assert!(psi.iter().all(|p| (p - 1.0).abs() < 1e-10));
        let (g0, _) = principal_eigenpair(&env, 0.0, 256).unwrap();
        assert!((g0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gamma_prime_examples() {
        let env = flat();
        assert!((gamma_derivative(&env, 1.0, 256).unwrap() - 1.0).abs() < 1e-7);
        let r2 = 2f64.sqrt();
        assert!((gamma_derivative(&env, r2, 256).unwrap() - r2).abs() < 1e-7);
        assert!(gamma_derivative(&sinus(), 0.0, 256).unwrap().abs() < 1e-6);
    }

    #[test]
    fn psi_lambda_vanishes_for_constant_g() {
        let sol = SpectralSolution::compute(&flat(), 0.7, 256).unwrap();
        assert!(sol.psi_lambda.iter().all(|v| v.abs() < 1e-9));
        assert!(sol.h_prime.iter().all(|v| (v - 1.0).abs() < 1e-9));
        assert!((sol.h_inverse(2.5) - 2.5).abs() < 1e-9);
        assert!((sol.h_at(0.3) - 0.3).abs() < 1e-9);
    }

    #[test]
    fn psi_lambda_rejects_zero_lambda() {
        assert!(matches!(
            SpectralSolution::compute(&flat(), 0.0, 64),
            Err(SpectralError::LambdaTooSmall(_))
        ));
    }

    #[test]
    fn small_grid_is_rejected() {
        assert!(matches!(principal_eigenpair(&flat(), 1.0, 16), Err(SpectralError::GridTooSmall(16))));
    }

    #[test]
    fn h_inverse_round_trip() {
        let sol = SpectralSolution::compute(&sinus(), 0.5, 256).unwrap();
        for x in [-3.7, -0.2, 0.3, 0.99, 5.5] {
            assert!((sol.h_inverse(sol.h_at(x)) - x).abs() < 1e-8);
        }
        // h(x+1) = h(x) + 1
        assert!((sol.h_at(1.3) - sol.h_at(0.3) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_monotone_h_is_reported() {
        let psi = vec![1.0; 64];
        let psi_l: Vec<f64> = (0..64).map(|j| (2.0 * std::f64::consts::PI * j as f64 / 64.0).sin()).collect();
        assert!(matches!(h_functions(&psi, &psi_l), Err(SpectralError::NonMonotoneH { .. })));
    }

    #[test]
    fn minimal_speed_constant() {
        let r = minimal_speed(&flat()).unwrap();
        let r2 = 2f64.sqrt();
        assert!((r.nu_star - r2).abs() < 1e-6);
        assert!((r.lambda_star - r2).abs() < 1e-6);
        assert!(r.residual < 1e-6, "{r:?}");

        let env = PeriodicEnv::new(GSpec::Constant(0.5), 16, OffspringDist::new(vec![0.0, 0.0, 1.0]).unwrap())
            .unwrap();
        let r = minimal_speed(&env).unwrap();
        assert!((r.nu_star - (2.0f64 * 2.0 * 0.5).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn speed_inverts_on_the_slow_branch() {
        let env = flat();
        let sp = minimal_speed(&env).unwrap();
        // λ/2 + 1/λ = 1.5 has roots 1 and 2
        assert!((lambda_for_speed(&env, 1.5, &sp, 64).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(lambda_for_speed(&env, sp.nu_star, &sp, 64).unwrap(), sp.lambda_star);
        assert!(matches!(
            lambda_for_speed(&env, 1.3, &sp, 64),
            Err(SpectralError::BelowMinimalSpeed { .. })
        ));
    }
}
