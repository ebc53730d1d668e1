//! One-particle diffusions behind the martingale change of measure.
//!
//! * the spine `dY = (ψ_x/ψ − λ)(Y) dt + dB`, which the additive martingale
//!   turns Brownian motion into;
//! * the martingale `M_t = γ′t + h(Y_t) − h(Y_0)` and its quadratic
//!   variation;
//! * the weights `Ξ_t` (additive change of measure) and `Λ_t` (its
//!   truncation at the barrier `h(B_t) = −x − γ′t`) along plain Brownian
//!   paths;
//! * hitting probabilities of the three-dimensional Bessel process.

use crate::bbmpe::crossing::hit_probability;
use crate::bbmpe::LowerBarrier;
use crate::env::PeriodicEnv;
use crate::par::map_replicates;
use crate::rng::stream;
use crate::spectral::SpectralSolution;
use crate::stats::MeanEstimate;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

/// Default Euler step.
pub const DEFAULT_DT: f64 = 1e-3;

/// Stream ids inside a replicate.
const PATH_STREAM: u64 = 0;
const CROSSING_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiffusionError {
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    PlainBm,
    Spine { lambda: f64 },
}

/// Path sampled on the uniform grid `0, dt, …, n·dt`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiffusionPath {
    pub dt: f64,
    pub kind: PathKind,
    pub y: Vec<f64>,
}

impl DiffusionPath {
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.y.len() - 1)
    }

    /// Grid index of time `t` (rounded).
    pub fn index_of(&self, t: f64) -> usize {
        ((t / self.dt).round() as usize).min(self.y.len() - 1)
    }
}

fn steps(t_end: f64, dt: f64) -> Result<usize, DiffusionError> {
    if !(dt > 0.0) || !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(DiffusionError::Config(format!("need dt > 0 and finite T >= 0, got dt = {dt}, T = {t_end}")));
    }
    Ok((t_end / dt).round() as usize)
}

/// Standard Brownian motion from `x0`.
pub fn plain_bm(x0: f64, t_end: f64, dt: f64, seed: u64, replicate: u64) -> Result<DiffusionPath, DiffusionError> {
    let n = steps(t_end, dt)?;
    let mut rng = stream(seed, replicate, PATH_STREAM);
    let sd = dt.sqrt();
    let mut y = Vec::with_capacity(n + 1);
    let mut b = x0;
    y.push(b);
    for _ in 0..n {
        b += sd * rng.sample::<f64, _>(StandardNormal);
        y.push(b);
    }
    Ok(DiffusionPath { dt, kind: PathKind::PlainBm, y })
}

/// Euler–Maruyama path of the spine diffusion at `λ = spec.lambda`.
pub fn simulate_spine(
    spec: &SpectralSolution,
    x0: f64,
    t_end: f64,
    dt: f64,
    seed: u64,
    replicate: u64,
) -> Result<DiffusionPath, DiffusionError> {
    if dt > DEFAULT_DT * (1.0 + 1e-12) {
        return Err(DiffusionError::Config(format!("spine step dt = {dt} exceeds {DEFAULT_DT}")));
    }
    let n = steps(t_end, dt)?;
    let mut rng = stream(seed, replicate, PATH_STREAM);
    let sd = dt.sqrt();
    let mut y = Vec::with_capacity(n + 1);
    let mut v = x0;
    y.push(v);
    for _ in 0..n {
        v += spec.spine_drift(v) * dt + sd * rng.sample::<f64, _>(StandardNormal);
        y.push(v);
    }
    Ok(DiffusionPath { dt, kind: PathKind::Spine { lambda: spec.lambda }, y })
}

/// `M_t = γ′t + h(Y_t) − h(Y_0)` with its discrete quadratic variation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MMartingale {
    pub dt: f64,
    pub m: Vec<f64>,
    /// Left-point sums `Σ h′(Y_s)² dt`.
    pub qv: Vec<f64>,
}

impl MMartingale {
    /// First grid time with `qv_t > s`, or `None` past the end of the path.
    pub fn time_change(&self, s: f64) -> Option<f64> {
        let k = self.qv.partition_point(|q| *q <= s);
        (k < self.qv.len()).then(|| k as f64 * self.dt)
    }
}

pub fn m_martingale(path: &DiffusionPath, spec: &SpectralSolution) -> MMartingale {
    let h0 = spec.h_at(path.y[0]);
    let m = path
        .y
        .iter()
        .enumerate()
        .map(|(k, y)| spec.gamma_prime * path.time(k) + spec.h_at(*y) - h0)
        .collect();
    let mut qv = Vec::with_capacity(path.y.len());
    let mut acc = 0.0;
    qv.push(acc);
    for y in &path.y[..path.y.len() - 1] {
        let d = spec.h_prime_at(*y);
        acc += d * d * path.dt;
        qv.push(acc);
    }
    MMartingale { dt: path.dt, m, qv }
}

/// Importance weights along a plain Brownian path, normalised to 1 at 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightTrace {
    pub dt: f64,
    pub xi: Vec<f64>,
    /// Empty unless computed by [`lambda_weight`].
    pub lambda_w: Vec<f64>,
    /// Time of the grid step in which the barrier was crossed.
    pub stopped_at: Option<f64>,
}

/// `Ξ_t/Ξ_0` with `Ξ_t = exp(−γt − λB_t + m∫g(B_s)ds) ψ(B_t)`, the time
/// integral by the trapezoid rule on the path grid.
pub fn xi_weight(path: &DiffusionPath, spec: &SpectralSolution, env: &PeriodicEnv) -> WeightTrace {
    let m = env.m();
    let lambda = spec.lambda;
    let b0 = path.y[0];
    let log0 = -lambda * b0 + spec.psi_at(b0).ln();
    let mut integral = 0.0;
    let mut g_prev = env.g(b0);
    let mut xi = Vec::with_capacity(path.y.len());
    xi.push(1.0);
    for (k, b) in path.y.iter().enumerate().skip(1) {
        let g = env.g(*b);
        integral += 0.5 * (g_prev + g) * path.dt;
        g_prev = g;
        let t = path.time(k);
        let log = -spec.gamma * t - lambda * b + m * integral + spec.psi_at(*b).ln();
        xi.push((log - log0).exp());
    }
    WeightTrace { dt: path.dt, xi, lambda_w: Vec::new(), stopped_at: None }
}

/// `Λ_t/Λ_0 = Ξ_t/Ξ_0 · (x + γ′t + h(B_t))/(x + h(B_0)) · 1{τ > t}` where
/// `τ` is the first time `B_t ≤ h⁻¹(−x − γ′t)`.
///
/// Between grid points the path is a Brownian bridge and the barrier is
/// replaced by its chord; a crossing is drawn with the bridge law using
/// the replicate's crossing stream.
pub fn lambda_weight(
    path: &DiffusionPath,
    spec: &SpectralSolution,
    env: &PeriodicEnv,
    x: f64,
    seed: u64,
    replicate: u64,
) -> Result<WeightTrace, DiffusionError> {
    let barrier = LowerBarrier::new(spec, x);
    let b0 = path.y[0];
    if !(b0 > barrier.at(0.0)) {
        return Err(DiffusionError::Config(format!(
            "start {b0} must lie above the barrier h^-1(-x) = {}",
            barrier.at(0.0)
        )));
    }
    let mut trace = xi_weight(path, spec, env);
    let mut rng = stream(seed, replicate, CROSSING_STREAM);
    let norm = x + spec.h_at(b0);
    let mut lambda_w = Vec::with_capacity(path.y.len());
    lambda_w.push(1.0);
    let mut stopped = None;
    let mut low_prev = barrier.at(0.0);
    for k in 1..path.y.len() {
        if stopped.is_none() {
            let t = path.time(k);
            let low = barrier.at(t);
            let (e0, e1) = (path.y[k - 1] - low_prev, path.y[k] - low);
            let u: f64 = rng.random();
            if u < hit_probability(e0, e1, path.dt) {
                stopped = Some(t);
            }
            low_prev = low;
        }
        let w = if stopped.is_some() {
            0.0
        } else {
            let t = path.time(k);
            trace.xi[k] * (x + spec.gamma_prime * t + spec.h_at(path.y[k])) / norm
        };
        lambda_w.push(w);
    }
    trace.lambda_w = lambda_w;
    trace.stopped_at = stopped;
    Ok(trace)
}

/// Monte-Carlo estimate with its target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub estimate: f64,
    pub se: f64,
    pub target: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_mean(m: MeanEstimate, target: f64) -> Self {
        Self { estimate: m.mean, se: m.se, target, n: m.n }
    }

    /// `|estimate − target| ≤ k·se`.
    pub fn within(&self, k: f64) -> bool {
        MeanEstimate { mean: self.estimate, se: self.se, n: self.n }.within(self.target, k)
    }
}

/// Horizon after which a Bessel path that has not yet hit `z` is closed
/// with its exact remaining hitting probability.
pub const BESSEL_HORIZON: f64 = 10.0;

/// Indicator that a Bessel-3 path started at `start` gets down to `z`.
///
/// Euler scheme for `dR = dB + dt/R`; between grid points the hit of `z` is
/// detected with the Brownian-bridge law. A path still above `z` at the
/// horizon hits later with probability `z/R`, which is drawn as a final
/// Bernoulli variable.
pub fn bessel_hits(start: f64, z: f64, dt: f64, seed: u64, replicate: u64) -> bool {
    if z >= start {
        return true;
    }
    let mut rng = stream(seed, replicate, PATH_STREAM);
    let n = (BESSEL_HORIZON / dt).round() as usize;
    let sd = dt.sqrt();
    let mut r = start;
    for _ in 0..n {
        let next = r + dt / r + sd * rng.sample::<f64, _>(StandardNormal);
        let u: f64 = rng.random();
        // a step through 0 also passes z > 0
        if next <= z || u < hit_probability(r - z, next - z, dt) {
            return true;
        }
        r = next;
    }
    rng.random::<f64>() < z / r
}

/// `P(inf_t R_t ≤ z)` for the Bessel-3 process started at `x + h(y0)`;
/// the exact value is `z / (x + h(y0))`.
pub fn bessel_hitting(
    spec: &SpectralSolution,
    x: f64,
    y0: f64,
    z: f64,
    reps: u64,
    seed: u64,
    dt: f64,
) -> Result<Estimate, DiffusionError> {
    let start = x + spec.h_at(y0);
    if !(start > 0.0) || !(z > 0.0) {
        return Err(DiffusionError::Config(format!("need z > 0 and a positive start, got start = {start}, z = {z}")));
    }
    if z >= start {
        return Ok(Estimate { estimate: 1.0, se: 0.0, target: 1.0, n: reps as usize });
    }
    let hits: Vec<f64> = map_replicates(reps, |r| if bessel_hits(start, z, dt, seed, r) { 1.0 } else { 0.0 });
    Ok(Estimate::from_mean(MeanEstimate::from_samples(&hits), z / start))
}

/// `mean(Y_T/T)` over spine replicates started at 0, against `−γ′(λ)`.
pub fn slln(spec: &SpectralSolution, t_end: f64, dt: f64, reps: u64, seed: u64) -> Result<Estimate, DiffusionError> {
    let ends: Vec<Result<f64, DiffusionError>> =
        map_replicates(reps, |r| simulate_spine(spec, 0.0, t_end, dt, seed, r).map(|p| p.y[p.y.len() - 1] / t_end));
    let ends: Vec<f64> = ends.into_iter().collect::<Result<_, _>>()?;
    Ok(Estimate::from_mean(MeanEstimate::from_samples(&ends), -spec.gamma_prime))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{GSpec, OffspringDist};

    #[test]
    fn flat_spine_has_constant_drift() {
        let env = PeriodicEnv::homogeneous_binary();
        let spec = SpectralSolution::compute(&env, 1.0, 64).unwrap();
        for x in [0.0, 0.3, 0.77] {
            assert!((spec.spine_drift(x) + 1.0).abs() < 1e-12);
        }
        let a = simulate_spine(&spec, 0.0, 1.0, 1e-3, 5, 0).unwrap();
        let b = plain_bm(0.0, 1.0, 1e-3, 5, 0).unwrap();
        // same noise, drift −1
        assert!((a.y[1000] - (b.y[1000] - 1.0)).abs() < 1e-9);
        assert!(simulate_spine(&spec, 0.0, 1.0, 2e-3, 5, 0).is_err());
    }

    #[test]
    fn flat_m_is_brownian_with_unit_clock() {
        let env = PeriodicEnv::homogeneous_binary();
        let spec = SpectralSolution::compute(&env, 1.0, 64).unwrap();
        let p = simulate_spine(&spec, 0.2, 2.0, 1e-3, 1, 0).unwrap();
        let mm = m_martingale(&p, &spec);
        for k in [0, 10, 2000] {
            let t = p.time(k);
            assert!((mm.m[k] - (t + p.y[k] - 0.2)).abs() < 1e-9);
            assert!((mm.qv[k] - t).abs() < 1e-12);
        }
        let s = mm.time_change(0.5).unwrap();
        assert!(s >= 0.5 - 1e-12 && s <= 0.501 + 1e-12);
        assert_eq!(mm.time_change(5.0), None);
    }

    #[test]
    fn flat_xi_is_the_exponential_martingale() {
        let env = PeriodicEnv::homogeneous_binary();
        let spec = SpectralSolution::compute(&env, 1.0, 64).unwrap();
        let p = plain_bm(0.0, 1.0, 1e-3, 3, 0).unwrap();
        let w = xi_weight(&p, &spec, &env);
        assert_eq!(w.xi[0], 1.0);
        for k in [1, 400, 1000] {
            let t = p.time(k);
            assert!((w.xi[k] - (-t / 2.0 - p.y[k]).exp()).abs() < 1e-10 * w.xi[k]);
        }
    }

    #[test]
    fn lambda_weight_stops_for_good() {
        let env = PeriodicEnv::homogeneous_binary();
        let spec = SpectralSolution::compute(&env, 1.0, 64).unwrap();
        let mut p = plain_bm(0.0, 1.0, 1e-3, 3, 0).unwrap();
        // force the path below the barrier −0.5 − t from t = 0.3 on
        for k in 300..p.y.len() {
            p.y[k] = -3.0;
        }
        let w = lambda_weight(&p, &spec, &env, 0.5, 3, 0).unwrap();
        assert_eq!(w.lambda_w[0], 1.0);
        let stop = w.stopped_at.unwrap();
        assert!(stop <= 0.3 + 1e-12);
        assert!(w.lambda_w[p.index_of(stop)..].iter().all(|v| *v == 0.0));
        assert!(lambda_weight(&p, &spec, &env, -0.5, 3, 0).is_err());
    }

    #[test]
    fn bessel_boundary_cases() {
        let env = PeriodicEnv::new(GSpec::sinusoid(1.0, 0.5), 64, OffspringDist::binary()).unwrap();
        let spec = SpectralSolution::compute(&env, 1.0, 64).unwrap();
        let start = 2.0 + spec.h_at(0.1);
        let e = bessel_hitting(&spec, 2.0, 0.1, start, 10, 1, 1e-3).unwrap();
        assert_eq!(e.estimate, 1.0);
        assert!(bessel_hits(1.0, 1.5, 1e-3, 0, 0));
    }
}
