//! Stopping lines `y + νt = x` and the martingales read off them.

use super::crossing::{hit_probability, sample_hit_time};
use super::{Engine, Fate, SimConfig, SimError};
use crate::env::PeriodicEnv;
use crate::interp::PeriodicSpline;
use crate::par::try_map_replicates;
use crate::rng::StreamRng;
use crate::spectral::{SpectralSolution, SpeedResult};
use rand::Rng;
use serde::Serialize;

const H_INVERSE_SAMPLES: usize = 512;

/// Lower absorbing barrier `y = h⁻¹(−x − γ′(λ*) t)`.
#[derive(Debug, Clone)]
pub struct LowerBarrier {
    pub x_trunc: f64,
    pub lambda_star: f64,
    pub gamma_prime: f64,
    /// Periodic part `h⁻¹(v) − v`; `None` when `h` is the identity.
    offset: Option<PeriodicSpline>,
}

impl LowerBarrier {
    pub fn new(spec_star: &SpectralSolution, x_trunc: f64) -> Self {
        let flat = spec_star.psi_lambda.iter().all(|v| v.abs() < 1e-12);
        let offset = (!flat).then(|| {
            let q: Vec<f64> = (0..H_INVERSE_SAMPLES)
                .map(|j| {
                    let v = j as f64 / H_INVERSE_SAMPLES as f64;
                    spec_star.h_inverse(v) - v
                })
                .collect();
            PeriodicSpline::new(&q)
        });
        Self { x_trunc, lambda_star: spec_star.lambda, gamma_prime: spec_star.gamma_prime, offset }
    }

    /// Barrier position at time `t`.
    #[inline]
    pub fn at(&self, t: f64) -> f64 {
        let v = -self.x_trunc - self.gamma_prime * t;
        match &self.offset {
            Some(q) => v + q.eval(v),
            None => v,
        }
    }

    pub fn is_linear(&self) -> bool {
        self.offset.is_none()
    }
}

/// The barrier `y + νt = x`, optionally with a lower absorbing barrier.
#[derive(Debug, Clone)]
pub struct StoppingLine {
    pub x: f64,
    pub nu: f64,
    pub lower: Option<LowerBarrier>,
}

impl StoppingLine {
    /// Rejects speeds below `ν*`, for which some lines of descent never
    /// meet the barrier.
    pub fn new(x: f64, nu: f64, speed: &SpeedResult) -> Result<Self, SimError> {
        if !(nu >= speed.nu_star * (1.0 - 1e-9)) {
            return Err(SimError::Config(format!("nu = {nu} is below the minimal speed {}", speed.nu_star)));
        }
        Ok(Self { x, nu, lower: None })
    }

    pub fn with_lower(mut self, lower: LowerBarrier) -> Self {
        self.lower = Some(lower);
        self
    }

    pub(super) fn step_cap(&self, barrier_dt: f64) -> Option<f64> {
        self.lower.as_ref().filter(|l| !l.is_linear()).map(|_| barrier_dt)
    }

    /// Crossing test over one path step. A curved lower barrier is replaced
    /// by its chord over the step. When both barriers are crossed the
    /// earlier sampled time wins.
    pub(super) fn check(&self, t0: f64, x0: f64, t1: f64, x1: f64, rng: &mut StreamRng) -> Option<Fate> {
        let dt = t1 - t0;
        let (u_hit, u_time): (f64, f64) = (rng.random(), rng.random());
        let d0 = self.x - self.nu * t0 - x0;
        let d1 = self.x - self.nu * t1 - x1;
        let upper = (u_hit < hit_probability(d0, d1, dt)).then(|| t0 + sample_hit_time(d0, d1, dt, u_time));
        let lower = self.lower.as_ref().and_then(|low| {
            let (u_hit, u_time): (f64, f64) = (rng.random(), rng.random());
            let (b0, b1) = (low.at(t0), low.at(t1));
            let (e0, e1) = (x0 - b0, x1 - b1);
            (u_hit < hit_probability(e0, e1, dt)).then(|| {
                let s = sample_hit_time(e0, e1, dt, u_time);
                (t0 + s, b0 + (b1 - b0) * s / dt)
            })
        });
        match (upper, lower) {
            (Some(s), Some((r, _))) if s <= r => Some(Fate::Frozen { t: s, x: self.x - self.nu * s }),
            (Some(s), None) => Some(Fate::Frozen { t: s, x: self.x - self.nu * s }),
            (_, Some((r, y))) => Some(Fate::Absorbed { t: r, x: y }),
            (None, None) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hit {
    pub id: u64,
    pub sigma: f64,
    pub position: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LowerRecord {
    pub x_trunc: f64,
    pub lambda_star: f64,
    pub absorbed: Vec<Hit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Barrier {
    pub x: f64,
    pub nu: f64,
}

/// Particles stopped at the line, in stopping order of processing.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StoppingLineRecord {
    pub barrier: Barrier,
    pub start: f64,
    pub replicate: u64,
    pub hits: Vec<Hit>,
    pub lower_barrier: Option<LowerRecord>,
    pub particles_created: u64,
}

/// Runs one replicate from a single particle at `x0` until every particle
/// is stopped at the line (or absorbed at the lower barrier).
pub fn stopping_line(
    env: &PeriodicEnv,
    line: &StoppingLine,
    x0: f64,
    seed: u64,
    replicate: u64,
    cfg: &SimConfig,
) -> Result<StoppingLineRecord, SimError> {
    if !(x0 < line.x) {
        return Err(SimError::Config(format!("start {x0} must lie strictly left of the line x = {}", line.x)));
    }
    if let Some(low) = &line.lower {
        if !(x0 > low.at(0.0)) {
            return Err(SimError::Config(format!(
                "start {x0} must lie above the lower barrier h^-1(-x) = {}",
                low.at(0.0)
            )));
        }
    }
    let mut engine = Engine {
        env,
        rate: cfg.rate(env)?,
        seed,
        replicate,
        cfg,
        line: Some(line),
        acc: None,
        particles: None,
        hits: Vec::new(),
        absorbed: Vec::new(),
        survivors: 0,
        next_id: 0,
    };
    engine.run(x0)?;
    Ok(StoppingLineRecord {
        barrier: Barrier { x: line.x, nu: line.nu },
        start: x0,
        replicate,
        hits: engine.hits,
        lower_barrier: line.lower.as_ref().map(|low| LowerRecord {
            x_trunc: low.x_trunc,
            lambda_star: low.lambda_star,
            absorbed: engine.absorbed,
        }),
        particles_created: engine.next_id,
    })
}

/// Replicates `0..reps` of [`stopping_line`].
pub fn stopping_lines(
    env: &PeriodicEnv,
    line: &StoppingLine,
    x0: f64,
    seed: u64,
    reps: u64,
    cfg: &SimConfig,
) -> Result<Vec<StoppingLineRecord>, SimError> {
    try_map_replicates(reps, |r| stopping_line(env, line, x0, seed, r, cfg))
}

/// `W_{C(x,ν)}(λ) = e^{−λx} Σ ψ(X_u(σ_u), λ)`, valid when `ν = γ(λ)/λ`.
pub fn line_additive(record: &StoppingLineRecord, spec: &SpectralSolution) -> Result<f64, SimError> {
    let nu = spec.gamma / spec.lambda;
    if (nu - record.barrier.nu).abs() > 1e-8 {
        return Err(SimError::Config(format!(
            "line speed {} does not match gamma/lambda = {nu} at lambda = {}",
            record.barrier.nu, spec.lambda
        )));
    }
    let sum: f64 = record.hits.iter().map(|h| spec.psi_at(h.position)).sum();
    Ok((-spec.lambda * record.barrier.x).exp() * sum)
}

/// `Π u(−σ_u, X_u(σ_u))` over the stopped particles, summed in log space.
/// Returns 0 as soon as one factor is not positive.
pub fn product_martingale(record: &StoppingLineRecord, wave: impl Fn(f64, f64) -> f64) -> f64 {
    let mut log_sum = 0.0;
    for h in &record.hits {
        let u = wave(-h.sigma, h.position);
        if !(u > 0.0) {
            return 0.0;
        }
        log_sum += u.ln();
    }
    log_sum.exp()
}

/// `V = Σ e^{−λ*z} ψ(X)(x + z − ψ_λ/ψ(X))` over the particles stopped at
/// the upper line `y + ν*t = z`; absorbed particles contribute nothing.
pub fn line_v_martingale(record: &StoppingLineRecord, spec_star: &SpectralSolution) -> Result<f64, SimError> {
    let lower = record
        .lower_barrier
        .as_ref()
        .ok_or_else(|| SimError::Config("record has no lower barrier".into()))?;
    let z = record.barrier.x;
    let x = lower.x_trunc;
    let sum: f64 = record
        .hits
        .iter()
        .map(|h| spec_star.psi_at(h.position) * (x + z - spec_star.ratio_at(h.position)))
        .sum();
    Ok((-spec_star.lambda * z).exp() * sum)
}

/// Value of the `V` martingale for a single particle at `y` before any
/// stopping: `e^{−λ*y} ψ(y) (x + h(y))`.
pub fn v_initial(spec_star: &SpectralSolution, x_trunc: f64, y: f64) -> f64 {
    spec_star.phi(y) * (x_trunc + spec_star.h_at(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{GSpec, OffspringDist};
    use crate::spectral::minimal_speed;

    fn homogeneous_speed() -> SpeedResult {
        SpeedResult { nu_star: 2f64.sqrt(), lambda_star: 2f64.sqrt(), residual: 0.0 }
    }

    fn empty(x: f64, nu: f64) -> StoppingLineRecord {
        StoppingLineRecord {
            barrier: Barrier { x, nu },
            start: 0.0,
            replicate: 0,
            hits: vec![],
            lower_barrier: Some(LowerRecord { x_trunc: 5.0, lambda_star: 2f64.sqrt(), absorbed: vec![] }),
            particles_created: 1,
        }
    }

    #[test]
    fn empty_records() {
        let env = PeriodicEnv::homogeneous_binary();
        let spec = SpectralSolution::compute(&env, 1.0, 32).unwrap();
        let star = SpectralSolution::compute(&env, 2f64.sqrt(), 32).unwrap();
        let rec = empty(2.0, spec.gamma);
        assert_eq!(line_additive(&rec, &spec).unwrap(), 0.0);
        assert_eq!(product_martingale(&rec, |_, _| 0.3), 1.0);
        assert_eq!(line_v_martingale(&rec, &star).unwrap(), 0.0);
    }

    #[test]
    fn formulas_on_a_single_hit() {
        let env = PeriodicEnv::homogeneous_binary();
        let star = SpectralSolution::compute(&env, 2f64.sqrt(), 32).unwrap();
        let mut rec = empty(3.0, star.gamma_prime);
        rec.hits.push(Hit { id: 4, sigma: 0.5, position: 3.0 - 0.5 * star.gamma_prime });
        let v = line_v_martingale(&rec, &star).unwrap();
        let want = (-2f64.sqrt() * 3.0).exp() * 8.0;
        assert!((v - want).abs() < 1e-10 * want);
        assert_eq!(product_martingale(&rec, |_, _| 1.0), 1.0);
        assert_eq!(product_martingale(&rec, |_, _| 0.0), 0.0);
        assert!((v_initial(&star, 5.0, 0.0) - 5.0).abs() < 1e-10);
    }

    #[test]
    fn mismatched_speed_is_rejected() {
        let env = PeriodicEnv::homogeneous_binary();
        let spec = SpectralSolution::compute(&env, 1.0, 32).unwrap();
        let rec = empty(2.0, 1.6);
        assert!(matches!(line_additive(&rec, &spec), Err(SimError::Config(_))));
        let mut rec = empty(2.0, 1.5);
        rec.lower_barrier = None;
        assert!(line_v_martingale(&rec, &spec).is_err());
    }

    #[test]
    fn slow_lines_and_bad_starts_are_rejected() {
        let speed = homogeneous_speed();
        assert!(StoppingLine::new(2.0, 1.0, &speed).is_err());
        let env = PeriodicEnv::homogeneous_binary();
        let line = StoppingLine::new(2.0, 1.5, &speed).unwrap();
        let cfg = SimConfig::default();
        assert!(stopping_line(&env, &line, 2.0, 1, 0, &cfg).is_err());
        let star = SpectralSolution::compute(&env, 2f64.sqrt(), 32).unwrap();
        let line = line.with_lower(LowerBarrier::new(&star, 1.0));
        assert!(stopping_line(&env, &line, -1.5, 1, 0, &cfg).is_err());
    }

    #[test]
    fn immediate_crossing() {
        let env = PeriodicEnv::homogeneous_binary();
        let line = StoppingLine::new(1e-6, 1.5, &homogeneous_speed()).unwrap();
        let rec = stopping_line(&env, &line, 0.0, 11, 0, &SimConfig::default()).unwrap();
        assert_eq!(rec.hits.len(), 1);
        assert!(rec.hits[0].sigma < 1e-3);
        assert!(rec.hits[0].position.abs() < 1e-3);
    }

    #[test]
    fn curved_lower_barrier_inverts_h() {
        let env = PeriodicEnv::new(GSpec::sinusoid(1.0, 0.5), 64, OffspringDist::binary()).unwrap();
        let speed = minimal_speed(&env).unwrap();
        let star = SpectralSolution::compute(&env, speed.lambda_star, 128).unwrap();
        let low = LowerBarrier::new(&star, 2.0);
        assert!(!low.is_linear());
        for k in 0..20 {
            let t = 0.137 * k as f64;
            let y = low.at(t);
            assert!((star.h_at(y) - (-2.0 - star.gamma_prime * t)).abs() < 1e-8);
        }
    }
}
