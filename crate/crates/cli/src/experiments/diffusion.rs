use kppwave_core::diffusion::{
    bessel_hitting, lambda_weight, m_martingale, plain_bm, simulate_spine, slln, Estimate, DEFAULT_DT,
};
use kppwave_core::par::try_map_replicates;
use kppwave_core::spectral::{SpectralSolution, DEFAULT_GRID};
use kppwave_core::stats::MeanEstimate;
use serde::Serialize;

use super::Ctx;
use crate::config::{check, need, DiffusionParams, DiffusionWhat};
use crate::error::CliError;
use crate::report::{Check, Report};

/// `(x, y0, z)`: Bessel start `x + h(y0)`, level `z`.
pub const BESSEL_CASES: [(f64, f64, f64); 3] = [(4.0, 0.0, 1.0), (2.0, 1.0, 1.5), (2.0, 0.3, 1.2)];
/// Truncation level and starting point of the Λ weight.
const WEIGHT_X: f64 = 1.0;
const WEIGHT_START: f64 = 0.1;

#[derive(Debug, Serialize)]
struct Item {
    name: String,
    estimate: f64,
    se: f64,
    target: f64,
    n: usize,
    pass: bool,
}

impl Item {
    fn from_estimate(name: impl Into<String>, e: Estimate) -> Self {
        Self { name: name.into(), estimate: e.estimate, se: e.se, target: e.target, n: e.n, pass: e.within(3.0) }
    }
}

#[derive(Serialize)]
struct DiffusionOut {
    what: DiffusionWhat,
    lambda: f64,
    t_end: f64,
    dt: f64,
    reps: u64,
    estimates: Vec<Item>,
    /// `(c₁, c₂)` for the quadratic-variation envelope.
    qv_bounds: Option<(f64, f64)>,
    pass: bool,
}

pub fn diffusion(p: DiffusionParams, ctx: &mut Ctx) -> Result<Report, CliError> {
    let what = need(&p.what, "diffusion", "what")?;
    let lambda = need(&p.lambda, "diffusion", "lambda")?;
    check(lambda.abs() >= 1e-6 && lambda.is_finite(), "lambda", format!("need |λ| >= 1e-6, got {lambda}"))?;
    let (t_default, reps_default) = match what {
        DiffusionWhat::Slln => (50.0, 400),
        DiffusionWhat::Qv => (10.0, 50),
        DiffusionWhat::Weights => (2.0, 2000),
        DiffusionWhat::Bessel => (0.0, 4000),
    };
    let t_end = p.t_end.unwrap_or(t_default);
    let reps = p.reps.unwrap_or(reps_default);
    let dt = p.dt.unwrap_or(DEFAULT_DT);
    check(reps >= 2, "reps", format!("need at least 2 replicates, got {reps}"))?;
    check(dt > 0.0 && dt <= DEFAULT_DT, "dt", format!("need 0 < dt <= {DEFAULT_DT}, got {dt}"))?;
    check(what == DiffusionWhat::Bessel || t_end > 0.0, "T", format!("must be positive, got {t_end}"))?;
    let env = &ctx.env;
    let spec = SpectralSolution::compute(env, lambda, DEFAULT_GRID)?;
    let seed = ctx.seed;

    let mut qv_bounds = None;
    let estimates = match what {
        DiffusionWhat::Slln => vec![Item::from_estimate("slln", slln(&spec, t_end, dt, reps, seed)?)],
        DiffusionWhat::Qv => {
            let (c1, c2) = spec.qv_bounds();
            qv_bounds = Some((c1, c2));
            let inside: Vec<f64> = try_map_replicates(reps, |r| {
                let path = simulate_spine(&spec, 0.0, t_end, dt, seed, r)?;
                let mm = m_martingale(&path, &spec);
                let ok = mm.qv.iter().enumerate().all(|(k, q)| {
                    let t = path.time(k);
                    *q >= c1 * t * (1.0 - 1e-12) && *q <= c2 * t * (1.0 + 1e-12)
                });
                Ok::<_, CliError>(if ok { 1.0 } else { 0.0 })
            })?;
            let frac = inside.iter().sum::<f64>() / inside.len() as f64;
            let e = Estimate { estimate: frac, se: 0.0, target: 1.0, n: inside.len() };
            vec![Item::from_estimate("qv_envelope", e)]
        }
        DiffusionWhat::Weights => {
            let k = (t_end / dt).round() as usize;
            let pairs: Vec<(f64, f64)> = try_map_replicates(reps, |r| {
                let path = plain_bm(WEIGHT_START, t_end, dt, seed, r)?;
                let w = lambda_weight(&path, &spec, env, WEIGHT_X, seed, r)?;
                Ok::<_, CliError>((w.xi[k], w.lambda_w[k]))
            })?;
            let (xi, lw): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            vec![
                Item::from_estimate("xi_weight", Estimate::from_mean(MeanEstimate::from_samples(&xi), 1.0)),
                Item::from_estimate("lambda_weight", Estimate::from_mean(MeanEstimate::from_samples(&lw), 1.0)),
            ]
        }
        DiffusionWhat::Bessel => BESSEL_CASES
            .iter()
            .enumerate()
            .map(|(i, (x, y0, z))| {
                let e = bessel_hitting(&spec, *x, *y0, *z, reps, seed.wrapping_add(i as u64), dt)?;
                Ok(Item::from_estimate(format!("bessel_x{x}_y{y0}_z{z}"), e))
            })
            .collect::<Result<_, CliError>>()?,
    };
    let pass = estimates.iter().all(|e| e.pass);
    let mut report = ctx.report("diffusion", &p)?;
    for e in &estimates {
        report.check(Check::within_se(&e.name, e.estimate, e.se, e.target, 3.0));
    }
    let out = DiffusionOut { what, lambda, t_end, dt, reps, estimates, qv_bounds, pass };
    report.results(&out)
}
