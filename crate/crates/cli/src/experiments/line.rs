use kppwave_core::bbmpe::{
    line_additive, line_v_martingale, product_martingale, stopping_lines, v_initial, LowerBarrier, SimConfig,
    StoppingLine,
};
use kppwave_core::spectral::{gamma, lambda_for_speed, minimal_speed, SpectralSolution, DEFAULT_GRID};
use kppwave_core::stats::MeanEstimate;
use serde::Serialize;

use super::front::pde_wave;
use super::Ctx;
use crate::config::{check, need, LineParams};
use crate::error::CliError;
use crate::report::{Check, Report};

/// Length of the PDE run that supplies the wave for the product martingale.
const WAVE_T: f64 = 40.0;

#[derive(Serialize)]
struct Summary {
    mean: f64,
    se: f64,
    target: f64,
}

impl Summary {
    fn new(xs: &[f64], target: f64) -> Self {
        let m = MeanEstimate::from_samples(xs);
        Self { mean: m.mean, se: m.se, target }
    }

    fn check(&self, name: &str) -> Check {
        Check::within_se(name, self.mean, self.se, self.target, 3.0)
    }
}

#[derive(Serialize)]
struct LineOut {
    x: f64,
    nu: f64,
    lambda: f64,
    critical: bool,
    /// `γ(2λ) < 2γ(λ)`: the line sum has a finite second moment.
    finite_variance: bool,
    reps: u64,
    start: f64,
    mean_hits: f64,
    max_barrier_error: f64,
    /// `W_C(λ)`; only without truncation.
    additive: Option<Summary>,
    /// `Π u` over the line; only without truncation.
    product: Option<Summary>,
    /// `V` of the truncated line.
    v: Option<Summary>,
}

pub fn line(p: LineParams, ctx: &mut Ctx) -> Result<Report, CliError> {
    let x = need(&p.x, "line", "x")?;
    let nu = need(&p.nu, "line", "nu")?;
    let reps = p.reps.unwrap_or(1000);
    let x0 = p.x0.unwrap_or(0.0);
    check(reps >= 2, "reps", format!("need at least 2 replicates, got {reps}"))?;
    check(x0 < x, "x0", format!("start {x0} must lie left of the line x = {x}"))?;
    let env = &ctx.env;
    let sp = minimal_speed(env)?;
    let mut line = StoppingLine::new(x, nu, &sp)?;
    let critical = (nu / sp.nu_star - 1.0).abs() <= 1e-9;
    let star = SpectralSolution::compute(env, sp.lambda_star, DEFAULT_GRID)?;
    if let Some(trunc) = p.trunc {
        check(critical, "trunc", format!("the truncated line needs nu = nu* = {}", sp.nu_star))?;
        check(trunc > 0.0, "trunc", format!("must be positive, got {trunc}"))?;
        line = line.with_lower(LowerBarrier::new(&star, trunc));
    }
    let lambda = lambda_for_speed(env, nu, &sp, DEFAULT_GRID)?;
    let spec = if critical { star.clone() } else { SpectralSolution::compute(env, lambda, DEFAULT_GRID)? };
    let finite_variance = gamma(env, 2.0 * lambda, DEFAULT_GRID)? < 2.0 * spec.gamma;
    let records = stopping_lines(env, &line, x0, ctx.seed, reps, &SimConfig::default())?;
    ctx.artifacts.json("line_records.json", &records)?;

    let max_barrier_error = records
        .iter()
        .flat_map(|r| r.hits.iter())
        .map(|h| (h.position + nu * h.sigma - x).abs())
        .fold(0.0, f64::max);
    let mean_hits = records.iter().map(|r| r.hits.len() as f64).sum::<f64>() / reps as f64;
    let (additive, product, v) = match p.trunc {
        None => {
            let w: Vec<f64> = records.iter().map(|r| line_additive(r, &spec)).collect::<Result<_, _>>()?;
            let wave = pde_wave(env, &spec, &sp, WAVE_T)?;
            let m: Vec<f64> = records.iter().map(|r| product_martingale(r, |t, y| wave.eval(t, y))).collect();
            (Some(Summary::new(&w, spec.phi(x0))), Some(Summary::new(&m, wave.eval(0.0, x0))), None)
        }
        Some(trunc) => {
            let vs: Vec<f64> = records.iter().map(|r| line_v_martingale(r, &star)).collect::<Result<_, _>>()?;
            (None, None, Some(Summary::new(&vs, v_initial(&star, trunc, x0))))
        }
    };
    let out = LineOut { x, nu, lambda, critical, finite_variance, reps, start: x0, mean_hits, max_barrier_error, additive, product, v };

    let mut report = ctx.report("line", &p)?;
    report.check(Check::below("barrier_identity", max_barrier_error, 1e-6));
    if let Some(a) = &out.additive {
        let c = a.check("additive_mean");
        // Without a second moment the sample mean sits below the truth with
        // high probability and its SE is meaningless.
        report.check(if finite_variance { c } else { c.inconclusive() });
    }
    if let Some(m) = &out.product {
        report.check(m.check("product_mean"));
    }
    if let Some(v) = &out.v {
        report.check(v.check("v_mean"));
    }
    report.results(&out)
}
