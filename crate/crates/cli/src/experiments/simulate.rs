use kppwave_core::bbmpe::{simulate_many, Observables, ReplicateTrace, SimConfig};
use kppwave_core::spectral::{minimal_speed, SpectralSolution, DEFAULT_GRID};
use kppwave_core::stats::MeanEstimate;
use serde::Serialize;

use super::Ctx;
use crate::config::{check, need, SimulateParams};
use crate::error::CliError;
use crate::report::{Check, Report};

/// Times at which the martingale means are checked.
pub const CHECK_TIMES: [f64; 3] = [1.0, 2.0, 4.0];
const Z_95: f64 = 1.959963984540054;

#[derive(Serialize)]
struct Row {
    replicate: u64,
    t: f64,
    #[serde(rename = "N_t")]
    n_t: u64,
    #[serde(rename = "W_t")]
    w_t: f64,
    #[serde(rename = "dW_t")]
    dw_t: f64,
    m_t: f64,
}

/// Mean with a 95% normal-approximation band.
#[derive(Debug, Clone, Serialize)]
pub struct Band {
    pub t: f64,
    pub mean: f64,
    pub se: f64,
    pub lower: f64,
    pub upper: f64,
}

impl Band {
    fn new(t: f64, xs: &[f64]) -> Self {
        let m = MeanEstimate::from_samples(xs);
        Self { t, mean: m.mean, se: m.se, lower: m.mean - Z_95 * m.se, upper: m.mean + Z_95 * m.se }
    }
}

#[derive(Serialize)]
struct SimulateOut {
    lambda: f64,
    lambda_star: f64,
    nu_star: f64,
    reps: u64,
    x0: f64,
    additive_initial: f64,
    derivative_initial: f64,
    additive: Vec<Band>,
    derivative: Vec<Band>,
    count: Vec<Band>,
    minimum: Vec<Band>,
}

/// Observation times at which the means are checked: [`CHECK_TIMES`] up to
/// the horizon, or the horizon alone when it is shorter than all of them.
pub fn check_times(t_end: f64) -> Vec<f64> {
    let ts: Vec<f64> = CHECK_TIMES.iter().copied().filter(|t| *t <= t_end + 1e-12).collect();
    if ts.is_empty() {
        vec![t_end]
    } else {
        ts
    }
}

pub fn simulate(p: SimulateParams, ctx: &mut Ctx) -> Result<Report, CliError> {
    let t_end = need(&p.t_end, "simulate", "T")?;
    let reps = need(&p.reps, "simulate", "reps")?;
    let lambda = need(&p.lambda, "simulate", "lambda")?;
    check(t_end > 0.0 && t_end.is_finite(), "T", format!("must be positive, got {t_end}"))?;
    check(reps >= 2, "reps", format!("need at least 2 replicates, got {reps}"))?;
    check(lambda.abs() >= 1e-6 && lambda.is_finite(), "lambda", format!("need |λ| >= 1e-6, got {lambda}"))?;
    let x0 = p.x0.unwrap_or(0.0);
    let obs_dt = p.obs_dt.unwrap_or(0.25);
    check(obs_dt > 0.0, "obs-dt", format!("must be positive, got {obs_dt}"))?;

    let env = &ctx.env;
    let sp = minimal_speed(env)?;
    let spec = SpectralSolution::compute(env, lambda, DEFAULT_GRID)?;
    let star = SpectralSolution::compute(env, sp.lambda_star, DEFAULT_GRID)?;
    let cfg = SimConfig { obs_dt, ..Default::default() };
    let obs = Observables { additive: Some(&spec), derivative: Some(&star) };
    let traces = simulate_many(env, x0, t_end, ctx.seed, reps, &cfg, obs)?;

    let rows = traces.iter().flat_map(|tr| {
        (0..tr.times.len()).map(move |k| Row {
            replicate: tr.replicate,
            t: tr.times[k],
            n_t: tr.count[k],
            w_t: tr.additive[k],
            dw_t: tr.derivative[k],
            m_t: tr.minimum[k],
        })
    });
    ctx.artifacts.csv("simulate_traces.csv", rows)?;

    let times = traces[0].times.clone();
    let column = |f: &dyn Fn(&ReplicateTrace, usize) -> f64, k: usize| -> Vec<f64> {
        traces.iter().map(|tr| f(tr, k)).collect()
    };
    let bands = |f: &dyn Fn(&ReplicateTrace, usize) -> f64| -> Vec<Band> {
        times.iter().enumerate().map(|(k, t)| Band::new(*t, &column(f, k))).collect()
    };
    let out = SimulateOut {
        lambda,
        lambda_star: sp.lambda_star,
        nu_star: sp.nu_star,
        reps,
        x0,
        additive_initial: traces[0].additive[0],
        derivative_initial: traces[0].derivative[0],
        additive: bands(&|tr, k| tr.additive[k]),
        derivative: bands(&|tr, k| tr.derivative[k]),
        count: bands(&|tr, k| tr.count[k] as f64),
        minimum: bands(&|tr, k| tr.minimum[k]),
    };

    let mut report = ctx.report("simulate", &p)?;
    for t in check_times(t_end) {
        let k = traces[0].index_of(t);
        let (a, d) = (&out.additive[k], &out.derivative[k]);
        report.check(Check::within_se(&format!("additive_mean_t{t}"), a.mean, a.se, out.additive_initial, 3.0));
        report.check(Check::within_se(&format!("derivative_mean_t{t}"), d.mean, d.se, out.derivative_initial, 3.0));
        if env.is_homogeneous() {
            // E N_t = exp(m g t) for a constant rate
            let c = &out.count[k];
            let exact = (env.m() * env.g(0.0) * times[k]).exp();
            report.check(Check::within_se(&format!("count_mean_t{t}"), c.mean, c.se, exact, 3.0));
        }
    }
    report.results(&out)
}
