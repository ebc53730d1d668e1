use kppwave_core::spectral::{
    eigen_residual, gamma_derivative, minimal_speed_on, principal_eigenpair, SpectralSolution, DEFAULT_GRID,
};
use serde::Serialize;

use super::Ctx;
use crate::config::{check, need, EigenParams, SpeedParams};
use crate::error::CliError;
use crate::report::{Check, Report};

#[derive(Serialize)]
struct EigenOut {
    lambda: f64,
    gamma: f64,
    gamma_prime: f64,
    psi: Vec<f64>,
    /// `None` at `|λ| < 1e-6`, where `ψ_λ` is not defined.
    psi_lambda: Option<Vec<f64>>,
    h: Option<Vec<f64>>,
    h_prime: Option<Vec<f64>>,
    residual: f64,
}

pub fn eigen(p: EigenParams, ctx: &mut Ctx) -> Result<Report, CliError> {
    let lambda = need(&p.lambda, "eigen", "lambda")?;
    let grid = p.grid.unwrap_or(DEFAULT_GRID);
    check(lambda.is_finite(), "lambda", "must be finite")?;
    check(grid >= 32, "grid", format!("need at least 32 points, got {grid}"))?;
    let env = &ctx.env;
    let out = if lambda.abs() < 1e-6 {
        let (gamma, psi) = principal_eigenpair(env, lambda, grid)?;
        let gamma_prime = gamma_derivative(env, lambda, grid)?;
        let residual = eigen_residual(env, lambda, gamma, &psi);
        EigenOut { lambda, gamma, gamma_prime, psi, psi_lambda: None, h: None, h_prime: None, residual }
    } else {
        let s = SpectralSolution::compute(env, lambda, grid)?;
        let residual = eigen_residual(env, lambda, s.gamma, &s.psi);
        EigenOut {
            lambda,
            gamma: s.gamma,
            gamma_prime: s.gamma_prime,
            psi: s.psi,
            psi_lambda: Some(s.psi_lambda),
            h: Some(s.h),
            h_prime: Some(s.h_prime),
            residual,
        }
    };
    let mut checks = vec![
        Check::below("eigen_residual", out.residual, 1e-8),
        Check::flag("psi_positive", out.psi.iter().all(|v| *v > 0.0)),
    ];
    if let Some(hp) = &out.h_prime {
        checks.push(Check::flag("h_prime_positive", hp.iter().all(|v| *v > 0.0)));
    }
    if env.is_homogeneous() {
        let closed = 0.5 * lambda * lambda + env.m() * env.g(0.0);
        checks.push(Check::rel("gamma_closed_form", out.gamma, closed, 1e-8));
    }
    let mut report = ctx.report("eigen", &p)?.results(&out)?;
    checks.into_iter().for_each(|c| report.check(c));
    Ok(report)
}

pub fn speed(p: SpeedParams, ctx: &mut Ctx) -> Result<Report, CliError> {
    let grid = p.grid.unwrap_or(DEFAULT_GRID);
    check(grid >= 32, "grid", format!("need at least 32 points, got {grid}"))?;
    let sp = minimal_speed_on(&ctx.env, grid)?;
    let mut report = ctx.report("speed", &p)?.results(sp)?;
    report.check(Check::below("residual", sp.residual, 1e-6));
    if ctx.env.is_homogeneous() {
        let closed = (2.0 * ctx.env.m() * ctx.env.g(0.0)).sqrt();
        report.check(Check::abs("nu_star_closed_form", sp.nu_star, closed, 1e-6));
        report.check(Check::abs("lambda_star_closed_form", sp.lambda_star, closed, 1e-6));
    }
    Ok(report)
}
