//! One module per subcommand. Each experiment validates its parameters
//! before doing any work, fills a [`Report`] and writes its CSV artifacts.

use std::path::Path;

use kppwave_core::env::PeriodicEnv;

use crate::config::{EnvSection, FileConfig};
use crate::error::CliError;
use crate::report::{Artifacts, Report};
use crate::Command;

mod diffusion;
mod front;
mod line;
mod representation;
mod simulate;
mod spectral;

pub use front::{asymptotics, front};
pub use representation::representation;

/// Shared state of one run.
pub struct Ctx {
    pub env_section: EnvSection,
    pub env: PeriodicEnv,
    pub seed: u64,
    pub artifacts: Artifacts,
}

impl Ctx {
    pub fn new(env_section: EnvSection, env: PeriodicEnv, seed: u64, out: &Path) -> Result<Self, CliError> {
        Ok(Self { env_section, env, seed, artifacts: Artifacts::new(out)? })
    }

    pub fn report(&self, experiment: &str, params: impl serde::Serialize) -> Result<Report, CliError> {
        Report::new(experiment, self.seed, &self.env_section, params)
    }
}

pub fn dispatch(command: Command, file: FileConfig, ctx: &mut Ctx) -> Result<Report, CliError> {
    match command {
        Command::Eigen(p) => spectral::eigen(p.merged(file.eigen), ctx),
        Command::Speed(p) => spectral::speed(p.merged(file.speed), ctx),
        Command::Front(p) => front(p.merged(file.front), ctx),
        Command::Simulate(p) => simulate::simulate(p.merged(file.simulate), ctx),
        Command::Line(p) => line::line(p.merged(file.line), ctx),
        Command::Diffusion(p) => diffusion::diffusion(p.merged(file.diffusion), ctx),
        Command::VerifyAsymptotics(p) => asymptotics(p.merged(file.verify_asymptotics), ctx),
        Command::VerifyRepresentation(p) => representation(p.merged(file.verify_representation), ctx),
    }
}
