//! Pulsating travelling waves of the periodic F-KPP equation and branching
//! Brownian motion in a periodic environment.
//!
//! The crate is organised around the objects that tie the PDE to the
//! particle system:
//!
//! * [`env`]: the 1-periodic branching rate `g` and the offspring law.
//! * [`spectral`]: the periodic principal eigenproblem, `γ(λ)`, `ψ`,
//!   `ψ_λ`, the `h` function and the minimal speed `ν*`.
//! * [`fkpp`]: time stepping of the F-KPP equation, front tracking,
//!   pulsating-wave diagnostics and tail transforms.
//! * [`bbmpe`]: exact simulation of the particle system, additive and
//!   derivative martingales, stopping lines and their martingales.
//! * [`diffusion`]: the one-particle measure-changed diffusions.
//!
//! Monte-Carlo replicates run on rayon when the `parallel` feature is on
//! (the default) and sequentially otherwise; see [`par`].

pub mod bbmpe;
pub mod diffusion;
pub mod env;
pub mod fkpp;
pub mod interp;
pub mod linalg;
pub mod par;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use env::{EnvError, GSpec, OffspringDist, PeriodicEnv};
pub use spectral::{SpectralError, SpectralSolution, SpeedResult};
pub use stats::MeanEstimate;

/// Crate-wide error wrapping the per-module error types.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Env(#[from] env::EnvError),
    #[error(transparent)]
    Spectral(#[from] spectral::SpectralError),
    #[error(transparent)]
    Fkpp(#[from] fkpp::FkppError),
    #[error(transparent)]
    Sim(#[from] bbmpe::SimError),
    #[error(transparent)]
    Diffusion(#[from] diffusion::DiffusionError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
