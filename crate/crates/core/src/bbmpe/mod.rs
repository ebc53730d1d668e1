//! Exact simulation of branching Brownian motion in a periodic environment
//! and the martingales built on it.
//!
//! Each particle moves as a standard Brownian motion and dies at rate
//! `g(X)`, leaving `1 + L` children at its death position. Death times are
//! produced by thinning a Poisson clock of rate `ḡ ≥ max g`, with the path
//! sampled exactly (Gaussian increments) at every proposal and observation
//! time, so no step of the simulation discretises the model.
//!
//! Events are processed in time order, which makes particle ids follow
//! birth order; every particle draws from its own random stream, see
//! [`crate::rng`].

pub mod crossing;
mod line;

pub use line::{
    line_additive, line_v_martingale, product_martingale, stopping_line, stopping_lines, v_initial, Hit,
    Barrier, LowerBarrier, LowerRecord, StoppingLine, StoppingLineRecord,
};

use crate::env::PeriodicEnv;
use crate::par::try_map_replicates;
use crate::rng::{stream, StreamRng};
use crate::spectral::SpectralSolution;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::Serialize;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("population reached {count} particles (cap {cap}) at t = {t}")]
    Population { count: usize, cap: usize, t: f64 },
    #[error("stopping line not reached by all particles before t = {t} ({alive} still moving); is nu below the minimal speed?")]
    Line { alive: usize, t: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Knobs shared by all particle simulations.
#[derive(Debug, Clone, Serialize)]
pub struct SimConfig {
    /// Spacing of the observation grid.
    pub obs_dt: f64,
    pub population_cap: usize,
    /// Thinning rate; defaults to the environment's bound on `g`.
    pub proposal_rate: Option<f64>,
    /// Keep the full genealogy and all checkpoints.
    pub record_particles: bool,
    /// Stopping-line runs abort with [`SimError::Line`] past this time.
    pub t_max: f64,
    /// Longest path step next to a curved barrier.
    pub barrier_dt: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            obs_dt: 0.25,
            population_cap: 1_000_000,
            proposal_rate: None,
            record_particles: false,
            t_max: 1e4,
            barrier_dt: 1e-3,
        }
    }
}

impl SimConfig {
    fn rate(&self, env: &PeriodicEnv) -> Result<f64, SimError> {
        let rate = self.proposal_rate.unwrap_or(env.g_max());
        if !(rate >= env.g_max() * (1.0 - 1e-12)) || !rate.is_finite() {
            return Err(SimError::Config(format!(
                "proposal rate {rate} is below max g = {}",
                env.g_max()
            )));
        }
        Ok(rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Status {
    Alive,
    Branched { children: Vec<u64> },
    Frozen { sigma: f64, position: f64 },
    Absorbed { time: f64, position: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct Particle {
    pub id: u64,
    pub parent_id: Option<u64>,
    pub birth_time: f64,
    /// `(time, position)`, starting at birth and ending at death, freezing
    /// or the horizon.
    pub checkpoints: Vec<(f64, f64)>,
    pub status: Status,
}

/// Full genealogy of one replicate, indexed by particle id.
#[derive(Debug, Clone, Serialize)]
pub struct ParticleSystem {
    pub t: f64,
    pub seed: u64,
    pub replicate: u64,
    pub particles: Vec<Particle>,
}

impl ParticleSystem {
    /// Positions of the particles alive at observation time `t`, in id order.
    pub fn positions_at(&self, t: f64) -> Vec<f64> {
        self.particles
            .iter()
            .filter_map(|p| p.checkpoints.iter().find(|(s, _)| *s == t).map(|(_, x)| *x))
            .collect()
    }

    pub fn alive_count(&self) -> usize {
        self.particles.iter().filter(|p| p.status == Status::Alive).count()
    }

    /// Alive count predicted from the branch events alone.
    pub fn count_from_events(&self) -> usize {
        1 + self
            .particles
            .iter()
            .map(|p| match &p.status {
                Status::Branched { children } => children.len() - 1,
                _ => 0,
            })
            .sum::<usize>()
    }
}

/// Which martingales to accumulate along a run.
#[derive(Debug, Clone, Copy, Default)]
pub struct Observables<'a> {
    /// Spectral data at `λ` for `W_t(λ)`.
    pub additive: Option<&'a SpectralSolution>,
    /// Spectral data (normally at `λ*`) for `∂W_t`.
    pub derivative: Option<&'a SpectralSolution>,
}

/// Per-replicate observation series on the common time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateTrace {
    pub replicate: u64,
    pub times: Vec<f64>,
    pub count: Vec<u64>,
    /// `W_t(λ)`; empty when not requested.
    pub additive: Vec<f64>,
    /// `∂W_t`; empty when not requested.
    pub derivative: Vec<f64>,
    pub minimum: Vec<f64>,
}

impl ReplicateTrace {
    /// Index of the observation time closest to `t`.
    pub fn index_of(&self, t: f64) -> usize {
        let mut best = 0;
        for (k, s) in self.times.iter().enumerate() {
            if (s - t).abs() < (self.times[best] - t).abs() {
                best = k;
            }
        }
        best
    }

    pub fn additive_trace(&self, lambda: f64) -> MartingaleTrace {
        MartingaleTrace {
            kind: MartingaleKind::Additive { lambda },
            times: self.times.clone(),
            values: self.additive.clone(),
            replicate: self.replicate,
        }
    }

    pub fn derivative_trace(&self, lambda: f64) -> MartingaleTrace {
        MartingaleTrace {
            kind: MartingaleKind::Derivative { lambda },
            times: self.times.clone(),
            values: self.derivative.clone(),
            replicate: self.replicate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MartingaleKind {
    Additive { lambda: f64 },
    Derivative { lambda: f64 },
    LineAdditive,
    LineV { x: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleTrace {
    pub kind: MartingaleKind,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub replicate: u64,
}

#[inline]
fn additive_term(spec: &SpectralSolution, x: f64) -> f64 {
    (-spec.lambda * x).exp() * spec.psi_at(x)
}

#[inline]
fn derivative_term(spec: &SpectralSolution, x: f64, t: f64) -> f64 {
    let psi = spec.psi_at(x);
    (-spec.lambda * x).exp() * (psi * (spec.gamma_prime * t + x) - spec.ratio_at(x) * psi)
}

/// `W_t(λ) = e^{−γt} Σ e^{−λX} ψ(X)` over the given positions.
pub fn additive_martingale(positions: &[f64], t: f64, spec: &SpectralSolution) -> f64 {
    (-spec.gamma * t).exp() * positions.iter().map(|x| additive_term(spec, *x)).sum::<f64>()
}

/// `∂W_t(λ) = e^{−γt} Σ e^{−λX} (ψ(X)(γ′t + X) − ψ_λ(X))`.
pub fn derivative_martingale(positions: &[f64], t: f64, spec: &SpectralSolution) -> f64 {
    (-spec.gamma * t).exp() * positions.iter().map(|x| derivative_term(spec, *x, t)).sum::<f64>()
}

/// Leftmost position. Panics on an empty population, which cannot occur
/// since every branch leaves at least one child.
pub fn minimum_position(positions: &[f64]) -> f64 {
    assert!(!positions.is_empty(), "population is never extinct");
    positions.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Observation grid: multiples of `obs_dt` below `t_end`, then `t_end`.
pub fn observation_times(t_end: f64, obs_dt: f64) -> Vec<f64> {
    let mut times = Vec::new();
    let mut k = 0u64;
    loop {
        let t = k as f64 * obs_dt;
        if t >= t_end * (1.0 - 1e-12) {
            break;
        }
        times.push(t);
        k += 1;
    }
    times.push(t_end);
    times
}

/// How a particle's life ended.
#[derive(Debug, Clone, Copy)]
enum Fate {
    Branch { t: f64, x: f64, children: usize },
    Horizon { x: f64 },
    Frozen { t: f64, x: f64 },
    Absorbed { t: f64, x: f64 },
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    t: f64,
    id: u64,
    x: f64,
    children: usize,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    // min-heap on (t, id)
    fn cmp(&self, other: &Self) -> Ordering {
        other.t.total_cmp(&self.t).then_with(|| other.id.cmp(&self.id))
    }
}

/// Running sums at each observation time.
struct Accumulator<'a> {
    obs: Observables<'a>,
    times: Vec<f64>,
    count: Vec<u64>,
    additive: Vec<f64>,
    derivative: Vec<f64>,
    minimum: Vec<f64>,
}

impl<'a> Accumulator<'a> {
    fn new(times: Vec<f64>, obs: Observables<'a>) -> Self {
        let n = times.len();
        Self {
            obs,
            count: vec![0; n],
            additive: vec![0.0; if obs.additive.is_some() { n } else { 0 }],
            derivative: vec![0.0; if obs.derivative.is_some() { n } else { 0 }],
            minimum: vec![f64::INFINITY; n],
            times,
        }
    }

    fn record(&mut self, k: usize, x: f64) {
        self.count[k] += 1;
        if let Some(spec) = self.obs.additive {
            self.additive[k] += additive_term(spec, x);
        }
        if let Some(spec) = self.obs.derivative {
            self.derivative[k] += derivative_term(spec, x, self.times[k]);
        }
        self.minimum[k] = self.minimum[k].min(x);
    }

    fn finish(mut self, replicate: u64) -> ReplicateTrace {
        for (k, t) in self.times.iter().enumerate() {
            if let Some(spec) = self.obs.additive {
                self.additive[k] *= (-spec.gamma * t).exp();
            }
            if let Some(spec) = self.obs.derivative {
                self.derivative[k] *= (-spec.gamma * t).exp();
            }
        }
        ReplicateTrace {
            replicate,
            times: self.times,
            count: self.count,
            additive: self.additive,
            derivative: self.derivative,
            minimum: self.minimum,
        }
    }
}

/// One replicate's event loop, used both for fixed-horizon runs and for
/// stopping lines.
struct Engine<'e, 'a> {
    env: &'e PeriodicEnv,
    rate: f64,
    seed: u64,
    replicate: u64,
    cfg: &'e SimConfig,
    line: Option<&'e StoppingLine>,
    acc: Option<Accumulator<'a>>,
    particles: Option<Vec<Particle>>,
    hits: Vec<Hit>,
    absorbed: Vec<Hit>,
    survivors: usize,
    next_id: u64,
}

impl Engine<'_, '_> {
    /// Moves particle `id` from its birth until it branches, leaves the
    /// observation window, or is stopped by the line.
    fn live(&mut self, id: u64, t0: f64, x0: f64, mut k: usize) -> Result<Fate, SimError> {
        let mut rng: StreamRng = stream(self.seed, self.replicate, id);
        let (mut t, mut x) = (t0, x0);
        let mut next_prop = t + rng.sample::<f64, _>(Exp1) / self.rate;
        let obs_len = self.acc.as_ref().map_or(0, |a| a.times.len());
        let cap = self.line.and_then(|l| l.step_cap(self.cfg.barrier_dt));
        loop {
            let next_obs = self.acc.as_ref().and_then(|a| a.times.get(k).copied());
            let mut t_next = next_prop.min(next_obs.unwrap_or(f64::INFINITY));
            if let Some(c) = cap {
                t_next = t_next.min(t + c);
            }
            let dt = t_next - t;
            let x_next = x + dt.sqrt() * rng.sample::<f64, _>(StandardNormal);
            if let Some(line) = self.line {
                if let Some(fate) = line.check(t, x, t_next, x_next, &mut rng) {
                    self.checkpoint(id, fate_point(&fate));
                    return Ok(fate);
                }
            }
            t = t_next;
            x = x_next;
            if Some(t) == next_obs {
                self.acc.as_mut().expect("observation grid").record(k, x);
                self.checkpoint(id, (t, x));
                k += 1;
                if k == obs_len {
                    return Ok(Fate::Horizon { x });
                }
            }
            if t == next_prop {
                if rng.random::<f64>() * self.rate < self.env.g(x) {
                    let children = 1 + self.env.offspring().sample_with(rng.random::<f64>());
                    self.checkpoint(id, (t, x));
                    return Ok(Fate::Branch { t, x, children });
                }
                next_prop += rng.sample::<f64, _>(Exp1) / self.rate;
            }
            if self.line.is_some() && t > self.cfg.t_max {
                return Err(SimError::Line { alive: 1, t });
            }
        }
    }

    fn checkpoint(&mut self, id: u64, point: (f64, f64)) {
        if let Some(ps) = self.particles.as_mut() {
            let cps = &mut ps[id as usize].checkpoints;
            if cps.last() != Some(&point) {
                cps.push(point);
            }
        }
    }

    fn spawn(&mut self, parent: Option<u64>, t: f64, x: f64) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        if let Some(ps) = self.particles.as_mut() {
            ps.push(Particle {
                id,
                parent_id: parent,
                birth_time: t,
                checkpoints: vec![(t, x)],
                status: Status::Alive,
            });
        }
        id
    }

    fn settle(&mut self, id: u64, fate: Fate, heap: &mut BinaryHeap<Pending>) {
        let status = match fate {
            Fate::Branch { t, x, children } => {
                heap.push(Pending { t, id, x, children });
                return;
            }
            Fate::Horizon { .. } => {
                self.survivors += 1;
                Status::Alive
            }
            Fate::Frozen { t, x } => {
                self.hits.push(Hit { id, sigma: t, position: x });
                Status::Frozen { sigma: t, position: x }
            }
            Fate::Absorbed { t, x } => {
                self.absorbed.push(Hit { id, sigma: t, position: x });
                Status::Absorbed { time: t, position: x }
            }
        };
        if let Some(ps) = self.particles.as_mut() {
            ps[id as usize].status = status;
        }
    }

    fn run(&mut self, x0: f64) -> Result<(), SimError> {
        let mut heap = BinaryHeap::new();
        let root = self.spawn(None, 0.0, x0);
        let mut k = 0;
        if let Some(acc) = self.acc.as_mut() {
            acc.record(0, x0);
            k = 1;
        }
        let fate = if self.acc.as_ref().is_some_and(|a| a.times.len() == 1) {
            Fate::Horizon { x: x0 }
        } else {
            self.live(root, 0.0, x0, k)?
        };
        self.settle(root, fate, &mut heap);
        while let Some(ev) = heap.pop() {
            let k = self.acc.as_ref().map_or(0, |a| a.times.partition_point(|s| *s <= ev.t));
            let mut ids = Vec::with_capacity(ev.children);
            for _ in 0..ev.children {
                ids.push(self.spawn(Some(ev.id), ev.t, ev.x));
            }
            if let Some(ps) = self.particles.as_mut() {
                ps[ev.id as usize].status = Status::Branched { children: ids.clone() };
            }
            for id in ids {
                let fate = self.live(id, ev.t, ev.x, k).map_err(|e| match e {
                    SimError::Line { t, .. } => SimError::Line { alive: heap.len() + 1, t },
                    other => other,
                })?;
                self.settle(id, fate, &mut heap);
            }
            let alive = heap.len() + self.survivors;
            if alive > self.cfg.population_cap {
                return Err(SimError::Population { count: alive, cap: self.cfg.population_cap, t: ev.t });
            }
        }
        Ok(())
    }
}

fn fate_point(f: &Fate) -> (f64, f64) {
    match *f {
        Fate::Frozen { t, x } | Fate::Absorbed { t, x } | Fate::Branch { t, x, .. } => (t, x),
        Fate::Horizon { x } => (f64::NAN, x),
    }
}

/// Result of one fixed-horizon replicate.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trace: ReplicateTrace,
    /// Present when [`SimConfig::record_particles`] is set.
    pub system: Option<ParticleSystem>,
}

/// Runs replicate `replicate` from one particle at `x0` up to `t_end`,
/// observing on the grid of [`observation_times`].
pub fn simulate(
    env: &PeriodicEnv,
    x0: f64,
    t_end: f64,
    seed: u64,
    replicate: u64,
    cfg: &SimConfig,
    obs: Observables<'_>,
) -> Result<SimOutput, SimError> {
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(SimError::Config(format!("horizon T = {t_end} must be finite and non-negative")));
    }
    if !(cfg.obs_dt > 0.0) {
        return Err(SimError::Config(format!("obs_dt = {} must be positive", cfg.obs_dt)));
    }
    let times = if t_end == 0.0 { vec![0.0] } else { observation_times(t_end, cfg.obs_dt) };
    let mut engine = Engine {
        env,
        rate: cfg.rate(env)?,
        seed,
        replicate,
        cfg,
        line: None,
        acc: Some(Accumulator::new(times, obs)),
        particles: cfg.record_particles.then(Vec::new),
        hits: Vec::new(),
        absorbed: Vec::new(),
        survivors: 0,
        next_id: 0,
    };
    engine.run(x0)?;
    let trace = engine.acc.take().expect("accumulator").finish(replicate);
    let system = engine.particles.take().map(|particles| ParticleSystem { t: t_end, seed, replicate, particles });
    Ok(SimOutput { trace, system })
}

/// Replicates `0..reps` of [`simulate`], in replicate order.
pub fn simulate_many(
    env: &PeriodicEnv,
    x0: f64,
    t_end: f64,
    seed: u64,
    reps: u64,
    cfg: &SimConfig,
    obs: Observables<'_>,
) -> Result<Vec<ReplicateTrace>, SimError> {
    let cfg = SimConfig { record_particles: false, ..cfg.clone() };
    try_map_replicates(reps, |r| simulate(env, x0, t_end, seed, r, &cfg, obs).map(|o| o.trace))
}

/// Time and position of the first branching of a particle started at
/// `(0, x0)`, using the stream of particle `id`. Exposes the thinning
/// mechanism on its own.
pub fn first_branch(env: &PeriodicEnv, x0: f64, seed: u64, id: u64, cfg: &SimConfig) -> Result<(f64, f64), SimError> {
    let mut engine = Engine {
        env,
        rate: cfg.rate(env)?,
        seed,
        replicate: 0,
        cfg,
        line: None,
        acc: None,
        particles: None,
        hits: Vec::new(),
        absorbed: Vec::new(),
        survivors: 0,
        next_id: id + 1,
    };
    match engine.live(id, 0.0, x0, 0)? {
        Fate::Branch { t, x, .. } => Ok((t, x)),
        _ => unreachable!("no horizon and no line"),
    }
}
