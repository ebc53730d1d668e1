//! Time stepping of the periodic F-KPP equation
//!
//! ```text
//! ∂u/∂t = ½ ∂²u/∂x² + g(x)·(f(u) − u),   u ∈ [0, 1]
//! ```
//!
//! on a truncated, integer-aligned domain with `u = 0` pinned on the left
//! and `u = 1` on the right. Fronts move to the right; the domain follows
//! them by whole unit cells so that `x ↦ x − 1` stays an exact grid shift.
//!
//! The module also hosts the pulsating-wave diagnostics: front tracking,
//! the periodicity residual `sup |u(t+1/ν, x) − u(t, x−1)|`, the surrogate
//! wave with its negative-time extension, and the tail transforms `w̃`, `ŵ`.

use serde::{Deserialize, Serialize};

use crate::env::PeriodicEnv;
use crate::linalg::solve_tridiagonal;
use crate::spectral::SpectralSolution;
use crate::stats::{linear_fit, median};

/// Grid points per unit cell.
pub const DEFAULT_CELLS: usize = 64;
/// Per-step clamp above which a step is rejected.
pub const CLAMP_ERROR: f64 = 1e-9;
/// Backward-Euler diffusion steps before switching to Crank–Nicolson.
const STARTUP_STEPS: usize = 4;
/// Values of `w` below this are treated as underflow by the tail transforms.
const TAIL_FLOOR: f64 = 1e-14;
/// Default tail window of the `w̃` transform, relative to the level-1/2
/// front. It starts where the second-order tail correction of the exact
/// homogeneous wave at `λ = 1` has decayed below 1%.
pub const TILDE_WINDOW: (f64, f64) = (8.0, 15.0);
/// Default tail window of the critical `ŵ` transform.
pub const HAT_WINDOW: (f64, f64) = (6.0, 14.0);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FkppError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("clamp of magnitude {clamp:e} at t = {t}; reduce dt")]
    Numerics { clamp: f64, t: f64 },
    #[error("front error: {0}")]
    Front(String),
    #[error("diagnostic error: {0}")]
    Diag(String),
}

/// Truncated spatial domain `[x_min, x_max]`, integer endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub x_min: i64,
    pub x_max: i64,
}

impl Domain {
    pub fn new(x_min: i64, x_max: i64) -> Result<Self, FkppError> {
        if x_max - x_min < 20 {
            return Err(FkppError::Config(format!(
                "domain [{x_min}, {x_max}] must be at least 20 units long"
            )));
        }
        Ok(Self { x_min, x_max })
    }

    pub fn len(&self) -> i64 {
        self.x_max - self.x_min
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Initial data.
#[derive(Debug, Clone, Copy)]
pub enum InitialData<'a> {
    /// `u = 1_{x > 0}`; `nu` is the reference speed used by diagnostics.
    Heaviside { nu: f64 },
    /// `u = exp(−β e^{−λx} ψ(x, λ))` with `λ = spec.lambda < λ*`.
    ExpTail { spec: &'a SpectralSolution, beta: f64, lambda_star: f64 },
    /// Critical tail: `u = exp(−β √(1+x²) e^{−λ*x} ψ(x, λ*))` with `spec` at
    /// `λ*`, behaving like `β x e^{−λ*x} ψ` as `x → ∞`.
    Representation { spec: &'a SpectralSolution, beta: f64 },
}

/// State of the F-KPP solution on the truncated domain.
#[derive(Debug, Clone)]
pub struct WaveField {
    pub x_min: i64,
    pub x_max: i64,
    /// Grid points per unit cell; `dx = 1 / cells`.
    pub cells: usize,
    pub t: f64,
    /// `w[j] = 1 − u(t, x_min + j·dx)`, `j = 0..=(x_max − x_min)·cells`.
    ///
    /// The complement is stored so that the tail where `u` is close to 1
    /// keeps full relative precision.
    pub w: Vec<f64>,
    /// Reference speed used for diagnostics.
    pub nu: f64,
    /// Largest clamp applied by any step so far.
    pub max_clamp: f64,
    /// The domain is shifted by one cell when the front passes this
    /// fraction of its length.
    pub recenter_fraction: f64,
    steps_taken: usize,
}

impl WaveField {
    pub fn dx(&self) -> f64 {
        1.0 / self.cells as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        self.x_min as f64 + j as f64 / self.cells as f64
    }

    /// Linear interpolation of `u` at lab position `x` (0 left of the
    /// domain, 1 right of it).
    pub fn value_at(&self, x: f64) -> f64 {
        1.0 - self.tail_at(x)
    }

    /// `1 − u` at lab position `x`, linear between grid points.
    pub fn tail_at(&self, x: f64) -> f64 {
        tail_on_grid(&self.w, self.x_min, self.cells, x)
    }

    /// `u` on the grid.
    pub fn u_values(&self) -> Vec<f64> {
        self.w.iter().map(|w| 1.0 - w).collect()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot { t: self.t, x_min: self.x_min, w: self.w.clone() }
    }

    /// Front position at `level` (see [`front_position`]).
    pub fn front(&self, level: f64) -> Result<f64, FkppError> {
        front_position(&self.w, self.x_min, self.cells, level)
    }
}

fn tail_on_grid(w: &[f64], x_min: i64, cells: usize, x: f64) -> f64 {
    let s = (x - x_min as f64) * cells as f64;
    if s <= 0.0 {
        return if s == 0.0 { w[0] } else { 1.0 };
    }
    let last = w.len() - 1;
    if s >= last as f64 {
        return if s == last as f64 { w[last] } else { 0.0 };
    }
    let j = s.floor() as usize;
    let t = s - j as f64;
    (1.0 - t) * w[j] + t * w[j + 1]
}

/// Builds the initial field on `domain` with `cells` points per unit.
pub fn init_field(data: InitialData<'_>, domain: Domain, cells: usize) -> Result<WaveField, FkppError> {
    let domain = Domain::new(domain.x_min, domain.x_max)?;
    if cells < 4 {
        return Err(FkppError::Config(format!("cells per unit must be >= 4, got {cells}")));
    }
    let n = domain.len() as usize * cells + 1;
    let xs = (0..n).map(|j| domain.x_min as f64 + j as f64 / cells as f64);
    let (w, nu): (Vec<f64>, f64) = match data {
        InitialData::Heaviside { nu } => (xs.map(|x| if x > 0.0 { 0.0 } else { 1.0 }).collect(), nu),
        InitialData::ExpTail { spec, beta, lambda_star } => {
            if !(spec.lambda > 0.0 && spec.lambda < lambda_star) {
                return Err(FkppError::Config(format!(
                    "exp-tail data needs λ in (0, λ*) = (0, {lambda_star}), got {}",
                    spec.lambda
                )));
            }
            let l = spec.lambda;
            (xs.map(|x| -(-beta * (-l * x).exp() * spec.psi_at(x)).exp_m1()).collect(), spec.gamma / l)
        }
        InitialData::Representation { spec, beta } => {
            let l = spec.lambda;
            (
                xs.map(|x| -(-beta * (1.0 + x * x).sqrt() * (-l * x).exp() * spec.psi_at(x)).exp_m1())
                    .collect(),
                spec.gamma / l,
            )
        }
    };
    let mut field = WaveField {
        x_min: domain.x_min,
        x_max: domain.x_max,
        cells,
        t: 0.0,
        w,
        nu,
        max_clamp: 0.0,
        recenter_fraction: 0.75,
        steps_taken: 0,
    };
    pin(&mut field.w);
    Ok(field)
}

fn pin(w: &mut [f64]) {
    let last = w.len() - 1;
    w[0] = 1.0;
    w[last] = 0.0;
}

/// Explicit midpoint for `w' = g (1 − w − f(1 − w))`, the reaction of
/// `u = 1 − w`. The domain starts at an integer, so grid point `j` has
/// phase `j mod cells`.
fn reaction_half_step(w: &mut [f64], g: &[f64], cells: usize, env: &PeriodicEnv, h: f64) {
    let law = env.offspring();
    let last = w.len() - 1;
    for j in 1..last {
        let gj = g[j % cells];
        let v = w[j];
        let mid = v + 0.5 * h * gj * law.deficit(v);
        w[j] = v + h * gj * law.deficit(mid);
    }
}

fn diffusion_step(u: &mut [f64], cells: usize, dt: f64, implicit: bool) {
    let n = u.len();
    let inner = n - 2;
    let dx = 1.0 / cells as f64;
    let (kappa, rhs): (f64, Vec<f64>) = if implicit {
        let k = dt / (2.0 * dx * dx);
        (k, u[1..n - 1].to_vec())
    } else {
        let k = dt / (4.0 * dx * dx);
        (k, (1..n - 1).map(|j| k * u[j - 1] + (1.0 - 2.0 * k) * u[j] + k * u[j + 1]).collect())
    };
    let mut rhs = rhs;
    rhs[0] += kappa * u[0];
    rhs[inner - 1] += kappa * u[n - 1];
    let lower = vec![-kappa; inner];
    let upper = vec![-kappa; inner];
    let diag = vec![1.0 + 2.0 * kappa; inner];
    let sol = solve_tridiagonal(&lower, &diag, &upper, &rhs).expect("diagonally dominant");
    u[1..n - 1].copy_from_slice(&sol);
}

/// One Strang-split IMEX step: explicit-midpoint reaction over `dt/2`,
/// Crank–Nicolson diffusion over `dt` (backward Euler for the first few
/// steps to damp rough initial data), reaction over `dt/2`.
///
/// The result is clamped to `[0, 1]`; a clamp of `1e-9` or more is an error.
pub fn step(field: &mut WaveField, env: &PeriodicEnv, dt: f64) -> Result<(), FkppError> {
    let dx = field.dx();
    if !(dt > 0.0 && dt <= dx * (1.0 + 1e-12)) {
        return Err(FkppError::Config(format!("dt = {dt} must lie in (0, dx = {dx}]")));
    }
    let cells = field.cells;
    let g: Vec<f64> = (0..cells).map(|j| env.g(j as f64 / cells as f64)).collect();
    reaction_half_step(&mut field.w, &g, cells, env, 0.5 * dt);
    diffusion_step(&mut field.w, cells, dt, field.steps_taken < STARTUP_STEPS);
    reaction_half_step(&mut field.w, &g, cells, env, 0.5 * dt);

    let mut clamp = 0.0f64;
    for v in field.w.iter_mut() {
        if *v < 0.0 {
            clamp = clamp.max(-*v);
            *v = 0.0;
        } else if *v > 1.0 {
            clamp = clamp.max(*v - 1.0);
            *v = 1.0;
        }
    }
    field.t += dt;
    field.steps_taken += 1;
    if clamp >= CLAMP_ERROR {
        return Err(FkppError::Numerics { clamp, t: field.t });
    }
    field.max_clamp = field.max_clamp.max(clamp);
    recenter(field);
    Ok(())
}

/// Shifts the domain right by whole cells while the front sits beyond
/// `recenter_fraction` of the domain.
fn recenter(field: &mut WaveField) {
    let len = (field.x_max - field.x_min) as f64;
    loop {
        let Some(front) = quick_front(&field.w, field.x_min, field.cells) else { return };
        if front <= field.x_min as f64 + field.recenter_fraction * len {
            return;
        }
        let c = field.cells;
        field.w.drain(0..c);
        field.w.extend(std::iter::repeat_n(0.0, c));
        field.x_min += 1;
        field.x_max += 1;
        pin(&mut field.w);
    }
}

/// Rightmost crossing of u = 1/2 (no uniqueness check).
fn quick_front(w: &[f64], x_min: i64, cells: usize) -> Option<f64> {
    let j = (0..w.len() - 1).rev().find(|&j| w[j] > 0.5 && w[j + 1] <= 0.5)?;
    let t = (w[j] - 0.5) / (w[j] - w[j + 1]);
    Some(x_min as f64 + (j as f64 + t) / cells as f64)
}

/// Position where `u = 1 − w` crosses `level`, scanning from the right end
/// and interpolating linearly. Fails unless `u − level` changes sign
/// exactly once over the domain.
pub fn front_position(w: &[f64], x_min: i64, cells: usize, level: f64) -> Result<f64, FkppError> {
    let c = 1.0 - level;
    let mut crossings = 0;
    let mut found = None;
    for j in (0..w.len() - 1).rev() {
        let a = c - w[j];
        let b = c - w[j + 1];
        if (a < 0.0) != (b < 0.0) {
            crossings += 1;
            if found.is_none() {
                let t = (w[j] - c) / (w[j] - w[j + 1]);
                found = Some(x_min as f64 + (j as f64 + t) / cells as f64);
            }
        }
    }
    match (crossings, found) {
        (1, Some(x)) => Ok(x),
        (0, _) => Err(FkppError::Front(format!("u never crosses level {level}"))),
        (k, _) => Err(FkppError::Front(format!("u crosses level {level} {k} times"))),
    }
}

/// One stored state of the field.
#[derive(Debug, Clone, Serialize)]
pub struct Snapshot {
    pub t: f64,
    pub x_min: i64,
    /// `1 − u` on the lattice starting at `x_min`.
    pub w: Vec<f64>,
}

/// Time-ordered snapshots sharing one spatial lattice.
#[derive(Debug, Clone, Default, Serialize)]
pub struct SnapshotSet {
    pub cells: usize,
    pub snaps: Vec<Snapshot>,
}

impl SnapshotSet {
    pub fn new(cells: usize) -> Self {
        Self { cells, snaps: Vec::new() }
    }

    pub fn push(&mut self, s: Snapshot) {
        debug_assert!(self.snaps.last().is_none_or(|l| l.t < s.t));
        self.snaps.push(s);
    }

    pub fn t_range(&self) -> Option<(f64, f64)> {
        Some((self.snaps.first()?.t, self.snaps.last()?.t))
    }

    /// `u(t, x)`, linear in time between the bracketing snapshots and in
    /// space between grid points. `None` when `t` is outside the stored range.
    pub fn value(&self, t: f64, x: f64) -> Option<f64> {
        self.tail(t, x).map(|w| 1.0 - w)
    }

    /// `1 − u(t, x)`, interpolated like [`SnapshotSet::value`].
    pub fn tail(&self, t: f64, x: f64) -> Option<f64> {
        let (t0, t1) = self.t_range()?;
        let eps = 1e-9 * t1.abs().max(1.0);
        if t < t0 - eps || t > t1 + eps {
            return None;
        }
        let k = self.snaps.partition_point(|s| s.t <= t);
        if k == 0 {
            return Some(self.at(0, x));
        }
        if k >= self.snaps.len() {
            return Some(self.at(self.snaps.len() - 1, x));
        }
        let (a, b) = (&self.snaps[k - 1], &self.snaps[k]);
        let w = (t - a.t) / (b.t - a.t);
        Some((1.0 - w) * self.at(k - 1, x) + w * self.at(k, x))
    }

    fn at(&self, k: usize, x: f64) -> f64 {
        let s = &self.snaps[k];
        tail_on_grid(&s.w, s.x_min, self.cells, x)
    }

    /// Restriction to snapshots with `t ∈ [t0, t1]`.
    pub fn window(&self, t0: f64, t1: f64) -> SnapshotSet {
        SnapshotSet {
            cells: self.cells,
            snaps: self.snaps.iter().filter(|s| s.t >= t0 - 1e-12 && s.t <= t1 + 1e-12).cloned().collect(),
        }
    }
}

/// What `evolve` records along the way.
#[derive(Debug, Clone)]
pub struct ObserverConfig {
    /// Front levels tracked every `front_stride` steps.
    pub levels: Vec<f64>,
    pub front_stride: usize,
    /// Snapshots every `snapshot_stride` steps (0: none) …
    pub snapshot_stride: usize,
    /// … and at every step once `t ≥ T − dense_tail`.
    pub dense_tail: f64,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        Self { levels: vec![0.5], front_stride: 1, snapshot_stride: 0, dense_tail: 0.0 }
    }
}

/// Time series recorded by `evolve`.
#[derive(Debug, Clone, Default)]
pub struct EvolveTrace {
    pub times: Vec<f64>,
    /// `fronts[i][k]`: front at `levels[k]` at `times[i]` (NaN when the
    /// level set is not a single crossing).
    pub fronts: Vec<Vec<f64>>,
    pub levels: Vec<f64>,
    pub snapshots: SnapshotSet,
}

impl EvolveTrace {
    /// Least-squares speed of the level-`k` front over `t ∈ [t0, t1]`.
    pub fn speed_fit(&self, k: usize, t0: f64, t1: f64) -> Result<f64, FkppError> {
        let (ts, xs): (Vec<f64>, Vec<f64>) = self
            .times
            .iter()
            .zip(&self.fronts)
            .filter(|(t, f)| **t >= t0 - 1e-12 && **t <= t1 + 1e-12 && f[k].is_finite())
            .map(|(t, f)| (*t, f[k]))
            .unzip();
        if ts.len() < 3 {
            return Err(FkppError::Diag(format!("too few front samples in [{t0}, {t1}]")));
        }
        Ok(linear_fit(&ts, &xs).0)
    }
}

/// Advances `field` to `field.t + total` with fixed step `dt` (adjusted
/// down so that an integer number of steps fits), recording fronts and
/// snapshots as configured.
pub fn evolve(
    field: &mut WaveField,
    env: &PeriodicEnv,
    total: f64,
    dt: f64,
    obs: &ObserverConfig,
) -> Result<EvolveTrace, FkppError> {
    if total < 0.0 {
        return Err(FkppError::Config(format!("evolution time must be >= 0, got {total}")));
    }
    let mut trace = EvolveTrace {
        levels: obs.levels.clone(),
        snapshots: SnapshotSet::new(field.cells),
        ..Default::default()
    };
    let record_front = |f: &WaveField, tr: &mut EvolveTrace| {
        tr.times.push(f.t);
        tr.fronts.push(obs.levels.iter().map(|l| f.front(*l).unwrap_or(f64::NAN)).collect());
    };
    record_front(field, &mut trace);
    if obs.snapshot_stride > 0 || obs.dense_tail >= total {
        trace.snapshots.push(field.snapshot());
    }
    if total == 0.0 {
        return Ok(trace);
    }
    let n = (total / dt).ceil() as usize;
    let h = total / n as f64;
    let t_start = field.t;
    let t_end = t_start + total;
    for i in 1..=n {
        step(field, env, h)?;
        if i == n {
            field.t = t_end;
        }
        if obs.front_stride > 0 && (i % obs.front_stride == 0 || i == n) {
            record_front(field, &mut trace);
        }
        let dense = field.t >= t_end - obs.dense_tail - 1e-12;
        let strided = obs.snapshot_stride > 0 && i % obs.snapshot_stride == 0;
        if dense || strided {
            trace.snapshots.push(field.snapshot());
        }
    }
    Ok(trace)
}

/// `sup_x |u(t + 1/ν, x) − u(t, x − 1)|` over the interior lattice points
/// common to both times (one unit away from either boundary).
pub fn periodicity_residual(snaps: &SnapshotSet, nu: f64, t: f64) -> Result<f64, FkppError> {
    let later = t + 1.0 / nu;
    let (t0, t1) = snaps.t_range().ok_or_else(|| FkppError::Diag("no snapshots".into()))?;
    let eps = 1e-9 * t1.abs().max(1.0);
    if t < t0 - eps || later > t1 + eps {
        return Err(FkppError::Diag(format!(
            "need snapshots at t = {t} and t + 1/ν = {later}; stored range [{t0}, {t1}]"
        )));
    }
    // Lattice bounds common to every stored snapshot in the bracket.
    let rel: Vec<&Snapshot> = snaps.snaps.iter().filter(|s| s.t >= t - 1.0 && s.t <= later + 1.0).collect();
    let lo = rel.iter().map(|s| s.x_min).max().unwrap_or(0);
    let hi = rel
        .iter()
        .map(|s| s.x_min + ((s.w.len() - 1) / snaps.cells) as i64)
        .min()
        .unwrap_or(0);
    let cells = snaps.cells as i64;
    let (j0, j1) = ((lo + 2) * cells, (hi - 1) * cells);
    if j1 <= j0 {
        return Err(FkppError::Diag("domain too small for the residual".into()));
    }
    let mut sup = 0.0f64;
    for j in j0..=j1 {
        let x = j as f64 / cells as f64;
        let a = snaps.tail(later, x).expect("checked range");
        let b = snaps.tail(t, x - 1.0).expect("checked range");
        sup = sup.max((a - b).abs());
    }
    Ok(sup)
}

/// Periodicity residual at the end of a run.
///
/// The reference speed is the level-1/2 front speed fitted over the last
/// `speed_window` time units, so that slowly converging fronts (log-delayed
/// fronts from compact data) are compared against their current speed. The
/// residual is taken at `t_end − 1/ν`, which needs snapshots over the last
/// `1/ν` time units. Returns `(ν_local, residual)`.
pub fn end_of_run_residual(trace: &EvolveTrace, speed_window: f64) -> Result<(f64, f64), FkppError> {
    let (_, t_end) = trace.snapshots.t_range().ok_or_else(|| FkppError::Diag("no snapshots".into()))?;
    let k = trace
        .levels
        .iter()
        .position(|l| *l == 0.5)
        .ok_or_else(|| FkppError::Diag("level 1/2 is not tracked".into()))?;
    let nu = trace.speed_fit(k, t_end - speed_window, t_end)?;
    if !(nu > 0.0) {
        return Err(FkppError::Diag(format!("front does not advance (fitted speed {nu})")));
    }
    let t = (t_end - 1.0 / nu).max(trace.snapshots.snaps[0].t);
    Ok((nu, periodicity_residual(&trace.snapshots, nu, t)?))
}

/// A pulsating wave reconstructed from one period of snapshots.
///
/// Wave time 0 corresponds to lab time `t_ref`; wave position `x`
/// corresponds to lab position `x + shift`. Any `(t, x)` is reduced to wave
/// times in `[0, 1/ν)` by `u(t, x) = u(t − k/ν, x − k)`, `k = ⌊νt⌋`, which is
/// the pulsating relation `u(t + 1/ν, x) = u(t, x − 1)` (and the negative-
/// time extension for `t < 0`).
#[derive(Debug, Clone)]
pub struct WaveSurrogate {
    pub snaps: SnapshotSet,
    pub t_ref: f64,
    pub nu: f64,
    pub shift: i64,
}

impl WaveSurrogate {
    /// Uses the last `1/ν` time units of `trace`; the spatial gauge puts the
    /// level-1/2 front of wave time 0 into `[0, 1)`.
    pub fn from_trace(trace: &EvolveTrace, nu: f64) -> Result<Self, FkppError> {
        let (_, t_end) = trace.snapshots.t_range().ok_or_else(|| FkppError::Diag("no snapshots".into()))?;
        let target = t_end - 1.0 / nu;
        // latest snapshot at or before t_end − 1/ν
        let all = &trace.snapshots.snaps;
        let k = all.partition_point(|s| s.t <= target + 1e-9);
        if k == 0 {
            return Err(FkppError::Diag("snapshots do not cover one period 1/ν".into()));
        }
        let snaps = trace.snapshots.window(all[k - 1].t, t_end);
        let first = &snaps.snaps[0];
        let front = front_position(&first.w, first.x_min, snaps.cells, 0.5)?;
        Ok(Self { t_ref: first.t, nu, shift: front.floor() as i64, snaps })
    }

    /// Wave value at wave time `t` (any sign) and position `x`.
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        1.0 - self.eval_tail(t, x)
    }

    /// `1 − u` at wave time `t` and position `x`.
    pub fn eval_tail(&self, t: f64, x: f64) -> f64 {
        let k = (self.nu * t).floor();
        let mut s = t - k / self.nu;
        if s < 0.0 {
            s = 0.0;
        }
        let period = 1.0 / self.nu;
        let lab_t = (self.t_ref + s).min(self.t_ref + period);
        let lab_x = x - k + self.shift as f64;
        self.snaps.tail(lab_t, lab_x).unwrap_or_else(|| {
            self.snaps.tail(self.snaps.t_range().unwrap().1, lab_x).unwrap_or(f64::NAN)
        })
    }

    /// Level-`level` front at wave time 0, in wave coordinates.
    pub fn front(&self, level: f64) -> Result<f64, FkppError> {
        let s = &self.snaps.snaps[0];
        Ok(front_position(&s.w, s.x_min, self.snaps.cells, level)? - self.shift as f64)
    }
}

/// Ratio table of a tail transform.
#[derive(Debug, Clone, Serialize)]
pub struct WaveProfile {
    pub lambda: f64,
    pub nu: f64,
    /// Tail offsets `x` (wave coordinates).
    pub xs: Vec<f64>,
    /// Phases `y ∈ [0, 1)`.
    pub ys: Vec<f64>,
    /// `w_value[i][k] = 1 − u((y_k − x_i)/ν, y_k)`.
    pub w_value: Vec<Vec<f64>>,
    pub ratio: Vec<Vec<f64>>,
    /// Median of the ratio table.
    pub beta_estimate: f64,
    /// `max |ratio / median − 1|`.
    pub max_deviation: f64,
    /// Offset added to `x` in the critical transform (0 for `w̃`).
    pub offset: f64,
}

fn tail_table(
    wave: &WaveSurrogate,
    window: (f64, f64),
) -> Result<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>), FkppError> {
    let cells = wave.snaps.cells;
    let front = wave.front(0.5)?;
    let dx = 1.0 / cells as f64;
    let start = front + window.0.max(0.0);
    let end = front + window.1;
    if end <= start {
        return Err(FkppError::Diag("empty tail window".into()));
    }
    let ys: Vec<f64> = (0..cells).map(|k| k as f64 * dx).collect();
    let mut xs = Vec::new();
    let mut table = Vec::new();
    let mut x = start;
    while x <= end + 1e-12 {
        let row: Vec<f64> = ys.iter().map(|y| wave.eval_tail((y - x) / wave.nu, *y)).collect();
        if row.iter().any(|w| !(*w >= TAIL_FLOOR)) {
            break; // underflow region: shrink the window here
        }
        xs.push(x);
        table.push(row);
        x += dx;
    }
    if xs.len() < 2 {
        return Err(FkppError::Diag("tail window is empty after removing the underflow region".into()));
    }
    Ok((xs, ys, table))
}

fn finish_profile(
    lambda: f64,
    nu: f64,
    xs: Vec<f64>,
    ys: Vec<f64>,
    w_value: Vec<Vec<f64>>,
    ratio: Vec<Vec<f64>>,
    offset: f64,
) -> WaveProfile {
    let flat: Vec<f64> = ratio.iter().flatten().copied().collect();
    let beta = median(&flat);
    let dev = flat.iter().map(|r| (r / beta - 1.0).abs()).fold(0.0, f64::max);
    WaveProfile { lambda, nu, xs, ys, w_value, ratio, beta_estimate: beta, max_deviation: dev, offset }
}

/// `w e^{λx} / ψ(y, λ)` over the tail window `[front + a, front + b]`: flat
/// (equal to `β`) when `1 − u((y−x)/ν, y) ∼ β e^{−λx} ψ(y, λ)`.
pub fn tilde_transform(wave: &WaveSurrogate, spec: &SpectralSolution, window: (f64, f64)) -> Result<WaveProfile, FkppError> {
    let (xs, ys, w) = tail_table(wave, window)?;
    let ratio = xs
        .iter()
        .zip(&w)
        .map(|(x, row)| {
            let e = (spec.lambda * x).exp();
            ys.iter().zip(row).map(|(y, wv)| wv * e / spec.psi_at(*y)).collect()
        })
        .collect();
    Ok(finish_profile(spec.lambda, wave.nu, xs, ys, w, ratio, 0.0))
}

/// `w e^{λ*x} / ((x + offset) ψ(y, λ*))` over the tail window: flat when
/// `1 − u ∼ β x e^{−λ*x} ψ(y, λ*)`.
///
/// With `offset = None` the gauge offset is fitted by least squares of
/// `w e^{λ*x}/ψ` against `x` (the wave is only defined up to a shift).
pub fn hat_transform(
    wave: &WaveSurrogate,
    spec: &SpectralSolution,
    window: (f64, f64),
    offset: Option<f64>,
) -> Result<WaveProfile, FkppError> {
    let (xs, ys, w) = tail_table(wave, window)?;
    let scaled: Vec<Vec<f64>> = xs
        .iter()
        .zip(&w)
        .map(|(x, row)| {
            let e = (spec.lambda * x).exp();
            ys.iter().zip(row).map(|(y, wv)| wv * e / spec.psi_at(*y)).collect()
        })
        .collect();
    let offset = match offset {
        Some(o) => o,
        None => {
            let (px, py): (Vec<f64>, Vec<f64>) = xs
                .iter()
                .zip(&scaled)
                .flat_map(|(x, row)| row.iter().map(move |q| (*x, *q)))
                .unzip();
            let (slope, icpt) = linear_fit(&px, &py);
            if !(slope > 0.0) {
                return Err(FkppError::Diag(format!("critical tail is not increasing in x (slope {slope})")));
            }
            icpt / slope
        }
    };
    if xs.iter().any(|x| x + offset <= 0.0) {
        return Err(FkppError::Diag(format!("x + offset must be positive on the window (offset {offset})")));
    }
    let ratio = xs
        .iter()
        .zip(&scaled)
        .map(|(x, row)| row.iter().map(|q| q / (x + offset)).collect())
        .collect();
    Ok(finish_profile(spec.lambda, wave.nu, xs, ys, w, ratio, offset))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{GSpec, OffspringDist};

    fn flat() -> PeriodicEnv {
        PeriodicEnv::homogeneous_binary()
    }

    fn heaviside(lo: i64, hi: i64) -> WaveField {
        init_field(InitialData::Heaviside { nu: 2f64.sqrt() }, Domain::new(lo, hi).unwrap(), 64).unwrap()
    }

    #[test]
    fn heaviside_initial_values() {
        let f = heaviside(-20, 20);
        assert_eq!(f.value_at(-5.0), 0.0);
        assert_eq!(f.value_at(5.0), 1.0);
        let x = f.front(0.5).unwrap();
        assert!(x.abs() <= f.dx());
    }

    #[test]
    fn shifted_heaviside_front() {
        let mut f = heaviside(-20, 20);
        for j in 0..f.w.len() {
            f.w[j] = if f.x(j) > 3.2 { 0.0 } else { 1.0 };
        }
        assert!((f.front(0.5).unwrap() - 3.2).abs() <= f.dx());
    }

    #[test]
    fn exp_tail_initial_values() {
        let env = flat();
        let spec = SpectralSolution::compute(&env, 1.0, 64).unwrap();
        let f = init_field(
            InitialData::ExpTail { spec: &spec, beta: 1.0, lambda_star: 2f64.sqrt() },
            Domain::new(-20, 20).unwrap(),
            64,
        )
        .unwrap();
        assert!((f.value_at(10.0) - (-(-10f64).exp()).exp()).abs() < 1e-12);
        assert!((f.value_at(10.0) - 0.9999546).abs() < 1e-7);
        // the tail keeps relative precision far beyond 1e-16
        let r = f.tail_at(19.0) / -(-(-19f64).exp()).exp_m1() - 1.0;
        assert!(r.abs() < 1e-12, "{r}");
        assert!(f.value_at(-19.5) < 1e-8);
        assert_eq!(f.w[0], 1.0);
        assert_eq!(*f.w.last().unwrap(), 0.0);
        assert!((f.nu - 1.5).abs() < 1e-10);
    }

    #[test]
    fn supercritical_lambda_rejected() {
        let env = flat();
        let spec = SpectralSolution::compute(&env, 1.5, 64).unwrap();
        let r = init_field(
            InitialData::ExpTail { spec: &spec, beta: 1.0, lambda_star: 2f64.sqrt() },
            Domain::new(-20, 20).unwrap(),
            64,
        );
        assert!(matches!(r, Err(FkppError::Config(_))));
        assert!(matches!(Domain::new(0, 10), Err(FkppError::Config(_))));
    }

    #[test]
    fn equilibria_are_fixed_points() {
        let env = PeriodicEnv::new(GSpec::sinusoid(1.0, 0.5), 64, OffspringDist::new(vec![0.2, 0.5, 0.3]).unwrap())
            .unwrap();
        let mut f = heaviside(-10, 10);
        // u ≡ 0
        f.w.iter_mut().for_each(|v| *v = 1.0);
        let dt = f.dx() / 2.0;
        for _ in 0..10 {
            step(&mut f, &env, dt).unwrap();
        }
        assert!(f.w.iter().all(|v| (*v - 1.0).abs() < 1e-14));

        // u ≡ 1
        let mut f = heaviside(-10, 10);
        f.w.iter_mut().for_each(|v| *v = 0.0);
        for _ in 0..10 {
            step(&mut f, &env, dt).unwrap();
        }
        assert!(f.w.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn dt_larger_than_dx_rejected() {
        let mut f = heaviside(-10, 10);
        assert!(matches!(step(&mut f, &flat(), 0.1), Err(FkppError::Config(_))));
    }

    #[test]
    fn evolve_zero_time_is_identity() {
        let mut f = heaviside(-10, 10);
        let before = f.w.clone();
        let tr = evolve(&mut f, &flat(), 0.0, 1.0 / 128.0, &ObserverConfig::default()).unwrap();
        assert_eq!(f.w, before);
        assert_eq!(f.t, 0.0);
        assert_eq!(tr.times, vec![0.0]);
    }

    #[test]
    fn multiple_crossings_rejected() {
        let w = [1.0, 0.2, 0.8, 0.1, 0.0];
        assert!(matches!(front_position(&w, 0, 4, 0.5), Err(FkppError::Front(_))));
        assert!(matches!(front_position(&[1.0, 0.9, 0.8], 0, 4, 0.5), Err(FkppError::Front(_))));
        let x = front_position(&[1.0, 0.75, 0.25, 0.0], 0, 4, 0.5).unwrap();
        assert!((x - 0.375).abs() < 1e-15);
    }

    #[test]
    fn synthetic_pulsating_wave_has_zero_residual() {
        // u(t, x) = Φ(x − νt) sampled so that 1/ν is a multiple of the
        // snapshot step and x−1 is a grid shift.
        let cells = 32;
        let nu = 1.25;
        let phi = |z: f64| 1.0 / (1.0 + (-2.0 * z).exp());
        let mut set = SnapshotSet::new(cells);
        let n = 20 * cells + 1;
        for k in 0..=16 {
            let t = k as f64 * (1.0 / nu) / 8.0;
            let w = (0..n).map(|j| 1.0 - phi(-10.0 + j as f64 / cells as f64 - nu * t)).collect();
            set.push(Snapshot { t, x_min: -10, w });
        }
        let r = periodicity_residual(&set, nu, 0.2).unwrap();
        // linear-in-time interpolation error of a smooth wave
        assert!(r < 2e-3, "{r}");
        let r = periodicity_residual(&set, nu, 0.0).unwrap();
        assert!(r < 1e-10, "{r}");
        assert!(matches!(periodicity_residual(&set, nu, 1.5), Err(FkppError::Diag(_))));
    }

    #[test]
    fn synthetic_tails_give_flat_ratios() {
        let env = PeriodicEnv::new(GSpec::sinusoid(1.0, 0.25), 64, OffspringDist::binary()).unwrap();
        let lambda = 1.0;
        let spec = SpectralSolution::compute(&env, lambda, 64).unwrap();
        let nu = spec.gamma / lambda;
        let cells = 32;
        let n = 60 * cells + 1;
        // exact tail w(t, x) = e^{-λ(x - νt)} ψ(x) (capped at 1 near the front)
        let build = |crit: bool| {
            let mut set = SnapshotSet::new(cells);
            for k in 0..=40 {
                let t = k as f64 / 40.0 / nu;
                let w = (0..n)
                    .map(|j| {
                        let x = -20.0 + j as f64 / cells as f64;
                        let z = x - nu * t;
                        if crit && z <= -2.0 {
                            return 1.0;
                        }
                        let (pre, amp) = if crit { (z + 3.0, 5.0) } else { (1.0, 0.05) };
                        (pre * (-lambda * z).exp() * spec.psi_at(x) * amp).min(1.0)
                    })
                    .collect();
                set.push(Snapshot { t, x_min: -20, w });
            }
            WaveSurrogate { snaps: set, t_ref: 0.0, nu, shift: 0 }
        };
        let wave = build(false);
        let p = tilde_transform(&wave, &spec, (2.0, 10.0)).unwrap();
        assert!(p.max_deviation < 1e-3, "{}", p.max_deviation);
        assert!((p.beta_estimate - 0.05).abs() < 1e-4);

        let wave = build(true);
        let p = hat_transform(&wave, &spec, (2.0, 10.0), Some(3.0)).unwrap();
        assert!(p.max_deviation < 1e-3, "{}", p.max_deviation);
        assert!((p.beta_estimate - 5.0).abs() < 1e-2);
        let p = hat_transform(&wave, &spec, (2.0, 10.0), None).unwrap();
        assert!((p.offset - 3.0).abs() < 1e-2, "{}", p.offset);
        assert!(p.max_deviation < 1e-3);
        // window below the front is clipped to the front
        let p = tilde_transform(&build(false), &spec, (-5.0, 3.0)).unwrap();
        let front = build(false).front(0.5).unwrap();
        assert!(p.xs[0] >= front);
    }
}
