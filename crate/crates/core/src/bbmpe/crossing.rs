//! First passage of a Brownian bridge through a level.
//!
//! Over a step of length `dt` the distance `d(t)` between a particle and a
//! linear barrier is a Brownian motion with drift; conditioned on its end
//! points it is a Brownian bridge, whatever the drift. Both the crossing
//! probability and the law of the crossing time are therefore explicit.

use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal cdf.
#[inline]
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

/// `ln Φ(z)`, accurate far into the lower tail.
pub fn ln_normal_cdf(z: f64) -> f64 {
    if z > -30.0 {
        normal_cdf(z).ln()
    } else {
        let z2 = z * z;
        -0.5 * z2 - (-z).ln() - 0.5 * (2.0 * PI).ln() + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln()
    }
}

/// Probability that a Brownian bridge from `d0 > 0` to `d1` over time `dt`
/// touches zero.
#[inline]
pub fn hit_probability(d0: f64, d1: f64, dt: f64) -> f64 {
    if d0 <= 0.0 || d1 <= 0.0 {
        1.0
    } else {
        (-2.0 * d0 * d1 / dt).exp()
    }
}

/// `P(τ ≤ s)` for the bridge of [`hit_probability`], `0 ≤ s ≤ dt`.
///
/// Written as a sum of two non-negative terms so it keeps relative accuracy
/// when the crossing is unlikely.
fn hit_by(d0: f64, d1: f64, dt: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    if s >= dt {
        return hit_probability(d0, d1, dt);
    }
    let v = s * (dt - s) / dt;
    let sd = v.sqrt();
    let mean = d0 + s / dt * (d1 - d0);
    let reflected = -d0 + s / dt * (d1 + d0);
    let direct = normal_cdf(-mean / sd);
    let mirror = (-2.0 * d0 * d1 / dt + ln_normal_cdf(reflected / sd)).exp();
    direct + mirror
}

/// Samples the first time the bridge hits zero, given that it does, by
/// inverting the conditional cdf with bisection. `u` is uniform on (0, 1).
pub fn sample_hit_time(d0: f64, d1: f64, dt: f64, u: f64) -> f64 {
    if d0 <= 0.0 {
        return 0.0;
    }
    let total = hit_probability(d0, d1, dt);
    let target = u * total;
    let (mut lo, mut hi) = (0.0, dt);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if hit_by(d0, d1, dt, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * dt {
            break;
        }
    }
    0.5 * (lo + hi)
}
