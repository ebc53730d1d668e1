//! Periodic environment: the branching-rate function `g` and the offspring
//! law of the particle system.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::interp::PeriodicSpline;

/// Below this `w` the `A(w)` functional is evaluated from the Taylor
/// coefficients of `f` at 1 instead of the difference quotient.
const A_SERIES_SWITCH: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("grid size must be at least 2, got {0}")]
    GridTooSmall(usize),
    #[error("branching rate must be strictly positive, got g = {value} at x = {x}")]
    NonPositiveRate { x: f64, value: f64 },
    #[error("offspring pmf invalid: {0}")]
    InvalidPmf(String),
    #[error("argument {value} outside domain [{lo}, {hi}]")]
    Domain { value: f64, lo: f64, hi: f64 },
    #[error("invalid rate descriptor: {0}")]
    InvalidSpec(String),
}

/// Symbolic description of `g` on one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum GSpec {
    /// `g ≡ c`
    Constant(f64),
    /// `g(x) = base + amplitude · sin(2πx)`, params `[base, amplitude]`.
    Sinusoid(f64, f64),
    /// Raw samples of `g` at `x = j / len`.
    Table(Vec<f64>),
}

impl GSpec {
    pub fn sinusoid(base: f64, amplitude: f64) -> Self {
        GSpec::Sinusoid(base, amplitude)
    }

    fn sample(&self, m: usize) -> Result<Vec<f64>, EnvError> {
        match self {
            GSpec::Constant(c) => Ok(vec![*c; m]),
            GSpec::Sinusoid(base, amplitude) => Ok((0..m)
                .map(|j| base + amplitude * (2.0 * PI * j as f64 / m as f64).sin())
                .collect()),
            GSpec::Table(v) => {
                if v.len() < 2 {
                    return Err(EnvError::InvalidSpec("table needs at least 2 samples".into()));
                }
                if v.len() == m {
                    Ok(v.clone())
                } else {
                    let s = PeriodicSpline::new(v);
                    Ok((0..m).map(|j| s.eval(j as f64 / m as f64)).collect())
                }
            }
        }
    }
}

/// Offspring law of `L`: a particle is replaced by `1 + L` children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct OffspringDist {
    pmf: Vec<f64>,
    mean: f64,
    cdf: Vec<f64>,
    /// Coefficients of `1 − w − f(1 − w)` in powers of `w`.
    deficit: Vec<f64>,
}

impl OffspringDist {
    /// Validates `pmf` (`pmf[k] = P(L = k)`). The sum must be 1 within 1e-9;
    /// the stored pmf is renormalised exactly.
    pub fn new(pmf: Vec<f64>) -> Result<Self, EnvError> {
        if pmf.is_empty() {
            return Err(EnvError::InvalidPmf("empty pmf".into()));
        }
        if let Some((k, p)) = pmf.iter().enumerate().find(|(_, p)| !(**p >= 0.0) || !p.is_finite()) {
            return Err(EnvError::InvalidPmf(format!("p_{k} = {p} is not a probability")));
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(EnvError::InvalidPmf(format!("probabilities sum to {total}, not 1")));
        }
        let mut pmf: Vec<f64> = pmf.into_iter().map(|p| p / total).collect();
        while pmf.len() > 1 && pmf[pmf.len() - 1] == 0.0 {
            pmf.pop();
        }
        let mean = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        let mut acc = 0.0;
        let cdf = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let deficit = deficit_coefficients(&pmf);
        Ok(Self { pmf, mean, cdf, deficit })
    }

    /// `L ≡ 1`: binary branching.
    pub fn binary() -> Self {
        Self::new(vec![0.0, 1.0]).expect("valid pmf")
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// `m = E L`.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Largest `k` with `p_k > 0`.
    pub fn max_offspring(&self) -> usize {
        self.pmf.len() - 1
    }

    /// Generating function `f(s) = E s^{L+1}`.
    pub fn generating(&self, s: f64) -> f64 {
        // Horner on Σ p_k s^{k+1}
        s * self.pmf.iter().rev().fold(0.0, |acc, p| acc * s + p)
    }

    /// `f^{(j)}(1) = Σ_k p_k (k+1)(k)…(k+2-j)`.
    fn derivative_at_one(&self, j: usize) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .map(|(k, p)| {
                let n = k + 1;
                if j > n {
                    0.0
                } else {
                    p * (0..j).map(|i| (n - i) as f64).product::<f64>()
                }
            })
            .sum()
    }

    /// `1 − w − f(1 − w)`, accurate relative to its size for small `w`.
    pub fn deficit(&self, w: f64) -> f64 {
        self.deficit.iter().rev().fold(0.0, |acc, c| acc * w + c)
    }

    /// `A(w) = m - (1 - w - f(1 - w)) / w`, `A(0) = 0`.
    pub fn a_function(&self, w: f64) -> f64 {
        if w < A_SERIES_SWITCH {
            // A(w) = Σ_{j≥2} (-1)^j f^{(j)}(1) w^{j-1} / j!; f is a polynomial
            // of degree K+1 so the sum terminates.
            let mut sum = 0.0;
            let mut fact = 1.0;
            for j in 2..=self.pmf.len() {
                fact *= j as f64;
                let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
                sum += sign * self.derivative_at_one(j) * w.powi(j as i32 - 1) / fact;
            }
            sum
        } else {
            // m − (1 − w − f(1−w))/w = Σ_k p_k Σ_{i=1..k} (1 − (1−w)^i),
            // evaluated without cancellation.
            let l = (-w).ln_1p();
            self.pmf
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, p)| p * (1..=k).map(|i| -(i as f64 * l).exp_m1()).sum::<f64>())
                .sum()
        }
    }

    /// `E[L (log⁺ L)^p]`.
    pub fn moment_log(&self, p: f64) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .filter(|(k, _)| *k > 1)
            .map(|(k, pk)| pk * k as f64 * (k as f64).ln().powf(p))
            .sum()
    }

    /// Inverse-cdf sample of `L` from a uniform `u ∈ [0, 1)`.
    pub fn sample_with(&self, u: f64) -> usize {
        self.cdf.iter().position(|c| u < *c).unwrap_or(self.pmf.len() - 1)
    }
}

fn deficit_coefficients(pmf: &[f64]) -> Vec<f64> {
    let deg = pmf.len();
    let mut c = vec![0.0; deg + 1];
    c[0] = 1.0;
    c[1] = -1.0;
    for (k, p) in pmf.iter().enumerate() {
        // (1 − w)^{k+1} = Σ_j C(k+1, j) (−w)^j
        let mut binom = 1.0;
        for (j, cj) in c.iter_mut().enumerate().take(k + 2) {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            *cj -= p * binom * sign;
            binom = binom * (k + 1 - j) as f64 / (j + 1) as f64;
        }
    }
    c[0] = 0.0;
    c
}

impl TryFrom<Vec<f64>> for OffspringDist {
    type Error = EnvError;
    fn try_from(v: Vec<f64>) -> Result<Self, EnvError> {
        OffspringDist::new(v)
    }
}

impl From<OffspringDist> for Vec<f64> {
    fn from(d: OffspringDist) -> Vec<f64> {
        d.pmf
    }
}

/// The model environment: `g` sampled on `M` points of one period, its
/// periodic cubic interpolant, and the offspring law.
#[derive(Debug, Clone)]
pub struct PeriodicEnv {
    g_spec: GSpec,
    g_samples: Vec<f64>,
    g_interp: PeriodicSpline,
    g_max: f64,
    g_min: f64,
    offspring: OffspringDist,
}

impl PeriodicEnv {
    /// Builds and validates an environment.
    ///
    /// Between samples `g` is the periodic cubic spline through the `M`
    /// samples. Positivity is checked on the samples and on an 8× refined
    /// grid of the interpolant.
    pub fn new(g_spec: GSpec, grid: usize, offspring: OffspringDist) -> Result<Self, EnvError> {
        if grid < 2 {
            return Err(EnvError::GridTooSmall(grid));
        }
        let g_samples = g_spec.sample(grid)?;
        for (j, v) in g_samples.iter().enumerate() {
            if !(*v > 0.0) || !v.is_finite() {
                return Err(EnvError::NonPositiveRate { x: j as f64 / grid as f64, value: *v });
            }
        }
        let g_interp = PeriodicSpline::new(&g_samples);
        let fine = 8 * grid;
        let mut g_max = f64::MIN;
        let mut g_min = f64::MAX;
        for k in 0..fine {
            let x = k as f64 / fine as f64;
            let v = g_interp.eval(x);
            if !(v > 0.0) {
                return Err(EnvError::NonPositiveRate { x, value: v });
            }
            g_max = g_max.max(v);
            g_min = g_min.min(v);
        }
        if offspring.mean() <= 0.0 {
            return Err(EnvError::InvalidPmf("mean offspring number m must be positive".into()));
        }
        // The spline can overshoot between refinement points; pad the bound
        // used for thinning so it stays an upper bound.
        let g_max = g_max * (1.0 + 1e-6) + 1e-12;
        Ok(Self { g_spec, g_samples, g_interp, g_max, g_min, offspring })
    }

    /// `g ≡ 1`, binary branching.
    pub fn homogeneous_binary() -> Self {
        Self::new(GSpec::Constant(1.0), 16, OffspringDist::binary()).expect("valid env")
    }

    pub fn g_spec(&self) -> &GSpec {
        &self.g_spec
    }

    pub fn g_samples(&self) -> &[f64] {
        &self.g_samples
    }

    #[inline]
    pub fn g(&self, x: f64) -> f64 {
        self.g_interp.eval(x)
    }

    /// Upper bound of `g`, used as the thinning proposal rate.
    pub fn g_max(&self) -> f64 {
        self.g_max
    }

    pub fn g_min(&self) -> f64 {
        self.g_min
    }

    /// True when `g` is constant, so every eigenfunction is flat.
    pub fn is_homogeneous(&self) -> bool {
        self.g_samples.iter().all(|v| *v == self.g_samples[0])
    }

    pub fn offspring(&self) -> &OffspringDist {
        &self.offspring
    }

    /// `m = E L`.
    pub fn m(&self) -> f64 {
        self.offspring.mean()
    }

    /// `f(s) = E s^{L+1}` for `s ∈ [0, 1]`.
    pub fn offspring_f(&self, s: f64) -> Result<f64, EnvError> {
        check_unit(s)?;
        Ok(self.offspring.generating(s))
    }

    /// `A(w)` for `w ∈ [0, 1]`.
    pub fn a_function(&self, w: f64) -> Result<f64, EnvError> {
        check_unit(w)?;
        Ok(self.offspring.a_function(w))
    }

    /// `E[L (log⁺ L)^p]`.
    pub fn offspring_moment(&self, p: f64) -> f64 {
        self.offspring.moment_log(p)
    }
}

fn check_unit(s: f64) -> Result<(), EnvError> {
    if (0.0..=1.0).contains(&s) {
        Ok(())
    } else {
        Err(EnvError::Domain { value: s, lo: 0.0, hi: 1.0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(spec: GSpec, m: usize, pmf: Vec<f64>) -> PeriodicEnv {
        PeriodicEnv::new(spec, m, OffspringDist::new(pmf).unwrap()).unwrap()
    }

    #[test]
    fn build_examples() {
        let e = env(GSpec::Constant(1.0), 16, vec![0.0, 1.0]);
        assert_eq!(e.m(), 1.0);
        assert!(e.g_samples().iter().all(|g| *g == 1.0));
        assert_eq!(e.g(0.377), 1.0);

        let e = env(GSpec::sinusoid(1.0, 0.5), 256, vec![0.0, 1.0]);
        assert!((e.g_samples()[64] - 1.5).abs() < 1e-15);
        assert!((e.g(0.25) - 1.5).abs() < 1e-14);

        let e = env(GSpec::Constant(1.0), 16, vec![0.5, 0.0, 0.5]);
        assert_eq!(e.m(), 1.0);
    }

    #[test]
    fn build_errors() {
        let bin = OffspringDist::binary();
        assert!(matches!(
            PeriodicEnv::new(GSpec::sinusoid(0.5, 1.0), 64, bin.clone()),
            Err(EnvError::NonPositiveRate { .. })
        ));
        assert!(matches!(
            PeriodicEnv::new(GSpec::Constant(1.0), 1, bin),
            Err(EnvError::GridTooSmall(1))
        ));
        assert!(matches!(OffspringDist::new(vec![0.5, 0.4]), Err(EnvError::InvalidPmf(_))));
        assert!(matches!(OffspringDist::new(vec![-0.1, 1.1]), Err(EnvError::InvalidPmf(_))));
        // within the 1e-9 tolerance: accepted and renormalised
        let d = OffspringDist::new(vec![0.5, 0.5 + 5e-10]).unwrap();
        assert!((d.pmf().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn generating_function_examples() {
        let e = env(GSpec::Constant(1.0), 16, vec![0.0, 1.0]);
        assert_eq!(e.offspring_f(0.5).unwrap(), 0.25);
        assert_eq!(e.offspring_f(1.0).unwrap(), 1.0);
        let e = env(GSpec::Constant(1.0), 16, vec![0.5, 0.0, 0.5]);
        assert!((e.offspring_f(0.5).unwrap() - 0.3125).abs() < 1e-15);
        assert!((e.offspring_f(1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(e.offspring_f(1.5), Err(EnvError::Domain { .. })));
        assert!(matches!(e.offspring_f(-0.1), Err(EnvError::Domain { .. })));
    }

    #[test]
    fn deficit_matches_generating_function() {
        let d = OffspringDist::new(vec![0.2, 0.3, 0.1, 0.4]).unwrap();
        for k in 0..=20 {
            let w = k as f64 / 20.0;
            let direct = 1.0 - w - d.generating(1.0 - w);
            assert!((d.deficit(w) - direct).abs() < 1e-14);
        }
        // small w: deficit ≈ m w with full relative accuracy
        let w = 1e-30;
        assert!((d.deficit(w) / (d.mean() * w) - 1.0).abs() < 1e-14);
        let b = OffspringDist::binary();
        assert_eq!(b.deficit(0.25), 0.25 * 0.75);
    }

    /// Exact rational evaluation of A(w) = m - (1 - w - f(1-w)) / w.
    fn a_rational(pmf: &[(i128, i128)], w: (i128, i128)) -> f64 {
        fn add(a: (i128, i128), b: (i128, i128)) -> (i128, i128) {
            norm((a.0 * b.1 + b.0 * a.1, a.1 * b.1))
        }
        fn mul(a: (i128, i128), b: (i128, i128)) -> (i128, i128) {
            norm((a.0 * b.0, a.1 * b.1))
        }
        fn norm(a: (i128, i128)) -> (i128, i128) {
            fn gcd(a: i128, b: i128) -> i128 {
                if b == 0 { a.abs() } else { gcd(b, a % b) }
            }
            let g = gcd(a.0, a.1).max(1);
            (a.0 / g, a.1 / g)
        }
        let s = add((1, 1), (-w.0, w.1));
        let mut f = (0, 1);
        let mut m = (0, 1);
        for (k, p) in pmf.iter().enumerate() {
            let mut pow = s;
            for _ in 0..k {
                pow = mul(pow, s);
            }
            f = add(f, mul(*p, pow));
            m = add(m, mul(*p, (k as i128, 1)));
        }
        let num = add(add((1, 1), (-w.0, w.1)), (-f.0, f.1));
        let quot = mul(num, (w.1, w.0));
        let a = add(m, (-quot.0, quot.1));
        a.0 as f64 / a.1 as f64
    }

    #[test]
    fn a_function_examples() {
        let e = env(GSpec::Constant(1.0), 16, vec![0.0, 1.0]);
        assert!((e.a_function(0.3).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(e.a_function(0.0).unwrap(), 0.0);
        assert!((e.a_function(1e-10).unwrap() - 1e-10).abs() < 1e-24);

        let e = env(GSpec::Constant(1.0), 16, vec![0.5, 0.0, 0.5]);
        let exact = a_rational(&[(1, 2), (0, 1), (1, 2)], (1, 2));
        assert_eq!(exact, 0.625);
        assert!((e.a_function(0.5).unwrap() - exact).abs() < 1e-15);
        let exact = a_rational(&[(1, 2), (0, 1), (1, 2)], (3, 7));
        assert!((e.a_function(3.0 / 7.0).unwrap() - exact).abs() < 1e-14);
    }

    #[test]
    fn a_function_series_is_continuous_at_switch() {
        let d = OffspringDist::new(vec![0.2, 0.3, 0.1, 0.4]).unwrap();
        let below = d.a_function(A_SERIES_SWITCH * (1.0 - 1e-9));
        let above = d.a_function(A_SERIES_SWITCH * (1.0 + 1e-9));
        assert!((below - above).abs() < 1e-14, "{below} vs {above}");
    }

    #[test]
    fn moment_examples() {
        let one = OffspringDist::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(one.moment_log(1.0), 0.0);
        let three = OffspringDist::new(vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        let expect = 3.0 * 3f64.ln().powi(2);
        assert!((three.moment_log(2.0) - expect).abs() < 1e-12);
        assert!((three.moment_log(2.0) - 3.620).abs() < 1e-3);
        let zero = OffspringDist::new(vec![1.0]).unwrap();
        assert_eq!(zero.moment_log(1.5), 0.0);
    }

    #[test]
    fn a_partial_sums_converge() {
        // Σ A(c r^n) is Cauchy for finite-support laws.
        let d = OffspringDist::new(vec![0.1, 0.3, 0.2, 0.4]).unwrap();
        let (c, r) = (0.9, 0.5f64);
        let mut sum = 0.0;
        let mut last_inc = f64::MAX;
        for n in 0..80 {
            let inc = d.a_function(c * r.powi(n));
            sum += inc;
            last_inc = inc;
        }
        assert!(last_inc < 1e-10);
        assert!(sum.is_finite());
    }

    #[test]
    fn sampling_matches_pmf() {
        let d = OffspringDist::new(vec![0.25, 0.5, 0.25]).unwrap();
        assert_eq!(d.sample_with(0.1), 0);
        assert_eq!(d.sample_with(0.3), 1);
        assert_eq!(d.sample_with(0.9), 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn pmf_strategy() -> impl Strategy<Value = OffspringDist> {
            prop::collection::vec(0.0f64..1.0, 1..6).prop_filter_map("nonzero mean", |raw| {
                let total: f64 = raw.iter().sum();
                if total <= 0.0 || raw.iter().skip(1).all(|p| *p == 0.0) {
                    return None;
                }
                OffspringDist::new(raw.iter().map(|p| p / total).collect()).ok()
            })
        }

        proptest! {
            #[test]
            fn generating_bounds(d in pmf_strategy()) {
                let k = d.max_offspring() as i32;
                for i in 0..=10 {
                    let s = i as f64 / 10.0;
                    let f = d.generating(s);
                    prop_assert!((0.0..=1.0 + 1e-15).contains(&f));
                    prop_assert!(f >= s.powi(k + 1) - 1e-15);
                }
            }

            #[test]
            fn a_function_monotone(d in pmf_strategy()) {
                let mut prev = d.a_function(0.0);
                prop_assert_eq!(prev, 0.0);
                for i in 1..=1000 {
                    let a = d.a_function(i as f64 / 1000.0);
                    prop_assert!(a >= -1e-12);
                    prop_assert!(a >= prev - 1e-12, "A not monotone at {}", i);
                    prev = a;
                }
            }
        }
    }
}
