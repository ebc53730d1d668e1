use kppwave_core::bbmpe::*;
use kppwave_core::env::{GSpec, OffspringDist, PeriodicEnv};
use kppwave_core::fkpp::{evolve, init_field, Domain, InitialData, ObserverConfig, WaveSurrogate};
use kppwave_core::spectral::{minimal_speed, SpectralSolution};
use kppwave_core::stats::{median, MeanEstimate};

fn flat() -> PeriodicEnv {
    PeriodicEnv::homogeneous_binary()
}

fn sinus() -> PeriodicEnv {
    PeriodicEnv::new(GSpec::sinusoid(1.0, 0.5), 64, OffspringDist::binary()).unwrap()
}

fn cfg(obs_dt: f64) -> SimConfig {
    SimConfig { obs_dt, ..Default::default() }
}

fn column(traces: &[ReplicateTrace], t: f64, pick: impl Fn(&ReplicateTrace, usize) -> f64) -> MeanEstimate {
    let xs: Vec<f64> = traces.iter().map(|tr| pick(tr, tr.index_of(t))).collect();
    MeanEstimate::from_samples(&xs)
}

#[test]
fn yule_population_mean() {
    let traces = simulate_many(&flat(), 0.0, 2.0, 5, 1000, &cfg(1.0), Observables::default()).unwrap();
    let n = column(&traces, 2.0, |tr, k| tr.count[k] as f64);
    assert!(n.within(2f64.exp(), 3.0), "{n:?}");
}

#[test]
fn thinned_lifetimes_are_exponential() {
    // Proposal rate 3 on a unit rate: two thirds of proposals are rejected.
    let env = flat();
    let c = SimConfig { proposal_rate: Some(3.0), ..Default::default() };
    let n = 10_000;
    let mut times: Vec<f64> = (0..n).map(|id| first_branch(&env, 0.25, 17, id, &c).unwrap().0).collect();
    times.sort_by(f64::total_cmp);
    let ks = times
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let cdf = 1.0 - (-t).exp();
            (cdf - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - cdf).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 1.628 / (n as f64).sqrt(), "KS statistic {ks}");
}

#[test]
fn thinning_uses_the_local_rate() {
    // A particle on a rate that is tiny except near integers branches later
    // than one on the flat rate with the same maximum.
    let env = PeriodicEnv::new(GSpec::sinusoid(0.55, 0.45), 64, OffspringDist::binary()).unwrap();
    let c = SimConfig::default();
    let times: Vec<f64> = (0..4000).map(|id| first_branch(&env, 0.5, 3, id, &c).unwrap().0).collect();
    let mean = MeanEstimate::from_samples(&times);
    assert!(mean.mean > 1.2 / env.g_max(), "{mean:?}");
}

#[test]
fn additive_martingale_mean_is_constant() {
    for env in [flat(), sinus()] {
        let spec = SpectralSolution::compute(&env, 0.8, 128).unwrap();
        let obs = Observables { additive: Some(&spec), derivative: None };
        let traces = simulate_many(&env, 0.0, 4.0, 21, 1000, &cfg(1.0), obs).unwrap();
        let w0 = spec.phi(0.0);
        assert!((traces[0].additive[0] - w0).abs() < 1e-12);
        for t in [1.0, 2.0, 4.0] {
            let w = column(&traces, t, |tr, k| tr.additive[k]);
            assert!(w.within(w0, 3.0), "t = {t}: {w:?} vs {w0}");
        }
        assert!(traces.iter().all(|tr| tr.additive.iter().all(|w| *w > 0.0)));
    }
}

// At λ* the far-left particles make ∂W_t heavy-tailed and skewed, so the
// standard error only becomes trustworthy with many more replicates than
// the additive case needs.
#[test]
fn derivative_martingale_mean_is_constant() {
    for env in [flat(), sinus()] {
        let sp = minimal_speed(&env).unwrap();
        let star = SpectralSolution::compute(&env, sp.lambda_star, 128).unwrap();
        let obs = Observables { additive: None, derivative: Some(&star) };
        let x0 = 0.3;
        let traces = simulate_many(&env, x0, 4.0, 8, 20_000, &cfg(1.0), obs).unwrap();
        let d0 = derivative_martingale(&[x0], 0.0, &star);
        for t in [1.0, 2.0, 4.0] {
            let d = column(&traces, t, |tr, k| tr.derivative[k]);
            assert!(d.within(d0, 3.0), "t = {t}: {d:?} vs {d0}");
        }
    }
}

#[test]
fn recorded_positions_reproduce_the_trace() {
    let env = sinus();
    let spec = SpectralSolution::compute(&env, 0.8, 128).unwrap();
    let obs = Observables { additive: Some(&spec), derivative: Some(&spec) };
    let c = SimConfig { record_particles: true, obs_dt: 0.5, ..Default::default() };
    let out = simulate(&env, 0.1, 3.0, 4, 2, &c, obs).unwrap();
    let sys = out.system.unwrap();
    for (k, t) in out.trace.times.iter().enumerate() {
        let pos = sys.positions_at(*t);
        let w = additive_martingale(&pos, *t, &spec);
        let d = derivative_martingale(&pos, *t, &spec);
        assert!((w - out.trace.additive[k]).abs() < 1e-12 * w.abs().max(1.0));
        assert!((d - out.trace.derivative[k]).abs() < 1e-12 * d.abs().max(1.0));
        assert_eq!(minimum_position(&pos), out.trace.minimum[k]);
    }
}

#[test]
fn identical_seeds_give_identical_runs() {
    let env = sinus();
    let spec = SpectralSolution::compute(&env, 0.8, 64).unwrap();
    let obs = Observables { additive: Some(&spec), derivative: Some(&spec) };
    let a = simulate_many(&env, 0.0, 3.0, 99, 20, &cfg(0.5), obs).unwrap();
    let b = simulate_many(&env, 0.0, 3.0, 99, 20, &cfg(0.5), obs).unwrap();
    assert_eq!(a, b);
    let c = simulate_many(&env, 0.0, 3.0, 100, 20, &cfg(0.5), obs).unwrap();
    assert_ne!(a, c);
    let seq: Vec<ReplicateTrace> = kppwave_core::par::map_replicates_seq(20, |r| {
        simulate(&env, 0.0, 3.0, 99, r, &cfg(0.5), obs).unwrap().trace
    });
    assert_eq!(a, seq);
}

#[test]
fn minimum_drifts_behind_the_critical_line() {
    let traces = simulate_many(&flat(), 0.0, 6.0, 12, 200, &cfg(2.0), Observables::default()).unwrap();
    let r2 = 2f64.sqrt();
    let med: Vec<f64> = [2.0, 4.0, 6.0]
        .iter()
        .map(|t| {
            let xs: Vec<f64> = traces.iter().map(|tr| tr.minimum[tr.index_of(*t)] + r2 * t).collect();
            median(&xs)
        })
        .collect();
    assert!(med[0] < med[1] && med[1] < med[2], "{med:?}");
}

#[test]
fn line_hits_are_on_the_barrier() {
    let env = flat();
    let sp = minimal_speed(&env).unwrap();
    for nu in [sp.nu_star, 1.5, 2.5] {
        let line = StoppingLine::new(3.0, nu, &sp).unwrap();
        let recs = stopping_lines(&env, &line, 0.0, 31, 200, &SimConfig::default()).unwrap();
        for rec in &recs {
            assert!(!rec.hits.is_empty());
            for h in &rec.hits {
                assert!((h.position + nu * h.sigma - 3.0).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn supercritical_line_count_is_unbiased() {
    // ν = 1.5 = γ(1)/1 for g ≡ 1, so e^{−x}|C(x, ν)| has mean 1.
    let env = flat();
    let sp = minimal_speed(&env).unwrap();
    let line = StoppingLine::new(3.0, 1.5, &sp).unwrap();
    let recs = stopping_lines(&env, &line, 0.0, 31, 4000, &SimConfig::default()).unwrap();
    let vals: Vec<f64> = recs.iter().map(|r| (-3.0f64).exp() * r.hits.len() as f64).collect();
    let m = MeanEstimate::from_samples(&vals);
    assert!(m.within(1.0, 3.0), "{m:?}");
}

#[test]
fn line_additive_is_a_martingale_in_x() {
    let env = sinus();
    let sp = minimal_speed(&env).unwrap();
    let spec = SpectralSolution::compute(&env, 0.8 * sp.lambda_star, 128).unwrap();
    let nu = spec.gamma / spec.lambda;
    let w0 = spec.phi(0.0);
    for x in [2.0, 3.0, 4.0] {
        let line = StoppingLine::new(x, nu, &sp).unwrap();
        let recs = stopping_lines(&env, &line, 0.0, 40 + x as u64, 1000, &SimConfig::default()).unwrap();
        let vals: Vec<f64> = recs.iter().map(|r| line_additive(r, &spec).unwrap()).collect();
        let m = MeanEstimate::from_samples(&vals);
        assert!(m.within(w0, 3.0), "x = {x}: {m:?} vs {w0}");
    }
}

#[test]
fn truncated_line_martingale_is_constant_in_z() {
    let env = flat();
    let sp = minimal_speed(&env).unwrap();
    let star = SpectralSolution::compute(&env, sp.lambda_star, 64).unwrap();
    let x_trunc = 5.0;
    let v0 = v_initial(&star, x_trunc, 0.0);
    assert!((v0 - 5.0).abs() < 1e-9);
    for z in [2.0, 3.0] {
        let line = StoppingLine::new(z, sp.nu_star, &sp).unwrap().with_lower(LowerBarrier::new(&star, x_trunc));
        let recs = stopping_lines(&env, &line, 0.0, 60 + z as u64, 1000, &SimConfig::default()).unwrap();
        let vals: Vec<f64> = recs.iter().map(|r| line_v_martingale(r, &star).unwrap()).collect();
        let m = MeanEstimate::from_samples(&vals);
        assert!(m.within(v0, 3.0), "z = {z}: {m:?}");
        for r in &recs {
            for a in &r.lower_barrier.as_ref().unwrap().absorbed {
                assert!((a.position + x_trunc + sp.nu_star * a.sigma).abs() < 1e-6);
            }
        }
    }
}

#[test]
fn curved_lower_barrier_runs_terminate() {
    let env = sinus();
    let sp = minimal_speed(&env).unwrap();
    let star = SpectralSolution::compute(&env, sp.lambda_star, 128).unwrap();
    let line = StoppingLine::new(1.0, sp.nu_star, &sp).unwrap().with_lower(LowerBarrier::new(&star, 1.0));
    let recs = stopping_lines(&env, &line, 0.0, 5, 50, &SimConfig::default()).unwrap();
    for r in &recs {
        for h in &r.hits {
            assert!((h.position + sp.nu_star * h.sigma - 1.0).abs() < 1e-6);
        }
        for a in &r.lower_barrier.as_ref().unwrap().absorbed {
            assert!((star.h_at(a.position) + 1.0 + star.gamma_prime * a.sigma).abs() < 1e-3);
        }
    }
}

#[test]
fn product_martingale_reproduces_the_wave() {
    let env = flat();
    let sp = minimal_speed(&env).unwrap();
    let spec = SpectralSolution::compute(&env, 1.0, 256).unwrap();
    let mut field = init_field(
        InitialData::ExpTail { spec: &spec, beta: 1.0, lambda_star: sp.lambda_star },
        Domain::new(-40, 120).unwrap(),
        64,
    )
    .unwrap();
    let obs = ObserverConfig { levels: vec![0.5], front_stride: 16, snapshot_stride: 0, dense_tail: 1.0 };
    let trace = evolve(&mut field, &env, 40.0, 1.0 / 128.0, &obs).unwrap();
    let wave = WaveSurrogate::from_trace(&trace, 1.5).unwrap();
    let target = wave.eval(0.0, 0.0);
    for x in [2.0, 4.0] {
        let line = StoppingLine::new(x, 1.5, &sp).unwrap();
        let recs = stopping_lines(&env, &line, 0.0, 70 + x as u64, 1000, &SimConfig::default()).unwrap();
        let vals: Vec<f64> = recs.iter().map(|r| product_martingale(r, |t, y| wave.eval(t, y))).collect();
        let m = MeanEstimate::from_samples(&vals);
        assert!(m.within(target, 3.0), "x = {x}: {m:?} vs u(0,0) = {target}");
    }
}
