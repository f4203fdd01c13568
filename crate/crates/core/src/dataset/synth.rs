//! Synthetic multipath surrogate for the public CIR archive.
//!
//! Each raw trace holds a first path, a diffuse multipath tail whose decay
//! depends on the environment and, for NLoS, an attenuated first path plus
//! a stronger late path. The NLoS range error grows with the late path's
//! delay, which sits 10–45 samples after the first path: visible in a
//! long window, invisible in the first 8 samples.

use super::{window_cir, CirSample, Environment, Obstacle, DEFAULT_PEAK_FRAC, PRE_PEAK};
use crate::error::Result;
use crate::rng::{self, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub per_environment: usize,
    pub nlos_fraction: f64,
    pub trace_len: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            per_environment: 400,
            nlos_fraction: 0.5,
            trace_len: 256,
            seed: 0,
        }
    }
}

struct EnvProfile {
    decay: f64,
    paths: usize,
    noise: f64,
    max_range: f64,
    /// Range error per sample of late-path delay.
    delay_gain: f64,
    offset: f64,
}

fn profile(env: Environment) -> EnvProfile {
    let p = |decay, paths, noise, max_range, delay_gain, offset| EnvProfile {
        decay,
        paths,
        noise,
        max_range,
        delay_gain,
        offset,
    };
    match env {
        Environment::BigRoom => p(45.0, 12, 0.010, 20.0, 0.0090, 0.0),
        Environment::MediumRoom => p(30.0, 10, 0.012, 12.0, 0.0100, 0.0),
        Environment::SmallRoom => p(18.0, 8, 0.015, 7.0, 0.0110, 0.0),
        Environment::Outdoor => p(6.0, 2, 0.006, 30.0, 0.0040, -0.02),
        Environment::Ttw => p(35.0, 10, 0.025, 10.0, 0.0130, 0.20),
    }
}

/// (first-path attenuation, constant bias in meters)
fn material(o: Obstacle) -> (f64, f64) {
    match o {
        Obstacle::None => (1.0, 0.0),
        Obstacle::Aluminium => (0.45, 0.12),
        Obstacle::Plastic => (0.85, 0.02),
        Obstacle::Wood => (0.70, 0.05),
        Obstacle::Glass => (0.75, 0.04),
        Obstacle::Other => (0.60, 0.08),
    }
}

fn add_pulse(trace: &mut [f64], at: f64, amp: f64) {
    let lo = (at - 6.0).floor().max(0.0) as usize;
    let hi = ((at + 6.0).ceil() as usize).min(trace.len());
    for (t, v) in trace.iter_mut().enumerate().take(hi).skip(lo) {
        let x = (t as f64 - at) / 1.2;
        *v += amp * (-x * x).exp();
    }
}

const MATERIALS: [Obstacle; 5] = [
    Obstacle::Aluminium,
    Obstacle::Plastic,
    Obstacle::Wood,
    Obstacle::Glass,
    Obstacle::Other,
];

fn one(env: Environment, cfg: &SynthConfig, r: &mut Rng) -> Result<CirSample> {
    let los = rng::uniform(r) >= cfg.nlos_fraction;
    let obstacle = if los {
        Obstacle::None
    } else {
        MATERIALS[(rng::uniform(r) * 5.0) as usize % 5]
    };
    measurement(env, obstacle, None, cfg.trace_len, r)
}

/// One surrogate measurement with a given obstacle (LoS for `None`) and,
/// optionally, a given true range.
pub fn synthesize_measurement(
    env: Environment,
    obstacle: Obstacle,
    true_range: Option<f64>,
    r: &mut Rng,
) -> Result<CirSample> {
    measurement(
        env,
        obstacle,
        true_range,
        SynthConfig::default().trace_len,
        r,
    )
}

fn measurement(
    env: Environment,
    obstacle: Obstacle,
    true_range: Option<f64>,
    trace_len: usize,
    r: &mut Rng,
) -> Result<CirSample> {
    let prof = profile(env);
    let los = obstacle == Obstacle::None;
    let (atten, mat_bias) = material(obstacle);
    loop {
        let t0 = rng::uniform_range(r, 30.0, 40.0);
        let a1 = atten * rng::uniform_range(r, 0.9, 1.1);
        let mut raw = vec![0.0; trace_len];
        add_pulse(&mut raw, t0, a1);
        for _ in 0..prof.paths {
            let delay = 3.0 - prof.decay * rng::uniform(r).max(1e-12).ln();
            let amp = a1 * 0.35 * (-delay / prof.decay).exp() * rng::uniform_range(r, 0.3, 1.0);
            add_pulse(&mut raw, t0 + delay, amp);
        }
        let mut label = prof.offset + 0.02 * rng::normal(r);
        if !los {
            let delay = rng::uniform_range(r, 10.0, 45.0);
            let gain = rng::uniform_range(r, 1.3, 2.2);
            add_pulse(&mut raw, t0 + delay, a1 * gain);
            label = prof.offset + mat_bias + prof.delay_gain * delay + 0.015 * rng::normal(r);
        }
        for v in raw.iter_mut() {
            *v = (*v + prof.noise * rng::normal(r)).abs();
        }
        // keep only traces whose detected first path is the true one
        let max = raw.iter().cloned().fold(0.0, f64::max);
        let first = raw
            .iter()
            .position(|&v| v >= DEFAULT_PEAK_FRAC * max)
            .unwrap_or(0);
        if (first as f64 - t0).abs() > 3.0 || first < PRE_PEAK {
            continue;
        }
        let d = true_range.unwrap_or_else(|| rng::uniform_range(r, 0.5, prof.max_range));
        return CirSample::new(
            window_cir(&raw, DEFAULT_PEAK_FRAC)?,
            d + label,
            d,
            env,
            obstacle,
            los,
        );
    }
}

const SYNTH_STREAM: u64 = 0x5E7;

/// `per_environment` samples for each of the five environments, in
/// environment order.
pub fn synthesize(cfg: &SynthConfig) -> Result<Vec<CirSample>> {
    let mut out = Vec::with_capacity(cfg.per_environment * Environment::ALL.len());
    for (e, env) in Environment::ALL.into_iter().enumerate() {
        let mut r = rng::seeded(rng::derive_seed(cfg.seed, SYNTH_STREAM, e as u64));
        for _ in 0..cfg.per_environment {
            out.push(one(env, cfg, &mut r)?);
        }
    }
    Ok(out)
}
