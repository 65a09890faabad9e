//! Random draws of PMT gains and ADC samples.
//!
//! Two gain generators are provided. The branching sampler simulates the
//! dynode cascade electron by electron (in aggregate, one Poisson draw per
//! stage) and is the physical reference. The diffusion sampler draws from
//! the gamma-mixture law whose transform is the closed-form gain MGF; it is
//! what the analytic densities describe exactly.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson};

use crate::error::{Error, Result};
use crate::gain::GainModel;

/// Largest electron population a cascade stage may reach.
pub const POPULATION_CAP: f64 = 1e12;

/// One Poisson draw; zero mean gives zero.
#[inline]
pub fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    if mean <= 0.0 {
        return 0.0;
    }
    Poisson::new(mean).map(|d| d.sample(rng)).unwrap_or(0.0)
}

/// Gamma with integer shape `k` and rate `rate`; zero when `k = 0`.
#[inline]
pub fn gamma_count<R: Rng + ?Sized>(rng: &mut R, k: f64, rate: f64) -> f64 {
    if k <= 0.0 {
        return 0.0;
    }
    Gamma::new(k, 1.0 / rate)
        .map(|d| d.sample(rng))
        .unwrap_or(0.0)
}

/// Runs the cascade from `initial` electrons and returns the anode count.
pub fn cascade<R: Rng + ?Sized>(rng: &mut R, hbar: f64, stages: u32, initial: f64) -> Result<f64> {
    let mut s = initial;
    for stage in 1..=stages as usize {
        if s == 0.0 {
            return Ok(0.0);
        }
        s = poisson(rng, hbar * s);
        if s > POPULATION_CAP {
            return Err(Error::Overflow {
                stage,
                population: s,
            });
        }
    }
    Ok(s)
}

/// `n` independent raw gains from the branching cascade.
pub fn draw_gain_branching<R: Rng + ?Sized>(
    rng: &mut R,
    model: &GainModel<f64>,
    n: usize,
) -> Result<Vec<f64>> {
    if model.stages() == 0 {
        return Err(Error::Unsupported(
            "branching needs a model with a stage count".into(),
        ));
    }
    (0..n)
        .map(|_| cascade(rng, model.hbar(), model.stages(), 1.0))
        .collect()
}

/// One normalized gain `G / A` from the diffusion law.
pub fn draw_gain_diffusion<R: Rng + ?Sized>(rng: &mut R, a: f64) -> f64 {
    let k = poisson(rng, a);
    gamma_count(rng, k, a)
}

/// One normalized sample for Poisson(`lambda`) photons with branching gains.
/// The cascades of all photons run together since they are independent.
pub fn draw_sample_value<R: Rng + ?Sized>(
    rng: &mut R,
    lambda: f64,
    model: &GainModel<f64>,
) -> Result<f64> {
    if model.stages() == 0 {
        return Err(Error::Unsupported(
            "branching needs a model with a stage count".into(),
        ));
    }
    let n = poisson(rng, lambda);
    Ok(cascade(rng, model.hbar(), model.stages(), n)? / model.mean_gain())
}

/// One normalized sample for Poisson(`lambda`) photons with diffusion gains.
#[inline]
pub fn draw_sample_value_diffusion<R: Rng + ?Sized>(rng: &mut R, lambda: f64, a: f64) -> f64 {
    let n = poisson(rng, lambda);
    charge_for_photons(rng, n, a)
}

/// Normalized charge of `n` photons with diffusion gains.
#[inline]
pub fn charge_for_photons<R: Rng + ?Sized>(rng: &mut R, n: f64, a: f64) -> f64 {
    if n == 0.0 {
        return 0.0;
    }
    let k = poisson(rng, n * a);
    gamma_count(rng, k, a)
}

/// Probability that a cascade started by one electron dies out, by
/// iterating the offspring generating function `exp(hbar (s - 1))`.
pub fn extinction_probability(hbar: f64, stages: u32) -> f64 {
    (0..stages).fold(0.0, |s, _| (hbar * (s - 1.0)).exp())
}

/// Shape ratio whose no-charge atom matches the cascade extinction
/// probability: `exp(-a) = q`.
pub fn extinction_matched_ratio(model: &GainModel<f64>) -> f64 {
    -extinction_probability(model.hbar(), model.stages()).ln()
}
