//! Pulse, transition and waveform working regimes.
//!
//! Below `1/tau` photons per symbol the detected pulse count grows with the
//! rate; beyond it pulses start to merge. The second threshold is the rate
//! at which the summed output of a saturating anode falls below its
//! ceiling `l_max` only with probability `epsilon`, under the Gaussian
//! approximation of the normalized sample.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::nonlinear::NonlinearFn;
use crate::error::{domain, Result};
use crate::num::Real;
use crate::rng::stream;
use crate::sampler::draw_sample_value_diffusion;
use crate::special::normal_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Pulse,
    Transition,
    Waveform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeThresholds<T> {
    /// Pulse/transition boundary (photons per symbol).
    pub lambda_th1: T,
    /// Transition/waveform boundary; infinite for a non-saturating anode.
    pub lambda_th2: T,
    pub l_max: T,
    pub epsilon: T,
}

/// Rate maximizing the mean detected pulse count `L e^(-L tau)`.
pub fn threshold_pulse_transition<T: Real>(tau: T) -> Result<T> {
    if !(tau > T::zero() && tau < T::one()) {
        return domain(format!("dead time must lie in (0, 1), got {tau}"));
    }
    Ok(tau.recip())
}

/// Gaussian-approximate rate at which `P(Z <= l_max) = epsilon`.
pub fn threshold_transition_waveform<T: Real>(l_max: T, epsilon: T, tau: T, a: T) -> Result<T> {
    if !(epsilon > T::zero() && epsilon < T::lit(0.5)) {
        return domain(format!(
            "tail probability must lie in (0, 0.5), got {epsilon}"
        ));
    }
    if !(l_max > T::zero()) {
        return domain(format!("saturation ceiling must be positive, got {l_max}"));
    }
    if !(tau > T::zero() && tau < T::one()) {
        return domain(format!("dead time must lie in (0, 1), got {tau}"));
    }
    if !(a > T::zero()) {
        return domain(format!("shape ratio must be positive, got {a}"));
    }
    if l_max.is_infinite() {
        return Ok(T::infinity());
    }
    let q = normal_quantile(epsilon);
    let s2 = T::one() + T::lit(2.0) / a;
    let root = -q * s2.sqrt() + (s2 * q * q + T::lit(4.0) * l_max).sqrt();
    Ok(root * root / (T::lit(4.0) * tau))
}

/// The shape ratio `a` for which [`threshold_transition_waveform`] returns
/// `target`. Needs `target * tau > l_max` and a solution with `a > 0`.
pub fn back_solve_ratio<T: Real>(target: T, l_max: T, epsilon: T, tau: T) -> Result<T> {
    if !(epsilon > T::zero() && epsilon < T::lit(0.5)) {
        return domain(format!(
            "tail probability must lie in (0, 0.5), got {epsilon}"
        ));
    }
    let lam = target * tau;
    if !(lam > l_max && l_max > T::zero()) {
        return domain("target threshold must exceed l_max / tau");
    }
    // sqrt(lam) = (-q s + sqrt(s^2 q^2 + 4 l)) / 2 solved for s
    let s = (l_max - lam) / (lam.sqrt() * normal_quantile(epsilon));
    let s2 = s * s;
    if !(s2 > T::one()) {
        return domain(format!("no positive shape ratio reaches {target}"));
    }
    Ok(T::lit(2.0) / (s2 - T::one()))
}

impl<T: Real> RegimeThresholds<T> {
    pub fn new(l_max: T, epsilon: T, tau: T, a: T) -> Result<Self> {
        Ok(Self {
            lambda_th1: threshold_pulse_transition(tau)?,
            lambda_th2: threshold_transition_waveform(l_max, epsilon, tau, a)?,
            l_max,
            epsilon,
        })
    }

    /// Which regime the rate `lambda` (photons per symbol) falls in.
    pub fn classify(&self, lambda: T) -> Result<Regime> {
        if !(lambda >= T::zero()) {
            return domain(format!("rate must be nonnegative, got {lambda}"));
        }
        Ok(if lambda <= self.lambda_th1 {
            Regime::Pulse
        } else if lambda <= self.lambda_th2 {
            Regime::Transition
        } else {
            Regime::Waveform
        })
    }

    /// Whether the waveform regime exists (false for a linear anode).
    pub fn has_waveform_regime(&self) -> bool {
        self.lambda_th2.is_finite()
    }
}

impl RegimeThresholds<f64> {
    /// Thresholds with `l_max` read off the anode curve.
    pub fn from_curve(c: &NonlinearFn, epsilon: f64, tau: f64, a: f64) -> Result<Self> {
        Self::new(c.l_max(), epsilon, tau, a)
    }
}

/// Free-function form of [`RegimeThresholds::classify`].
pub fn classify<T: Real>(lambda: T, thresholds: &RegimeThresholds<T>) -> Result<Regime> {
    thresholds.classify(lambda)
}

/// Chebyshev bound on `P(Z <= l_max)` at mean photon count `lambda`.
pub fn chebyshev_tail_bound(lambda: f64, a: f64, l_max: f64) -> f64 {
    if lambda <= l_max {
        return 1.0;
    }
    (lambda * (1.0 + 2.0 / a) / ((lambda - l_max) * (lambda - l_max))).min(1.0)
}

/// Monte-Carlo estimate of `P(Z <= level)` for a normalized sample at mean
/// photon count `lambda`. Draws are split into blocks on separate streams.
pub fn tail_probability_mc(lambda: f64, a: f64, level: f64, draws: usize, seed: u64) -> f64 {
    const BLOCK: usize = 1 << 14;
    let blocks = draws.div_ceil(BLOCK);
    let hits: usize = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, b as u64);
            let n = BLOCK.min(draws - b * BLOCK);
            (0..n)
                .filter(|_| draw_sample_value_diffusion(&mut rng, lambda, a) <= level)
                .count()
        })
        .sum();
    hits as f64 / draws as f64
}
