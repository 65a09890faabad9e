//! Single-photon PMT gain statistics.
//!
//! The cascade of `nu` dynodes, each multiplying electrons by a Poisson
//! number with mean `hbar`, is approximated by a diffusion whose gain `G`
//! has moment generating function `exp(-A w / (1 + B w))`. Normalizing by
//! `A` yields a compound law fully described by `a = A / B`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::num::Real;

/// Dynode count used when only the mean gain is known.
pub const DEFAULT_STAGES: u32 = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainModel<T> {
    mean_gain: T,
    stages: u32,
    hbar: T,
    b: T,
    a: T,
}

impl<T: Real> GainModel<T> {
    /// Build from the mean gain `A > 1` and stage count `nu >= 1`.
    pub fn new(mean_gain: T, stages: u32) -> Result<Self> {
        if !(mean_gain > T::one()) || !mean_gain.is_finite() {
            return domain(format!("mean gain must be finite and > 1, got {mean_gain}"));
        }
        if stages == 0 {
            return domain("stage count must be at least 1");
        }
        let hbar = mean_gain.powf(T::one() / T::lit(stages as f64));
        let b = (mean_gain - T::one()) / (T::lit(2.0) * (hbar - T::one()));
        Ok(Self {
            mean_gain,
            stages,
            hbar,
            b,
            a: mean_gain / b,
        })
    }

    /// Build from the mean gain with [`DEFAULT_STAGES`] dynodes.
    pub fn with_default_stages(mean_gain: T) -> Result<Self> {
        Self::new(mean_gain, DEFAULT_STAGES)
    }

    /// A model described directly by the shape ratio `a`. Used when `a`
    /// is inferred from data rather than from dynode physics; the mean
    /// gain is then nominal and the stage count is reported as zero.
    pub fn from_ratio(a: T) -> Result<Self> {
        if !(a > T::zero()) || !a.is_finite() {
            return domain(format!("shape ratio must be finite and > 0, got {a}"));
        }
        Ok(Self {
            mean_gain: a,
            stages: 0,
            hbar: T::nan(),
            b: T::one(),
            a,
        })
    }

    /// Mean gain `A`.
    pub fn mean_gain(&self) -> T {
        self.mean_gain
    }
    /// Stage count `nu` (zero for models built with [`Self::from_ratio`]).
    pub fn stages(&self) -> u32 {
        self.stages
    }
    /// Per-stage mean secondary emission `A^(1/nu)`.
    pub fn hbar(&self) -> T {
        self.hbar
    }
    /// Spread parameter `B`.
    pub fn b(&self) -> T {
        self.b
    }
    /// Shape ratio `a = A / B`.
    pub fn a(&self) -> T {
        self.a
    }
    /// Variance of the raw gain, `2AB`.
    pub fn gain_variance(&self) -> T {
        T::lit(2.0) * self.mean_gain * self.b
    }
}

/// MGF `E[exp(-w G)]` of the raw gain under the diffusion model.
pub fn mgf_gain<T: Real>(omega: T, model: &GainModel<T>) -> Result<T> {
    if !(omega >= T::zero()) {
        return domain(format!("MGF argument must be nonnegative, got {omega}"));
    }
    let a = model.mean_gain();
    Ok((-(a * omega) / (T::one() + model.b() * omega)).exp())
}

/// MGF `E[exp(-w Z)]` of one normalized ADC sample that integrates
/// Poisson(`lambda`) photons with gain shape ratio `a`.
pub fn mgf_sample<T: Real>(omega: T, lambda: T, a: T) -> Result<T> {
    if !(omega >= T::zero()) {
        return domain(format!("MGF argument must be nonnegative, got {omega}"));
    }
    if !(lambda >= T::zero()) {
        return domain(format!(
            "photon count mean must be nonnegative, got {lambda}"
        ));
    }
    if !(a > T::zero()) {
        return domain(format!("shape ratio must be positive, got {a}"));
    }
    let inner = (-omega / (T::one() + omega / a)).exp();
    Ok((lambda * (inner - T::one())).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn derived_parameters() {
        let m = GainModel::new(3e7f64, 12).unwrap();
        assert_relative_eq!(m.hbar().powi(12), 3e7, max_relative = 1e-12);
        assert_relative_eq!(m.a(), 3e7 / m.b(), max_relative = 1e-15);
        let m1 = GainModel::new(5.0f64, 1).unwrap();
        // one stage: B = 1/2, a = 2A
        assert_relative_eq!(m1.b(), 0.5, max_relative = 1e-15);
        assert_relative_eq!(m1.a(), 10.0, max_relative = 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(GainModel::new(1.0f64, 3).is_err());
        assert!(GainModel::new(10.0f64, 0).is_err());
        assert!(mgf_sample(-1.0f64, 1.0, 1.0).is_err());
        assert!(mgf_sample(1.0f64, -1.0, 1.0).is_err());
    }

    #[test]
    fn gain_mgf_values() {
        let m = GainModel::new(2.0f64, 1).unwrap();
        assert_eq!(mgf_gain(0.0, &m).unwrap(), 1.0);
        assert_relative_eq!(
            mgf_gain(1.0, &m).unwrap(),
            (-4.0f64 / 3.0).exp(),
            max_relative = 1e-15
        );
        let h = 1e-7;
        let m = GainModel::new(1e3f64, 12).unwrap();
        let slope = (mgf_gain(h, &m).unwrap() - 1.0) / h;
        assert!((slope + 1e3).abs() < 1e-6 * 1e3 * 1e3);
    }

    #[test]
    fn sample_mgf_values() {
        assert_eq!(mgf_sample(3.0f64, 0.0, 2.0).unwrap(), 1.0);
        assert_eq!(mgf_sample(0.0f64, 4.0, 2.0).unwrap(), 1.0);
        let expect = ((-0.8f64).exp() - 1.0).exp();
        assert_relative_eq!(
            mgf_sample(1.0f64, 1.0, 4.0).unwrap(),
            expect,
            max_relative = 1e-15
        );
    }
}
