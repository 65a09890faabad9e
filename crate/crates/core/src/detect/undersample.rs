//! Mean power detection with `L` samples per symbol spaced at least one
//! dead time apart. Samples are then iid and their mean has the law of
//! one sample at `L` times the photon count, scaled by `1/L`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::mixed::{Affine, Mixed, SampleDist};
use crate::num::Real;

use super::gaussian::{gaussian_ml_error, gaussian_ml_threshold};
use super::ml::{min_integral, MinIntegral};

fn check<T: Real>(samples: usize, lambda0: T, lambda1: T, a: T) -> Result<()> {
    if samples == 0 {
        return domain("at least one sample per symbol is required");
    }
    if !(lambda0 >= T::zero() && lambda1 >= T::zero()) {
        return domain("photon counts must be nonnegative");
    }
    if !(a > T::zero()) {
        return domain(format!("shape ratio must be positive, got {a}"));
    }
    Ok(())
}

/// Law of the mean of `samples` iid samples at `lambda` photons each.
pub fn mean_power_law<T: Real>(
    samples: usize,
    lambda: T,
    a: T,
) -> Result<Affine<SampleDist<T>, T>> {
    let l = T::from_count(samples);
    Ok(Affine {
        inner: SampleDist::new(l * lambda, a)?,
        scale: l.recip(),
        shift: T::zero(),
    })
}

/// Density of the sample mean at `y > 0`.
pub fn mean_power_density<T: Real>(y: T, samples: usize, lambda: T, a: T) -> Result<T> {
    let l = T::from_count(samples);
    Ok(l * SampleDist::new(l * lambda, a)?.density(l * y))
}

/// Overlap of the two sample-mean laws, on the scale of the summed samples.
pub fn mpd_undersample_overlap<T: Real>(
    samples: usize,
    lambda0: T,
    lambda1: T,
    a: T,
) -> Result<MinIntegral<T>> {
    check(samples, lambda0, lambda1, a)?;
    let l = T::from_count(samples);
    min_integral(
        &SampleDist::new(l * lambda0, a)?,
        &SampleDist::new(l * lambda1, a)?,
    )
}

/// ML error probability of mean power detection.
pub fn mpd_undersample_error<T: Real>(samples: usize, lambda0: T, lambda1: T, a: T) -> Result<T> {
    Ok(mpd_undersample_overlap(samples, lambda0, lambda1, a)?.value)
}

/// ML threshold on the sample mean: decide one iff the mean exceeds it.
pub fn mpd_undersample_threshold<T: Real>(
    samples: usize,
    lambda0: T,
    lambda1: T,
    a: T,
) -> Result<T> {
    Ok(mpd_undersample_overlap(samples, lambda0, lambda1, a)?.threshold() / T::from_count(samples))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMpd<T> {
    pub mu_la: T,
    pub sigma2_la: T,
    /// Threshold in units of the symbol-zero standard deviation.
    pub gamma_la: T,
    /// The same threshold on the sample mean.
    pub threshold: T,
    pub pe_la: T,
}

/// Gaussian approximation of mean power detection.
pub fn mpd_undersample_gaussian<T: Real>(
    samples: usize,
    lambda0: T,
    lambda1: T,
    a: T,
) -> Result<GaussianMpd<T>> {
    check(samples, lambda0, lambda1, a)?;
    if !(lambda0 > T::zero()) {
        return domain("the approximation needs background light");
    }
    let sd0 = (lambda0 * (T::one() + T::lit(2.0) / a) / T::from_count(samples)).sqrt();
    let mu = (lambda1 - lambda0) / sd0;
    let s2 = lambda1 / lambda0;
    let gamma = gaussian_ml_threshold(mu, s2);
    Ok(GaussianMpd {
        mu_la: mu,
        sigma2_la: s2,
        gamma_la: gamma,
        threshold: lambda0 + gamma * sd0,
        pe_la: gaussian_ml_error(mu, s2, gamma),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::info::single::SingleSampleChannel;

    #[test]
    fn one_sample_is_single_sample_detection() {
        let pe = mpd_undersample_error(1, 0.1f64, 2.0, 6.0).unwrap();
        // independent route: overlap on the single-sample quadrature nodes
        let ch = SingleSampleChannel::new(0.1f64, 2.0, 6.0).unwrap();
        let (f0, f1) = ch.densities();
        let cont: Vec<f64> = f0.iter().zip(f1).map(|(a, b)| a.min(*b)).collect();
        let atom = ch.a0.min(ch.a1);
        let direct = 0.5 * (atom + ch.nodes().sum(&cont));
        assert!((pe - direct).abs() < 1e-6, "{pe} {direct}");
    }

    #[test]
    fn more_samples_help() {
        let mut prev = 0.5;
        for l in [1, 5, 10, 25, 50] {
            let pe = mpd_undersample_error(l, 0.1f64, 0.3, 6.0).unwrap();
            assert!(pe < prev);
            prev = pe;
        }
    }

    #[test]
    fn scaling_identity() {
        let law = mean_power_law(4, 0.5f64, 6.0).unwrap();
        for y in [0.1, 0.5, 1.3] {
            assert!((law.density(y) - mean_power_density(y, 4, 0.5, 6.0).unwrap()).abs() < 1e-14);
        }
    }

    #[test]
    fn gaussian_threshold_between_means() {
        let g = mpd_undersample_gaussian(50, 0.1f64, 0.3, 6.0).unwrap();
        assert!(g.gamma_la > 0.0 && g.gamma_la < g.mu_la);
        assert!(g.threshold > 0.1 && g.threshold < 0.3);
        let same = mpd_undersample_gaussian(50, 0.1f64, 0.1, 6.0).unwrap();
        assert!((same.pe_la - 0.5).abs() < 1e-15);
    }
}
