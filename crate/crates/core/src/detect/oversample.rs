//! Mean power detection with several samples per dead time.
//!
//! With `ks` samples per dead time and `kd = 1/tau` dead times per symbol,
//! neighbouring samples share photons and the first `ks - 1` samples still
//! see pulses from the previous symbol. The mean of all `ks kd` samples is
//! treated as Gaussian.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::num::Real;

use super::gaussian::{gaussian_ml_error, gaussian_ml_threshold};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OversampleStats<T> {
    /// Normalized mean under symbol one (symbol zero is `N(0, 1)`).
    pub mu_ks: T,
    pub sigma2_ks: T,
    pub gamma_1a: T,
    pub pe_wa: T,
}

fn check<T: Real>(tau: T, ks: usize, a: T) -> Result<()> {
    if ks == 0 {
        return domain("at least one sample per dead time is required");
    }
    if !(tau > T::zero() && tau < T::one()) {
        return domain(format!("dead time must lie in (0, 1), got {tau}"));
    }
    if !(a > T::zero()) {
        return domain(format!("shape ratio must be positive, got {a}"));
    }
    Ok(())
}

/// `(2 - 3/ks + 1/ks^2)`, the sum of squared overlap weights.
fn overlap_sq<T: Real>(ks: usize) -> T {
    let k = T::one() / T::from_count(ks);
    T::lit(2.0) - T::lit(3.0) * k + k * k
}

/// Mean and variance of the sample mean given the current and previous
/// symbol rates, in the published closed form. That form charges the
/// current symbol's edge photons at the previous-symbol weights.
pub fn oversample_moments<T: Real>(
    lambda_cur: T,
    lambda_prev: T,
    tau: T,
    ks: usize,
    a: T,
) -> Result<(T, T)> {
    check(tau, ks, a)?;
    let s2 = T::one() + T::lit(2.0) / a;
    let k = T::one() / T::from_count(ks);
    let t2 = tau * tau;
    let both = lambda_prev + lambda_cur;
    let mean = lambda_cur * tau * (T::one() - tau) + both * t2 / T::lit(2.0) * (T::one() - k);
    let var = lambda_cur * t2 * (T::one() - tau) * s2
        + both * t2 * tau / T::lit(6.0) * s2 * overlap_sq::<T>(ks);
    Ok((mean, var))
}

/// Exact mean and variance for samples at `i tau / ks`, `i = 1..=ks kd`,
/// each seeing the pulses started in the preceding dead time. Edge
/// photons of the current symbol are seen by `1..=ks` samples and those of
/// the previous symbol by `0..ks`.
pub fn oversample_moments_grid<T: Real>(
    lambda_cur: T,
    lambda_prev: T,
    tau: T,
    ks: usize,
    a: T,
) -> Result<(T, T)> {
    check(tau, ks, a)?;
    let s2 = T::one() + T::lit(2.0) / a;
    let k = T::one() / T::from_count(ks);
    let (t2, t3) = (tau * tau, tau * tau * tau);
    let two = T::lit(2.0);
    let six = T::lit(6.0);
    let mean = lambda_cur * tau * (T::one() - tau)
        + lambda_cur * t2 / two * (T::one() + k)
        + lambda_prev * t2 / two * (T::one() - k);
    let var = lambda_cur * t2 * (T::one() - tau) * s2
        + lambda_cur * t3 / six * s2 * (two + T::lit(3.0) * k + k * k)
        + lambda_prev * t3 / six * s2 * overlap_sq::<T>(ks);
    Ok((mean, var))
}

/// Gaussian statistics and error of over-sampled mean power detection
/// between rates `lambda0` and `lambda1` (photons per symbol). With
/// `prev = None` the previous symbol is averaged over both equiprobable
/// rates; otherwise it is taken as known.
pub fn mpd_oversample_stats<T: Real>(
    lambda0: T,
    lambda1: T,
    tau: T,
    ks: usize,
    a: T,
    prev: Option<T>,
) -> Result<OversampleStats<T>> {
    check(tau, ks, a)?;
    if !(lambda0 > T::zero() && lambda1 >= lambda0) {
        return domain("need 0 < lambda0 <= lambda1");
    }
    let (mu, sigma2) = match prev {
        Some(p) => {
            let (e0, v0) = oversample_moments(lambda0, p, tau, ks, a)?;
            let (e1, v1) = oversample_moments(lambda1, p, tau, ks, a)?;
            ((e1 - e0) / v0.sqrt(), v1 / v0)
        }
        None => {
            let half = T::lit(0.5);
            let mut mu = T::zero();
            let mut s2 = T::zero();
            for p in [lambda0, lambda1] {
                let (e0, v0) = oversample_moments(lambda0, p, tau, ks, a)?;
                let (e1, v1) = oversample_moments(lambda1, p, tau, ks, a)?;
                mu = mu + half * (e1 - e0) / v0.sqrt();
                s2 = s2 + half * v1 / v0;
            }
            (mu, s2)
        }
    };
    let gamma = gaussian_ml_threshold(mu, sigma2);
    Ok(OversampleStats {
        mu_ks: mu,
        sigma2_ks: sigma2,
        gamma_1a: gamma,
        pe_wa: gaussian_ml_error(mu, sigma2, gamma),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_sample_per_dead_time() {
        let (m, _) = oversample_moments(40.0f64, 90.0, 0.02, 1, 6.0).unwrap();
        assert!((m - 40.0 * 0.02 * 0.98).abs() < 1e-14);
        // the exact grid tiles the symbol, so the mean is the full photon count
        let (m, v) = oversample_moments_grid(40.0f64, 90.0, 0.02, 1, 6.0).unwrap();
        assert!((m - 40.0 * 0.02).abs() < 1e-14);
        assert!((v - 40.0 * 0.02 * 0.02 * (1.0 + 2.0 / 6.0)).abs() < 1e-14);
    }

    #[test]
    fn dense_sampling_limit() {
        let (m, _) = oversample_moments(40.0f64, 90.0, 0.02, 1_000_000, 6.0).unwrap();
        let lim = 40.0 * 0.02 * 0.98 + 130.0 * 0.0004 / 2.0;
        assert!((m - lim).abs() < 1e-6);
    }

    #[test]
    fn printed_average_matches_closed_expression() {
        let (l0, l1, tau, ks, a) = (5.0f64, 105.0, 0.02, 4usize, 6.0);
        let st = mpd_oversample_stats(l0, l1, tau, ks, a, None).unwrap();
        let s = (1.0 + 2.0 / a).sqrt();
        let c = 2.0 - 3.0 / 4.0 + 1.0 / 16.0;
        let mu = (l1 - l0) * (1.0 - tau / 2.0 * (1.0 + 0.25)) / (2.0 * s)
            * ((l0 * (1.0 - tau + tau / 3.0 * c)).powf(-0.5)
                + (l0 * (1.0 - tau) + (l1 + l0) * tau / 6.0 * c).powf(-0.5));
        let s2 = 1.0
            + (l1 - l0) * (1.0 - tau + tau / 6.0 * c) / 2.0
                * (1.0 / (l0 * (1.0 - tau + tau / 3.0 * c))
                    + 1.0 / (l0 * (1.0 - tau) + (l0 + l1) * tau / 6.0 * c));
        assert!((st.mu_ks - mu).abs() < 1e-12 * mu);
        assert!((st.sigma2_ks - s2).abs() < 1e-12 * s2);
        assert!(st.pe_wa > 0.0 && st.pe_wa < 0.5);
    }

    #[test]
    fn equal_rates_give_coin_flip() {
        let st = mpd_oversample_stats(5.0f64, 5.0, 0.02, 2, 6.0, None).unwrap();
        assert!((st.pe_wa - 0.5).abs() < 1e-12);
    }
}
