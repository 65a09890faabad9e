//! Duty cycles that maximize (or nearly maximize) the information rate.

use crate::error::{Error, Result};
use crate::num::Real;

use super::multi::MultiSampleChannel;
use super::single::{atom_weight, SingleSampleChannel};

/// Search interval for the duty cycle.
pub const MU_LO: f64 = 1e-6;
pub const MU_HI: f64 = 1.0 - 1e-6;
/// Derivative magnitude accepted as a root.
pub const DERIVATIVE_TOL: f64 = 1e-8;

/// Maximizer of `-mu ln mu (1 - b) - (mu b + 1 - mu) ln(mu b + 1 - mu) + mu b ln b`
/// given `ln b` (kept in log form so `b -> 1` stays accurate).
fn background_free_optimum<T: Real>(ln_b: T) -> T {
    let one = T::one();
    if ln_b == T::zero() {
        return (-one).exp();
    }
    let b = ln_b.exp();
    let one_minus_b = -ln_b.exp_m1();
    // b^(-b / (1 - b))
    let p = (-b * ln_b / one_minus_b).exp();
    one / (one_minus_b + p)
}

/// Background-free duty cycle for one sample per symbol, clamped by `eta`.
pub fn suboptimal_duty_single<T: Real>(lambda1: T, a: T, eta: T) -> T {
    suboptimal_duty_multi(lambda1, a, 1, eta)
}

/// Background-free duty cycle for `samples` independent samples per symbol:
/// the single-sample rule with the atom weight raised to that power.
pub fn suboptimal_duty_multi<T: Real>(lambda1: T, a: T, samples: usize, eta: T) -> T {
    let ln_b = -lambda1 * (T::one() - (-a).exp()) * T::from_count(samples);
    background_free_optimum(ln_b).min(eta)
}

/// Unclamped root of a strictly decreasing derivative on the search interval.
pub fn bisect_decreasing<T: Real, F: FnMut(T) -> Result<T>>(mut g: F) -> Result<T> {
    let mut lo = T::lit(MU_LO);
    let mut hi = T::lit(MU_HI);
    let tol = T::lit(DERIVATIVE_TOL);
    let glo = g(lo)?;
    let ghi = g(hi)?;
    if glo <= T::zero() || ghi >= T::zero() {
        return Err(Error::Numeric(format!(
            "derivative does not change sign on the duty interval: {glo} .. {ghi}"
        )));
    }
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        let gm = g(mid)?;
        if gm.abs() < tol && hi - lo < T::lit(1e-9) {
            return Ok(mid);
        }
        if gm > T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::epsilon() * T::lit(4.0) {
            break;
        }
    }
    Ok((lo + hi) / T::lit(2.0))
}

/// Information-maximizing duty cycle for one sample, clamped by `eta`.
pub fn optimal_duty_single<T: Real>(lambda0: T, lambda1: T, a: T, eta: T) -> Result<T> {
    if lambda0 == T::zero() {
        return Ok(suboptimal_duty_single(lambda1, a, eta));
    }
    let ch = SingleSampleChannel::new(lambda0, lambda1, a)?;
    optimal_duty_for(&ch, eta)
}

/// As [`optimal_duty_single`] for a prepared channel.
pub fn optimal_duty_for<T: Real>(ch: &SingleSampleChannel<T>, eta: T) -> Result<T> {
    Ok(bisect_decreasing(|mu| ch.derivative(mu))?.min(eta))
}

/// Information-maximizing duty cycle for `samples` independent samples.
pub fn optimal_duty_multi(
    lambda0: f64,
    lambda1: f64,
    a: f64,
    samples: usize,
    eta: f64,
) -> Result<f64> {
    if lambda0 == 0.0 {
        return Ok(suboptimal_duty_multi(lambda1, a, samples, eta));
    }
    if samples == 1 {
        return optimal_duty_single(lambda0, lambda1, a, eta);
    }
    let ch = MultiSampleChannel::new(lambda0, lambda1, a, samples)?;
    Ok(bisect_decreasing(|mu| ch.derivative(mu))?.min(eta))
}

/// Atom weight of the all-zero outcome for `samples` samples.
pub fn all_zero_weight<T: Real>(lambda: T, a: T, samples: usize) -> T {
    atom_weight(lambda, a).powi(samples as i32)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_limits() {
        assert!((suboptimal_duty_single(1e-8f64, 6.0, 1.0) - (-1.0f64).exp()).abs() < 1e-6);
        assert!((suboptimal_duty_single(1e3f64, 6.0, 1.0) - 0.5).abs() < 1e-6);
        assert_eq!(suboptimal_duty_single(1.0f64, 6.0, 0.1), 0.1);
        assert!((suboptimal_duty_multi(1.0f64, 6.0, 400, 1.0) - 0.5).abs() < 1e-6);
    }

    #[test]
    fn multi_rule_squares_the_atom() {
        let a1 = atom_weight(1.0f64, 6.0);
        let b = a1 * a1;
        let expect = 1.0 / (1.0 - b + b.powf(-b / (1.0 - b)));
        assert!((suboptimal_duty_multi(1.0, 6.0, 2, 1.0) - expect).abs() < 1e-14);
        assert_eq!(
            suboptimal_duty_multi(0.7f64, 3.0, 1, 1.0),
            suboptimal_duty_single(0.7, 3.0, 1.0)
        );
    }

    #[test]
    fn root_has_small_derivative() {
        let ch = SingleSampleChannel::new(0.1f64, 2.0, 6.0).unwrap();
        let mu = optimal_duty_for(&ch, 1.0).unwrap();
        assert!(ch.derivative(mu).unwrap().abs() < DERIVATIVE_TOL);
        assert_eq!(optimal_duty_for(&ch, 0.05).unwrap(), 0.05);
    }
}
