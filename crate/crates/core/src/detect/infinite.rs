//! Mean power detection when the whole symbol is integrated.
//!
//! To second order in the dead time, the integral `y_s = int_0^1 y(t) dt`
//! is `tau Z + d`: `Z` collects the photons whose pulse ends inside the
//! symbol, and the partial pulses at both symbol edges add the
//! deterministic drift `d`.

use crate::error::{domain, Result};
use crate::gain::mgf_sample;
use crate::mixed::{Affine, SampleDist};
use crate::num::Real;

use super::ml::{min_integral, MinIntegral};

/// Laws of `y_s` for symbol zero and one.
pub type InfiniteRateLaws<T> = (Affine<SampleDist<T>, T>, Affine<SampleDist<T>, T>);

fn check<T: Real>(lambda0: T, lambda_s: T, tau: T, a: T) -> Result<()> {
    if !(lambda0 >= T::zero() && lambda_s >= T::zero()) {
        return domain("photon rates must be nonnegative");
    }
    if !(tau > T::zero() && tau < T::one()) {
        return domain(format!("dead time must lie in (0, 1), got {tau}"));
    }
    if !(a > T::zero()) {
        return domain(format!("shape ratio must be positive, got {a}"));
    }
    Ok(())
}

/// Drift terms `(d0, d1)` from pulses cut by the symbol edges, with the
/// previous symbol averaged over equiprobable values.
pub fn edge_drift<T: Real>(lambda0: T, lambda_s: T, tau: T) -> (T, T) {
    let two = T::lit(2.0);
    let mid = (lambda0 + lambda_s) / two;
    let t2 = tau * tau;
    ((mid + lambda0) / two * t2, T::lit(1.5) * mid * t2)
}

/// MGF `E[exp(-w y_s)]` given the transmitted bit.
pub fn mpd_infinite_mgf<T: Real>(
    omega: T,
    bit: bool,
    lambda0: T,
    lambda_s: T,
    tau: T,
    a: T,
) -> Result<T> {
    check(lambda0, lambda_s, tau, a)?;
    let rate = if bit { lambda0 + lambda_s } else { lambda0 };
    let (d0, d1) = edge_drift(lambda0, lambda_s, tau);
    let d = if bit { d1 } else { d0 };
    Ok(mgf_sample(omega * tau, rate * (T::one() - tau), a)? * (-omega * d).exp())
}

pub fn infinite_rate_laws<T: Real>(
    lambda0: T,
    lambda_s: T,
    tau: T,
    a: T,
) -> Result<InfiniteRateLaws<T>> {
    check(lambda0, lambda_s, tau, a)?;
    let (d0, d1) = edge_drift(lambda0, lambda_s, tau);
    let keep = T::one() - tau;
    let y0 = Affine {
        inner: SampleDist::new(lambda0 * keep, a)?,
        scale: tau,
        shift: d0,
    };
    let y1 = Affine {
        inner: SampleDist::new((lambda0 + lambda_s) * keep, a)?,
        scale: tau,
        shift: d1,
    };
    Ok((y0, y1))
}

/// ML error of integrate-and-decide detection, with the crossing structure.
pub fn mpd_infinite_overlap<T: Real>(
    lambda0: T,
    lambda_s: T,
    tau: T,
    a: T,
) -> Result<MinIntegral<T>> {
    let (y0, y1) = infinite_rate_laws(lambda0, lambda_s, tau, a)?;
    min_integral(&y0, &y1)
}

/// ML error probability of integrate-and-decide detection.
pub fn mpd_infinite_error<T: Real>(lambda0: T, lambda_s: T, tau: T, a: T) -> Result<T> {
    Ok(mpd_infinite_overlap(lambda0, lambda_s, tau, a)?.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixed::Mixed;

    #[test]
    fn mgf_basics() {
        assert_eq!(
            mpd_infinite_mgf(0.0f64, true, 5.0, 100.0, 0.02, 6.0).unwrap(),
            1.0
        );
        let a = mpd_infinite_mgf(0.7f64, true, 5.0, 0.0, 0.02, 6.0).unwrap();
        let b = mpd_infinite_mgf(0.7f64, false, 5.0, 0.0, 0.02, 6.0).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    #[test]
    fn laws_match_mgf_moments() {
        let (y0, y1) = infinite_rate_laws(5.0f64, 100.0, 0.02, 6.0).unwrap();
        let h = 1e-6;
        for (bit, y) in [(false, y0), (true, y1)] {
            let m = mpd_infinite_mgf(h, bit, 5.0, 100.0, 0.02, 6.0).unwrap();
            let slope = (1.0 - m) / h;
            assert!(
                (slope - y.mean()).abs() < 1e-4 * y.mean(),
                "{slope} {}",
                y.mean()
            );
        }
    }

    #[test]
    fn no_signal_means_coin_flip() {
        let pe = mpd_infinite_error(5.0f64, 0.0, 0.02, 6.0).unwrap();
        assert!((pe - 0.5).abs() < 1e-8);
    }

    #[test]
    fn error_falls_with_signal() {
        let mut prev = 0.5;
        for ls in [20.0, 60.0, 150.0, 400.0] {
            let pe = mpd_infinite_error(5.0f64, ls, 0.02, 6.0).unwrap();
            assert!(pe < prev);
            prev = pe;
        }
        assert!(prev < 1e-6);
    }
}
