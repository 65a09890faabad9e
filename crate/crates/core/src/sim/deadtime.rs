//! Counting statistics of a detector that merges photons closer than one
//! dead time: the number of pulses registered in a unit symbol.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{domain, Result};
use crate::special::ln_gamma;

/// Relative rounding error beyond which the floating-point sum is replaced
/// by exact rational arithmetic.
const CANCELLATION_LIMIT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmfMethod {
    Float,
    Rational,
    /// `n` exceeds the largest possible count; the probability is zero.
    OutOfRange,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeadTimeProb {
    pub value: f64,
    pub method: PmfMethod,
}

/// Largest number of pulses that fit in a symbol, `floor(1/tau) + 1`.
pub fn max_count(tau: f64) -> usize {
    (1.0 / tau * (1.0 + 1e-12)).floor() as usize + 1
}

fn check(rate: f64, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return domain(format!("dead time must lie in (0, 1), got {tau}"));
    }
    if !(rate > 0.0) || !rate.is_finite() {
        return domain(format!("photon rate must be positive, got {rate}"));
    }
    Ok(())
}

/// Probability of registering exactly `n` pulses in a symbol when photons
/// arrive at `rate` per symbol and each pulse lasts `tau`.
pub fn dead_time_pmf(n: usize, rate: f64, tau: f64) -> Result<DeadTimeProb> {
    check(rate, tau)?;
    let m = max_count(tau);
    if n > m {
        return Ok(DeadTimeProb {
            value: 0.0,
            method: PmfMethod::OutOfRange,
        });
    }
    let c = rate * (-rate * tau).exp();
    let (value, rel_err) = pmf_float(n, m, c, tau);
    if rel_err <= CANCELLATION_LIMIT {
        return Ok(DeadTimeProb {
            value,
            method: PmfMethod::Float,
        });
    }
    Ok(DeadTimeProb {
        value: pmf_rational(n, m, c, tau),
        method: PmfMethod::Rational,
    })
}

/// The whole distribution over `0..=max_count(tau)`.
pub fn dead_time_pmf_all(rate: f64, tau: f64) -> Result<Vec<f64>> {
    check(rate, tau)?;
    let m = max_count(tau);
    let c = rate * (-rate * tau).exp();
    let mut exact: Option<Vec<BigRational>> = None;
    (0..=m)
        .map(|n| {
            let (v, err) = pmf_float(n, m, c, tau);
            if err <= CANCELLATION_LIMIT {
                return Ok(v);
            }
            let powers = exact.get_or_insert_with(|| rational_powers(m, c, tau));
            Ok(rational_sum(n, m, powers))
        })
        .collect()
}

/// Mean pulse count `rate * exp(-rate * tau)`.
pub fn dead_time_mean(rate: f64, tau: f64) -> f64 {
    rate * (-rate * tau).exp()
}

/// Variance `E[n] - (1 - (1 - tau)^2) E[n]^2`.
pub fn dead_time_variance(rate: f64, tau: f64) -> f64 {
    let e = dead_time_mean(rate, tau);
    e - (1.0 - (1.0 - tau).powi(2)) * e * e
}

fn base(k: usize, tau: f64) -> f64 {
    (1.0 - (k as f64 - 1.0) * tau).max(0.0)
}

/// Kahan-summed series and its estimated relative rounding error.
fn pmf_float(n: usize, m: usize, c: f64, tau: f64) -> (f64, f64) {
    let ln_nfact = ln_gamma(n as f64 + 1.0);
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut abs_sum = 0.0f64;
    for k in n..=m {
        let j = k - n;
        let mag = if k == 0 {
            1.0
        } else {
            let b = base(k, tau) * c;
            if b == 0.0 {
                0.0
            } else {
                (k as f64 * b.ln() - ln_nfact - ln_gamma(j as f64 + 1.0)).exp()
            }
        };
        let term = if j % 2 == 0 { mag } else { -mag };
        abs_sum += mag;
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    let err = if sum > 0.0 {
        f64::EPSILON * abs_sum * (m - n + 1) as f64 / sum
    } else if abs_sum == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    (sum.max(0.0), err)
}

/// `(base_k c)^k` for `k = 0..=m` with the floating inputs taken exactly.
fn rational_powers(m: usize, c: f64, tau: f64) -> Vec<BigRational> {
    let c = BigRational::from_float(c).expect("finite");
    let tau = BigRational::from_float(tau).expect("finite");
    let one = BigRational::one();
    (0..=m)
        .map(|k| {
            if k == 0 {
                return one.clone();
            }
            let b = (&one - &tau * BigRational::from_integer(BigInt::from(k as i64 - 1))) * &c;
            if b <= BigRational::zero() {
                return BigRational::zero();
            }
            let mut p = one.clone();
            for _ in 0..k {
                p *= &b;
            }
            p
        })
        .collect()
}

fn factorial(n: usize) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

fn rational_sum(n: usize, m: usize, powers: &[BigRational]) -> f64 {
    let nf = factorial(n);
    let mut sum = BigRational::zero();
    let mut jf = BigInt::one();
    for k in n..=m {
        let j = k - n;
        if j > 0 {
            jf *= BigInt::from(j);
        }
        let term = &powers[k] / BigRational::from_integer(&nf * &jf);
        if j % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    sum.to_f64().unwrap_or(f64::NAN).max(0.0)
}

fn pmf_rational(n: usize, m: usize, c: f64, tau: f64) -> f64 {
    rational_sum(n, m, &rational_powers(m, c, tau))
}
