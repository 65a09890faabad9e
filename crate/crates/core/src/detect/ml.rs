//! Error of the maximum-likelihood decision between two mixed laws with
//! equal priors: half the overlap `int min(f0, f1)`.

use crate::error::{Error, Result};
use crate::mixed::Mixed;
use crate::num::Real;
use crate::quad::{integrate_breaks, QuadOptions};

/// Scan points per breakpoint panel when looking for density crossings.
const SCAN: usize = 24;

#[derive(Debug, Clone)]
pub struct MinIntegral<T> {
    /// `(atom overlap + int min(f0, f1)) / 2`.
    pub value: T,
    pub atom_part: T,
    pub continuous_part: T,
    pub error: T,
    /// Points where `f1 - f0` changes sign, with `true` when `f1` takes over.
    pub crossings: Vec<(T, bool)>,
    lower: T,
    one_leads: bool,
}

impl<T: Real> MinIntegral<T> {
    /// Threshold `g` of the rule "decide one iff `y > g`". Exact when `f1`
    /// overtakes `f0` at most once, as for Poisson-driven laws with a
    /// monotone likelihood ratio.
    pub fn threshold(&self) -> T {
        match self.crossings.iter().rev().find(|c| c.1) {
            Some(c) => c.0,
            None if self.one_leads => self.lower,
            None => T::infinity(),
        }
    }
}

/// Half the overlap of `d0` and `d1`. The axis is split at every density
/// crossing before integrating, since the kinks of `min` spoil the
/// quadrature error estimate.
pub fn min_integral<T, D0, D1>(d0: &D0, d1: &D1) -> Result<MinIntegral<T>>
where
    T: Real,
    D0: Mixed<T> + ?Sized,
    D1: Mixed<T> + ?Sized,
{
    let tol = T::lit(1e-16);
    let lo = d0.lower().min(d1.lower());
    let hi = d0.upper_cutoff(tol).max(d1.upper_cutoff(tol));
    let mut breaks = d0.breakpoints(tol);
    breaks.extend(d1.breakpoints(tol));
    breaks.extend([lo, hi, d0.lower(), d1.lower()]);
    breaks.retain(|&b| b >= lo && b <= hi);
    sort_dedup(&mut breaks);

    let h = |x: T| d1.density(x) - d0.density(x);
    let mut crossings = Vec::new();
    let mut one_leads = None;
    for w in breaks.windows(2) {
        let step = (w[1] - w[0]) / T::from_count(SCAN);
        let mut x_prev = w[0] + step * T::lit(1e-6);
        let mut v_prev = h(x_prev);
        for k in 1..=SCAN {
            let x = if k == SCAN {
                w[1]
            } else {
                w[0] + step * T::from_count(k)
            };
            let v = h(x);
            if one_leads.is_none() && v_prev != T::zero() {
                one_leads = Some(v_prev > T::zero());
            }
            if v_prev * v < T::zero() {
                crossings.push((bisect(&h, x_prev, x, v_prev), v > T::zero()));
            }
            if v != T::zero() {
                x_prev = x;
                v_prev = v;
            }
        }
    }

    let mut all = breaks;
    all.extend(crossings.iter().map(|c| c.0));
    sort_dedup(&mut all);
    let opts = QuadOptions {
        abs_tol: 1e-13,
        rel_tol: 1e-10,
        max_intervals: 4000,
    };
    let (r, _) = integrate_breaks(|x| d0.density(x).min(d1.density(x)), &all, opts);
    let limit = T::epsilon().sqrt().max(T::lit(1e-9));
    if !r.converged && r.error > limit {
        return Err(Error::Numeric(format!(
            "overlap quadrature did not converge: value {} error {} after {} evaluations",
            r.value, r.error, r.evaluations
        )));
    }
    let (l0, l1) = (d0.atom_location(), d1.atom_location());
    let atom_part = if (l0 - l1).abs() <= T::epsilon() * (T::one() + l0.abs()) {
        d0.atom_weight().min(d1.atom_weight())
    } else {
        T::zero()
    };
    let half = T::lit(0.5);
    Ok(MinIntegral {
        value: half * (atom_part + r.value),
        atom_part,
        continuous_part: r.value,
        error: half * r.error,
        crossings,
        lower: lo,
        one_leads: one_leads.unwrap_or(false),
    })
}

fn bisect<T: Real>(h: &impl Fn(T) -> T, mut a: T, mut b: T, va: T) -> T {
    let pos = va > T::zero();
    for _ in 0..200 {
        let m = (a + b) / T::lit(2.0);
        if !(m > a && m < b) {
            break;
        }
        if (h(m) > T::zero()) == pos {
            a = m;
        } else {
            b = m;
        }
    }
    (a + b) / T::lit(2.0)
}

fn sort_dedup<T: Real>(v: &mut Vec<T>) {
    v.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    v.dedup_by(|x, y| (*x - *y).abs() <= T::epsilon() * (T::one() + x.abs()));
}
