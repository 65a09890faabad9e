//! Mixed discrete/continuous laws: a point mass plus a density.
//!
//! The central law is [`SampleDist`], the distribution of one normalized
//! ADC sample collecting Poisson(`lambda`) photons. Its continuous part is a
//! Poisson mixture of Bessel kernels and its atom at zero is the chance that
//! no electron survives amplification.

use crate::error::{domain, Result};
use crate::gain::GainModel;
use crate::num::Real;
use crate::quad::{integrate_breaks, NodeSet, QuadOptions, QuadResult};
use crate::special::{ln_bessel_i1, ln_gamma};

/// A law made of an atom of weight `atom_weight()` at `atom_location()` and
/// a density on `(lower(), inf)` that integrates to `1 - atom_weight()`.
pub trait Mixed<T: Real>: Send + Sync {
    fn atom_weight(&self) -> T;
    fn atom_location(&self) -> T {
        T::zero()
    }
    fn density(&self, z: T) -> T;
    fn mean(&self) -> T;
    fn variance(&self) -> T;
    /// Left end of the continuous support.
    fn lower(&self) -> T {
        T::zero()
    }
    /// A point beyond which the continuous mass is below `tol`.
    fn upper_cutoff(&self, tol: T) -> T;
    /// Suggested quadrature breakpoints over the continuous support.
    fn breakpoints(&self, tol: T) -> Vec<T> {
        default_breaks(
            self.lower(),
            self.upper_cutoff(tol),
            self.mean(),
            self.variance(),
        )
    }
}

/// Breakpoints at the bulk of the law plus a uniform backbone.
pub fn default_breaks<T: Real>(lo: T, hi: T, mean: T, var: T) -> Vec<T> {
    let mut b = crate::quad::uniform_breaks(lo, hi, 12);
    let sd = var.max(T::zero()).sqrt();
    for k in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        let p = mean + T::lit(k) * sd;
        if p > lo && p < hi {
            b.push(p);
        }
    }
    // resolve the region near the lower edge
    let w = (hi - lo) / T::lit(12.0);
    for f in [1e-3, 1e-2, 0.1] {
        b.push(lo + w * T::lit(f));
    }
    b.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    b.dedup_by(|x, y| (*x - *y).abs() <= T::epsilon() * (T::one() + x.abs()));
    b
}

/// Integral of the continuous part of `dist` against `g`.
pub fn integrate_continuous<T: Real, D: Mixed<T> + ?Sized, G: FnMut(T) -> T>(
    dist: &D,
    mut g: G,
    opts: QuadOptions,
) -> QuadResult<T> {
    let breaks = dist.breakpoints(T::lit(1e-17));
    integrate_breaks(|z| dist.density(z) * g(z), &breaks, opts).0
}

/// Continuous mass plus atom; should be one.
pub fn total_mass<T: Real, D: Mixed<T> + ?Sized>(dist: &D) -> T {
    dist.atom_weight() + integrate_continuous(dist, |_| T::one(), QuadOptions::default()).value
}

/// Node set adapted to the continuous part of `dist`.
pub fn node_set<T: Real, D: Mixed<T> + ?Sized>(dist: &D, opts: QuadOptions) -> NodeSet<T> {
    let breaks = dist.breakpoints(T::lit(1e-17));
    NodeSet::adapted(|z| dist.density(z), &breaks, opts)
}

/// Nats below the running maximum at which a Bessel-series term is ignored.
const SERIES_DROP_NATS: f64 = 37.0;
/// Hard cap on photon-number terms.
const SERIES_MAX_TERMS: usize = 100_000;
/// Poisson tail mass ignored by the photon-number truncation.
const POISSON_TAIL: f64 = 1e-14;

/// Law of one normalized sample collecting Poisson(`lambda`) photons with
/// gain shape ratio `a`.
#[derive(Debug, Clone, Copy)]
pub struct SampleDist<T> {
    lambda: T,
    a: T,
    ln_rate: T,
    n_tail: usize,
}

impl<T: Real> SampleDist<T> {
    pub fn new(lambda: T, a: T) -> Result<Self> {
        if !(lambda >= T::zero()) || !lambda.is_finite() {
            return domain(format!(
                "photon count mean must be finite and >= 0, got {lambda}"
            ));
        }
        if !(a > T::zero()) || !a.is_finite() {
            return domain(format!("shape ratio must be finite and > 0, got {a}"));
        }
        let ln_rate = if lambda > T::zero() {
            lambda.ln() - a
        } else {
            T::neg_infinity()
        };
        Ok(Self {
            lambda,
            a,
            ln_rate,
            n_tail: poisson_tail_index(lambda),
        })
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }

    pub fn a(&self) -> T {
        self.a
    }

    /// Continuous density at `z > 0` from the first `terms` photon numbers.
    pub fn density_with_terms(&self, z: T, terms: usize) -> T {
        self.density_series(z, Some(terms)).0
    }

    /// Number of photon-number terms the adaptive truncation uses at `z`.
    pub fn truncation_index(&self, z: T) -> usize {
        self.density_series(z, None).1
    }

    /// Value of the continuous density as `z -> 0+`.
    pub fn density_at_zero(&self) -> T {
        if self.lambda == T::zero() {
            return T::zero();
        }
        let a = self.a;
        let ea = (-a).exp();
        a * a * self.lambda * ea * (-self.lambda * (T::one() - ea)).exp()
    }

    fn density_series(&self, z: T, fixed: Option<usize>) -> (T, usize) {
        if self.lambda == T::zero() || !(z >= T::zero()) {
            return (T::zero(), 0);
        }
        if z == T::zero() {
            return (self.density_at_zero(), 1);
        }
        let a = self.a;
        let two_a_sqrt_z = T::lit(2.0) * a * z.sqrt();
        let drop = T::lit(SERIES_DROP_NATS);
        let mut max = T::neg_infinity();
        let mut acc = T::zero();
        let mut ln_fact = T::zero();
        let mut prev = T::neg_infinity();
        let mut n = 0usize;
        let cap = fixed.unwrap_or(SERIES_MAX_TERMS);
        while n < cap {
            n += 1;
            let nf = T::from_count(n);
            ln_fact = ln_fact + nf.ln();
            let term = T::lit(0.5) * nf.ln() + nf * self.ln_rate - ln_fact
                + ln_bessel_i1(two_a_sqrt_z * nf.sqrt());
            if term > max {
                acc = acc * (max - term).exp() + T::one();
                max = term;
            } else {
                acc = acc + (term - max).exp();
            }
            if fixed.is_none() && n >= self.n_tail && term < max - drop && term < prev {
                break;
            }
            prev = term;
        }
        let ln_pref = a.ln() - T::lit(0.5) * z.ln() - (self.lambda + a * z);
        ((ln_pref + max + acc.ln()).exp(), n)
    }
}

/// Smallest `n > lambda` whose Chernoff bound on `P(N >= n)` is below
/// [`POISSON_TAIL`].
fn poisson_tail_index<T: Real>(lambda: T) -> usize {
    let l = lambda.to_f64_lossy();
    if l <= 0.0 {
        return 1;
    }
    let mut n = (l.ceil() as usize).max(1);
    loop {
        let nf = n as f64;
        if nf > l && -l + nf * (1.0 + l.ln() - nf.ln()) < POISSON_TAIL.ln() {
            return n;
        }
        n += 1;
    }
}

impl<T: Real> Mixed<T> for SampleDist<T> {
    fn atom_weight(&self) -> T {
        (self.lambda * ((-self.a).exp() - T::one())).exp()
    }

    fn density(&self, z: T) -> T {
        self.density_series(z, None).0
    }

    fn mean(&self) -> T {
        self.lambda
    }

    fn variance(&self) -> T {
        self.lambda * (T::one() + T::lit(2.0) / self.a)
    }

    fn upper_cutoff(&self, tol: T) -> T {
        if self.lambda == T::zero() {
            return T::one();
        }
        let sd = self.variance().sqrt();
        let mut z = self.lambda + T::lit(8.0) * sd + T::lit(8.0) / self.a;
        for _ in 0..200 {
            if self.density(z) * (z + T::one()) < tol {
                break;
            }
            z = z * T::lit(1.25);
        }
        z
    }

    fn breakpoints(&self, tol: T) -> Vec<T> {
        let hi = self.upper_cutoff(tol);
        let mut b = default_breaks(T::zero(), hi, self.mean(), self.variance());
        // individual photon bumps are visible when lambda and a are small
        let bumps = self.lambda.to_f64_lossy().ceil() as usize + 3;
        if bumps < 40 {
            for k in 1..bumps {
                let p = T::from_count(k);
                if p < hi {
                    b.push(p);
                }
            }
            b.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
            b.dedup();
        }
        b
    }
}

/// The law of one normalized ADC sample for Poisson(`lambda`) photons.
pub fn sample_dist<T: Real>(lambda: T, model: &GainModel<T>) -> Result<SampleDist<T>> {
    SampleDist::new(lambda, model.a())
}

/// `X = shift + scale * Z` for a mixed `Z`; the atom moves to `shift`.
#[derive(Debug, Clone, Copy)]
pub struct Affine<D, T> {
    pub inner: D,
    pub scale: T,
    pub shift: T,
}

impl<T: Real, D: Mixed<T>> Mixed<T> for Affine<D, T> {
    fn atom_weight(&self) -> T {
        self.inner.atom_weight()
    }
    fn atom_location(&self) -> T {
        self.shift + self.scale * self.inner.atom_location()
    }
    fn density(&self, x: T) -> T {
        self.inner.density((x - self.shift) / self.scale) / self.scale
    }
    fn mean(&self) -> T {
        self.shift + self.scale * self.inner.mean()
    }
    fn variance(&self) -> T {
        self.scale * self.scale * self.inner.variance()
    }
    fn lower(&self) -> T {
        self.shift + self.scale * self.inner.lower()
    }
    fn upper_cutoff(&self, tol: T) -> T {
        self.shift + self.scale * self.inner.upper_cutoff(tol)
    }
    fn breakpoints(&self, tol: T) -> Vec<T> {
        self.inner
            .breakpoints(tol)
            .into_iter()
            .map(|z| self.shift + self.scale * z)
            .collect()
    }
}

/// Tabulated CDF built once from cumulative panel integrals; intermediate
/// points use cubic Hermite interpolation with the density as slope.
#[derive(Debug, Clone)]
pub struct CdfTable<T> {
    atom_at: T,
    atom: T,
    xs: Vec<T>,
    cum: Vec<T>,
    dens: Vec<T>,
}

impl<T: Real> CdfTable<T> {
    pub fn new<D: Mixed<T> + ?Sized>(dist: &D, panels: usize) -> Self {
        let lo = dist.lower();
        let hi = dist.upper_cutoff(T::lit(1e-15));
        let xs = crate::quad::uniform_breaks(lo, hi, panels.max(1));
        let opts = QuadOptions {
            abs_tol: 1e-15,
            rel_tol: 1e-12,
            max_intervals: 64,
        };
        let mut cum = Vec::with_capacity(xs.len());
        let mut run = T::zero();
        cum.push(run);
        for w in xs.windows(2) {
            run = run
                + integrate_breaks(|z| dist.density(z), &[w[0], w[1]], opts)
                    .0
                    .value;
            cum.push(run);
        }
        let dens = xs.iter().map(|&x| dist.density(x)).collect();
        Self {
            atom_at: dist.atom_location(),
            atom: dist.atom_weight(),
            xs,
            cum,
            dens,
        }
    }

    pub fn cdf(&self, x: T) -> T {
        let atom = if x >= self.atom_at {
            self.atom
        } else {
            T::zero()
        };
        let n = self.xs.len();
        if x <= self.xs[0] {
            return atom;
        }
        if x >= self.xs[n - 1] {
            return atom + self.cum[n - 1];
        }
        let i = self.xs.partition_point(|&v| v <= x) - 1;
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let h00 = two * t3 - three * t2 + T::one();
        let h10 = t3 - two * t2 + t;
        let h01 = three * t2 - two * t3;
        let h11 = t3 - t2;
        let v = h00 * self.cum[i]
            + h10 * h * self.dens[i]
            + h01 * self.cum[i + 1]
            + h11 * h * self.dens[i + 1];
        atom + v.max(self.cum[i]).min(self.cum[i + 1])
    }

    pub fn atom_location(&self) -> T {
        self.atom_at
    }

    pub fn atom_weight(&self) -> T {
        self.atom
    }

    /// Continuous mass captured by the table.
    pub fn continuous_mass(&self) -> T {
        *self.cum.last().unwrap_or(&T::zero())
    }
}

/// Exact CDF of [`SampleDist`] through its gamma-mixture representation:
/// given `N` photons, the electron count is Poisson(`N a`) and the charge
/// is Gamma(count, rate `a`). Independent of the Bessel series and used as
/// a cross-check.
pub fn sample_cdf_gamma_mixture(lambda: f64, a: f64, z: f64) -> f64 {
    if z < 0.0 {
        return 0.0;
    }
    let ln_lambda = lambda.ln();
    let mut total = 0.0;
    // P(N = n)
    let n_max = (lambda + 40.0 * lambda.sqrt() + 40.0) as usize;
    for n in 0..=n_max {
        let ln_pn = -lambda + n as f64 * ln_lambda - ln_gamma(n as f64 + 1.0);
        let pn = if lambda == 0.0 {
            if n == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            ln_pn.exp()
        };
        if pn < 1e-300 && n as f64 > lambda {
            break;
        }
        if n == 0 {
            total += pn;
            continue;
        }
        let m = n as f64 * a;
        let k_max = (m + 40.0 * m.sqrt() + 40.0) as usize;
        let mut inner = (-m).exp();
        for k in 1..=k_max {
            let ln_pk = -m + k as f64 * m.ln() - ln_gamma(k as f64 + 1.0);
            inner += ln_pk.exp() * regularized_gamma_p(k as f64, a * z);
        }
        total += pn * inner;
    }
    total
}

/// Lower regularized incomplete gamma `P(s, x)` (series / continued fraction).
pub fn regularized_gamma_p(s: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let ln_pre = s * x.ln() - x - ln_gamma(s);
    if x < s + 1.0 {
        let mut sum = 1.0 / s;
        let mut term = sum;
        let mut k = s;
        for _ in 0..10_000 {
            k += 1.0;
            term *= x / k;
            sum += term;
            if term < sum * 1e-16 {
                break;
            }
        }
        (ln_pre.exp() * sum).min(1.0)
    } else {
        // Lentz continued fraction for Q
        let tiny = 1e-300;
        let mut b = x + 1.0 - s;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - s);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (1.0 - ln_pre.exp() * h).max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn atom_formula() {
        let d = SampleDist::new(2.0f64, 6.0).unwrap();
        assert_relative_eq!(
            d.atom_weight(),
            (2.0 * ((-6.0f64).exp() - 1.0)).exp(),
            max_relative = 1e-15
        );
        assert!((d.atom_weight() - 0.13600).abs() < 5e-5);
        let d0 = SampleDist::new(0.0f64, 6.0).unwrap();
        assert_eq!(d0.atom_weight(), 1.0);
        assert_eq!(d0.density(1.3), 0.0);
    }

    #[test]
    fn density_is_finite_at_origin() {
        let d = SampleDist::new(1.5f64, 3.0).unwrap();
        assert_relative_eq!(d.density(1e-12), d.density_at_zero(), max_relative = 1e-5);
    }

    #[test]
    fn cdf_agrees_with_gamma_mixture() {
        for &(l, a) in &[(1.0f64, 2.0f64), (5.0, 6.0), (0.3, 12.0)] {
            let d = SampleDist::new(l, a).unwrap();
            for &z in &[0.1, 0.7, 1.0, 3.0, 6.0] {
                let q = integrate_breaks(|x| d.density(x), &[0.0, z], QuadOptions::default())
                    .0
                    .value;
                let exact = sample_cdf_gamma_mixture(l, a, z);
                assert!(
                    (d.atom_weight() + q - exact).abs() < 1e-10,
                    "l={l} a={a} z={z}"
                );
            }
        }
    }

    #[test]
    fn cdf_table_is_monotone_and_complete() {
        let d = SampleDist::new(5.0f64, 6.0).unwrap();
        let t = CdfTable::new(&d, 2000);
        assert!((t.cdf(1e9) - 1.0).abs() < 1e-8);
        let mut prev = 0.0;
        for i in 0..200 {
            let c = t.cdf(i as f64 * 0.1);
            assert!(c + 1e-15 >= prev);
            prev = c;
        }
        for z in [0.05, 1.234, 3.0, 7.7] {
            assert!((t.cdf(z) - sample_cdf_gamma_mixture(5.0, 6.0, z)).abs() < 1e-9);
        }
    }

    #[test]
    fn incomplete_gamma_reference() {
        assert_relative_eq!(
            regularized_gamma_p(1.0, 2.0),
            1.0 - (-2.0f64).exp(),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            regularized_gamma_p(3.0, 1.0),
            1.0 - 2.5 * (-1.0f64).exp(),
            max_relative = 1e-13
        );
        assert_relative_eq!(
            regularized_gamma_p(10.0, 20.0),
            0.995_004_587_691_692,
            max_relative = 1e-12
        );
    }
}
