//! Photon counting detection: threshold each sample, count the
//! exceedances and compare the count with a binomial likelihood threshold.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::mixed::{CdfTable, Mixed};
use crate::num::Real;
use crate::quad::{integrate_breaks, QuadOptions};
use crate::special::{bernoulli_kl, binomial_cdf, binomial_sf, normal_pdf, q_function};

/// Coarse grid size for the sample threshold search.
pub const GAMMA_GRID: usize = 2000;
/// Refinement factor around the coarse optimum.
pub const GAMMA_REFINE: usize = 10;
/// Quantile of the symbol-one law that closes the search interval.
pub const GAMMA_QUANTILE: f64 = 0.9999;
/// Panels of the tabulated noiseless tail.
const TAIL_PANELS: usize = 4096;
/// Noise is integrated over this many standard deviations each side.
const NOISE_SPAN: f64 = 9.0;

/// `P(sample >= g)` for a mixed law, optionally with additive Gaussian
/// noise of standard deviation `noise_sd` on each sample.
#[derive(Debug, Clone)]
pub struct TailProbability {
    table: CdfTable<f64>,
    noise_sd: f64,
}

impl TailProbability {
    pub fn new<D: Mixed<f64> + ?Sized>(dist: &D, noise_sd: f64) -> Self {
        Self {
            table: CdfTable::new(dist, TAIL_PANELS),
            noise_sd: noise_sd.max(0.0),
        }
    }

    /// Continuous mass at or above `x`.
    fn continuous_tail(&self, x: f64) -> f64 {
        let t = &self.table;
        let atom = if x >= t.atom_location() {
            t.atom_weight()
        } else {
            0.0
        };
        (t.continuous_mass() - (t.cdf(x) - atom)).max(0.0)
    }

    pub fn at(&self, g: f64) -> f64 {
        let t = &self.table;
        let loc = t.atom_location();
        if self.noise_sd == 0.0 {
            let atom = if g <= loc { t.atom_weight() } else { 0.0 };
            return (atom + self.continuous_tail(g)).clamp(0.0, 1.0);
        }
        // average the noiseless tail over the noise, splitting at the kink
        // where g - sd u meets the atom
        let sd = self.noise_sd;
        let kink = ((g - loc) / sd).clamp(-NOISE_SPAN, NOISE_SPAN);
        let opts = QuadOptions {
            abs_tol: 1e-13,
            rel_tol: 1e-10,
            max_intervals: 200,
        };
        let cont = integrate_breaks(
            |u: f64| self.continuous_tail(g - sd * u) * normal_pdf(u),
            &[-NOISE_SPAN, kink, NOISE_SPAN],
            opts,
        )
        .0
        .value;
        (t.atom_weight() * q_function((g - loc) / sd) + cont).clamp(0.0, 1.0)
    }

    /// Smallest `g` with `P(sample >= g) <= 1 - q`, by bisection.
    pub fn quantile(&self, q: f64, hi_guess: f64) -> f64 {
        let target = 1.0 - q;
        let mut hi = hi_guess.max(1e-12);
        while self.at(hi) > target {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..100 {
            let m = 0.5 * (lo + hi);
            if self.at(m) > target {
                lo = m;
            } else {
                hi = m;
            }
        }
        hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcdThreshold {
    pub gamma2: f64,
    /// Exceedance probabilities under symbol zero and one.
    pub p0: f64,
    pub p1: f64,
    /// `min(KL(p0 || p1), KL(p1 || p0))` per sample.
    pub objective: f64,
}

fn objective(p0: f64, p1: f64) -> f64 {
    if !(p1 > p0) {
        return f64::NEG_INFINITY;
    }
    bernoulli_kl(p0, p1).min(bernoulli_kl(p1, p0))
}

/// Sample threshold maximizing the smaller of the two binomial divergences.
/// The search is exhaustive over a uniform grid on `(0, q]`, `q` the
/// upper quantile of the symbol-one law, refined around the best point.
pub fn pcd_threshold_opt_dists<D0, D1>(d0: &D0, d1: &D1, noise_sd: f64) -> Result<PcdThreshold>
where
    D0: Mixed<f64> + ?Sized,
    D1: Mixed<f64> + ?Sized,
{
    let t0 = TailProbability::new(d0, noise_sd);
    let t1 = TailProbability::new(d1, noise_sd);
    pcd_threshold_opt_tails(&t0, &t1, d1.mean() + 4.0 * d1.variance().sqrt())
}

/// As [`pcd_threshold_opt_dists`] with prepared tails.
pub fn pcd_threshold_opt_tails(
    t0: &TailProbability,
    t1: &TailProbability,
    hi_guess: f64,
) -> Result<PcdThreshold> {
    let q = t1.quantile(GAMMA_QUANTILE, hi_guess);
    let eval = |g: f64| {
        let (p0, p1) = (t0.at(g), t1.at(g));
        PcdThreshold {
            gamma2: g,
            p0,
            p1,
            objective: objective(p0, p1),
        }
    };
    let step = q / GAMMA_GRID as f64;
    let mut best = eval(step);
    let mut best_k = 1;
    for k in 2..=GAMMA_GRID {
        let c = eval(step * k as f64);
        if c.objective > best.objective {
            best = c;
            best_k = k;
        }
    }
    let fine = step / GAMMA_REFINE as f64;
    let start = step * (best_k as f64 - 1.0);
    for j in 1..2 * GAMMA_REFINE {
        let g = start + fine * j as f64;
        if g > 0.0 {
            let c = eval(g);
            if c.objective > best.objective {
                best = c;
            }
        }
    }
    if !(best.p1 > best.p0) {
        return Err(Error::Config(format!(
            "sample threshold cannot separate the symbols (p0 = {}, p1 = {})",
            best.p0, best.p1
        )));
    }
    Ok(best)
}

/// Counting threshold `(n_th, p_th)`: decide one iff more than `n_th` of
/// the `samples` exceed the sample threshold.
pub fn pcd_counting_threshold<T: Real>(p0: T, p1: T, samples: usize) -> Result<(usize, T)> {
    if !(p0 >= T::zero() && p0 < p1 && p1 <= T::one()) {
        return domain(format!("need 0 <= p0 < p1 <= 1, got {p0}, {p1}"));
    }
    let l = T::from_count(samples);
    if p0 == T::zero() {
        return Ok((0, T::zero()));
    }
    if p1 == T::one() {
        return Ok((samples.saturating_sub(1), T::one()));
    }
    let up = ((T::one() - p0) / (T::one() - p1)).ln();
    let p_th = up / ((p1 / p0).ln() + up);
    let n = (l * p_th).floor().to_f64_lossy() as usize;
    Ok((n.min(samples), p_th))
}

/// Error probability of counting detection with cutoff `n_th`.
pub fn pcd_error_with_cutoff<T: Real>(samples: usize, p0: T, p1: T, n_th: usize) -> T {
    T::lit(0.5) * (binomial_cdf(samples, n_th, p1) + binomial_sf(samples, n_th, p0))
}

/// Error probability of counting detection with the likelihood cutoff.
pub fn pcd_error<T: Real>(samples: usize, p0: T, p1: T) -> Result<T> {
    if p0 == p1 {
        if !(p0 >= T::zero() && p0 <= T::one()) {
            return domain(format!("probability out of range: {p0}"));
        }
        return Ok(T::lit(0.5));
    }
    let (n, _) = pcd_counting_threshold(p0, p1, samples)?;
    Ok(pcd_error_with_cutoff(samples, p0, p1, n))
}

/// Chernoff tilt and exponent of the per-sample Bernoulli test. The
/// exponent is the common value `KL(P_th || P_1) = KL(P_th || P_0)`.
pub fn chernoff_exponent<T: Real>(p0: T, p1: T) -> Result<(T, T)> {
    if !(p0 > T::zero() && p0 < p1 && p1 < T::one()) {
        return domain(format!("need 0 < p0 < p1 < 1, got {p0}, {p1}"));
    }
    let one = T::one();
    let up = ((one - p0) / (one - p1)).ln();
    let lr = (p1 / p0).ln();
    let lambda =
        ((one - p0) / p0 * up / lr).ln() / ((p1 / (one - p1)).ln() - (p0 / (one - p0)).ln());
    let p_th = up / (lr + up);
    Ok((lambda, bernoulli_kl(p_th, p1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixed::SampleDist;

    #[test]
    fn symmetric_counting_threshold() {
        let (n, p) = pcd_counting_threshold(0.1f64, 0.9, 10).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert_eq!(n, 5);
        let (l, _) = chernoff_exponent(0.2f64, 0.8).unwrap();
        assert!((l - 0.5).abs() < 1e-14);
    }

    #[test]
    fn hand_cases() {
        assert_eq!(pcd_error(10, 0.3f64, 0.3).unwrap(), 0.5);
        // one sample with n_th = 0: decide one iff the sample exceeds
        let pe = pcd_error(1, 0.2f64, 0.7).unwrap();
        assert!((pe - 0.5 * (1.0 - 0.7 + 0.2)).abs() < 1e-15);
    }

    #[test]
    fn chernoff_tie() {
        for (p0, p1) in [(0.01f64, 0.3), (0.2, 0.5), (0.45, 0.99)] {
            let (_, e) = chernoff_exponent(p0, p1).unwrap();
            let up = ((1.0 - p0) / (1.0 - p1)).ln();
            let p_th = up / ((p1 / p0).ln() + up);
            assert!((bernoulli_kl(p_th, p1) - bernoulli_kl(p_th, p0)).abs() < 1e-12);
            assert!((e - bernoulli_kl(p_th, p0)).abs() < 1e-12);
        }
    }

    #[test]
    fn optimized_threshold_beats_finer_grid() {
        let d0 = SampleDist::new(0.1f64, 6.0).unwrap();
        let d1 = SampleDist::new(0.6f64, 6.0).unwrap();
        let t = pcd_threshold_opt_dists(&d0, &d1, 0.0).unwrap();
        assert!(t.p0 < t.p1);
        let (t0, t1) = (
            TailProbability::new(&d0, 0.0),
            TailProbability::new(&d1, 0.0),
        );
        let q = t1.quantile(GAMMA_QUANTILE, 5.0);
        let n = GAMMA_GRID * GAMMA_REFINE;
        let finer = (1..=n).map(|k| {
            objective(
                t0.at(q * k as f64 / n as f64),
                t1.at(q * k as f64 / n as f64),
            )
        });
        let best = finer.fold(f64::NEG_INFINITY, f64::max);
        assert!(t.objective >= best - 1e-4);
    }

    #[test]
    fn background_free_threshold() {
        let d0 = SampleDist::new(0.0f64, 6.0).unwrap();
        let d1 = SampleDist::new(0.5f64, 6.0).unwrap();
        let t = pcd_threshold_opt_dists(&d0, &d1, 0.0).unwrap();
        assert_eq!(t.p0, 0.0);
        assert!(t.gamma2 > 0.0);
        assert_eq!(pcd_counting_threshold(t.p0, t.p1, 20).unwrap().0, 0);
    }

    #[test]
    fn noise_smooths_tail() {
        let d = SampleDist::new(0.5f64, 6.0).unwrap();
        let exact = TailProbability::new(&d, 0.0);
        let noisy = TailProbability::new(&d, 1e-4);
        for g in [0.3, 0.8, 1.5] {
            assert!(
                (exact.at(g) - noisy.at(g)).abs() < 1e-6,
                "{g} {} {}",
                exact.at(g),
                noisy.at(g)
            );
        }
        assert!(noisy.at(-1.0) > 0.999_999);
    }
}
