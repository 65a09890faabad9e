//! Mutual information between an on-off keyed bit and one ADC sample.

use serde::Serialize;

use crate::error::{domain, Result};
use crate::mixed::{Mixed, SampleDist};
use crate::num::Real;
use crate::quad::{NodeSet, QuadOptions};
use crate::special::ln_bessel_i1;

/// Mutual information split into the part carried by the zero atom and
/// the part carried by the continuous sample values (nats).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MutualInfoBreakdown<T> {
    pub total: T,
    pub discrete_part: T,
    pub continuous_part: T,
    pub mu: T,
    pub quadrature_error_estimate: T,
}

/// `x ln(x / y)` with the conventions `0 ln 0 = 0`.
#[inline]
pub(crate) fn xlogx_over<T: Real>(x: T, y: T) -> T {
    if x <= T::zero() {
        T::zero()
    } else {
        x * (x / y).ln()
    }
}

/// Atom weight `exp(-lambda (1 - e^-a))`.
#[inline]
pub fn atom_weight<T: Real>(lambda: T, a: T) -> T {
    (-lambda * (T::one() - (-a).exp())).exp()
}

/// Both conditional laws tabulated on one quadrature node set, so the
/// information and its derivative can be evaluated at many duty cycles
/// without recomputing densities.
#[derive(Debug, Clone)]
pub struct SingleSampleChannel<T> {
    pub lambda0: T,
    pub lambda1: T,
    pub a: T,
    pub a0: T,
    pub a1: T,
    nodes: NodeSet<T>,
    f0: Vec<T>,
    f1: Vec<T>,
}

impl<T: Real> SingleSampleChannel<T> {
    pub fn new(lambda0: T, lambda1: T, a: T) -> Result<Self> {
        if !(lambda0 >= T::zero()) || !(lambda1 > lambda0) {
            return domain(format!(
                "need 0 <= lambda0 < lambda1, got {lambda0}, {lambda1}"
            ));
        }
        let d0 = SampleDist::new(lambda0, a)?;
        let d1 = SampleDist::new(lambda1, a)?;
        let tol = T::lit(1e-17);
        let mut breaks = d1.breakpoints(tol);
        if lambda0 > T::zero() {
            breaks.extend(d0.breakpoints(tol));
        }
        let hi = breaks.iter().copied().fold(T::zero(), T::max);
        breaks.retain(|&b| b <= hi);
        breaks.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
        breaks.dedup();
        let opts = QuadOptions {
            abs_tol: 1e-14,
            rel_tol: 1e-12,
            max_intervals: 4000,
        };
        let nodes = NodeSet::adapted(|z| d0.density(z) + d1.density(z), &breaks, opts);
        let f0 = nodes.nodes.iter().map(|&z| d0.density(z)).collect();
        let f1 = nodes.nodes.iter().map(|&z| d1.density(z)).collect();
        Ok(Self {
            lambda0,
            lambda1,
            a,
            a0: d0.atom_weight(),
            a1: d1.atom_weight(),
            nodes,
            f0,
            f1,
        })
    }

    pub fn nodes(&self) -> &NodeSet<T> {
        &self.nodes
    }

    /// Densities of the two hypotheses at the node points.
    pub fn densities(&self) -> (&[T], &[T]) {
        (&self.f0, &self.f1)
    }

    fn check_mu(mu: T) -> Result<()> {
        if !(mu > T::zero() && mu < T::one()) {
            return domain(format!("duty cycle must lie in (0, 1), got {mu}"));
        }
        Ok(())
    }

    pub fn mutual_info(&self, mu: T) -> Result<MutualInfoBreakdown<T>> {
        Self::check_mu(mu)?;
        let nu = T::one() - mu;
        let ma = mu * self.a1 + nu * self.a0;
        let discrete = mu * xlogx_over(self.a1, ma) + nu * xlogx_over(self.a0, ma);
        let vals: Vec<T> = self
            .f0
            .iter()
            .zip(&self.f1)
            .map(|(&f0, &f1)| {
                let m = mu * f1 + nu * f0;
                mu * xlogx_over(f1, m) + nu * xlogx_over(f0, m)
            })
            .collect();
        let continuous = self.nodes.sum(&vals);
        let err = self.nodes.error_estimate(&vals);
        Ok(MutualInfoBreakdown {
            total: discrete + continuous,
            discrete_part: discrete,
            continuous_part: continuous,
            mu,
            quadrature_error_estimate: err,
        })
    }

    /// `dI/dmu = KL(P1 || M) - KL(P0 || M)` with `M` the output law.
    pub fn derivative(&self, mu: T) -> Result<T> {
        Self::check_mu(mu)?;
        let nu = T::one() - mu;
        let ma = mu * self.a1 + nu * self.a0;
        let atoms = xlogx_over(self.a1, ma) - xlogx_over(self.a0, ma);
        let vals: Vec<T> = self
            .f0
            .iter()
            .zip(&self.f1)
            .map(|(&f0, &f1)| {
                let m = mu * f1 + nu * f0;
                xlogx_over(f1, m) - xlogx_over(f0, m)
            })
            .collect();
        Ok(atoms + self.nodes.sum(&vals))
    }

    /// Constants of the small-background expansion of the continuous part:
    /// `C1 = -int g ln f1` and `C2 = -int g ln g`, where `g` is the
    /// one-photon density.
    pub fn expansion_constants(&self) -> (T, T) {
        let a = self.a;
        let mut c1 = T::zero();
        let mut c2 = T::zero();
        for (i, &z) in self.nodes.nodes.iter().enumerate() {
            let lg = ln_one_photon_density(z, a);
            if lg == T::neg_infinity() {
                continue;
            }
            let g = lg.exp();
            let w = self.nodes.weights[i];
            if self.f1[i] > T::zero() {
                c1 = c1 - w * g * self.f1[i].ln();
            }
            c2 = c2 - w * g * lg;
        }
        (c1, c2)
    }

    /// First-order small-background expansion of the continuous part.
    pub fn continuous_part_expansion(&self, mu: T) -> T {
        let (c1, c2) = self.expansion_constants();
        let nu = T::one() - mu;
        let l0 = self.lambda0;
        let q = T::one() - (-self.a).exp();
        let mut v = -mu * mu.ln() * (T::one() - self.a1) - nu * l0 * q;
        if l0 > T::zero() {
            v = v - nu * q * l0 * (mu / l0).ln() + l0 * nu * (c1 - c2);
        }
        v
    }
}

/// `ln g(z)` with `g(z) = a exp(-a (1 + z)) z^(-1/2) I1(2 a sqrt z)`, the
/// continuous density of the charge of exactly one photon.
pub fn ln_one_photon_density<T: Real>(z: T, a: T) -> T {
    if z <= T::zero() {
        return T::neg_infinity();
    }
    a.ln() - a * (T::one() + z) - T::lit(0.5) * z.ln() + ln_bessel_i1(T::lit(2.0) * a * z.sqrt())
}

/// Mutual information of one sample at duty cycle `mu`.
pub fn mutual_info_single<T: Real>(
    mu: T,
    lambda0: T,
    lambda1: T,
    a: T,
) -> Result<MutualInfoBreakdown<T>> {
    if !(mu > T::zero() && mu < T::one()) {
        return domain(format!("duty cycle must lie in (0, 1), got {mu}"));
    }
    if lambda0 == T::zero() {
        if !(lambda1 > T::zero()) {
            return domain("need lambda1 > 0");
        }
        let a1 = atom_weight(lambda1, a);
        return Ok(background_free(mu, a1));
    }
    SingleSampleChannel::new(lambda0, lambda1, a)?.mutual_info(mu)
}

/// Exact information without background light, where the zero atom under
/// an off symbol has weight one.
pub fn background_free<T: Real>(mu: T, a1: T) -> MutualInfoBreakdown<T> {
    let nu = T::one() - mu;
    let ma = mu * a1 + nu;
    let discrete = mu * xlogx_over(a1, ma) + nu * xlogx_over(T::one(), ma);
    let continuous = -mu * mu.ln() * (T::one() - a1);
    MutualInfoBreakdown {
        total: discrete + continuous,
        discrete_part: discrete,
        continuous_part: continuous,
        mu,
        quadrature_error_estimate: T::zero(),
    }
}

/// Binary entropy bound `H2(mu)` in nats.
pub fn input_entropy<T: Real>(mu: T) -> T {
    crate::special::binary_entropy(mu)
}
