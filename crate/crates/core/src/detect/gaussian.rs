//! Decision rule between `N(0, 1)` and `N(mu, sigma2)` with equal priors.

use crate::num::Real;
use crate::special::q_function;

/// Likelihood-ratio threshold between `N(0, 1)` and `N(mu, sigma2)`;
/// the midpoint when the variances agree.
pub fn gaussian_ml_threshold<T: Real>(mu: T, sigma2: T) -> T {
    let one = T::one();
    if (sigma2 - one).abs() <= T::epsilon() * T::lit(16.0) {
        return mu / T::lit(2.0);
    }
    let disc = mu * mu + (sigma2 - one) * (mu * mu + sigma2 * sigma2.ln());
    (-mu + disc.max(T::zero()).sqrt()) / (sigma2 - one)
}

/// Error of deciding one above `gamma`.
pub fn gaussian_ml_error<T: Real>(mu: T, sigma2: T, gamma: T) -> T {
    T::lit(0.5) * (q_function(gamma) + q_function((mu - gamma) / sigma2.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::normal_pdf;

    #[test]
    fn densities_cross_at_threshold() {
        for (mu, s2) in [(3.0f64, 2.0), (1.0, 1.5), (5.0, 4.0)] {
            let g = gaussian_ml_threshold(mu, s2);
            let s = s2.sqrt();
            assert!((normal_pdf(g) - normal_pdf((g - mu) / s) / s).abs() < 1e-12);
            assert!(g > 0.0 && g < mu);
        }
        assert_eq!(gaussian_ml_threshold(2.0f64, 1.0), 1.0);
        assert_eq!(gaussian_ml_error(0.0f64, 1.0, 0.0), 0.5);
    }
}
