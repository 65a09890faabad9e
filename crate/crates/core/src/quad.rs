//! Adaptive Gauss-Kronrod (7/15) quadrature with global error control, plus a
//! reusable node set for integrating many integrands over one partition.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::num::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights on the odd Kronrod nodes (indices 1, 3, 5, 7)
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-13,
            rel_tol: 1e-10,
            max_intervals: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: T,
    pub evaluations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
struct Panel<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

impl<T: Real> PartialEq for Panel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T: Real> Eq for Panel<T> {}
impl<T: Real> PartialOrd for Panel<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Panel<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .partial_cmp(&other.error)
            .unwrap_or(Ordering::Equal)
    }
}

fn gk15<T: Real, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> Panel<T> {
    let two = T::lit(2.0);
    let c = (a + b) / two;
    let h = (b - a) / two;
    let fc = f(c);
    let mut k = fc * T::lit(WGK[7]);
    let mut g = fc * T::lit(WG[3]);
    for i in 0..7 {
        let dx = h * T::lit(XGK[i]);
        let s = f(c - dx) + f(c + dx);
        k = k + s * T::lit(WGK[i]);
        if i % 2 == 1 {
            g = g + s * T::lit(WG[i / 2]);
        }
    }
    let value = k * h;
    let error = ((k - g) * h).abs();
    Panel { a, b, value, error }
}

/// Split `[a, b]` into `n` equal panels (useful as a starting partition).
pub fn uniform_breaks<T: Real>(a: T, b: T, n: usize) -> Vec<T> {
    let n = n.max(1);
    (0..=n)
        .map(|i| a + (b - a) * T::from_count(i) / T::from_count(n))
        .collect()
}

/// Adaptive integral of `f` over the partition given by `breaks` (sorted).
pub fn integrate_breaks<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    breaks: &[T],
    opts: QuadOptions,
) -> (QuadResult<T>, Vec<(T, T)>) {
    let mut heap = BinaryHeap::new();
    let mut evals = 0;
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            heap.push(gk15(&mut f, w[0], w[1]));
            evals += 15;
        }
    }
    let total = |h: &BinaryHeap<Panel<T>>| -> (T, T) {
        h.iter().fold((T::zero(), T::zero()), |(v, e), p| {
            (v + p.value, e + p.error)
        })
    };
    let (mut value, mut error) = total(&heap);
    let abs = T::lit(opts.abs_tol);
    let rel = T::lit(opts.rel_tol);
    let mut converged = error <= abs.max(rel * value.abs());
    while !converged && heap.len() < opts.max_intervals {
        let Some(worst) = heap.pop() else { break };
        let mid = (worst.a + worst.b) / T::lit(2.0);
        if !(mid > worst.a && mid < worst.b) {
            heap.push(worst);
            break;
        }
        let l = gk15(&mut f, worst.a, mid);
        let r = gk15(&mut f, mid, worst.b);
        evals += 30;
        value = value - worst.value + l.value + r.value;
        error = error - worst.error + l.error + r.error;
        heap.push(l);
        heap.push(r);
        converged = error <= abs.max(rel * value.abs());
    }
    // recompute to shed accumulated rounding in the running sums
    let (value, error) = total(&heap);
    let converged = converged || error <= abs.max(rel * value.abs());
    let mut panels: Vec<(T, T)> = heap.into_iter().map(|p| (p.a, p.b)).collect();
    panels.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(Ordering::Equal));
    (
        QuadResult {
            value,
            error,
            evaluations: evals,
            converged,
        },
        panels,
    )
}

/// Adaptive integral of `f` over `[a, b]`.
pub fn integrate<T: Real, F: FnMut(T) -> T>(f: F, a: T, b: T, opts: QuadOptions) -> QuadResult<T> {
    integrate_breaks(f, &[a, b], opts).0
}

/// A fixed set of Gauss-Kronrod nodes over a partition. Integrating many
/// functions that share a shape (e.g. the same densities reweighted) over
/// one set of nodes lets callers evaluate the expensive parts only once.
#[derive(Debug, Clone)]
pub struct NodeSet<T> {
    pub nodes: Vec<T>,
    /// Kronrod weights.
    pub weights: Vec<T>,
    /// Embedded Gauss weights (zero on Kronrod-only nodes).
    pub gauss_weights: Vec<T>,
}

impl<T: Real> NodeSet<T> {
    pub fn from_panels(panels: &[(T, T)]) -> Self {
        let mut nodes = Vec::with_capacity(panels.len() * 15);
        let mut weights = Vec::with_capacity(panels.len() * 15);
        let mut gauss = Vec::with_capacity(panels.len() * 15);
        let two = T::lit(2.0);
        for &(a, b) in panels {
            let c = (a + b) / two;
            let h = (b - a) / two;
            for i in 0..7 {
                let dx = h * T::lit(XGK[i]);
                let wg = if i % 2 == 1 {
                    T::lit(WG[i / 2]) * h
                } else {
                    T::zero()
                };
                for x in [c - dx, c + dx] {
                    nodes.push(x);
                    weights.push(T::lit(WGK[i]) * h);
                    gauss.push(wg);
                }
            }
            nodes.push(c);
            weights.push(T::lit(WGK[7]) * h);
            gauss.push(T::lit(WG[3]) * h);
        }
        Self {
            nodes,
            weights,
            gauss_weights: gauss,
        }
    }

    /// Adapt a partition to `f` and return the resulting node set.
    pub fn adapted<F: FnMut(T) -> T>(f: F, breaks: &[T], opts: QuadOptions) -> Self {
        let (_, panels) = integrate_breaks(f, breaks, opts);
        Self::from_panels(&panels)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integral of pre-evaluated values `v[i] = f(nodes[i])`.
    pub fn sum(&self, values: &[T]) -> T {
        values.iter().zip(&self.weights).map(|(&v, &w)| v * w).sum()
    }

    /// Kronrod minus Gauss estimate, summed as absolute values per node.
    pub fn error_estimate(&self, values: &[T]) -> T {
        let mut err = T::zero();
        for chunk in 0..self.nodes.len() / 15 {
            let r = chunk * 15..chunk * 15 + 15;
            let k: T = values[r.clone()]
                .iter()
                .zip(&self.weights[r.clone()])
                .map(|(&v, &w)| v * w)
                .sum();
            let g: T = values[r.clone()]
                .iter()
                .zip(&self.gauss_weights[r])
                .map(|(&v, &w)| v * w)
                .sum();
            err = err + (k - g).abs();
        }
        err
    }

    pub fn integrate<F: FnMut(T) -> T>(&self, mut f: F) -> T {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| f(x) * w)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn polynomial_exact() {
        let r = integrate(
            |x: f64| x.powi(7) - 3.0 * x * x,
            0.0,
            2.0,
            QuadOptions::default(),
        );
        assert_relative_eq!(r.value, 32.0 - 8.0, max_relative = 1e-14);
        assert!(r.converged);
    }

    #[test]
    fn sqrt_singularity() {
        let r = integrate(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, QuadOptions::default());
        assert_relative_eq!(r.value, 2.0, max_relative = 1e-9);
    }

    #[test]
    fn gaussian_mass() {
        let r = integrate(
            |x: f64| (-x * x / 2.0).exp(),
            -12.0,
            12.0,
            QuadOptions::default(),
        );
        assert_relative_eq!(
            r.value,
            (2.0 * std::f64::consts::PI).sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn node_set_reuses_partition() {
        let ns = NodeSet::adapted(
            |x: f64| (-x).exp(),
            &uniform_breaks(0.0, 40.0, 8),
            QuadOptions::default(),
        );
        assert_relative_eq!(ns.integrate(|x| (-x).exp()), 1.0, max_relative = 1e-10);
        assert_relative_eq!(ns.integrate(|x| x * (-x).exp()), 1.0, max_relative = 1e-8);
        let v: Vec<f64> = ns.nodes.iter().map(|&x| (-x).exp()).collect();
        assert!(ns.error_estimate(&v) < 1e-8);
    }
}
