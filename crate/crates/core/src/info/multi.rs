//! Mutual information with several independent samples per symbol.
//!
//! With `L` samples the output law splits by which samples are exactly zero.
//! Subsets of equal size contribute equally, so only `L + 1` terms are
//! needed. For `r` nonzero samples the term depends on the samples only
//! through the summed log-likelihood ratio `T = sum ln(f1/f0)`, whose law
//! is an `r`-fold convolution computed on a grid by FFT.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{domain, Error, Result};
use crate::special::ln_choose;

use super::single::{MutualInfoBreakdown, SingleSampleChannel};

/// Largest supported number of samples per symbol.
pub const MAX_SAMPLES: usize = 12;
/// Grid cells used to tabulate the one-sample log-likelihood-ratio law.
const LLR_CELLS: usize = 1 << 14;
/// Margin (nats) beyond which a likelihood ratio no longer moves the
/// integrands.
const LLR_MARGIN: f64 = 45.0;

/// A measure on a uniform grid `origin + k * step`.
#[derive(Debug, Clone)]
struct GridMeasure {
    origin: f64,
    step: f64,
    mass: Vec<f64>,
}

impl GridMeasure {
    fn deposit(points: &[(f64, f64)], origin: f64, step: f64, cells: usize) -> Self {
        let mut mass = vec![0.0; cells + 1];
        for &(x, w) in points {
            let p = ((x - origin) / step).clamp(0.0, cells as f64);
            let k = (p.floor() as usize).min(cells - 1);
            let t = p - k as f64;
            mass[k] += w * (1.0 - t);
            mass[k + 1] += w * t;
        }
        Self { origin, step, mass }
    }

    fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, &m)| m != 0.0)
            .map(|(k, &m)| m * f(self.origin + k as f64 * self.step))
            .sum()
    }
}

/// `r`-fold self-convolutions of `base` for `r = 2..=max_r`.
fn convolution_powers(base: &GridMeasure, max_r: usize) -> Vec<GridMeasure> {
    let n = base.mass.len();
    let len = (max_r * (n - 1) + 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(len);
    let inv = planner.plan_fft_inverse(len);
    let mut spec: Vec<Complex<f64>> = base.mass.iter().map(|&m| Complex::new(m, 0.0)).collect();
    spec.resize(len, Complex::new(0.0, 0.0));
    fwd.process(&mut spec);
    let mut out = Vec::new();
    for r in 2..=max_r {
        let mut buf: Vec<Complex<f64>> = spec.iter().map(|c| c.powu(r as u32)).collect();
        inv.process(&mut buf);
        let used = r * (n - 1) + 1;
        let mass = buf[..used].iter().map(|c| c.re / len as f64).collect();
        out.push(GridMeasure {
            origin: base.origin * r as f64,
            step: base.step,
            mass,
        });
    }
    out
}

/// Per-size ingredients of the subset sum, prepared once per channel.
#[derive(Debug, Clone)]
pub struct MultiSampleChannel {
    pub samples: usize,
    single: SingleSampleChannel<f64>,
    /// `(llr, mass under f1, mass under f0)` at the quadrature nodes.
    points: Vec<(f64, f64, f64)>,
    /// Convolution powers `r = 2..=L` of the llr laws at full and half
    /// resolution, under each hypothesis.
    full: Vec<(GridMeasure, GridMeasure)>,
    half: Vec<(GridMeasure, GridMeasure)>,
}

impl MultiSampleChannel {
    pub fn new(lambda0: f64, lambda1: f64, a: f64, samples: usize) -> Result<Self> {
        if samples == 0 {
            return domain("at least one sample per symbol is required");
        }
        if samples > MAX_SAMPLES {
            return Err(Error::Unsupported(format!(
                "{samples} samples per symbol exceeds the supported maximum of {MAX_SAMPLES}"
            )));
        }
        if !(lambda0 > 0.0) {
            return domain("the subset sum needs background light; use the background-free path");
        }
        let single = SingleSampleChannel::new(lambda0, lambda1, a)?;
        let (f0, f1) = single.densities();
        let w = &single.nodes().weights;
        let mut points = Vec::with_capacity(f0.len());
        for i in 0..f0.len() {
            if f1[i] <= 0.0 && f0[i] <= 0.0 {
                continue;
            }
            let llr = if f0[i] <= 0.0 {
                f64::INFINITY
            } else if f1[i] <= 0.0 {
                f64::NEG_INFINITY
            } else {
                (f1[i] / f0[i]).ln()
            };
            points.push((llr, w[i] * f1[i], w[i] * f0[i]));
        }
        let finite = points.iter().map(|p| p.0).filter(|l| l.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
            (l.min(v), h.max(v))
        });
        let mut ch = Self {
            samples,
            single,
            points,
            full: Vec::new(),
            half: Vec::new(),
        };
        if samples >= 2 {
            let ln_rho = (ch.single.a0 / ch.single.a1).ln().abs() * samples as f64;
            let spread = (samples - 1) as f64 * (hi - lo).abs();
            let lo_c = lo.max(-(LLR_MARGIN + ln_rho + spread));
            let hi_c = hi.min(LLR_MARGIN + ln_rho + spread);
            let (lo_c, hi_c) = if hi_c > lo_c {
                (lo_c, hi_c)
            } else {
                (lo_c - 1.0, lo_c + 1.0)
            };
            ch.full = ch.tabulate(lo_c, hi_c, LLR_CELLS, samples);
            ch.half = ch.tabulate(lo_c, hi_c, LLR_CELLS / 2, samples);
        }
        Ok(ch)
    }

    fn tabulate(
        &self,
        lo: f64,
        hi: f64,
        cells: usize,
        max_r: usize,
    ) -> Vec<(GridMeasure, GridMeasure)> {
        let step = (hi - lo) / cells as f64;
        let clamp = |l: f64| l.clamp(lo, hi);
        let p1: Vec<(f64, f64)> = self.points.iter().map(|p| (clamp(p.0), p.1)).collect();
        let p0: Vec<(f64, f64)> = self.points.iter().map(|p| (clamp(p.0), p.2)).collect();
        let g1 = GridMeasure::deposit(&p1, lo, step, cells);
        let g0 = GridMeasure::deposit(&p0, lo, step, cells);
        convolution_powers(&g1, max_r)
            .into_iter()
            .zip(convolution_powers(&g0, max_r))
            .collect()
    }

    pub fn single(&self) -> &SingleSampleChannel<f64> {
        &self.single
    }

    /// `(K1, K0)` for subsets with `s` zero samples: the divergences of each
    /// hypothesis's restricted measure from the output measure.
    fn term(&self, s: usize, mu: f64, half: bool) -> (f64, f64) {
        let r = self.samples - s;
        let (a0, a1) = (self.single.a0, self.single.a1);
        let nu = 1.0 - mu;
        let ln_rho = s as f64 * (a0 / a1).ln();
        let w1 = a1.powi(s as i32);
        let w0 = a0.powi(s as i32);
        // ln(mu + nu rho e^-t) and ln(mu e^t / rho + nu), stable for large |t|
        let h1 = |t: f64| log_add(mu.ln(), nu.ln() + ln_rho - t);
        let h0 = |t: f64| log_add(mu.ln() + t - ln_rho, nu.ln());
        match r {
            0 => (-w1 * h1(0.0), -w0 * h0(0.0)),
            1 => {
                let mut k1 = 0.0;
                let mut k0 = 0.0;
                for &(l, m1, m0) in &self.points {
                    if m1 > 0.0 {
                        k1 -= m1 * h1(l);
                    }
                    if m0 > 0.0 {
                        k0 -= m0 * h0(l);
                    }
                }
                (w1 * k1, w0 * k0)
            }
            _ => {
                let tabs = if half { &self.half } else { &self.full };
                let (g1, g0) = &tabs[r - 2];
                (-w1 * g1.integrate(h1), -w0 * g0.integrate(h0))
            }
        }
    }

    fn check_mu(mu: f64) -> Result<()> {
        if !(mu > 0.0 && mu < 1.0) {
            return domain(format!("duty cycle must lie in (0, 1), got {mu}"));
        }
        Ok(())
    }

    fn sum(&self, mu: f64, half: bool) -> (f64, f64, f64) {
        let mut total = 0.0;
        let mut discrete = 0.0;
        let mut grad = 0.0;
        for s in 0..=self.samples {
            let c = ln_choose::<f64>(self.samples, s).exp();
            let (k1, k0) = self.term(s, mu, half);
            let v = c * (mu * k1 + (1.0 - mu) * k0);
            total += v;
            grad += c * (k1 - k0);
            if s == self.samples {
                discrete = v;
            }
        }
        (total, discrete, grad)
    }

    /// Information carried by all `L` samples. The discrete part is the
    /// all-zero outcome; the error estimate compares full and half grids.
    pub fn mutual_info(&self, mu: f64) -> Result<MutualInfoBreakdown<f64>> {
        Self::check_mu(mu)?;
        let (total, discrete, _) = self.sum(mu, false);
        let single_err = self.single.mutual_info(mu)?.quadrature_error_estimate;
        let grid_err = if self.samples >= 2 {
            (self.sum(mu, true).0 - total).abs()
        } else {
            0.0
        };
        Ok(MutualInfoBreakdown {
            total,
            discrete_part: discrete,
            continuous_part: total - discrete,
            mu,
            quadrature_error_estimate: grid_err + self.samples as f64 * single_err,
        })
    }

    /// `dI/dmu`.
    pub fn derivative(&self, mu: f64) -> Result<f64> {
        Self::check_mu(mu)?;
        Ok(self.sum(mu, false).2)
    }

    /// The same sum evaluated subset by subset (all `2^L` of them).
    pub fn mutual_info_enumerated(&self, mu: f64) -> Result<f64> {
        Self::check_mu(mu)?;
        let l = self.samples;
        let terms: Vec<(f64, f64)> = (0..=l).map(|s| self.term(s, mu, false)).collect();
        let mut total = 0.0;
        for subset in 0u32..(1u32 << l) {
            let (k1, k0) = terms[subset.count_ones() as usize];
            total += mu * k1 + (1.0 - mu) * k0;
        }
        Ok(total)
    }
}

fn log_add(x: f64, y: f64) -> f64 {
    let m = x.max(y);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((x - m).exp() + (y - m).exp()).ln()
}

/// Information carried by `samples` independent samples per symbol.
pub fn mutual_info_multi(
    mu: f64,
    lambda0: f64,
    lambda1: f64,
    a: f64,
    samples: usize,
) -> Result<MutualInfoBreakdown<f64>> {
    if samples > MAX_SAMPLES {
        return Err(Error::Unsupported(format!(
            "{samples} samples per symbol exceeds the supported maximum of {MAX_SAMPLES}"
        )));
    }
    if lambda0 == 0.0 {
        if !(mu > 0.0 && mu < 1.0) {
            return domain(format!("duty cycle must lie in (0, 1), got {mu}"));
        }
        let a1 = super::single::atom_weight(lambda1, a).powi(samples as i32);
        return Ok(super::single::background_free(mu, a1));
    }
    MultiSampleChannel::new(lambda0, lambda1, a, samples)?.mutual_info(mu)
}
