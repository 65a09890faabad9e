//! Photon arrivals and the PMT output waveform.
//!
//! Each photon produces a rectangular pulse of height equal to its gain and
//! width equal to the dead time. A sample at time `t` sees every pulse that
//! started in `(t - tau, t]`, passed through the anode response `C`.

use rand::Rng;

use crate::detect::nonlinear::NonlinearFn;
use crate::error::{Error, Result};
use crate::gain::GainModel;
use crate::sampler::{cascade, charge_for_photons, draw_gain_diffusion, poisson};

/// Homogeneous Poisson arrivals on `[start, end)`, sorted.
pub fn gen_arrivals<R: Rng + ?Sized>(rng: &mut R, rate: f64, start: f64, end: f64) -> Vec<f64> {
    let len = end - start;
    if rate <= 0.0 || len <= 0.0 {
        return Vec::new();
    }
    let n = poisson(rng, rate * len) as usize;
    let mut t: Vec<f64> = (0..n).map(|_| start + len * rng.random::<f64>()).collect();
    t.sort_by(|a, b| a.total_cmp(b));
    t
}

/// Where per-photon gains come from. Gains are normalized by the mean gain.
#[derive(Debug, Clone, Copy)]
pub enum GainSource {
    /// Gamma-mixture law matching the closed-form gain transform.
    Diffusion { a: f64 },
    /// Full dynode cascade.
    Branching(GainModel<f64>),
}

impl GainSource {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        match self {
            GainSource::Diffusion { a } => Ok(draw_gain_diffusion(rng, *a)),
            GainSource::Branching(m) => {
                Ok(cascade(rng, m.hbar(), m.stages(), 1.0)? / m.mean_gain())
            }
        }
    }

    /// Summed normalized gain of `n` photons.
    pub fn charge<R: Rng + ?Sized>(&self, rng: &mut R, n: f64) -> Result<f64> {
        match self {
            GainSource::Diffusion { a } => Ok(charge_for_photons(rng, n, *a)),
            GainSource::Branching(m) => Ok(cascade(rng, m.hbar(), m.stages(), n)? / m.mean_gain()),
        }
    }

    /// Shape ratio of the analytic law these gains follow.
    pub fn a(&self) -> f64 {
        match self {
            GainSource::Diffusion { a } => *a,
            GainSource::Branching(m) => m.a(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub sample_times: Vec<f64>,
    pub values: Vec<f64>,
    /// `(time, gain)` of every photon that can affect the samples.
    pub arrivals: Vec<(f64, f64)>,
}

/// Samples `C(sum of active pulses)` at `times`. A pulse started at `t_k`
/// is active at `t` when `t - tau < t_k <= t`. `None` means linear response.
pub fn synth_waveform(
    arrivals: &[(f64, f64)],
    times: &[f64],
    tau: f64,
    response: Option<&NonlinearFn>,
) -> Result<Waveform> {
    if arrivals.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(Error::Domain("arrivals must be sorted by time".into()));
    }
    let mut prefix = Vec::with_capacity(arrivals.len() + 1);
    let mut run = 0.0;
    prefix.push(run);
    for &(_, g) in arrivals {
        run += g;
        prefix.push(run);
    }
    let values = times
        .iter()
        .map(|&t| {
            let hi = arrivals.partition_point(|&(s, _)| s <= t);
            let lo = arrivals.partition_point(|&(s, _)| s <= t - tau);
            // direct sum for short windows avoids prefix cancellation
            let x = if hi - lo < 64 {
                arrivals[lo..hi].iter().map(|&(_, g)| g).sum()
            } else {
                prefix[hi] - prefix[lo]
            };
            match response {
                Some(c) => c.eval(x),
                None => x,
            }
        })
        .collect();
    Ok(Waveform {
        sample_times: times.to_vec(),
        values,
        arrivals: arrivals.to_vec(),
    })
}

/// Upward crossings `prev < threshold <= current` along the samples,
/// starting from a zero level before the first sample.
pub fn count_rising_edges(waveform: &Waveform, threshold: f64) -> usize {
    let mut prev = 0.0;
    let mut n = 0;
    for &v in &waveform.values {
        if prev < threshold && threshold <= v {
            n += 1;
        }
        prev = v;
    }
    n
}

/// Pulses that start on an idle line during `[0, 1)`: arrivals whose
/// predecessor is at least one dead time earlier. This is the rising-edge
/// count of the continuous-time waveform independent of pulse heights.
pub fn count_detected_pulses(arrival_times: &[f64], tau: f64) -> usize {
    let mut prev = f64::NEG_INFINITY;
    let mut n = 0;
    for &t in arrival_times {
        if t >= 0.0 && t < 1.0 && t - prev >= tau {
            n += 1;
        }
        prev = t;
    }
    n
}

/// `int_0^1 y(t) dt` for linear response: each pulse contributes its gain
/// times the part of `[t_k, t_k + tau)` inside the symbol.
pub fn symbol_integral(arrivals: &[(f64, f64)], tau: f64) -> f64 {
    arrivals
        .iter()
        .map(|&(t, g)| {
            let lo = t.max(0.0);
            let hi = (t + tau).min(1.0);
            g * (hi - lo).max(0.0)
        })
        .sum()
}

/// `int_0^1 C(x(t)) dt` where `x(t)` sums the pulses active at `t`. The
/// active sum is piecewise constant, so the integral is exact.
pub fn symbol_integral_nonlinear(arrivals: &[(f64, f64)], tau: f64, c: &NonlinearFn) -> f64 {
    let mut events: Vec<(f64, f64)> = Vec::with_capacity(2 * arrivals.len());
    for &(t, g) in arrivals {
        let end = t + tau;
        if end <= 0.0 || t >= 1.0 {
            continue;
        }
        events.push((t.max(0.0), g));
        if end < 1.0 {
            events.push((end, -g));
        }
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut level: f64 = 0.0;
    let mut last = 0.0;
    let mut total = 0.0;
    for (t, dg) in events {
        total += c.eval(level.max(0.0)) * (t - last);
        level += dg;
        last = t;
    }
    total + c.eval(level.max(0.0)) * (1.0 - last)
}

/// Samples at `i tau / ks`, `i = 1..=ks kd`, for arrivals on `[-tau, 1)`.
/// Charges are binned into sub-intervals of one sampling period and each
/// sample sums the `ks` bins ending at its instant.
pub fn oversampled_values(
    arrivals: &[(f64, f64)],
    tau: f64,
    ks: usize,
    kd: usize,
    c: Option<&NonlinearFn>,
) -> Vec<f64> {
    let n = ks * kd;
    let ts = tau / ks as f64;
    // bin k - ks + 1 collects arrivals in ((k - ks) ts, (k - ks + 1) ts]
    let mut bins = vec![0.0; n + ks];
    for &(t, g) in arrivals {
        let k = (t / ts).ceil() as i64 + ks as i64 - 1;
        if k >= 0 && (k as usize) < bins.len() {
            bins[k as usize] += g;
        }
    }
    let mut out = Vec::with_capacity(n);
    let mut run: f64 = bins[..ks].iter().sum();
    for i in 1..=n {
        run += bins[i + ks - 1] - bins[i - 1];
        let x: f64 = if i % 64 == 0 {
            bins[i..i + ks].iter().sum()
        } else {
            run
        };
        run = x;
        out.push(match c {
            Some(c) => c.eval(x.max(0.0)),
            None => x.max(0.0),
        });
    }
    out
}

/// Symbol-by-symbol photon generator that carries pulses started in the
/// last dead time of one symbol into the next.
#[derive(Debug, Clone)]
pub struct SymbolStream {
    tau: f64,
    gains: GainSource,
    carry: Vec<(f64, f64)>,
}

impl SymbolStream {
    pub fn new(tau: f64, gains: GainSource) -> Self {
        Self {
            tau,
            gains,
            carry: Vec::new(),
        }
    }

    /// Arrivals of the next symbol at `rate` photons per symbol, on
    /// `[-tau, 1)`; the negative part comes from the previous symbol.
    pub fn next_symbol<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
        rate: f64,
    ) -> Result<Vec<(f64, f64)>> {
        let times = gen_arrivals(rng, rate, 0.0, 1.0);
        let mut out = std::mem::take(&mut self.carry);
        out.reserve(times.len());
        for t in times {
            let g = self.gains.draw(rng)?;
            out.push((t, g));
            if t >= 1.0 - self.tau {
                self.carry.push((t - 1.0, g));
            }
        }
        Ok(out)
    }

    /// Draws a symbol at `rate` and discards it, leaving its carry-over.
    pub fn warm_up<R: Rng + ?Sized>(&mut self, rng: &mut R, rate: f64) -> Result<()> {
        self.carry.clear();
        self.next_symbol(rng, rate).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn empty_and_single_pulse() {
        let times: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        let w = synth_waveform(&[], &times, 0.1, None).unwrap();
        assert!(w.values.iter().all(|&v| v == 0.0));
        assert_eq!(count_rising_edges(&w, 0.5), 0);
        let w = synth_waveform(&[(0.305, 2.0)], &times, 0.1, None).unwrap();
        for (t, v) in times.iter().zip(&w.values) {
            let on = *t >= 0.305 && *t < 0.405;
            assert_eq!(*v, if on { 2.0 } else { 0.0 }, "t={t}");
        }
        assert_eq!(count_rising_edges(&w, 0.5), 1);
    }

    #[test]
    fn overlapping_pulses_superpose() {
        let times = [0.25, 0.35, 0.45];
        let w = synth_waveform(&[(0.2, 1.0), (0.3, 0.5)], &times, 0.2, None).unwrap();
        assert_eq!(w.values, vec![1.0, 1.5, 0.5]);
    }

    #[test]
    fn unsorted_arrivals_rejected() {
        assert!(synth_waveform(&[(0.5, 1.0), (0.1, 1.0)], &[0.6], 0.1, None).is_err());
    }

    #[test]
    fn carry_over_enters_next_symbol() {
        let mut s = SymbolStream::new(0.2, GainSource::Diffusion { a: 5.0 });
        let mut r = stream(1, 0);
        let first = s.next_symbol(&mut r, 40.0).unwrap();
        let tail: Vec<_> = first
            .iter()
            .filter(|a| a.0 >= 0.8)
            .map(|&(t, g)| (t - 1.0, g))
            .collect();
        let second = s.next_symbol(&mut r, 40.0).unwrap();
        assert_eq!(&second[..tail.len()], &tail[..]);
        assert!(second[tail.len()..].iter().all(|a| a.0 >= 0.0));
    }

    #[test]
    fn integral_of_single_pulses() {
        assert!((symbol_integral(&[(0.5, 2.0)], 0.1) - 0.2).abs() < 1e-15);
        assert!((symbol_integral(&[(0.95, 1.0)], 0.1) - 0.05).abs() < 1e-15);
        assert!((symbol_integral(&[(-0.05, 1.0)], 0.1) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn nonlinear_integral_reduces_to_linear() {
        let arr = [(-0.05, 1.0), (0.3, 2.0), (0.33, 0.5), (0.95, 1.5)];
        let lin = symbol_integral(&arr, 0.1);
        let id = symbol_integral_nonlinear(&arr, 0.1, &NonlinearFn::identity());
        assert!((lin - id).abs() < 1e-14);
        let clip =
            NonlinearFn::tabulate(|x| x.min(1.0), 5.0, 50, crate::detect::Tail::Hold).unwrap();
        // clipped levels: 0.05 + 0.03 + 0.07 + 0.5 * 0.03 + 0.05
        let v = symbol_integral_nonlinear(&arr, 0.1, &clip);
        assert!((v - 0.215).abs() < 1e-12, "{v}");
    }

    #[test]
    fn oversampled_values_match_direct_synthesis() {
        let mut s = SymbolStream::new(0.1, GainSource::Diffusion { a: 5.0 });
        let mut r = stream(3, 0);
        s.warm_up(&mut r, 30.0).unwrap();
        let arr = s.next_symbol(&mut r, 30.0).unwrap();
        let times: Vec<f64> = (1..=40).map(|i| i as f64 * 0.1 / 4.0).collect();
        let w = synth_waveform(&arr, &times, 0.1, None).unwrap();
        let v = oversampled_values(&arr, 0.1, 4, 10, None);
        for (i, (a, b)) in w.values.iter().zip(&v).enumerate() {
            assert!((a - b).abs() < 1e-9, "sample {i}: {a} {b}");
        }
    }

    #[test]
    fn detected_pulses_respect_dead_time() {
        assert_eq!(
            count_detected_pulses(&[-0.01, 0.005, 0.2, 0.21, 0.5], 0.02),
            2
        );
    }
}
