//! Monte-Carlo bit error rates.
//!
//! Symbols are equiprobable. Blocks of symbols run in parallel, each on
//! its own random stream with its own pulse carry-over, and block results
//! are summed in block order so the outcome does not depend on threading.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixed::SampleDist;
use crate::rng::{derive_seed, stream, Stream};
use crate::sampler::poisson;
use crate::sim::config::{ChannelConfig, Sampling};
use crate::sim::waveform::{
    oversampled_values, symbol_integral, symbol_integral_nonlinear, GainSource, SymbolStream,
};

use super::infinite::mpd_infinite_error;
use super::nonlinear::{nonlinear_sample_density, NonlinearFn};
use super::oversample::mpd_oversample_stats;
use super::pcd::{
    pcd_counting_threshold, pcd_error_with_cutoff, pcd_threshold_opt_dists, PcdThreshold,
};
use super::undersample::{mpd_undersample_gaussian, mpd_undersample_overlap};

/// Symbols per parallel block.
const BLOCK: usize = 4096;
/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;
const TRAIN_LABEL: u64 = 0x7472_6169_6e;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    /// Integrate the whole symbol.
    MpdInfinite,
    /// Average all samples, several per dead time.
    MpdOversample,
    /// Average `L` samples spaced at least one dead time apart.
    MpdUndersample,
    /// Count samples above a threshold.
    Pcd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdSource {
    Theory,
    /// Chosen to minimize the error on a separate training stream.
    Trained,
}

#[derive(Debug, Clone, Copy)]
pub struct McOptions {
    pub n_symbols: usize,
    pub seed: u64,
    /// Variance of zero-mean Gaussian noise added to every sample after
    /// the anode response.
    pub noise_var: f64,
    pub train_symbols: usize,
}

impl McOptions {
    pub fn new(n_symbols: usize, seed: u64) -> Self {
        Self {
            n_symbols,
            seed,
            noise_var: 0.0,
            train_symbols: 20_000,
        }
    }

    pub fn with_noise(mut self, var: f64) -> Self {
        self.noise_var = var;
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectorReport {
    pub detector_kind: DetectorKind,
    /// Named thresholds used by the detector.
    pub thresholds: Vec<(String, f64)>,
    pub threshold_source: ThresholdSource,
    pub theory_pe: Option<f64>,
    /// Gaussian-approximation error, where one exists.
    pub gaussian_pe: Option<f64>,
    pub monte_carlo_pe: f64,
    /// Half-width of the Wilson 95% interval.
    pub mc_ci95: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub errors: u64,
    pub n_symbols: usize,
    pub seed: u64,
    pub config: ChannelConfig,
    pub a: f64,
}

impl DetectorReport {
    /// Whether the theoretical error lies in the Monte-Carlo interval.
    pub fn theory_in_ci(&self) -> Option<bool> {
        self.theory_pe
            .map(|p| p >= self.ci_low && p <= self.ci_high)
    }
}

/// Wilson score interval for `k` successes in `n` trials at 95%.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = Z95 * Z95;
    let den = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / den;
    let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / den;
    let lo = if k == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let hi = if k == n {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (lo, hi)
}

/// One detector observation per symbol.
#[derive(Clone, Copy)]
struct Observer<'a> {
    kind: DetectorKind,
    cfg: &'a ChannelConfig,
    gains: GainSource,
    c: Option<&'a NonlinearFn>,
    noise_sd: f64,
    /// Sample threshold for counting.
    gamma2: f64,
}

impl Observer<'_> {
    fn noise(&self, rng: &mut Stream) -> f64 {
        if self.noise_sd > 0.0 {
            let n: f64 = rng.sample(rand_distr::StandardNormal);
            n * self.noise_sd
        } else {
            0.0
        }
    }

    fn respond(&self, x: f64) -> f64 {
        match self.c {
            Some(c) => c.eval(x),
            None => x,
        }
    }

    fn observe(&self, rng: &mut Stream, carry: &mut SymbolStream, bit: bool) -> Result<f64> {
        let rate = self.cfg.rate(bit);
        let tau = self.cfg.tau;
        match (self.kind, self.cfg.sampling) {
            (DetectorKind::MpdInfinite, _) => {
                let arr = carry.next_symbol(rng, rate)?;
                Ok(match self.c {
                    Some(c) => symbol_integral_nonlinear(&arr, tau, c),
                    None => symbol_integral(&arr, tau),
                })
            }
            (DetectorKind::MpdOversample, Sampling::Over { per_dead_time }) => {
                let arr = carry.next_symbol(rng, rate)?;
                let kd = self.cfg.kd()?;
                let v = oversampled_values(&arr, tau, per_dead_time, kd, self.c);
                let n = v.len() as f64;
                let mut s = 0.0;
                for x in v {
                    s += x + self.noise(rng);
                }
                Ok(s / n)
            }
            // sample windows lie inside the symbol: samples are iid and
            // nothing carries over, so they are drawn directly
            (DetectorKind::MpdUndersample | DetectorKind::Pcd, Sampling::Under { samples }) => {
                let mut acc = 0.0;
                for _ in 0..samples {
                    let n = poisson(rng, rate * tau);
                    let z = self.gains.charge(rng, n)?;
                    let v = self.respond(z) + self.noise(rng);
                    if self.kind == DetectorKind::Pcd {
                        acc += f64::from(u8::from(v >= self.gamma2));
                    } else {
                        acc += v;
                    }
                }
                Ok(if self.kind == DetectorKind::Pcd {
                    acc
                } else {
                    acc / samples as f64
                })
            }
            (k, s) => Err(Error::Unsupported(format!(
                "{k:?} detection with {s:?} sampling"
            ))),
        }
    }

    /// `(bit, observation)` pairs for `n` symbols on stream `block`.
    fn run_block(&self, seed: u64, block: u64, n: usize) -> Result<Vec<(bool, f64)>> {
        let mut rng = stream(seed, block);
        let mut carry = SymbolStream::new(self.cfg.tau, self.gains);
        let warm: bool = rng.random();
        carry.warm_up(&mut rng, self.cfg.rate(warm))?;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let bit: bool = rng.random();
            out.push((bit, self.observe(&mut rng, &mut carry, bit)?));
        }
        Ok(out)
    }

    /// Runs `n` symbols in parallel blocks and folds each block with `f`.
    fn run<A: Send, F>(&self, seed: u64, n: usize, f: F) -> Result<Vec<A>>
    where
        F: Fn(Vec<(bool, f64)>) -> A + Sync,
    {
        let blocks = n.div_ceil(BLOCK);
        (0..blocks)
            .into_par_iter()
            .map(|b| {
                let m = BLOCK.min(n - b * BLOCK);
                self.run_block(seed, b as u64, m).map(&f)
            })
            .collect()
    }
}

/// Single threshold (and side) minimizing the error on labelled data.
/// Returns `(threshold, flipped)`: decide one iff `(y > threshold) != flipped`.
fn train_threshold(mut data: Vec<(bool, f64)>) -> (f64, bool) {
    data.sort_by(|a, b| a.1.total_cmp(&b.1));
    let ones = data.iter().filter(|d| d.0).count() as i64;
    let zeros = data.len() as i64 - ones;
    // errors of "one iff y > t" with t below everything: all zeros wrong
    let mut err = zeros;
    let mut best = (err, f64::NEG_INFINITY, false);
    let mut best_flip = (data.len() as i64 - err, f64::NEG_INFINITY, true);
    let mut i = 0;
    while i < data.len() {
        let v = data[i].1;
        while i < data.len() && data[i].1 == v {
            err += if data[i].0 { 1 } else { -1 };
            i += 1;
        }
        let t = if i < data.len() {
            0.5 * (v + data[i].1)
        } else {
            v
        };
        if err < best.0 {
            best = (err, t, false);
        }
        let e_flip = data.len() as i64 - err;
        if e_flip < best_flip.0 {
            best_flip = (e_flip, t, true);
        }
    }
    if best_flip.0 < best.0 {
        (best_flip.1, true)
    } else {
        (best.1, false)
    }
}

fn is_linear(c: Option<&NonlinearFn>) -> bool {
    c.is_none_or(|c| c.is_identity())
}

/// Simulates `opts.n_symbols` symbols through the channel and detector.
///
/// Thresholds come from theory where a matching theory exists: the ML
/// crossing for linear mean power detection with spaced samples, and the
/// optimized sample and count thresholds for counting detection. Other
/// detectors use the best single threshold on a separate training stream.
pub fn ml_detect_mc(
    kind: DetectorKind,
    cfg: &ChannelConfig,
    gains: GainSource,
    c: Option<&NonlinearFn>,
    opts: McOptions,
) -> Result<DetectorReport> {
    cfg.validate()?;
    if opts.n_symbols < 1000 {
        return Err(Error::Config(format!(
            "at least 1000 symbols are needed, got {}",
            opts.n_symbols
        )));
    }
    let a = gains.a();
    let c = if is_linear(c) { None } else { c };
    let noise_sd = opts.noise_var.max(0.0).sqrt();
    let linear_clean = c.is_none() && noise_sd == 0.0;
    let (l0, l1) = (cfg.lambda0_norm(), cfg.lambda1_norm());
    let mut obs = Observer {
        kind,
        cfg,
        gains,
        c,
        noise_sd,
        gamma2: 0.0,
    };
    let mut thresholds = Vec::new();
    let mut theory = None;
    let mut gaussian = None;

    let rule: Box<dyn Fn(f64) -> bool + Sync> = match (kind, cfg.sampling) {
        (DetectorKind::Pcd, Sampling::Under { samples }) => {
            let th = pcd_sample_threshold(l0, l1, a, c, noise_sd)?;
            let (n_th, p_th) = pcd_counting_threshold(th.p0, th.p1, samples)?;
            obs.gamma2 = th.gamma2;
            thresholds.push(("gamma2".into(), th.gamma2));
            thresholds.push(("n_th".into(), n_th as f64));
            thresholds.push(("p_th".into(), p_th));
            theory = Some(pcd_error_with_cutoff(samples, th.p0, th.p1, n_th));
            Box::new(move |y| y > n_th as f64 + 0.5)
        }
        (DetectorKind::MpdUndersample, Sampling::Under { samples }) if linear_clean => {
            let ov = mpd_undersample_overlap(samples, l0, l1, a)?;
            let g = ov.threshold() / samples as f64;
            thresholds.push(("gamma_mean".into(), g));
            theory = Some(ov.value);
            if l0 > 0.0 {
                gaussian = Some(mpd_undersample_gaussian(samples, l0, l1, a)?.pe_la);
            }
            Box::new(move |y| y > g)
        }
        _ => {
            if kind == DetectorKind::MpdInfinite && c.is_none() {
                theory = Some(mpd_infinite_error(cfg.lambda0, cfg.lambda_a, cfg.tau, a)?);
            }
            if let (DetectorKind::MpdOversample, Sampling::Over { per_dead_time }, true) =
                (kind, cfg.sampling, c.is_none())
            {
                if cfg.lambda0 > 0.0 {
                    let lam1 = cfg.lambda0 + cfg.lambda_a;
                    let st =
                        mpd_oversample_stats(cfg.lambda0, lam1, cfg.tau, per_dead_time, a, None)?;
                    gaussian = Some(st.pe_wa);
                    thresholds.push(("gamma_1a".into(), st.gamma_1a));
                }
            }
            let train_seed = derive_seed(opts.seed, TRAIN_LABEL);
            let parts = obs.run(train_seed, opts.train_symbols.max(1000), |v| v)?;
            let (t, flip) = train_threshold(parts.into_iter().flatten().collect());
            thresholds.push(("trained".into(), t));
            thresholds.push(("trained_flipped".into(), f64::from(u8::from(flip))));
            Box::new(move |y| (y > t) != flip)
        }
    };
    let per_block = obs.run(opts.seed, opts.n_symbols, |v| {
        v.iter().filter(|(b, y)| rule(*y) != *b).count() as u64
    })?;
    let errors: u64 = per_block.iter().sum();
    let n = opts.n_symbols as u64;
    let (lo, hi) = wilson_interval(errors, n);
    Ok(DetectorReport {
        detector_kind: kind,
        thresholds,
        threshold_source: if theory.is_some() && !matches!(kind, DetectorKind::MpdInfinite) {
            ThresholdSource::Theory
        } else {
            ThresholdSource::Trained
        },
        theory_pe: theory,
        gaussian_pe: gaussian,
        monte_carlo_pe: errors as f64 / n as f64,
        mc_ci95: 0.5 * (hi - lo),
        ci_low: lo,
        ci_high: hi,
        errors,
        n_symbols: opts.n_symbols,
        seed: opts.seed,
        config: *cfg,
        a,
    })
}

/// Optimized sample threshold for counting detection, through the anode
/// response and noise when present.
pub fn pcd_sample_threshold(
    lambda0: f64,
    lambda1: f64,
    a: f64,
    c: Option<&NonlinearFn>,
    noise_sd: f64,
) -> Result<PcdThreshold> {
    let d0 = SampleDist::new(lambda0, a)?;
    let d1 = SampleDist::new(lambda1, a)?;
    match c {
        Some(c) if !c.is_identity() => {
            let t0 = nonlinear_sample_density(&d0, c)?;
            let t1 = nonlinear_sample_density(&d1, c)?;
            pcd_threshold_opt_dists(&t0, &t1, noise_sd)
        }
        _ => pcd_threshold_opt_dists(&d0, &d1, noise_sd),
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NonlinearMpdEstimate {
    /// Error of the histogram ML rule on held-out symbols.
    pub pe: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci95: f64,
    /// Plug-in overlap `sum min(h0, h1) / 2` over all symbols.
    pub plug_in: f64,
    /// Too few held-out errors for a tight interval.
    pub low_count: bool,
}

/// ML error of integrate-and-decide detection through the anode response
/// `c`. The conditional laws of the symbol integral have no closed form,
/// so they are estimated by histograms of simulated symbols: half of them
/// build the histograms and the other half measure the error of deciding
/// by the larger histogram.
pub fn mpd_nonlinear_error(
    cfg: &ChannelConfig,
    gains: GainSource,
    c: &NonlinearFn,
    n_symbols: usize,
    seed: u64,
) -> Result<NonlinearMpdEstimate> {
    if n_symbols < 2000 {
        return Err(Error::Config(format!(
            "at least 2000 symbols are needed, got {n_symbols}"
        )));
    }
    let obs = Observer {
        kind: DetectorKind::MpdInfinite,
        cfg,
        gains,
        c: Some(c),
        noise_sd: 0.0,
        gamma2: 0.0,
    };
    let data: Vec<(bool, f64)> = obs
        .run(seed, n_symbols, |v| v)?
        .into_iter()
        .flatten()
        .collect();
    let (train, test) = data.split_at(data.len() / 2);
    let lo = data.iter().map(|d| d.1).fold(f64::INFINITY, f64::min);
    let hi = data.iter().map(|d| d.1).fold(f64::NEG_INFINITY, f64::max);
    let bins = ((train.len() as f64).sqrt() as usize).clamp(20, 400);
    let width = ((hi - lo) / bins as f64).max(f64::MIN_POSITIVE);
    let bin = |y: f64| (((y - lo) / width) as usize).min(bins - 1);
    let hist = |set: &[(bool, f64)]| {
        let mut h = [vec![0.0; bins], vec![0.0; bins]];
        let mut n = [0.0f64; 2];
        for &(b, y) in set {
            h[usize::from(b)][bin(y)] += 1.0;
            n[usize::from(b)] += 1.0;
        }
        for k in 0..2 {
            h[k].iter_mut().for_each(|v| *v /= n[k].max(1.0));
        }
        h
    };
    let h = hist(train);
    let errors = test
        .iter()
        .filter(|&&(b, y)| (h[1][bin(y)] > h[0][bin(y)]) != b)
        .count() as u64;
    let all = hist(&data);
    let plug_in = 0.5
        * all[0]
            .iter()
            .zip(&all[1])
            .map(|(a, b)| a.min(*b))
            .sum::<f64>();
    let n = test.len() as u64;
    let (ci_low, ci_high) = wilson_interval(errors, n);
    Ok(NonlinearMpdEstimate {
        pe: errors as f64 / n as f64,
        ci_low,
        ci_high,
        ci95: 0.5 * (ci_high - ci_low),
        plug_in,
        low_count: errors < 50,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_contains_estimate() {
        let (lo, hi) = wilson_interval(50, 1000);
        assert!(lo < 0.05 && hi > 0.05);
        let (lo, hi) = wilson_interval(0, 1000);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.01);
    }

    #[test]
    fn trained_threshold_separates() {
        let data = vec![
            (false, 0.1),
            (false, 0.2),
            (true, 0.8),
            (false, 0.3),
            (true, 0.9),
        ];
        let (t, flip) = train_threshold(data);
        assert!(!flip && t > 0.3 && t < 0.8);
        let data = vec![(true, 0.1), (true, 0.2), (false, 0.8)];
        let (t, flip) = train_threshold(data);
        assert!(flip && t > 0.2 && t < 0.8);
    }

    #[test]
    fn equal_rates_give_coin_flip() {
        let cfg = ChannelConfig::new(5.0, 0.0, 1.0, 0.02, Sampling::Under { samples: 10 }).unwrap();
        let r = ml_detect_mc(
            DetectorKind::MpdUndersample,
            &cfg,
            GainSource::Diffusion { a: 6.0 },
            None,
            McOptions::new(20_000, 1),
        )
        .unwrap();
        assert!((r.ci_low..=r.ci_high).contains(&0.5), "{r:?}");
    }

    #[test]
    fn runs_are_reproducible() {
        let cfg =
            ChannelConfig::new(5.0, 20.0, 1.0, 0.02, Sampling::Under { samples: 10 }).unwrap();
        let g = GainSource::Diffusion { a: 6.0 };
        let r1 = ml_detect_mc(DetectorKind::Pcd, &cfg, g, None, McOptions::new(5000, 9)).unwrap();
        let r2 = ml_detect_mc(DetectorKind::Pcd, &cfg, g, None, McOptions::new(5000, 9)).unwrap();
        assert_eq!(r1.errors, r2.errors);
    }
}
