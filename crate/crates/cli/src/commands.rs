//! Subcommand implementations.

use std::f64::consts::LN_2;
use std::path::{Path, PathBuf};

use photonwire::calibrate::{build_problem, fit, FitOptions};
use photonwire::detect::{ml_detect_mc, DetectorKind, McOptions, NonlinearFn, Tail};
use photonwire::info::{
    mutual_info_multi, mutual_info_single, optimal_duty_multi, suboptimal_duty_multi,
};
use photonwire::regimes::RegimeThresholds;
use photonwire::rng::{derive_seed, stream};
use photonwire::sim::{synth_waveform, ChannelConfig, GainSource, Sampling, SymbolStream};
use photonwire::{Mixed, SampleDist};
use rand::Rng;
use serde_json::{Map, Value};

use crate::config::{DetectorName, Loaded, Normalized, PowerUnit};
use crate::output::{write_json, Cell, Format, Meta, Table};
use crate::CliError;

pub struct Context<'a> {
    pub loaded: &'a Loaded,
    pub norm: Normalized,
    pub meta: Meta,
    pub out: &'a Path,
    pub format: Format,
}

impl Context<'_> {
    fn seed(&self) -> u64 {
        self.meta.seed
    }

    fn write(&self, table: &Table, stem: &str) -> Result<Vec<PathBuf>, CliError> {
        Ok(vec![table.write(
            self.out,
            stem,
            &self.meta,
            self.format,
        )?])
    }

    fn anode(&self, path: Option<&PathBuf>) -> Result<Option<NonlinearFn>, CliError> {
        path.map(|p| read_curve(&self.loaded.resolve(p)))
            .transpose()
    }
}

/// Mixed law of a sample at several mean photon counts.
pub fn gain_pdf(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let s = &ctx.loaded.config.gain_pdf;
    if s.points < 2 || !(s.z_max > 0.0) {
        return Err(CliError::config(
            "gain_pdf needs z_max > 0 and at least two points",
        ));
    }
    let mut t = Table::new(&["photons_per_dead_time", "atom_weight", "z", "density"]);
    for &lam in &s.photons_per_dead_time {
        let d = SampleDist::new(lam, ctx.norm.a)?;
        for i in 0..s.points {
            let z = s.z_max * i as f64 / (s.points - 1) as f64;
            let dens = if z == 0.0 {
                d.density_at_zero()
            } else {
                d.density(z)
            };
            if !(dens >= 0.0) {
                return Err(CliError::invariant(format!(
                    "negative density {dens} at z = {z}"
                )));
            }
            t.push(vec![
                lam.into(),
                d.atom_weight().into(),
                z.into(),
                dens.into(),
            ]);
        }
    }
    ctx.write(&t, "gain_pdf")
}

/// Optimal and background-free duty cycles against the signal rate.
pub fn duty_cycle(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let s = &ctx.loaded.config.duty_cycle;
    let n = ctx.norm;
    let backgrounds = if s.background_rates_per_s.is_empty() {
        vec![n.lambda0 * n.symbol_rate_hz]
    } else {
        s.background_rates_per_s.clone()
    };
    let mut t = Table::new(&[
        "background_per_symbol",
        "samples",
        "signal_per_symbol",
        "mu_optimal",
        "mu_suboptimal",
        "info_optimal_bits",
        "info_suboptimal_bits",
    ]);
    for &bg in &backgrounds {
        let lam0_sym = n.per_symbol(bg);
        for &l in &s.samples {
            if l == 0 || 1.0 / l as f64 + 1e-12 < n.tau {
                return Err(CliError::config(format!(
                    "{l} samples per symbol are closer than one dead time"
                )));
            }
            for sig in s.signal_rate_per_s.values()? {
                let sig_sym = n.per_symbol(sig);
                let (l0, l1) = (lam0_sym * n.tau, (lam0_sym + sig_sym) * n.tau);
                if !(l1 > l0) {
                    continue;
                }
                let opt = optimal_duty_multi(l0, l1, n.a, l, s.duty_bound)?;
                let sub = suboptimal_duty_multi(l1 - l0, n.a, l, s.duty_bound);
                let info = |mu: f64| -> Result<f64, CliError> {
                    Ok(if l == 1 {
                        mutual_info_single(mu, l0, l1, n.a)?.total
                    } else {
                        mutual_info_multi(mu, l0, l1, n.a, l)?.total
                    })
                };
                let (io, is) = (info(opt)?, info(sub)?);
                if io + 1e-9 < is {
                    return Err(CliError::invariant(format!(
                        "optimal duty {opt} carries less information than {sub}"
                    )));
                }
                t.push(vec![
                    lam0_sym.into(),
                    l.into(),
                    sig_sym.into(),
                    opt.into(),
                    sub.into(),
                    (io / LN_2).into(),
                    (is / LN_2).into(),
                ]);
            }
        }
    }
    ctx.write(&t, "duty_cycle")
}

/// Regime thresholds and waveforms around them.
pub fn regimes(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let s = &ctx.loaded.config.regimes;
    let n = ctx.norm;
    let th = RegimeThresholds::new(s.l_max, s.epsilon, n.tau, n.a)?;
    if !(th.lambda_th1 < th.lambda_th2) {
        return Err(CliError::invariant(format!(
            "thresholds out of order: {} >= {}",
            th.lambda_th1, th.lambda_th2
        )));
    }
    let mut summary = Table::new(&["quantity", "value"]);
    summary.push(vec![
        "threshold_pulse_transition_per_symbol".into(),
        th.lambda_th1.into(),
    ]);
    summary.push(vec![
        "threshold_transition_waveform_per_symbol".into(),
        th.lambda_th2.into(),
    ]);
    summary.push(vec!["l_max".into(), s.l_max.into()]);
    summary.push(vec!["epsilon".into(), s.epsilon.into()]);
    summary.push(vec!["gain_ratio".into(), n.a.into()]);
    summary.push(vec!["dead_time".into(), n.tau.into()]);

    // saturating anode clipped at l_max
    let anode = NonlinearFn::new(
        vec![0.0, s.l_max, s.l_max + 1.0],
        vec![0.0, s.l_max, s.l_max],
        Tail::Hold,
    )?;
    let cases = [
        ("pulse", 0.5 * th.lambda_th1),
        ("threshold_1", th.lambda_th1),
        ("transition", (th.lambda_th1 * th.lambda_th2).sqrt()),
        ("threshold_2", th.lambda_th2),
        ("waveform", 2.0 * th.lambda_th2),
    ];
    let times: Vec<f64> = (1..=s.points_per_symbol.max(1))
        .map(|i| i as f64 / s.points_per_symbol.max(1) as f64)
        .collect();
    let gains = GainSource::Diffusion { a: n.a };
    let mut waves = Table::new(&["case", "rate_per_symbol", "regime", "t", "value"]);
    for (k, (name, rate)) in cases.iter().enumerate() {
        let mut rng = stream(derive_seed(ctx.seed(), 0x7265_6769), k as u64);
        let mut st = SymbolStream::new(n.tau, gains);
        st.warm_up(&mut rng, *rate)?;
        let arr = st.next_symbol(&mut rng, *rate)?;
        let w = synth_waveform(&arr, &times, n.tau, Some(&anode))?;
        let regime = format!("{:?}", th.classify(*rate)?).to_lowercase();
        for (t, v) in w.sample_times.iter().zip(&w.values) {
            waves.push(vec![
                (*name).into(),
                (*rate).into(),
                regime.as_str().into(),
                (*t).into(),
                (*v).into(),
            ]);
        }
    }
    let mut files = ctx.write(&summary, "regimes")?;
    files.extend(ctx.write(&waves, "regimes_waveforms")?);
    Ok(files)
}

/// Theoretical and simulated error rates against the signal rate.
pub fn ber(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let s = &ctx.loaded.config.ber;
    let n = ctx.norm;
    if s.symbols < 1000 {
        return Err(CliError::config("ber needs at least 1000 symbols"));
    }
    let anode = ctx.anode(s.anode_curve.as_ref())?;
    let gains = GainSource::Diffusion { a: n.a };
    let mut t = Table::new(&[
        "signal_per_symbol",
        "detector",
        "samples",
        "per_dead_time",
        "theory_pe",
        "gaussian_pe",
        "mc_pe",
        "ci_low",
        "ci_high",
        "threshold_source",
    ]);
    let mut run = 0u64;
    for sig in s.signal_rate_per_s.values()? {
        let sig_sym = n.per_symbol(sig);
        for &det in &s.detectors {
            let setups: Vec<(DetectorKind, Sampling, Cell, Cell)> = match det {
                DetectorName::MpdUndersample | DetectorName::Pcd => s
                    .samples
                    .iter()
                    .map(|&l| {
                        let kind = if det == DetectorName::Pcd {
                            DetectorKind::Pcd
                        } else {
                            DetectorKind::MpdUndersample
                        };
                        (kind, Sampling::Under { samples: l }, l.into(), Cell::Empty)
                    })
                    .collect(),
                DetectorName::MpdOversample => s
                    .per_dead_time
                    .iter()
                    .map(|&k| {
                        (
                            DetectorKind::MpdOversample,
                            Sampling::Over { per_dead_time: k },
                            Cell::Empty,
                            k.into(),
                        )
                    })
                    .collect(),
                DetectorName::MpdInfinite => vec![(
                    DetectorKind::MpdInfinite,
                    Sampling::Continuous,
                    Cell::Empty,
                    Cell::Empty,
                )],
            };
            for (kind, sampling, samples, ks) in setups {
                let cfg = ChannelConfig::new(n.lambda0, sig_sym, 1.0, n.tau, sampling)?;
                let opts = McOptions::new(s.symbols, derive_seed(ctx.seed(), run))
                    .with_noise(s.noise_variance);
                run += 1;
                let r = ml_detect_mc(kind, &cfg, gains, anode.as_ref(), opts)?;
                if let Some(p) = r.theory_pe {
                    if !(0.0..=0.5 + 1e-9).contains(&p) {
                        return Err(CliError::invariant(format!(
                            "error probability {p} outside [0, 1/2]"
                        )));
                    }
                }
                let name = serde_json::to_value(kind)
                    .ok()
                    .and_then(|v| v.as_str().map(String::from))
                    .unwrap_or_default();
                t.push(vec![
                    sig_sym.into(),
                    name.as_str().into(),
                    samples,
                    ks,
                    r.theory_pe.into(),
                    r.gaussian_pe.into(),
                    r.monte_carlo_pe.into(),
                    r.ci_low.into(),
                    r.ci_high.into(),
                    format!("{:?}", r.threshold_source)
                        .to_lowercase()
                        .as_str()
                        .into(),
                ]);
            }
        }
    }
    ctx.write(&t, "ber")
}

/// Fits the anode curve to measured mean and spread.
pub fn fit_curve(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let s = &ctx.loaded.config.fit;
    let n = ctx.norm;
    let data = s
        .data
        .as_ref()
        .ok_or_else(|| CliError::config("fit needs [fit] data = \"measurements.csv\""))?;
    let rows = read_measurements(&ctx.loaded.resolve(data))?;
    if !(s.x_step > 0.0 && s.x_max > s.x_step) || s.max_iterations == 0 {
        return Err(CliError::config(
            "fit needs 0 < x_step < x_max and max_iterations >= 1",
        ));
    }
    let m2 = (s.x_max / s.x_step).round() as usize + 1;
    let grid: Vec<f64> = (0..m2).map(|j| j as f64 * s.x_step).collect();
    let powers: Vec<f64> = rows
        .iter()
        .map(|r| match s.power_unit {
            PowerUnit::PhotonsPerS => n.per_symbol(r.0),
            PowerUnit::PhotonsPerSymbol => r.0,
        })
        .collect();
    let means: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let vars: Vec<f64> = rows.iter().map(|r| r.2 * r.2).collect();
    let problem = build_problem(&powers, &grid, n.tau, n.a, &means, &vars)?;
    let opts = FitOptions {
        max_iter: s.max_iterations,
        tolerance: s.tolerance,
        ..FitOptions::default()
    };
    let r = fit(&problem, &grid, opts)?;
    if r.history.windows(2).any(|w| w[1] > w[0]) {
        return Err(CliError::invariant("objective increased during the fit"));
    }
    let mut t = Table::new(&["x", "C"]);
    for (x, c) in r.curve.grid_x().iter().zip(r.curve.grid_c()) {
        t.push(vec![(*x).into(), (*c).into()]);
    }
    let mut files = ctx.write(&t, "fit")?;
    let mut body = Map::new();
    body.insert("xs".into(), Value::from(r.x_s));
    body.insert("l_max".into(), Value::from(r.l_max));
    body.insert("fit_residual".into(), Value::from(r.residual));
    body.insert("iterations".into(), Value::from(r.iterations));
    let side = ctx.out.join("fit.json");
    write_json(&side, &ctx.meta, body)?;
    files.push(side);
    Ok(files)
}

/// Random symbols and the sampled PMT output.
pub fn simulate(ctx: &Context) -> Result<Vec<PathBuf>, CliError> {
    let s = &ctx.loaded.config.simulate;
    let n = ctx.norm;
    if !(0.0..=1.0).contains(&s.duty) || s.points_per_symbol == 0 {
        return Err(CliError::config(
            "simulate needs duty in [0, 1] and points_per_symbol >= 1",
        ));
    }
    let anode = ctx.anode(s.anode_curve.as_ref())?;
    let sig = n.per_symbol(s.signal_rate_per_s);
    let times: Vec<f64> = (1..=s.points_per_symbol)
        .map(|i| i as f64 / s.points_per_symbol as f64)
        .collect();
    let mut rng = stream(derive_seed(ctx.seed(), 0x7369_6d), 0);
    let mut st = SymbolStream::new(n.tau, GainSource::Diffusion { a: n.a });
    st.warm_up(&mut rng, n.lambda0)?;
    let mut t = Table::new(&["symbol", "bit", "t", "value"]);
    for k in 0..s.symbols {
        let bit = rng.random_bool(s.duty);
        let rate = n.lambda0 + if bit { sig } else { 0.0 };
        let arr = st.next_symbol(&mut rng, rate)?;
        let w = synth_waveform(&arr, &times, n.tau, anode.as_ref())?;
        for (tt, v) in w.sample_times.iter().zip(&w.values) {
            t.push(vec![
                k.into(),
                usize::from(bit).into(),
                (k as f64 + tt).into(),
                (*v).into(),
            ]);
        }
    }
    ctx.write(&t, "simulate")
}

/// Parses `power, mean, std` rows; `#` lines and a header are skipped.
pub fn read_measurements(path: &Path) -> Result<Vec<(f64, f64, f64)>, CliError> {
    let rows = read_numeric_csv(path, 3)?;
    if rows.is_empty() {
        return Err(CliError::config(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(rows.into_iter().map(|(_, r)| (r[0], r[1], r[2])).collect())
}

/// Reads an anode curve written by `fit`.
pub fn read_curve(path: &Path) -> Result<NonlinearFn, CliError> {
    let rows = read_numeric_csv(path, 2)?;
    let (x, c): (Vec<f64>, Vec<f64>) = rows.into_iter().map(|(_, r)| (r[0], r[1])).unzip();
    NonlinearFn::new(x, c, Tail::Hold)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Rows of `width` numbers with their 1-based line numbers.
fn read_numeric_csv(path: &Path, width: usize) -> Result<Vec<(usize, Vec<f64>)>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    let mut header_seen = false;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(v) if v.len() == width && v.iter().all(|x| x.is_finite()) => out.push((lineno, v)),
            Ok(v) if v.len() != width => {
                return Err(CliError::config(format!(
                    "{}:{lineno}: expected {width} columns, found {}",
                    path.display(),
                    v.len()
                )))
            }
            Err(_) if !header_seen && out.is_empty() => header_seen = true,
            _ => {
                return Err(CliError::config(format!(
                    "{}:{lineno}: malformed row `{line}`",
                    path.display()
                )))
            }
        }
    }
    Ok(out)
}
