//! Experiment configuration files.
//!
//! A config is a TOML file with a `schema_version`, an optional `include`
//! list of files merged underneath it, and one table per subcommand.
//! Physical quantities carry their unit in the key name and are converted
//! to symbol-normalized values here and nowhere else.

use std::path::{Path, PathBuf};

use photonwire::GainModel;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;
const MAX_INCLUDE_DEPTH: usize = 8;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub gain_pdf: GainPdfSection,
    #[serde(default)]
    pub duty_cycle: DutyCycleSection,
    #[serde(default)]
    pub regimes: RegimesSection,
    #[serde(default)]
    pub ber: BerSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub simulate: SimulateSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub symbol_rate_hz: f64,
    pub dead_time_ns: f64,
    pub background_rate_per_s: f64,
    pub mean_gain: f64,
    pub dynode_stages: u32,
    /// Overrides the gain shape ratio implied by the dynode chain.
    pub gain_ratio: Option<f64>,
}

impl Default for ChannelSection {
    fn default() -> Self {
        Self {
            symbol_rate_hz: 1e6,
            dead_time_ns: 20.0,
            background_rate_per_s: 1e5,
            mean_gain: 3e7,
            dynode_stages: 12,
            gain_ratio: None,
        }
    }
}

/// A rate sweep in photons per second.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    #[serde(default)]
    pub log: bool,
}

impl Sweep {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        if self.points == 0 || !(self.start >= 0.0) || !(self.stop >= self.start) {
            return Err(CliError::config(format!(
                "invalid sweep {} .. {} with {} points",
                self.start, self.stop, self.points
            )));
        }
        if self.log && self.start <= 0.0 {
            return Err(CliError::config(
                "a logarithmic sweep must start above zero",
            ));
        }
        if self.points == 1 {
            return Ok(vec![self.start]);
        }
        let n = (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|i| {
                let f = i as f64 / n;
                if self.log {
                    self.start * (self.stop / self.start).powf(f)
                } else {
                    self.start + (self.stop - self.start) * f
                }
            })
            .collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GainPdfSection {
    /// Mean photons within one dead time.
    pub photons_per_dead_time: Vec<f64>,
    pub z_max: f64,
    pub points: usize,
}

impl Default for GainPdfSection {
    fn default() -> Self {
        Self {
            photons_per_dead_time: vec![0.5, 1.0, 5.0, 20.0],
            z_max: 40.0,
            points: 401,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DutyCycleSection {
    pub signal_rate_per_s: Sweep,
    /// Background rates to sweep; the channel background when empty.
    pub background_rates_per_s: Vec<f64>,
    pub samples: Vec<usize>,
    pub duty_bound: f64,
}

impl Default for DutyCycleSection {
    fn default() -> Self {
        Self {
            signal_rate_per_s: Sweep {
                start: 1e6,
                stop: 1e9,
                points: 13,
                log: true,
            },
            background_rates_per_s: vec![1e5, 1e6, 1e7],
            samples: vec![1, 2],
            duty_bound: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegimesSection {
    pub l_max: f64,
    pub epsilon: f64,
    /// Waveform samples per symbol in the dumps.
    pub points_per_symbol: usize,
}

impl Default for RegimesSection {
    fn default() -> Self {
        Self {
            l_max: 2.4,
            epsilon: 0.015,
            points_per_symbol: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorName {
    MpdUndersample,
    MpdOversample,
    MpdInfinite,
    Pcd,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BerSection {
    pub signal_rate_per_s: Sweep,
    pub detectors: Vec<DetectorName>,
    /// Samples per symbol for under-sampled detectors.
    pub samples: Vec<usize>,
    /// Samples per dead time for over-sampled detection.
    pub per_dead_time: Vec<usize>,
    pub symbols: usize,
    /// Variance of additive Gaussian noise on each sample.
    pub noise_variance: f64,
    /// Anode curve as written by `fit`; linear when absent.
    pub anode_curve: Option<PathBuf>,
}

impl Default for BerSection {
    fn default() -> Self {
        Self {
            signal_rate_per_s: Sweep {
                start: 2.5e6,
                stop: 4e7,
                points: 5,
                log: true,
            },
            detectors: vec![DetectorName::MpdUndersample, DetectorName::Pcd],
            samples: vec![10, 25, 50],
            per_dead_time: vec![1, 2, 4],
            symbols: 50_000,
            noise_variance: 0.0,
            anode_curve: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerUnit {
    PhotonsPerS,
    PhotonsPerSymbol,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    /// CSV with columns power, mean, std.
    pub data: Option<PathBuf>,
    pub power_unit: PowerUnit,
    pub x_max: f64,
    pub x_step: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            data: None,
            power_unit: PowerUnit::PhotonsPerS,
            x_max: 10.0,
            x_step: 0.05,
            max_iterations: 100,
            tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub signal_rate_per_s: f64,
    pub symbols: usize,
    pub points_per_symbol: usize,
    /// Probability of sending a one.
    pub duty: f64,
    pub anode_curve: Option<PathBuf>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            signal_rate_per_s: 2e7,
            symbols: 8,
            points_per_symbol: 500,
            duty: 0.5,
            anode_curve: None,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            channel: ChannelSection::default(),
            gain_pdf: GainPdfSection::default(),
            duty_cycle: DutyCycleSection::default(),
            regimes: RegimesSection::default(),
            ber: BerSection::default(),
            fit: FitSection::default(),
            simulate: SimulateSection::default(),
        }
    }
}

/// Channel parameters with the symbol duration normalized to one.
#[derive(Debug, Clone, Copy)]
pub struct Normalized {
    pub tau: f64,
    /// Background photons per symbol.
    pub lambda0: f64,
    pub a: f64,
    pub symbol_rate_hz: f64,
}

impl Normalized {
    /// Photons per symbol for a rate in photons per second.
    pub fn per_symbol(&self, rate_per_s: f64) -> f64 {
        rate_per_s / self.symbol_rate_hz
    }
}

impl ExperimentConfig {
    pub fn normalized(&self) -> Result<Normalized, CliError> {
        let c = &self.channel;
        if !(c.symbol_rate_hz > 0.0) || !c.symbol_rate_hz.is_finite() {
            return Err(CliError::config("symbol_rate_hz must be positive"));
        }
        let tau = c.dead_time_ns * 1e-9 * c.symbol_rate_hz;
        if !(tau > 0.0 && tau < 1.0) {
            return Err(CliError::config(format!(
                "dead time of {} ns is not a fraction of the {} Hz symbol",
                c.dead_time_ns, c.symbol_rate_hz
            )));
        }
        if !(c.background_rate_per_s >= 0.0) {
            return Err(CliError::config(
                "background_rate_per_s must be nonnegative",
            ));
        }
        let a = match c.gain_ratio {
            Some(a) if a > 0.0 && a.is_finite() => a,
            Some(a) => {
                return Err(CliError::config(format!(
                    "gain_ratio must be positive, got {a}"
                )))
            }
            None => GainModel::new(c.mean_gain, c.dynode_stages)?.a(),
        };
        Ok(Normalized {
            tau,
            lambda0: c.background_rate_per_s / c.symbol_rate_hz,
            a,
            symbol_rate_hz: c.symbol_rate_hz,
        })
    }

    /// SHA-256 of the effective configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// A loaded config and the directory relative paths resolve against.
pub struct Loaded {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

impl Loaded {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }
}

pub fn load(path: Option<&Path>) -> Result<Loaded, CliError> {
    let Some(path) = path else {
        return Ok(Loaded {
            config: ExperimentConfig::default(),
            base_dir: PathBuf::from("."),
        });
    };
    let value = load_value(path, 0)?;
    let config: ExperimentConfig = value.try_into().map_err(|e: toml::de::Error| {
        CliError::config(format!("{}: {}", path.display(), e.message()))
    })?;
    if config.schema_version != SCHEMA_VERSION {
        return Err(CliError::config(format!(
            "{}: schema_version {} is not supported (expected {SCHEMA_VERSION})",
            path.display(),
            config.schema_version
        )));
    }
    Ok(Loaded {
        config,
        base_dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    })
}

/// Reads `path` and merges its includes underneath it.
fn load_value(path: &Path, depth: usize) -> Result<toml::Table, CliError> {
    if depth > MAX_INCLUDE_DEPTH {
        return Err(CliError::config(format!(
            "{}: includes nest deeper than {MAX_INCLUDE_DEPTH}",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::config(format!("{}: {e}", path.display())))?;
    let includes = match table.remove("include") {
        None => Vec::new(),
        Some(toml::Value::Array(items)) => items
            .into_iter()
            .map(|v| match v {
                toml::Value::String(s) => Ok(s),
                other => Err(CliError::config(format!(
                    "{}: include entries must be strings, got {other}",
                    path.display()
                ))),
            })
            .collect::<Result<_, _>>()?,
        Some(other) => {
            return Err(CliError::config(format!(
                "{}: include must be a list of paths, got {other}",
                path.display()
            )))
        }
    };
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut merged = toml::Table::new();
    for inc in includes {
        let sub = load_value(&dir.join(inc), depth + 1)?;
        merge(&mut merged, sub);
    }
    merge(&mut merged, table);
    Ok(merged)
}

/// Recursively overlays `top` onto `base`.
fn merge(base: &mut toml::Table, top: toml::Table) {
    for (k, v) in top {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(t)) => merge(b, t),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_normalize_to_desk_values() {
        let n = ExperimentConfig::default().normalized().unwrap();
        assert!((n.tau - 0.02).abs() < 1e-15);
        assert!((n.lambda0 - 0.1).abs() < 1e-15);
        assert!(n.a > 6.0 && n.a < 7.0);
    }

    #[test]
    fn sweeps() {
        let s = Sweep {
            start: 1.0,
            stop: 100.0,
            points: 3,
            log: true,
        };
        let v = s.values().unwrap();
        assert!((v[1] - 10.0).abs() < 1e-12);
        assert!(Sweep {
            start: 2.0,
            stop: 1.0,
            points: 3,
            log: false
        }
        .values()
        .is_err());
    }

    #[test]
    fn merge_overlays_nested_tables() {
        let mut base: toml::Table = "[channel]\ndead_time_ns = 10.0\nsymbol_rate_hz = 2e6"
            .parse()
            .unwrap();
        let top: toml::Table = "[channel]\ndead_time_ns = 20.0".parse().unwrap();
        merge(&mut base, top);
        let ch = base["channel"].as_table().unwrap();
        assert_eq!(ch["dead_time_ns"].as_float(), Some(20.0));
        assert_eq!(ch["symbol_rate_hz"].as_float(), Some(2e6));
    }
}
