use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the ADC samples a symbol of unit duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum Sampling {
    /// `L` samples per symbol, spaced at least one dead time apart.
    Under { samples: usize },
    /// `ks` samples per dead time; requires `1 / tau` to be an integer.
    Over { per_dead_time: usize },
    /// The whole symbol is integrated (the infinite-rate limit).
    Continuous,
}

/// Channel and receiver parameters with the symbol duration normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    /// Background photon rate per symbol.
    pub lambda0: f64,
    /// Additional signal photon rate per symbol while sending a one.
    pub lambda_a: f64,
    /// Average-power duty bound.
    pub eta: f64,
    /// Dead time as a fraction of the symbol.
    pub tau: f64,
    pub sampling: Sampling,
}

const INTEGER_SLACK: f64 = 1e-9;

impl ChannelConfig {
    pub fn new(
        lambda0: f64,
        lambda_a: f64,
        eta: f64,
        tau: f64,
        sampling: Sampling,
    ) -> Result<Self> {
        let c = Self {
            lambda0,
            lambda_a,
            eta,
            tau,
            sampling,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lambda0 >= 0.0) || !self.lambda0.is_finite() {
            return bad(format!(
                "background rate must be >= 0, got {}",
                self.lambda0
            ));
        }
        if !(self.lambda_a >= 0.0) || !self.lambda_a.is_finite() {
            return bad(format!("signal rate must be >= 0, got {}", self.lambda_a));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad(format!("duty bound must lie in (0, 1], got {}", self.eta));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("dead time must lie in (0, 1), got {}", self.tau));
        }
        match self.sampling {
            Sampling::Under { samples } => {
                if samples == 0 {
                    return bad("at least one sample per symbol is required".into());
                }
                if 1.0 / samples as f64 + INTEGER_SLACK < self.tau {
                    return bad(format!(
                        "{samples} samples per symbol are closer than the dead time {}",
                        self.tau
                    ));
                }
            }
            Sampling::Over { per_dead_time } => {
                if per_dead_time == 0 {
                    return bad("at least one sample per dead time is required".into());
                }
                self.kd()?;
            }
            Sampling::Continuous => {}
        }
        Ok(())
    }

    /// `1 / tau` as an integer, when it is one.
    pub fn kd(&self) -> Result<usize> {
        let inv = 1.0 / self.tau;
        let r = inv.round();
        if (inv - r).abs() > INTEGER_SLACK * inv || r < 1.0 {
            return Err(Error::Config(format!("1/tau = {inv} is not an integer")));
        }
        Ok(r as usize)
    }

    /// Photon rate per symbol for the given bit.
    pub fn rate(&self, bit: bool) -> f64 {
        if bit {
            self.lambda0 + self.lambda_a
        } else {
            self.lambda0
        }
    }

    /// Mean background photons per dead time.
    pub fn lambda0_norm(&self) -> f64 {
        self.lambda0 * self.tau
    }

    /// Mean photons per dead time while sending a one.
    pub fn lambda1_norm(&self) -> f64 {
        (self.lambda0 + self.lambda_a) * self.tau
    }

    /// Sampling interval; zero in the continuous limit.
    pub fn ts(&self) -> f64 {
        match self.sampling {
            Sampling::Under { samples } => 1.0 / samples as f64,
            Sampling::Over { per_dead_time } => self.tau / per_dead_time as f64,
            Sampling::Continuous => 0.0,
        }
    }

    /// Samples per symbol; zero in the continuous limit.
    pub fn samples_per_symbol(&self) -> usize {
        match self.sampling {
            Sampling::Under { samples } => samples,
            Sampling::Over { per_dead_time } => per_dead_time * self.kd().unwrap_or(0),
            Sampling::Continuous => 0,
        }
    }

    /// Sample instants `i Ts`, `i = 1..=N`, within the unit symbol.
    pub fn sample_times(&self) -> Vec<f64> {
        let n = self.samples_per_symbol();
        (1..=n).map(|i| i as f64 / n as f64).collect()
    }

    pub fn with_sampling(&self, sampling: Sampling) -> Result<Self> {
        Self::new(self.lambda0, self.lambda_a, self.eta, self.tau, sampling)
    }

    pub fn with_signal(&self, lambda_a: f64) -> Result<Self> {
        Self::new(self.lambda0, lambda_a, self.eta, self.tau, self.sampling)
    }
}
