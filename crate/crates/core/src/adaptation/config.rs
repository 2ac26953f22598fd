use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::losses::GsureConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Dip,
    Ssdu,
    Gsure,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Dip, Strategy::Ssdu, Strategy::Gsure];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Dip => "dip",
            Strategy::Ssdu => "ssdu",
            Strategy::Gsure => "gsure",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dip" | "dip-ma" => Ok(Strategy::Dip),
            "ssdu" | "ssdu-ma" => Ok(Strategy::Ssdu),
            "gsure" | "gsure-ma" => Ok(Strategy::Gsure),
            other => Err(Error::Contract(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptationConfig {
    pub strategy: Strategy,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub gsure: GsureConfig,
    pub ssdu_dc_fraction: f64,
    pub track_oracle_psnr: bool,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Gsure,
            epochs: 400,
            lr: 1e-5,
            seed: 0,
            gsure: GsureConfig::default(),
            ssdu_dc_fraction: 0.6,
            track_oracle_psnr: true,
        }
    }
}

impl AdaptationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Contract("adaptation needs at least one epoch".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Contract(format!("learning rate {} must be positive", self.lr)));
        }
        if self.strategy == Strategy::Ssdu && !(self.ssdu_dc_fraction > 0.0 && self.ssdu_dc_fraction < 1.0) {
            return Err(Error::Contract("ssdu_dc_fraction must lie in (0, 1)".into()));
        }
        if self.strategy == Strategy::Gsure && (self.gsure.mc_probes == 0 || self.gsure.epsilon_scale <= 0.0) {
            return Err(Error::Contract(
                "gsure needs mc_probes >= 1 and epsilon_scale > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Images per Adam step; per-image gradients in a batch are computed in
    /// parallel and summed.
    pub batch_size: usize,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 1e-3,
            seed: 0,
            batch_size: 1,
        }
    }
}

/// Mixes `tags` into `base` (SplitMix64 finalizer per step).
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut z = base;
    for &t in tags {
        z = z.wrapping_add(t.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}
