use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sdrsma::channel::ChannelConfig;
use sdrsma::rates::ReceiverCsi;
use sdrsma::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Best nonempty common-message group.
    SdRsmaExclusion,
    /// Every user decodes the common message.
    SdRsmaFull,
    /// Block diagonalization without a common message.
    BdBaseline,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::SdRsmaExclusion, Scheme::SdRsmaFull, Scheme::BdBaseline];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::SdRsmaExclusion => "sd-rsma-exclusion",
            Scheme::SdRsmaFull => "sd-rsma-full",
            Scheme::BdBaseline => "bd-baseline",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CsiMode {
    Perfect,
    Imperfect,
}

impl CsiMode {
    pub fn name(self) -> &'static str {
        match self {
            CsiMode::Perfect => "perfect",
            CsiMode::Imperfect => "imperfect",
        }
    }
}

impl fmt::Display for CsiMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CsiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perfect" => Ok(CsiMode::Perfect),
            "imperfect" => Ok(CsiMode::Imperfect),
            _ => Err(Error::Config(format!("unknown CSI mode {s:?}"))),
        }
    }
}

/// Link geometry; the per-trial seed is derived from the master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    pub user_antennas: Vec<usize>,
    pub bs_antennas: usize,
    pub distances_m: Vec<f64>,
    #[serde(default)]
    pub alpha: f64,
    /// CSI error variance used by the imperfect mode.
    #[serde(default)]
    pub csi_error_var: f64,
    pub noise_dbm: f64,
}

impl ChannelSpec {
    pub fn with_seed(&self, seed: u64) -> ChannelConfig {
        ChannelConfig {
            user_antennas: self.user_antennas.clone(),
            bs_antennas: self.bs_antennas,
            distances_m: self.distances_m.clone(),
            alpha: self.alpha,
            csi_error_var: self.csi_error_var,
            noise_dbm: self.noise_dbm,
            seed,
        }
    }
}

fn default_schemes() -> Vec<Scheme> {
    Scheme::ALL.to_vec()
}

fn default_csi() -> Vec<CsiMode> {
    vec![CsiMode::Perfect]
}

fn default_tolerance() -> f64 {
    1e-6
}

fn default_max_iter() -> usize {
    500
}

fn default_min_trials() -> usize {
    10
}

fn default_max_trials() -> usize {
    2000
}

fn default_ci() -> f64 {
    1.0
}

fn default_confidence() -> f64 {
    0.99
}

fn default_threads() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub pt_dbm: Vec<f64>,
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_csi")]
    pub csi_modes: Vec<CsiMode>,
    /// Defaults to equal weights.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_min_trials")]
    pub min_trials: usize,
    #[serde(default = "default_max_trials")]
    pub max_trials: usize,
    /// Target confidence-interval half-width in bits per channel use.
    #[serde(default = "default_ci")]
    pub ci_halfwidth: f64,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub receiver: ReceiverCsi,
    #[serde(default = "default_threads")]
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub csv: PathBuf,
    pub plot: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            csv: "sum_rates.csv".into(),
            plot: "sum_rates.json".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub channel: ChannelSpec,
    pub sweep: SweepSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn weights(&self) -> Vec<f64> {
        let k = self.channel.user_antennas.len();
        self.sweep.weights.clone().unwrap_or_else(|| vec![1.0 / k as f64; k])
    }

    pub fn validate(&self) -> Result<()> {
        self.channel.with_seed(0).validate()?;
        let s = &self.sweep;
        if s.pt_dbm.is_empty() || s.pt_dbm.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("at least one finite transmit power is required".into()));
        }
        if s.schemes.is_empty() || s.csi_modes.is_empty() {
            return Err(Error::Config("schemes and CSI modes must be nonempty".into()));
        }
        if s.min_trials < 2 || s.max_trials < s.min_trials {
            return Err(Error::Config(format!(
                "need 2 <= min_trials ({}) <= max_trials ({})",
                s.min_trials, s.max_trials
            )));
        }
        if !(s.ci_halfwidth > 0.0) || !(s.confidence > 0.0 && s.confidence < 1.0) {
            return Err(Error::Config("CI half-width must be positive and confidence in (0, 1)".into()));
        }
        if !(s.tolerance > 0.0) || s.max_iter == 0 {
            return Err(Error::Config("SCA tolerance and iteration cap must be positive".into()));
        }
        if s.threads == 0 {
            return Err(Error::Config("thread count must be positive".into()));
        }
        sdrsma::rates::validate_weights(&self.weights(), self.channel.user_antennas.len())
    }
}
