//! Run configuration: estimators, channel scenarios, sweep settings, and the
//! plain-text `key=value` config format.

use crate::channel::PowerDelayProfile;
use std::collections::BTreeMap;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown estimator {0:?}")]
    UnknownEstimator(String),
    #[error("unknown channel profile {0:?}")]
    UnknownProfile(String),
    #[error("unknown mobility preset {0:?}")]
    UnknownPreset(String),
    #[error("bad config line {0:?} (expected key=value)")]
    BadLine(String),
    #[error("invalid value for {key}: {value:?}")]
    BadValue { key: String, value: String },
}

/// Estimators the harness can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    Genie,
    Dpa,
    SrnnDpaTa,
    GruDpaTa,
    LstmDpaTa,
    Wi,
    AlsBiSrnn,
    AlsBiGru,
    AlsBiLstm,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 9] = [
        EstimatorKind::Genie,
        EstimatorKind::Dpa,
        EstimatorKind::SrnnDpaTa,
        EstimatorKind::GruDpaTa,
        EstimatorKind::LstmDpaTa,
        EstimatorKind::Wi,
        EstimatorKind::AlsBiSrnn,
        EstimatorKind::AlsBiGru,
        EstimatorKind::AlsBiLstm,
    ];

    /// Symbol-by-symbol estimators run on the comb-pilot layout.
    pub fn is_sbs(self) -> bool {
        !self.is_fbf()
    }

    /// Frame-by-frame estimators run on the block-pilot layout.
    pub fn is_fbf(self) -> bool {
        matches!(
            self,
            EstimatorKind::Wi
                | EstimatorKind::AlsBiSrnn
                | EstimatorKind::AlsBiGru
                | EstimatorKind::AlsBiLstm
        )
    }

    pub fn needs_model(self) -> bool {
        matches!(
            self,
            EstimatorKind::SrnnDpaTa
                | EstimatorKind::GruDpaTa
                | EstimatorKind::LstmDpaTa
                | EstimatorKind::AlsBiSrnn
                | EstimatorKind::AlsBiGru
                | EstimatorKind::AlsBiLstm
        )
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            EstimatorKind::Genie => "genie",
            EstimatorKind::Dpa => "dpa",
            EstimatorKind::SrnnDpaTa => "srnn-dpa-ta",
            EstimatorKind::GruDpaTa => "gru-dpa-ta",
            EstimatorKind::LstmDpaTa => "lstm-dpa-ta",
            EstimatorKind::Wi => "wi",
            EstimatorKind::AlsBiSrnn => "als-bisrnn",
            EstimatorKind::AlsBiGru => "als-bigru",
            EstimatorKind::AlsBiLstm => "als-bilstm",
        };
        write!(f, "{s}")
    }
}

impl FromStr for EstimatorKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "genie" => Ok(EstimatorKind::Genie),
            "dpa" => Ok(EstimatorKind::Dpa),
            "srnn-dpa-ta" => Ok(EstimatorKind::SrnnDpaTa),
            "gru-dpa-ta" => Ok(EstimatorKind::GruDpaTa),
            "lstm-dpa-ta" => Ok(EstimatorKind::LstmDpaTa),
            "wi" | "als-wi" => Ok(EstimatorKind::Wi),
            "als-bisrnn" => Ok(EstimatorKind::AlsBiSrnn),
            "als-bigru" => Ok(EstimatorKind::AlsBiGru),
            "als-bilstm" => Ok(EstimatorKind::AlsBiLstm),
            other => Err(ConfigError::UnknownEstimator(other.into())),
        }
    }
}

/// Channel selection for a run.
#[derive(Debug, Clone)]
pub enum ChannelProfile {
    VtvUc,
    VtvSdww,
    /// Deterministic flat unit channel (no fading): the AWGN reference.
    Awgn,
    Custom(PowerDelayProfile),
}

impl ChannelProfile {
    pub fn name(&self) -> String {
        match self {
            ChannelProfile::VtvUc => "vtv-uc".into(),
            ChannelProfile::VtvSdww => "vtv-sdww".into(),
            ChannelProfile::Awgn => "awgn".into(),
            ChannelProfile::Custom(p) => p.name.clone(),
        }
    }

    pub fn pdp(&self) -> Option<PowerDelayProfile> {
        match self {
            ChannelProfile::VtvUc => Some(PowerDelayProfile::vtv_uc()),
            ChannelProfile::VtvSdww => Some(PowerDelayProfile::vtv_sdww()),
            ChannelProfile::Awgn => None,
            ChannelProfile::Custom(p) => Some(p.clone()),
        }
    }
}

impl FromStr for ChannelProfile {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "vtv-uc" => Ok(ChannelProfile::VtvUc),
            "vtv-sdww" => Ok(ChannelProfile::VtvSdww),
            "awgn" => Ok(ChannelProfile::Awgn),
            other => Err(ConfigError::UnknownProfile(other.into())),
        }
    }
}

/// Channel scenario: profile, Doppler, timing, and the block-pilot count.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub profile: ChannelProfile,
    /// Maximum Doppler shift in Hz.
    pub fd: f64,
    /// OFDM symbol duration in seconds.
    pub symbol_duration: f64,
    /// Tap-grid sample period in ns (10 MHz bandwidth).
    pub sample_period_ns: f64,
    pub n_sinusoids: usize,
    /// Inserted full-pilot symbols in block mode.
    pub q: usize,
}

impl ScenarioConfig {
    /// Low mobility: 45 kmph, 250 Hz, VTV-UC, Q = 1.
    pub fn low_mobility() -> Self {
        ScenarioConfig {
            profile: ChannelProfile::VtvUc,
            fd: 250.0,
            symbol_duration: 8e-6,
            sample_period_ns: 100.0,
            n_sinusoids: crate::channel::DEFAULT_SINUSOIDS,
            q: 1,
        }
    }

    /// High mobility: 100 kmph, 500 Hz, VTV-SDWW, Q = 2.
    pub fn high_mobility() -> Self {
        ScenarioConfig {
            profile: ChannelProfile::VtvSdww,
            fd: 500.0,
            q: 2,
            ..ScenarioConfig::low_mobility()
        }
    }

    /// Very high mobility: 200 kmph, 1000 Hz, VTV-SDWW, Q = 3.
    pub fn very_high_mobility() -> Self {
        ScenarioConfig {
            profile: ChannelProfile::VtvSdww,
            fd: 1000.0,
            q: 3,
            ..ScenarioConfig::low_mobility()
        }
    }

    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        match name.to_ascii_lowercase().as_str() {
            "low" => Ok(ScenarioConfig::low_mobility()),
            "high" => Ok(ScenarioConfig::high_mobility()),
            "very-high" | "veryhigh" => Ok(ScenarioConfig::very_high_mobility()),
            other => Err(ConfigError::UnknownPreset(other.into())),
        }
    }
}

/// Monte Carlo sweep settings.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub snr_db: Vec<f64>,
    pub n_frames: usize,
    pub scenario: ScenarioConfig,
    /// Modulation order M.
    pub modulation: usize,
    /// Data symbols per frame I.
    pub n_data_symbols: usize,
    pub estimators: Vec<EstimatorKind>,
    pub seed: u64,
    /// Time-averaging weight of the SBS estimators.
    pub alpha: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            snr_db: (0..=8).map(|i| (i * 5) as f64).collect(),
            n_frames: 200,
            scenario: ScenarioConfig::very_high_mobility(),
            modulation: 4,
            n_data_symbols: 100,
            estimators: vec![EstimatorKind::Genie, EstimatorKind::Dpa],
            seed: 1,
            alpha: 2.0,
        }
    }
}

/// Parse the plain-text `key=value` config format. `#` starts a comment;
/// blank lines are skipped; later keys override earlier ones.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::BadLine(line.into()))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}
