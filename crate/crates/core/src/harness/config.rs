use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::Scenario;
use crate::decision::DecisionMode;
use crate::em::NoiseUpdate;
use crate::error::{Error, Result};
use crate::stitch::StitchMode;

/// Source of the detector priors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorKind {
    /// EM-learned from the received signal.
    #[default]
    Learned,
    /// True noise variance, activity `K_a/2^J` and true gains on active rows; inactive rows
    /// carry gains resampled from the active population.
    Genie,
}

/// Initial prior variance of the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitVariance {
    #[default]
    Measured,
    Unit,
}

/// How many codewords each slot declares active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActiveCount {
    /// Threshold decisions; the first slot's count estimates `K_a`.
    #[default]
    Estimated,
    /// The `K_a` strongest rows.
    Genie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StitcherKind {
    #[default]
    Bayes,
    Kmeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub priors: PriorKind,
    pub initial_variance: InitVariance,
    pub tie_activity: bool,
    pub noise_update: NoiseUpdate,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            tolerance: 1e-5,
            priors: PriorKind::Learned,
            initial_variance: InitVariance::Measured,
            tie_activity: false,
            noise_update: NoiseUpdate::Exact,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub decision: DecisionMode,
    pub active_count: ActiveCount,
    pub stitcher: StitcherKind,
    pub stitch_mode: StitchMode,
    pub max_rounds: usize,
    pub stitch_tolerance: f64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            decision: DecisionMode::RNorm,
            active_count: ActiveCount::Estimated,
            stitcher: StitcherKind::Bayes,
            stitch_mode: StitchMode::Argmax,
            max_rounds: 30,
            stitch_tolerance: 1e-15,
        }
    }
}

/// Scenario, algorithm options and trial plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub detection: DetectionConfig,
    pub decode: DecodeConfig,
    /// Keep messages whose sub-blocks collide; collided codewords are then left out of the metrics.
    pub allow_collisions: bool,
    pub trials: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::default(),
            detection: DetectionConfig::default(),
            decode: DecodeConfig::default(),
            allow_collisions: false,
            trials: 100,
        }
    }
}

/// Flat `key = value` file: scenario keys plus algorithm keys.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(rename = "K_tot")]
    total_users: Option<usize>,
    #[serde(rename = "K_a")]
    active_users: Option<usize>,
    #[serde(rename = "M")]
    antennas: Option<usize>,
    #[serde(rename = "L")]
    blocks: Option<usize>,
    #[serde(rename = "J")]
    bits_per_block: Option<u32>,
    b: Option<usize>,
    n0: Option<usize>,
    #[serde(rename = "N0_dbm")]
    noise_dbm: Option<f64>,
    min_snr_db: Option<f64>,
    #[serde(rename = "P_t_dbm")]
    tx_power_dbm: Option<f64>,
    seed: Option<u64>,
    #[serde(rename = "T_D")]
    max_iterations: Option<usize>,
    #[serde(rename = "tol_D")]
    tol_d: Option<f64>,
    #[serde(rename = "T_S")]
    max_rounds: Option<usize>,
    #[serde(rename = "tol_S")]
    tol_s: Option<f64>,
    decision_mode: Option<DecisionMode>,
    stitch_mode: Option<StitchMode>,
    stitcher: Option<StitcherKind>,
    active_count: Option<ActiveCount>,
    priors: Option<PriorKind>,
    initial_variance: Option<InitVariance>,
    tie_activity: Option<bool>,
    noise_update: Option<NoiseUpdate>,
    allow_collisions: Option<bool>,
    trials: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let f: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut c = Self::default();
        let s = &mut c.scenario;
        macro_rules! set {
            ($dst:expr, $src:expr) => {
                if let Some(v) = $src {
                    $dst = v;
                }
            };
        }
        set!(s.total_users, f.total_users);
        set!(s.active_users, f.active_users);
        set!(s.antennas, f.antennas);
        set!(s.blocks, f.blocks);
        set!(s.bits_per_block, f.bits_per_block);
        set!(s.n0, f.n0);
        set!(s.noise_dbm, f.noise_dbm);
        set!(s.min_snr_db, f.min_snr_db);
        set!(s.seed, f.seed);
        s.tx_power_dbm = f.tx_power_dbm;
        set!(c.detection.max_iterations, f.max_iterations);
        set!(c.detection.tolerance, f.tol_d);
        set!(c.detection.priors, f.priors);
        set!(c.detection.initial_variance, f.initial_variance);
        set!(c.detection.tie_activity, f.tie_activity);
        set!(c.detection.noise_update, f.noise_update);
        set!(c.decode.max_rounds, f.max_rounds);
        set!(c.decode.stitch_tolerance, f.tol_s);
        set!(c.decode.decision, f.decision_mode);
        set!(c.decode.stitch_mode, f.stitch_mode);
        set!(c.decode.stitcher, f.stitcher);
        set!(c.decode.active_count, f.active_count);
        set!(c.allow_collisions, f.allow_collisions);
        set!(c.trials, f.trials);
        if let Some(b) = f.b {
            if b != c.scenario.message_bits() {
                return Err(Error::Config(format!("b = {b} but L*J = {}", c.scenario.message_bits())));
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.detection.max_iterations == 0 {
            return Err(Error::Config("T_D must be positive".into()));
        }
        Ok(())
    }
}
