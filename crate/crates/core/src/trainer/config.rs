use serde::{Deserialize, Serialize};

use crate::encoding::{Bounds2, HashGridConfig};
use crate::error::{Error, Result};
use crate::gradnet::{AdamConfig, LrSchedule};
use crate::model::NetworkConfig;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub w_int: f64,
    pub w_reg: f64,
    pub w_alt: f64,
    pub altimeter_enabled: bool,
    /// Half-height (m) of the ground band around the altimeter depths used
    /// to mask range bins that cannot contain a seabed return.
    pub mask_margin: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { w_int: 1.0, w_reg: 0.1, w_alt: 1.0, altimeter_enabled: true, mask_margin: 1.0 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [("w_int", self.w_int), ("w_reg", self.w_reg), ("w_alt", self.w_alt)] {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Config(format!("loss weight {name} must be finite and non-negative")));
            }
        }
        if !(self.mask_margin >= 0.0) {
            return Err(Error::Config("mask_margin must be non-negative".into()));
        }
        Ok(())
    }
}

/// Coarse-to-fine unlocking of hash levels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProgressiveSchedule {
    pub start_levels: usize,
    pub unlock_interval: usize,
}

impl Default for ProgressiveSchedule {
    fn default() -> Self {
        ProgressiveSchedule { start_levels: 4, unlock_interval: 1500 }
    }
}

/// Number of active (coarsest) hash levels at `step`.
pub fn progressive_mask(step: usize, schedule: &ProgressiveSchedule, levels: usize) -> usize {
    let unlocked = if schedule.unlock_interval == 0 { levels } else { step / schedule.unlock_interval };
    schedule.start_levels.max(1).saturating_add(unlocked).min(levels)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub total_steps: usize,
    /// Frame/beam pairs per step; each contributes its full range column.
    pub batch_frames: usize,
    pub seed: u64,
    pub progressive: ProgressiveSchedule,
    pub lr: LrSchedule,
    pub adam: AdamConfig,
    pub log_every: usize,
    /// 0 writes only the final checkpoint.
    pub checkpoint_every: usize,
    /// Initial height when the dataset has no altimeter readings.
    pub init_height: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_steps: 60_000,
            batch_frames: 64,
            seed: 0,
            progressive: ProgressiveSchedule::default(),
            lr: LrSchedule::default(),
            adam: AdamConfig::default(),
            log_every: 1,
            checkpoint_every: 5000,
            init_height: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_frames == 0 {
            return Err(Error::Config("batch_frames must be positive".into()));
        }
        if !(self.lr.base_lr > 0.0) || !(self.lr.decay > 0.0) {
            return Err(Error::Config("learning rate and decay must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingSection {
    pub n_arc_stratified: usize,
    pub n_arc_importance: usize,
    pub n_ray: usize,
    pub r_min_render: f64,
}

impl Default for SamplingSection {
    fn default() -> Self {
        SamplingSection { n_arc_stratified: 15, n_arc_importance: 15, n_ray: 60, r_min_render: 0.5 }
    }
}

/// Hash grid sizes; the domain comes from the survey.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncodingSection {
    pub levels: usize,
    pub log2_table_size: u32,
    pub features_per_entry: usize,
    pub n_min: usize,
    pub n_max: usize,
    /// Margin (m) added around the sonar positions; defaults to r_max.
    pub padding: Option<f64>,
    /// Explicit domain, overriding the survey-derived one.
    pub bounds: Option<Bounds2>,
}

impl Default for EncodingSection {
    fn default() -> Self {
        let g = HashGridConfig::default();
        EncodingSection {
            levels: g.levels,
            log2_table_size: g.log2_table_size,
            features_per_entry: g.features_per_entry,
            n_min: g.n_min,
            n_max: g.n_max,
            padding: None,
            bounds: None,
        }
    }
}

impl EncodingSection {
    pub fn grid(&self, bounds: Bounds2) -> HashGridConfig {
        HashGridConfig {
            levels: self.levels,
            log2_table_size: self.log2_table_size,
            features_per_entry: self.features_per_entry,
            n_min: self.n_min,
            n_max: self.n_max,
            bounds,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeamSection {
    pub k_theta: usize,
    pub k_phi: usize,
    pub trainable: bool,
    pub softplus: bool,
}

impl Default for BeamSection {
    fn default() -> Self {
        BeamSection { k_theta: 30, k_phi: 10, trainable: false, softplus: false }
    }
}

/// Everything `train` needs besides the dataset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub sampling: SamplingSection,
    pub encoding: EncodingSection,
    pub network: NetworkConfig,
    pub beam: BeamSection,
    pub losses: LossConfig,
    pub train: TrainConfig,
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        self.losses.validate()?;
        self.train.validate()?;
        let s = &self.sampling;
        if s.n_arc_stratified == 0 || s.n_ray < 2 {
            return Err(Error::Config("sampling: need n_arc_stratified >= 1 and n_ray >= 2".into()));
        }
        Ok(())
    }
}
