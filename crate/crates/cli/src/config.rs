//! JSON run configuration. Every section is optional and defaults to the toy
//! benchmark; unknown keys are rejected.

use std::path::PathBuf;

use derain::filter::FilterParams;
use derain::net::{toy, Architecture, ModelInit, PipelineConfig, TrainConfig};
use derain::rain::{PairingRule, StreakParams};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub filter: FilterSection,
    pub streaks: StreakSection,
    pub synth: SynthSection,
    pub model: ModelSection,
    pub pipeline: PipelineSection,
    pub train: TrainSection,
    pub data: DataSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterSection {
    pub zeta: usize,
    pub lambda: f64,
    pub epsilon: f64,
    pub eta: f64,
}

impl Default for FilterSection {
    fn default() -> Self {
        let p = FilterParams::default();
        FilterSection { zeta: p.zeta, lambda: p.lambda, epsilon: p.epsilon, eta: p.eta }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StreakSection {
    pub count: usize,
    pub angle_deg: f64,
    pub angle_jitter_deg: f64,
    pub length_px: f64,
    pub length_jitter_px: f64,
    pub width_px: f64,
    pub intensity: f64,
    pub seed: u64,
}

impl Default for StreakSection {
    fn default() -> Self {
        let p = StreakParams::default();
        StreakSection {
            count: p.count,
            angle_deg: p.angle_deg,
            angle_jitter_deg: p.angle_jitter_deg,
            length_px: p.length_px,
            length_jitter_px: p.length_jitter_px,
            width_px: p.width_px,
            intensity: p.intensity,
            seed: p.seed,
        }
    }
}

/// Synthetic dataset shape. The test split uses `seed + 1`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub pairs: usize,
    pub test_pairs: usize,
    pub width: usize,
    pub height: usize,
    pub seed: u64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            pairs: toy::TRAIN_PAIRS,
            test_pairs: toy::TEST_PAIRS,
            width: toy::IMAGE_SIZE,
            height: toy::IMAGE_SIZE,
            seed: toy::TRAIN_SEED,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub feature_channels: usize,
    pub reduction: usize,
    pub tie_feature_nets: bool,
    /// `uniform` or `residual_identity`.
    pub init: String,
}

impl Default for ModelSection {
    fn default() -> Self {
        let a = toy::config().arch;
        ModelSection {
            feature_channels: a.feature_channels,
            reduction: a.reduction,
            tie_feature_nets: a.tie_feature_nets,
            init: toy::config().init.name().to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    pub use_iwgif: bool,
    pub use_feature_net: bool,
    pub use_derb: bool,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection { use_iwgif: true, use_feature_net: true, use_derb: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub batch: usize,
    pub crop: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub total_steps: u64,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = toy::config().train;
        TrainSection {
            batch: t.batch,
            crop: t.crop,
            lr_max: t.lr_max,
            lr_min: t.lr_min,
            total_steps: t.total_steps,
            seed: t.seed,
        }
    }
}

/// Paired directories on disk. Missing splits are synthesized instead.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub train_rainy: Option<PathBuf>,
    pub train_clean: Option<PathBuf>,
    pub test_rainy: Option<PathBuf>,
    pub test_clean: Option<PathBuf>,
    /// `same_stem`, or `strip_suffix:<char>` for names like `x_1.png`.
    pub pairing: Option<String>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn filter_params(&self) -> FilterParams {
        let f = &self.filter;
        FilterParams { zeta: f.zeta, lambda: f.lambda, epsilon: f.epsilon, eta: f.eta }
    }

    pub fn streak_params(&self) -> StreakParams {
        let s = &self.streaks;
        StreakParams {
            count: s.count,
            angle_deg: s.angle_deg,
            angle_jitter_deg: s.angle_jitter_deg,
            length_px: s.length_px,
            length_jitter_px: s.length_jitter_px,
            width_px: s.width_px,
            intensity: s.intensity,
            seed: s.seed,
        }
    }

    pub fn pipeline(&self) -> derain::Result<PipelineConfig> {
        let (m, p, t) = (&self.model, &self.pipeline, &self.train);
        Ok(PipelineConfig {
            arch: Architecture {
                feature_channels: m.feature_channels,
                reduction: m.reduction,
                tie_feature_nets: m.tie_feature_nets,
            },
            init: ModelInit::parse(&m.init)?,
            use_iwgif: p.use_iwgif,
            use_feature_net: p.use_feature_net,
            use_derb: p.use_derb,
            filter_params: self.filter_params(),
            train: TrainConfig {
                batch: t.batch,
                crop: t.crop,
                lr_max: t.lr_max,
                lr_min: t.lr_min,
                total_steps: t.total_steps,
                seed: t.seed,
            },
        })
    }

    pub fn pairing(&self) -> Result<PairingRule, String> {
        match self.data.pairing.as_deref() {
            None | Some("same_stem") => Ok(PairingRule::SameStem),
            Some(rule) => {
                let sep = rule.strip_prefix("strip_suffix:").ok_or_else(|| format!("unknown pairing rule '{rule}'"))?;
                let mut chars = sep.chars();
                match (chars.next(), chars.next()) {
                    (Some(c), None) => Ok(PairingRule::StripSuffix(c)),
                    _ => Err(format!("pairing separator must be one character, got '{sep}'")),
                }
            }
        }
    }

    /// Range checks for everything the config feeds into.
    pub fn validate(&self) -> Result<(), String> {
        self.pipeline().and_then(|p| p.validate()).map_err(|e| e.to_string())?;
        self.streak_params().validate().map_err(|e| e.to_string())?;
        let s = &self.synth;
        if s.pairs == 0 || s.test_pairs == 0 {
            return Err("synth.pairs and synth.test_pairs must be at least 1".into());
        }
        if s.width == 0 || s.height == 0 {
            return Err("synth.width and synth.height must be at least 1".into());
        }
        let d = &self.data;
        if (d.train_rainy.is_none() || d.test_rainy.is_none()) && self.train.crop > s.width.min(s.height) {
            return Err(format!("train.crop {} exceeds the synthetic image size {}x{}", self.train.crop, s.width, s.height));
        }
        if d.train_rainy.is_some() != d.train_clean.is_some() {
            return Err("data.train_rainy and data.train_clean must be given together".into());
        }
        if d.test_rainy.is_some() != d.test_clean.is_some() {
            return Err("data.test_rainy and data.test_clean must be given together".into());
        }
        self.pairing()?;
        Ok(())
    }
}
