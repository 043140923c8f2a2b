//! The small seeded benchmark used for quick training runs and ablations.

use crate::error::Result;
use crate::metrics::MetricReport;
use crate::rain::{synth_pairs, PairedSample, StreakParams};

use super::{evaluate, train, AblationCase, PipelineConfig, TrainConfig, TrainOutcome, ABLATION_CASES};

pub const TRAIN_PAIRS: usize = 20;
pub const TEST_PAIRS: usize = 10;
pub const IMAGE_SIZE: usize = 64;
pub const TRAIN_SEED: u64 = 1;
pub const TEST_SEED: u64 = 2;
pub const FEATURE_CHANNELS: usize = 8;
pub const CROP: usize = 32;
pub const STEPS: u64 = 200;
pub const MODEL_SEED: u64 = 42;

pub fn train_set() -> Result<Vec<PairedSample>> {
    synth_pairs(TRAIN_PAIRS, IMAGE_SIZE, IMAGE_SIZE, &StreakParams::default(), TRAIN_SEED)
}

/// Held out: drawn from a different seed than the training pairs.
pub fn test_set() -> Result<Vec<PairedSample>> {
    synth_pairs(TEST_PAIRS, IMAGE_SIZE, IMAGE_SIZE, &StreakParams::default(), TEST_SEED)
}

pub fn config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.arch.feature_channels = FEATURE_CHANNELS;
    cfg.train = TrainConfig { crop: CROP, total_steps: STEPS, seed: MODEL_SEED, ..TrainConfig::default() };
    cfg
}

#[derive(Debug, Clone)]
pub struct AblationResult {
    pub case: AblationCase,
    pub outcome: TrainOutcome,
    pub report: MetricReport,
}

/// Trains and evaluates every ablation case from the same base config.
pub fn run_ablation(train_pairs: &[PairedSample], test_pairs: &[PairedSample], base: &PipelineConfig) -> Result<Vec<AblationResult>> {
    ABLATION_CASES
        .iter()
        .map(|case| {
            let cfg = case.apply(base);
            let outcome = train(train_pairs, &cfg, |_| {})?;
            let report = evaluate(test_pairs, &outcome.model, &cfg)?;
            Ok(AblationResult { case: *case, outcome, report })
        })
        .collect()
}
