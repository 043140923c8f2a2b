//! The deraining pipeline: guided-filter detail extraction, streak
//! estimation, feature-domain subtraction and reconstruction, plus training
//! and evaluation.

mod model;
pub mod toy;

pub use model::{Architecture, DerainModel, ModelInit, IMAGE_CHANNELS};

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter::{decompose, FilterParams};
use crate::image::Image;
use crate::metrics::{psnr, ssim, MetricReport, MetricRow};
use crate::nn::{adam_step, cosine_lr, Checkpoint, Graph, NamedArray, OptimizerState, Tensor, Var};
use crate::rain::{random_crop, PairedSample};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch: usize,
    pub crop: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub total_steps: u64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { batch: 8, crop: 128, lr_max: 2e-4, lr_min: 1e-6, total_steps: 1000, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub arch: Architecture,
    pub init: ModelInit,
    pub use_iwgif: bool,
    pub use_feature_net: bool,
    pub use_derb: bool,
    pub filter_params: FilterParams,
    pub train: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            arch: Architecture::default(),
            init: ModelInit::Uniform,
            use_iwgif: true,
            use_feature_net: true,
            use_derb: true,
            filter_params: FilterParams::default(),
            train: TrainConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.filter_params.validate()?;
        let t = &self.train;
        if t.batch < 1 {
            return Err(Error::param("batch must be at least 1"));
        }
        if t.crop < 16 {
            return Err(Error::param("crop must be at least 16"));
        }
        if !(t.lr_max > t.lr_min && t.lr_min > 0.0) {
            return Err(Error::param("learning rates must satisfy lr_max > lr_min > 0"));
        }
        crate::nn::LayerSpec {
            kind: crate::nn::LayerKind::Rrg,
            in_channels: self.arch.feature_channels,
            out_channels: self.arch.feature_channels,
            reduction: self.arch.reduction,
        }
        .validate()
    }

    /// Pipeline switches and filter settings recorded in a checkpoint.
    pub fn with_checkpoint_meta(mut self, ck: &Checkpoint) -> Result<Self> {
        let flag = |k: &str, default: bool| ck.meta.get(k).map_or(default, |v| v == "true");
        self.use_iwgif = flag("use_iwgif", self.use_iwgif);
        self.use_feature_net = flag("use_feature_net", self.use_feature_net);
        self.use_derb = flag("use_derb", self.use_derb);
        let num = |k: &str, default: f64| -> Result<f64> {
            ck.meta.get(k).map_or(Ok(default), |v| v.parse().map_err(|_| Error::Checkpoint(format!("bad value for {k}"))))
        };
        let fp = self.filter_params;
        self.filter_params = FilterParams {
            zeta: num("filter.zeta", fp.zeta as f64)? as usize,
            lambda: num("filter.lambda", fp.lambda)?,
            epsilon: num("filter.epsilon", fp.epsilon)?,
            eta: num("filter.eta", fp.eta)?,
        };
        Ok(self)
    }
}

/// The input handed to the streak network: the signed detail layer of the
/// self-guided iWGIF, or the image itself when the filter is switched off.
pub fn streak_input(rainy: &Image, cfg: &PipelineConfig) -> Result<Image> {
    if cfg.use_iwgif {
        Ok(decompose(rainy, &cfg.filter_params)?.detail)
    } else {
        Ok(rainy.clone())
    }
}

fn refs(v: &[Image]) -> Vec<&Image> {
    v.iter().collect()
}

fn single(img: &Image) -> Result<Tensor> {
    Tensor::from_images(&[&img.to_rgb()])
}

/// Signed streak estimate with the same size as `rainy`.
pub fn extract_streaks(rainy: &Image, model: &DerainModel, cfg: &PipelineConfig) -> Result<Image> {
    let detail = single(&streak_input(rainy, cfg)?)?;
    let mut g = Graph::new();
    let d = g.input(detail)?;
    let s = model.streaks(&mut g, d)?;
    g.value(s).to_image(0)
}

/// Restores a rain-free image, clamped to `[0, 1]`.
pub fn derain(rainy: &Image, model: &DerainModel, cfg: &PipelineConfig) -> Result<Image> {
    let x = single(rainy)?;
    let d = single(&streak_input(rainy, cfg)?)?;
    let (_, out) = model.infer(&x, &d, cfg.use_feature_net, cfg.use_derb)?;
    Ok(out.to_image(0)?.clamped())
}

/// Restoration with an externally supplied streak estimate in place of the
/// streak network's output.
pub fn derain_with_streaks(rainy: &Image, streaks: &Image, model: &DerainModel, cfg: &PipelineConfig) -> Result<Image> {
    let mut g = Graph::new();
    let x = g.input(single(rainy)?)?;
    let s = g.input(single(streaks)?)?;
    let out = model.restore(&mut g, x, s, cfg.use_feature_net, cfg.use_derb)?;
    Ok(g.value(out).to_image(0)?.clamped())
}

/// A stacked training batch.
#[derive(Debug, Clone)]
pub struct Batch {
    pub rainy: Tensor,
    pub detail: Tensor,
    pub clean: Tensor,
}

impl Batch {
    pub fn from_samples(samples: &[PairedSample], cfg: &PipelineConfig) -> Result<Batch> {
        let rainy: Vec<Image> = samples.iter().map(|s| s.rainy.to_rgb()).collect();
        let clean: Vec<Image> = samples.iter().map(|s| s.clean.to_rgb()).collect();
        let detail = rainy.par_iter().map(|r| streak_input(r, cfg)).collect::<Result<Vec<_>>>()?;
        Ok(Batch {
            rainy: Tensor::from_images(&refs(&rainy))?,
            detail: Tensor::from_images(&refs(&detail))?,
            clean: Tensor::from_images(&refs(&clean))?,
        })
    }
}

/// Builds the training graph for one batch and returns it with the loss node
/// (L1 between the unclamped restoration and the clean target).
pub fn batch_loss(model: &DerainModel, batch: &Batch, cfg: &PipelineConfig) -> Result<(Graph, Var)> {
    let mut g = Graph::new();
    let x = g.input(batch.rainy.clone())?;
    let d = g.input(batch.detail.clone())?;
    let t = g.input(batch.clean.clone())?;
    let s = model.streaks(&mut g, d)?;
    let out = model.restore(&mut g, x, s, cfg.use_feature_net, cfg.use_derb)?;
    let loss = g.l1_loss(out, t)?;
    Ok((g, loss))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
}

pub fn loss_trace_csv(trace: &[LossRecord]) -> String {
    let mut s = String::from("step,lr,loss\n");
    for r in trace {
        let _ = writeln!(s, "{},{:e},{:.9}", r.step, r.lr, r.loss);
    }
    s
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: DerainModel,
    pub optimizer: OptimizerState,
    pub trace: Vec<LossRecord>,
}

impl TrainOutcome {
    /// Weights, architecture, pipeline switches, filter settings and Adam
    /// moments in one container.
    pub fn to_checkpoint(&self, cfg: &PipelineConfig) -> Checkpoint {
        let mut ck = self.model.to_checkpoint();
        let m = &mut ck.meta;
        m.insert("init".into(), cfg.init.name().into());
        m.insert("use_iwgif".into(), cfg.use_iwgif.to_string());
        m.insert("use_feature_net".into(), cfg.use_feature_net.to_string());
        m.insert("use_derb".into(), cfg.use_derb.to_string());
        m.insert("filter.zeta".into(), cfg.filter_params.zeta.to_string());
        m.insert("filter.lambda".into(), cfg.filter_params.lambda.to_string());
        m.insert("filter.epsilon".into(), cfg.filter_params.epsilon.to_string());
        m.insert("filter.eta".into(), cfg.filter_params.eta.to_string());
        m.insert("adam.step".into(), self.optimizer.step.to_string());
        m.insert("adam.beta1".into(), self.optimizer.beta1.to_string());
        m.insert("adam.beta2".into(), self.optimizer.beta2.to_string());
        m.insert("adam.lr".into(), self.optimizer.lr.to_string());
        let p = &self.model.params;
        for (k, id) in p.ids().enumerate() {
            let shape = p.value(id).shape().to_vec();
            for (tag, src) in [("m", &self.optimizer.m[k]), ("v", &self.optimizer.v[k])] {
                ck.arrays.push(NamedArray {
                    name: format!("adam.{tag}.{}", p.name(id)),
                    shape: shape.clone(),
                    data: src.iter().map(|&v| v as f32).collect(),
                });
            }
        }
        ck
    }
}

/// Seeded training loop: random crops, L1 loss, Adam with cosine annealing.
/// `on_step` sees every loss record as it is produced.
pub fn train(dataset: &[PairedSample], cfg: &PipelineConfig, mut on_step: impl FnMut(&LossRecord)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let tc = &cfg.train;
    if dataset.is_empty() {
        return Err(Error::param("training set is empty"));
    }
    if let Some(s) = dataset.iter().find(|s| s.rainy.width() < tc.crop || s.rainy.height() < tc.crop) {
        return Err(Error::CropTooLarge { width: s.rainy.width(), height: s.rainy.height(), crop: tc.crop });
    }
    let mut model = DerainModel::new(cfg.arch, cfg.init, tc.seed)?;
    let mut optimizer = OptimizerState::new(&model.params, tc.lr_max);
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed ^ 0xba7c_4000);
    let mut trace = Vec::with_capacity(tc.total_steps as usize);
    for step in 0..tc.total_steps {
        let crops = (0..tc.batch)
            .map(|_| {
                let i = rng.gen_range(0..dataset.len());
                random_crop(&dataset[i], tc.crop, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let batch = Batch::from_samples(&crops, cfg)?;
        let (graph, loss) = batch_loss(&model, &batch, cfg)?;
        let loss_value = graph.value(loss).item();
        let grads = graph.backward(loss).for_params(&model.params);
        drop(graph);
        optimizer.lr = cosine_lr(step, tc.total_steps, tc.lr_max, tc.lr_min)?;
        adam_step(&mut model.params, &grads, &mut optimizer)?;
        let rec = LossRecord { step, lr: optimizer.lr, loss: loss_value };
        on_step(&rec);
        trace.push(rec);
    }
    Ok(TrainOutcome { model, optimizer, trace })
}

/// PSNR/SSIM of the model's restorations against ground truth, at full
/// resolution.
pub fn evaluate(dataset: &[PairedSample], model: &DerainModel, cfg: &PipelineConfig) -> Result<MetricReport> {
    let rows = dataset
        .par_iter()
        .map(|s| {
            let restored = derain(&s.rainy, model, cfg)?;
            let clean = s.clean.to_rgb();
            Ok(MetricRow { name: s.name.clone(), psnr_db: psnr(&restored, &clean)?, ssim: ssim(&restored, &clean)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_rows(rows))
}

/// Metrics of the rainy inputs themselves, the no-op baseline.
pub fn rainy_baseline(dataset: &[PairedSample]) -> Result<MetricReport> {
    let rows = dataset
        .iter()
        .map(|s| {
            let (r, c) = (s.rainy.to_rgb(), s.clean.to_rgb());
            Ok(MetricRow { name: s.name.clone(), psnr_db: psnr(&r, &c)?, ssim: ssim(&r, &c)? })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricReport::from_rows(rows))
}

/// One row of the component ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationCase {
    pub label: &'static str,
    pub use_iwgif: bool,
    pub use_feature_net: bool,
    pub use_derb: bool,
}

/// Cases 1–3 each drop one component; case 4 is the full pipeline.
pub const ABLATION_CASES: [AblationCase; 4] = [
    AblationCase { label: "case1", use_iwgif: false, use_feature_net: true, use_derb: true },
    AblationCase { label: "case2", use_iwgif: true, use_feature_net: false, use_derb: true },
    AblationCase { label: "case3", use_iwgif: true, use_feature_net: true, use_derb: false },
    AblationCase { label: "case4", use_iwgif: true, use_feature_net: true, use_derb: true },
];

impl AblationCase {
    pub fn apply(&self, cfg: &PipelineConfig) -> PipelineConfig {
        PipelineConfig {
            use_iwgif: self.use_iwgif,
            use_feature_net: self.use_feature_net,
            use_derb: self.use_derb,
            ..cfg.clone()
        }
    }
}
