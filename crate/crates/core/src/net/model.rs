use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{BlockInit, Checkpoint, Conv2d, Graph, Init, NamedArray, ParamStore, Rrg, Tensor, Var};

/// Image channel count the network consumes and produces.
pub const IMAGE_CHANNELS: usize = 3;

/// How weights are drawn for a new model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelInit {
    /// Every conv weight centered-uniform in `±1/√fan_in`, biases zero.
    Uniform,
    /// Convs inside blocks are uniform, but the output conv of every RRG and
    /// of the streak net starts at zero, and the head, tail and the last conv
    /// of the feature nets and DERB start as channel identities. At step 0 the
    /// model therefore passes the rainy image through unchanged and predicts
    /// no rain.
    ResidualIdentity,
}

impl ModelInit {
    pub fn name(self) -> &'static str {
        match self {
            ModelInit::Uniform => "uniform",
            ModelInit::ResidualIdentity => "residual_identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(ModelInit::Uniform),
            "residual_identity" => Ok(ModelInit::ResidualIdentity),
            other => Err(Error::param(format!("unknown init '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub feature_channels: usize,
    pub reduction: usize,
    /// Use one feature net for both the image and the streak estimate.
    pub tie_feature_nets: bool,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture { feature_channels: 32, reduction: crate::nn::DEFAULT_REDUCTION, tie_feature_nets: false }
    }
}

#[derive(Debug, Clone)]
struct StreakNet {
    conv_in: Conv2d,
    groups: [Rrg; 2],
    conv_out: Conv2d,
}

#[derive(Debug, Clone)]
struct FeatureNet {
    groups: [Rrg; 2],
    conv: Conv2d,
}

#[derive(Debug, Clone)]
struct Derb {
    groups: [Rrg; 4],
    conv: Conv2d,
}

/// Rain-streak extractor, two feature extractors, the enhancement branch and
/// the image/feature head and tail, with their parameters.
#[derive(Debug, Clone)]
pub struct DerainModel {
    pub arch: Architecture,
    pub params: ParamStore,
    head: Conv2d,
    streak_net: StreakNet,
    feature_image: FeatureNet,
    feature_streak: Option<FeatureNet>,
    derb: Derb,
    tail: Conv2d,
}

fn rrg<R: rand::Rng>(store: &mut ParamStore, name: &str, arch: &Architecture, init: ModelInit, rng: &mut R) -> Result<Rrg> {
    let g = Rrg::new(store, name, arch.feature_channels, arch.reduction, BlockInit::Uniform, rng)?;
    if init == ModelInit::ResidualIdentity {
        // Zero output conv: the whole group starts as an identity.
        store.value_mut(g.conv.weight).data_mut().fill(0.0);
    }
    Ok(g)
}

impl DerainModel {
    pub fn new(arch: Architecture, init: ModelInit, seed: u64) -> Result<Self> {
        if arch.feature_channels < IMAGE_CHANNELS {
            return Err(Error::param(format!("feature_channels must be at least {IMAGE_CHANNELS}")));
        }
        let c = arch.feature_channels;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let uniform = Init::Uniform { fan_in: 0 };
        let (ident, zero) = match init {
            ModelInit::Uniform => (uniform, uniform),
            ModelInit::ResidualIdentity => (Init::Identity, Init::Zeros),
        };
        let s = &mut store;
        let head = Conv2d::new(s, "head", IMAGE_CHANNELS, c, 3, ident, &mut rng)?;
        let streak_net = StreakNet {
            conv_in: Conv2d::new(s, "streak.conv_in", IMAGE_CHANNELS, c, 3, uniform, &mut rng)?,
            groups: [rrg(s, "streak.rrg1", &arch, init, &mut rng)?, rrg(s, "streak.rrg2", &arch, init, &mut rng)?],
            conv_out: Conv2d::new(s, "streak.conv_out", c, IMAGE_CHANNELS, 3, zero, &mut rng)?,
        };
        let feature = |s: &mut ParamStore, name: &str, rng: &mut ChaCha8Rng| -> Result<FeatureNet> {
            Ok(FeatureNet {
                groups: [rrg(s, &format!("{name}.rrg1"), &arch, init, rng)?, rrg(s, &format!("{name}.rrg2"), &arch, init, rng)?],
                conv: Conv2d::new(s, &format!("{name}.conv"), c, c, 3, ident, rng)?,
            })
        };
        let feature_image = feature(s, "feature_i", &mut rng)?;
        let feature_streak = if arch.tie_feature_nets { None } else { Some(feature(s, "feature_s", &mut rng)?) };
        let derb = Derb {
            groups: [
                rrg(s, "derb.rrg1", &arch, init, &mut rng)?,
                rrg(s, "derb.rrg2", &arch, init, &mut rng)?,
                rrg(s, "derb.rrg3", &arch, init, &mut rng)?,
                rrg(s, "derb.rrg4", &arch, init, &mut rng)?,
            ],
            conv: Conv2d::new(s, "derb.conv", c, c, 3, ident, &mut rng)?,
        };
        let tail = Conv2d::new(s, "tail", c, IMAGE_CHANNELS, 3, ident, &mut rng)?;
        Ok(DerainModel { arch, params: store, head, streak_net, feature_image, feature_streak, derb, tail })
    }

    fn run_feature_net(net: &FeatureNet, g: &mut Graph, p: &ParamStore, x: Var) -> Result<Var> {
        let mut y = x;
        for r in &net.groups {
            y = r.forward(g, p, y)?;
        }
        net.conv.forward(g, p, y)
    }

    fn check_input(&self, g: &Graph, x: Var) -> Result<()> {
        let c = g.value(x).shape()[1];
        if c != IMAGE_CHANNELS {
            return Err(Error::shape(format!("network expects {IMAGE_CHANNELS}-channel images, got {c}")));
        }
        Ok(())
    }

    /// Streak estimate from the (detail) input.
    pub fn streaks(&self, g: &mut Graph, detail: Var) -> Result<Var> {
        self.check_input(g, detail)?;
        let p = &self.params;
        let n = &self.streak_net;
        let mut y = n.conv_in.forward(g, p, detail)?;
        for r in &n.groups {
            y = r.forward(g, p, y)?;
        }
        n.conv_out.forward(g, p, y)
    }

    /// Restored image (before clamping) from the rainy input and a streak
    /// estimate.
    pub fn restore(&self, g: &mut Graph, rainy: Var, streaks: Var, use_feature_net: bool, use_derb: bool) -> Result<Var> {
        self.check_input(g, rainy)?;
        self.check_input(g, streaks)?;
        let p = &self.params;
        let latent = if use_feature_net {
            let hi = self.head.forward(g, p, rainy)?;
            let hs = self.head.forward(g, p, streaks)?;
            let fi = Self::run_feature_net(&self.feature_image, g, p, hi)?;
            let fs = Self::run_feature_net(self.feature_streak.as_ref().unwrap_or(&self.feature_image), g, p, hs)?;
            g.sub(fi, fs)?
        } else {
            let diff = g.sub(rainy, streaks)?;
            self.head.forward(g, p, diff)?
        };
        let mut y = latent;
        if use_derb {
            for r in &self.derb.groups {
                y = r.forward(g, p, y)?;
            }
            y = self.derb.conv.forward(g, p, y)?;
        }
        self.tail.forward(g, p, y)
    }

    /// Copies the image feature net's weights into the streak feature net.
    pub fn copy_feature_weights(&mut self) {
        let Some(fs) = &self.feature_streak else { return };
        let fi = &self.feature_image;
        let mut pairs = Vec::new();
        for (a, b) in fi.groups.iter().zip(&fs.groups) {
            pairs.extend(rrg_param_pairs(a, b));
        }
        pairs.push((fi.conv.weight, fs.conv.weight));
        pairs.push((fi.conv.bias, fs.conv.bias));
        for (src, dst) in pairs {
            *self.params.value_mut(dst) = self.params.value(src).clone();
        }
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.meta.insert("feature_channels".into(), self.arch.feature_channels.to_string());
        ck.meta.insert("reduction".into(), self.arch.reduction.to_string());
        ck.meta.insert("tie_feature_nets".into(), self.arch.tie_feature_nets.to_string());
        for id in self.params.ids() {
            let t = self.params.value(id);
            ck.arrays.push(NamedArray {
                name: self.params.name(id).to_string(),
                shape: t.shape().to_vec(),
                data: t.data().iter().map(|&v| v as f32).collect(),
            });
        }
        ck
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let get = |k: &str| -> Result<&str> {
            ck.meta.get(k).map(String::as_str).ok_or_else(|| Error::Checkpoint(format!("missing key {k}")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?.parse().map_err(|_| Error::Checkpoint(format!("bad value for {k}")))
        };
        let arch = Architecture {
            feature_channels: num("feature_channels")?,
            reduction: num("reduction")?,
            tie_feature_nets: get("tie_feature_nets")? == "true",
        };
        let mut model = DerainModel::new(arch, ModelInit::ResidualIdentity, 0)?;
        model.params.zero_all();
        for id in model.params.ids().collect::<Vec<_>>() {
            let name = model.params.name(id).to_string();
            let arr = ck.array(&name).ok_or_else(|| Error::Checkpoint(format!("missing weights for {name}")))?;
            let t = model.params.value_mut(id);
            if arr.shape != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "checkpoint/architecture mismatch for {name}: {:?} vs {:?}",
                    arr.shape,
                    t.shape()
                )));
            }
            for (d, s) in t.data_mut().iter_mut().zip(&arr.data) {
                *d = *s as f64;
            }
        }
        Ok(model)
    }

    /// Runs the full network on single images.
    pub fn infer(&self, rainy: &Tensor, detail: &Tensor, use_feature_net: bool, use_derb: bool) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let x = g.input(rainy.clone())?;
        let d = g.input(detail.clone())?;
        let s = self.streaks(&mut g, d)?;
        let out = self.restore(&mut g, x, s, use_feature_net, use_derb)?;
        Ok((g.value(s).clone(), g.value(out).clone()))
    }
}

fn rrg_param_pairs(a: &Rrg, b: &Rrg) -> Vec<(crate::nn::ParamId, crate::nn::ParamId)> {
    let mut out = Vec::new();
    let mut conv = |x: &Conv2d, y: &Conv2d| {
        out.push((x.weight, y.weight));
        out.push((x.bias, y.bias));
    };
    for (da, db) in [(&a.dab1, &b.dab1), (&a.dab2, &b.dab2)] {
        conv(&da.conv1, &db.conv1);
        conv(&da.conv2, &db.conv2);
        conv(&da.spatial.conv, &db.spatial.conv);
        conv(&da.channel.squeeze, &db.channel.squeeze);
        conv(&da.channel.excite, &db.channel.excite);
    }
    conv(&a.conv, &b.conv);
    out
}
