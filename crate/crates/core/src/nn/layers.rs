//! Convolutions and the attention blocks built from them.
//!
//! A dual attention block (DAB) is `x + CA(SA(conv3(relu(conv3(x)))))`, with
//! spatial attention applied before channel attention. A recursive residual
//! group (RRG) is `x + conv3(dab₂(dab₁(x)))`. Both are exact identities when
//! their weights are zero.

use rand::Rng;

use super::graph::{Graph, Var};
use super::params::{Init, ParamId, ParamStore};
use crate::error::{Error, Result};

/// Squeeze ratio of channel attention.
pub const DEFAULT_REDUCTION: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Conv3,
    Conv1,
    Relu,
    Sigmoid,
    Gap,
    ChannelAttention,
    SpatialAttention,
    Dab,
    Rrg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_channels: usize,
    pub out_channels: usize,
    pub reduction: usize,
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::param("channel counts must be at least 1"));
        }
        let needs_square = matches!(
            self.kind,
            LayerKind::ChannelAttention | LayerKind::SpatialAttention | LayerKind::Dab | LayerKind::Rrg
        );
        if needs_square && self.in_channels != self.out_channels {
            return Err(Error::shape(format!(
                "{:?} must preserve channels ({} -> {})",
                self.kind, self.in_channels, self.out_channels
            )));
        }
        if matches!(self.kind, LayerKind::ChannelAttention | LayerKind::Dab | LayerKind::Rrg)
            && (self.reduction == 0 || self.in_channels % self.reduction != 0)
        {
            return Err(Error::param(format!(
                "reduction {} does not divide {} channels",
                self.reduction, self.in_channels
            )));
        }
        Ok(())
    }
}

/// How a new block's weights start out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockInit {
    Uniform,
    Zeros,
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
}

impl Conv2d {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        init: Init,
        rng: &mut R,
    ) -> Result<Self> {
        if kernel != 1 && kernel != 3 {
            return Err(Error::param("kernel must be 1 or 3"));
        }
        let kind = if kernel == 3 { LayerKind::Conv3 } else { LayerKind::Conv1 };
        LayerSpec { kind, in_channels, out_channels, reduction: 1 }.validate()?;
        let init = match init {
            Init::Uniform { .. } => Init::Uniform { fan_in: in_channels * kernel * kernel },
            other => other,
        };
        let weight = store.add(format!("{name}.weight"), [out_channels, in_channels, kernel, kernel], init, rng);
        let bias = store.add(format!("{name}.bias"), [out_channels, 1, 1, 1], Init::Zeros, rng);
        Ok(Conv2d { weight, bias, in_channels, out_channels, kernel })
    }

    pub fn uniform<R: Rng>(store: &mut ParamStore, name: &str, cin: usize, cout: usize, k: usize, rng: &mut R) -> Result<Self> {
        Self::new(store, name, cin, cout, k, Init::Uniform { fan_in: 0 }, rng)
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let c = g.value(x).shape()[1];
        if c != self.in_channels {
            return Err(Error::shape(format!("conv expects {} channels, got {c}", self.in_channels)));
        }
        let w = g.param(store, self.weight)?;
        let b = g.param(store, self.bias)?;
        g.conv(x, w, b)
    }
}

fn block_init(init: BlockInit) -> Init {
    match init {
        BlockInit::Uniform => Init::Uniform { fan_in: 0 },
        BlockInit::Zeros => Init::Zeros,
    }
}

/// Squeeze-and-excitation gate: `x · σ(W₂ relu(W₁ GAP(x)))`.
#[derive(Debug, Clone)]
pub struct ChannelAttention {
    pub squeeze: Conv2d,
    pub excite: Conv2d,
}

impl ChannelAttention {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, channels: usize, reduction: usize, init: BlockInit, rng: &mut R) -> Result<Self> {
        LayerSpec { kind: LayerKind::ChannelAttention, in_channels: channels, out_channels: channels, reduction }
            .validate()?;
        let hidden = channels / reduction;
        let i = block_init(init);
        Ok(ChannelAttention {
            squeeze: Conv2d::new(store, &format!("{name}.squeeze"), channels, hidden, 1, i, rng)?,
            excite: Conv2d::new(store, &format!("{name}.excite"), hidden, channels, 1, i, rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let pooled = g.global_avg_pool(x)?;
        let h = self.squeeze.forward(g, store, pooled)?;
        let h = g.relu(h)?;
        let s = self.excite.forward(g, store, h)?;
        let s = g.sigmoid(s)?;
        g.scale_channels(x, s)
    }
}

/// Per-pixel gate from a 3x3 conv over the channel max and mean maps.
#[derive(Debug, Clone)]
pub struct SpatialAttention {
    pub conv: Conv2d,
}

impl SpatialAttention {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, init: BlockInit, rng: &mut R) -> Result<Self> {
        Ok(SpatialAttention { conv: Conv2d::new(store, &format!("{name}.conv"), 2, 1, 3, block_init(init), rng)? })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let pooled = g.channel_pool(x)?;
        let s = self.conv.forward(g, store, pooled)?;
        let s = g.sigmoid(s)?;
        g.scale_pixels(x, s)
    }
}

#[derive(Debug, Clone)]
pub struct Dab {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub spatial: SpatialAttention,
    pub channel: ChannelAttention,
}

impl Dab {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, channels: usize, reduction: usize, init: BlockInit, rng: &mut R) -> Result<Self> {
        LayerSpec { kind: LayerKind::Dab, in_channels: channels, out_channels: channels, reduction }.validate()?;
        let i = block_init(init);
        Ok(Dab {
            conv1: Conv2d::new(store, &format!("{name}.conv1"), channels, channels, 3, i, rng)?,
            conv2: Conv2d::new(store, &format!("{name}.conv2"), channels, channels, 3, i, rng)?,
            spatial: SpatialAttention::new(store, &format!("{name}.sa"), init, rng)?,
            channel: ChannelAttention::new(store, &format!("{name}.ca"), channels, reduction, init, rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let f = self.conv1.forward(g, store, x)?;
        let f = g.relu(f)?;
        let f = self.conv2.forward(g, store, f)?;
        let f = self.spatial.forward(g, store, f)?;
        let f = self.channel.forward(g, store, f)?;
        g.add(x, f)
    }
}

#[derive(Debug, Clone)]
pub struct Rrg {
    pub dab1: Dab,
    pub dab2: Dab,
    pub conv: Conv2d,
}

impl Rrg {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, channels: usize, reduction: usize, init: BlockInit, rng: &mut R) -> Result<Self> {
        LayerSpec { kind: LayerKind::Rrg, in_channels: channels, out_channels: channels, reduction }.validate()?;
        Ok(Rrg {
            dab1: Dab::new(store, &format!("{name}.dab1"), channels, reduction, init, rng)?,
            dab2: Dab::new(store, &format!("{name}.dab2"), channels, reduction, init, rng)?,
            conv: Conv2d::new(store, &format!("{name}.conv"), channels, channels, 3, block_init(init), rng)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let y = self.dab1.forward(g, store, x)?;
        let y = self.dab2.forward(g, store, y)?;
        let y = self.conv.forward(g, store, y)?;
        g.add(x, y)
    }
}
