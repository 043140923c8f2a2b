//! A small reverse-mode tensor engine with just the layers the deraining
//! network needs.

pub mod checkpoint;
mod conv;
pub mod gradcheck;
mod graph;
mod layers;
mod optim;
mod params;
mod tensor;

pub use checkpoint::{Checkpoint, NamedArray};
pub use graph::{Gradients, Graph, Var};
pub use layers::{
    BlockInit, ChannelAttention, Conv2d, Dab, LayerKind, LayerSpec, Rrg, SpatialAttention, DEFAULT_REDUCTION,
};
pub use optim::{adam_step, cosine_lr, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use params::{Init, ParamId, ParamStore};
pub use tensor::Tensor;

use crate::error::Result;

/// Mean absolute error between two tensors, outside of any graph.
pub fn l1_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    let mut g = Graph::new();
    let p = g.input(pred.clone())?;
    let t = g.input(target.clone())?;
    let l = g.l1_loss(p, t)?;
    Ok(g.value(l).item())
}
