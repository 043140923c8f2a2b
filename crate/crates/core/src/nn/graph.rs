//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! Every operation appends a node holding its forward value and the indices
//! of its operands. Since operands always precede their consumers on the tape,
//! a single reverse sweep visits nodes in a valid topological order.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use super::conv;
use super::params::{ParamId, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv { x: Var, w: Var, b: Var },
    Relu(Var),
    Sigmoid(Var),
    Add(Var, Var),
    Sub(Var, Var),
    /// `x · s` with `s` of shape `(n, c, 1, 1)`.
    ScaleChannels { x: Var, s: Var },
    /// `x · s` with `s` of shape `(n, 1, h, w)`.
    ScalePixels { x: Var, s: Var },
    GlobalAvgPool(Var),
    /// Channel-wise max (output channel 0) and mean (output channel 1).
    ChannelPool { x: Var, argmax: Vec<u32> },
    L1 { pred: Var, target: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::shape(format!("{what}: {:?} vs {:?}", a.shape(), b.shape())))
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NonFinite(name));
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn input(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Leaf, "input")
    }

    /// Leaf holding a parameter's current value. Repeated requests for the
    /// same parameter return the same node so gradients accumulate.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Result<Var> {
        if let Some(&v) = self.params.get(&id) {
            return Ok(v);
        }
        let v = self.push(store.value(id).clone(), Op::Leaf, "parameter")?;
        self.params.insert(id, v);
        Ok(v)
    }

    pub fn conv(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xs, ws, bs) = (self.value(x).shape(), self.value(w).shape(), self.value(b).shape());
        if ws[1] != xs[1] {
            return Err(Error::shape(format!("conv expects {} input channels, got {}", ws[1], xs[1])));
        }
        if ws[2] != ws[3] || ws[2] % 2 == 0 || bs != [ws[0], 1, 1, 1] {
            return Err(Error::shape(format!("bad conv parameter shapes {ws:?} / {bs:?}")));
        }
        let out = conv::forward(self.value(x), self.value(w), self.value(b));
        self.push(out, Op::Conv { x, w, b }, "conv")
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let out = Tensor::new(t.shape(), t.data().iter().map(|v| v.max(0.0)).collect())?;
        self.push(out, Op::Relu(x), "relu")
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let out = Tensor::new(t.shape(), t.data().iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect())?;
        self.push(out, Op::Sigmoid(x), "sigmoid")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "add")?;
        let (ta, tb) = (self.value(a), self.value(b));
        let out = Tensor::new(ta.shape(), ta.data().iter().zip(tb.data()).map(|(p, q)| p + q).collect())?;
        self.push(out, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape(self.value(a), self.value(b), "sub")?;
        let (ta, tb) = (self.value(a), self.value(b));
        let out = Tensor::new(ta.shape(), ta.data().iter().zip(tb.data()).map(|(p, q)| p - q).collect())?;
        self.push(out, Op::Sub(a, b), "sub")
    }

    pub fn scale_channels(&mut self, x: Var, s: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).shape();
        if self.value(s).shape() != [n, c, 1, 1] {
            return Err(Error::shape("channel scale must be (n, c, 1, 1)"));
        }
        let plane = h * w;
        let (tx, ts) = (self.value(x), self.value(s));
        let data = tx.data().chunks(plane).zip(ts.data()).flat_map(|(p, &k)| p.iter().map(move |v| v * k)).collect();
        self.push(Tensor::new([n, c, h, w], data)?, Op::ScaleChannels { x, s }, "scale_channels")
    }

    pub fn scale_pixels(&mut self, x: Var, s: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).shape();
        if self.value(s).shape() != [n, 1, h, w] {
            return Err(Error::shape("pixel scale must be (n, 1, h, w)"));
        }
        let plane = h * w;
        let (tx, ts) = (self.value(x), self.value(s));
        let mut data = Vec::with_capacity(tx.len());
        for (k, p) in tx.data().chunks(plane).enumerate() {
            let sp = &ts.data()[(k / c) * plane..(k / c + 1) * plane];
            data.extend(p.iter().zip(sp).map(|(a, b)| a * b));
        }
        self.push(Tensor::new([n, c, h, w], data)?, Op::ScalePixels { x, s }, "scale_pixels")
    }

    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).shape();
        let plane = (h * w) as f64;
        let data = self.value(x).data().chunks(h * w).map(|p| p.iter().sum::<f64>() / plane).collect();
        self.push(Tensor::new([n, c, 1, 1], data)?, Op::GlobalAvgPool(x), "global_avg_pool")
    }

    pub fn channel_pool(&mut self, x: Var) -> Result<Var> {
        let [n, c, h, w] = self.value(x).shape();
        let plane = h * w;
        let t = self.value(x).data();
        let mut out = vec![0.0; n * 2 * plane];
        let mut argmax = vec![0u32; n * plane];
        for b in 0..n {
            for p in 0..plane {
                let mut best = t[b * c * plane + p];
                let mut arg = 0;
                let mut sum = 0.0;
                for ch in 0..c {
                    let v = t[(b * c + ch) * plane + p];
                    sum += v;
                    if v > best {
                        best = v;
                        arg = ch;
                    }
                }
                out[b * 2 * plane + p] = best;
                out[(b * 2 + 1) * plane + p] = sum / c as f64;
                argmax[b * plane + p] = arg as u32;
            }
        }
        self.push(Tensor::new([n, 2, h, w], out)?, Op::ChannelPool { x, argmax }, "channel_pool")
    }

    /// Mean absolute error over every element.
    pub fn l1_loss(&mut self, pred: Var, target: Var) -> Result<Var> {
        same_shape(self.value(pred), self.value(target), "l1_loss")?;
        let (p, t) = (self.value(pred), self.value(target));
        let loss = p.data().iter().zip(t.data()).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64;
        self.push(Tensor::scalar(loss), Op::L1 { pred, target }, "l1_loss")
    }

    /// Backpropagates from a scalar output.
    pub fn backward(&self, out: Var) -> Gradients {
        let seed = vec![1.0; self.value(out).len()];
        self.backward_with(out, seed)
    }

    /// Backpropagates an arbitrary upstream gradient `seed` for `out`.
    pub fn backward_with(&self, out: Var, seed: Vec<f64>) -> Gradients {
        assert_eq!(seed.len(), self.value(out).len(), "seed gradient shape");
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(seed);

        fn acc(grads: &mut [Option<Vec<f64>>], v: Var, g: Vec<f64>) {
            match &mut grads[v.0] {
                Some(existing) => existing.iter_mut().zip(g).for_each(|(a, b)| *a += b),
                slot => *slot = Some(g),
            }
        }

        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Conv { x, w, b } => {
                    let dout = Tensor::new(node.value.shape(), g.clone()).expect("shape");
                    let (dx, dw, db) = conv::backward(self.value(*x), self.value(*w), &dout);
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *w, dw);
                    acc(&mut grads, *b, db);
                }
                Op::Relu(x) => {
                    let xin = self.value(*x).data();
                    acc(&mut grads, *x, g.iter().zip(xin).map(|(g, v)| if *v > 0.0 { *g } else { 0.0 }).collect());
                }
                Op::Sigmoid(x) => {
                    let y = node.value.data();
                    acc(&mut grads, *x, g.iter().zip(y).map(|(g, y)| g * y * (1.0 - y)).collect());
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.clone());
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.iter().map(|v| -v).collect());
                    acc(&mut grads, *a, g.clone());
                }
                Op::ScaleChannels { x, s } => {
                    let [_, _, h, w] = node.value.shape();
                    let (tx, ts) = (self.value(*x).data(), self.value(*s).data());
                    let mut dx = Vec::with_capacity(g.len());
                    let mut ds = Vec::with_capacity(ts.len());
                    for ((gp, xp), &k) in g.chunks(h * w).zip(tx.chunks(h * w)).zip(ts) {
                        dx.extend(gp.iter().map(|v| v * k));
                        ds.push(gp.iter().zip(xp).map(|(a, b)| a * b).sum());
                    }
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *s, ds);
                }
                Op::ScalePixels { x, s } => {
                    let [_, c, h, w] = node.value.shape();
                    let plane = h * w;
                    let (tx, ts) = (self.value(*x).data(), self.value(*s).data());
                    let mut dx = Vec::with_capacity(g.len());
                    let mut ds = vec![0.0; ts.len()];
                    for (k, (gp, xp)) in g.chunks(plane).zip(tx.chunks(plane)).enumerate() {
                        let b = k / c;
                        let sp = &ts[b * plane..(b + 1) * plane];
                        dx.extend(gp.iter().zip(sp).map(|(a, b)| a * b));
                        for (d, (a, v)) in ds[b * plane..(b + 1) * plane].iter_mut().zip(gp.iter().zip(xp)) {
                            *d += a * v;
                        }
                    }
                    acc(&mut grads, *x, dx);
                    acc(&mut grads, *s, ds);
                }
                Op::GlobalAvgPool(x) => {
                    let [_, _, h, w] = self.value(*x).shape();
                    let plane = h * w;
                    let dx = g.iter().flat_map(|v| std::iter::repeat_n(v / plane as f64, plane)).collect();
                    acc(&mut grads, *x, dx);
                }
                Op::ChannelPool { x, argmax } => {
                    let [n, c, h, w] = self.value(*x).shape();
                    let plane = h * w;
                    let mut dx = vec![0.0; n * c * plane];
                    for b in 0..n {
                        for p in 0..plane {
                            let gmax = g[b * 2 * plane + p];
                            let gmean = g[(b * 2 + 1) * plane + p] / c as f64;
                            for ch in 0..c {
                                dx[(b * c + ch) * plane + p] = gmean;
                            }
                            dx[(b * c + argmax[b * plane + p] as usize) * plane + p] += gmax;
                        }
                    }
                    acc(&mut grads, *x, dx);
                }
                Op::L1 { pred, target } => {
                    let (p, t) = (self.value(*pred).data(), self.value(*target).data());
                    let scale = g[0] / p.len() as f64;
                    let dp: Vec<f64> = p
                        .iter()
                        .zip(t)
                        .map(|(a, b)| {
                            if a > b {
                                scale
                            } else if a < b {
                                -scale
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    acc(&mut grads, *target, dp.iter().map(|v| -v).collect());
                    acc(&mut grads, *pred, dp);
                }
            }
            grads[idx] = Some(g);
        }
        Gradients { grads, params: self.params.iter().map(|(&id, &v)| (id, v)).collect() }
    }

    /// Hash of every non-smooth decision taken in the forward pass: ReLU
    /// activity, channel-max winners and L1 signs. Two evaluations with the
    /// same signature lie on the same smooth piece of the function.
    pub fn branch_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(x) => self.value(*x).data().iter().for_each(|v| (*v > 0.0).hash(&mut h)),
                Op::ChannelPool { argmax, .. } => argmax.hash(&mut h),
                Op::L1 { pred, target } => {
                    let (p, t) = (self.value(*pred).data(), self.value(*target).data());
                    p.iter().zip(t).for_each(|(a, b)| a.partial_cmp(b).hash(&mut h));
                }
                _ => {}
            }
        }
        h.finish()
    }
}

/// Result of a backward sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    params: Vec<(ParamId, Var)>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient for every parameter in `store`; unused parameters get zeros.
    pub fn for_params(&self, store: &ParamStore) -> Vec<Vec<f64>> {
        let mut out: Vec<Vec<f64>> = (0..store.len()).map(|i| vec![0.0; store.value(ParamId(i)).len()]).collect();
        for &(id, v) in &self.params {
            if let Some(g) = self.get(v) {
                out[id.0].copy_from_slice(g);
            }
        }
        out
    }
}
