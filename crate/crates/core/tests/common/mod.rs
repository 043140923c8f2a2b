//! Shared helpers for the integration tests: random inputs, a literal
//! nested-loop iWGIF, and a finite-difference harness for network layers.
#![allow(dead_code)]

use derain::filter::{FilterKind, FilterParams};
use derain::nn::gradcheck::{self, GradCheckReport, FD_STEP};
use derain::nn::{Graph, ParamStore, Tensor, Var};
use derain::{Image, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(w: usize, h: usize, channels: usize, seed: u64) -> Image {
    let mut r = rng(seed);
    let data = (0..w * h * channels).map(|_| r.gen::<f64>()).collect();
    Image::new(w, h, channels, data).unwrap()
}

/// Piecewise-smooth test image: a ramp plus a bright bar plus mild noise.
pub fn structured_image(w: usize, h: usize, seed: u64) -> Image {
    let mut r = rng(seed);
    let bar = r.gen_range(0..w);
    let data = (0..w * h)
        .map(|k| {
            let (x, y) = (k % w, k / w);
            let v = 0.2 + 0.5 * x as f64 / w as f64 + 0.1 * y as f64 / h as f64;
            let v = if x == bar { v + 0.3 } else { v };
            (v + r.gen_range(-0.03..0.03)).clamp(0.0, 1.0)
        })
        .collect();
    Image::new(w, h, 1, data).unwrap()
}

pub fn random_tensor(shape: [usize; 4], seed: u64) -> Tensor {
    let mut r = rng(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// In-bounds pixel coordinates of the square window of radius `r` at `(x, y)`.
fn window(x: usize, y: usize, r: usize, w: usize, h: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for yy in y.saturating_sub(r)..=(y + r).min(h - 1) {
        for xx in x.saturating_sub(r)..=(x + r).min(w - 1) {
            out.push((xx, yy));
        }
    }
    out
}

fn at(img: &[f64], w: usize, (x, y): (usize, usize)) -> f64 {
    img[y * w + x]
}

/// Every intermediate of the filter at each window centre, computed by
/// direct summation.
#[derive(Debug, Clone)]
pub struct NaiveField {
    pub gamma: Vec<f64>,
    pub a: Vec<f64>,
    /// One intercept plane per input channel.
    pub b: Vec<Vec<f64>>,
    /// `(1/|ω|) Σ (a·G + b − I)²` on the luminance pair.
    pub residual: Vec<f64>,
    pub w: Vec<f64>,
}

pub fn naive_field(input: &Image, guide: &Image, p: &FilterParams, kind: FilterKind) -> NaiveField {
    let (w, h) = (guide.width(), guide.height());
    let g = guide.luminance();
    let g = g.data();
    let lum = input.luminance();
    let il = lum.data();
    let n = w * h;

    let local_var = |x: usize, y: usize| {
        let win = window(x, y, 1, w, h);
        let m = win.iter().map(|&q| at(g, w, q)).sum::<f64>() / win.len() as f64;
        win.iter().map(|&q| (at(g, w, q) - m).powi(2)).sum::<f64>() / win.len() as f64
    };
    let vars: Vec<f64> = (0..n).map(|k| local_var(k % w, k / w)).collect();
    let mut inv_sum = 0.0;
    for v in &vars {
        inv_sum += 1.0 / (v + p.epsilon);
    }
    let gamma: Vec<f64> = match kind {
        FilterKind::Gif => vec![1.0; n],
        _ => vars.iter().map(|v| (v + p.epsilon) * inv_sum / n as f64).collect(),
    };

    let mut a = vec![0.0; n];
    let mut b = vec![vec![0.0; n]; input.channels()];
    let mut residual = vec![0.0; n];
    for k in 0..n {
        let win = window(k % w, k / w, p.zeta, w, h);
        let m = win.len() as f64;
        let mu_g = win.iter().map(|&q| at(g, w, q)).sum::<f64>() / m;
        let mu_i = win.iter().map(|&q| at(il, w, q)).sum::<f64>() / m;
        let mut var_g = 0.0;
        let mut cov = 0.0;
        for &q in &win {
            var_g += (at(g, w, q) - mu_g).powi(2);
            cov += (at(g, w, q) - mu_g) * (at(il, w, q) - mu_i);
        }
        let (var_g, cov) = (var_g / m, cov / m);
        let ak = gamma[k] * cov / (gamma[k] * var_g + p.lambda);
        a[k] = ak;
        let bk = mu_i - ak * mu_g;
        residual[k] = win.iter().map(|&q| (ak * at(g, w, q) + bk - at(il, w, q)).powi(2)).sum::<f64>() / m;
        for (c, bc) in b.iter_mut().enumerate() {
            let plane = input.plane(c);
            let mu_c = win.iter().map(|&q| at(plane, w, q)).sum::<f64>() / m;
            bc[k] = mu_c - ak * mu_g;
        }
    }
    let wts = match kind {
        FilterKind::Iwgif => residual.iter().map(|r| (-r / p.eta).exp() + 0.001).collect(),
        _ => vec![1.0; n],
    };
    NaiveField { gamma, a, b, residual, w: wts }
}

pub fn naive_iwgif(input: &Image, guide: &Image, p: &FilterParams) -> Image {
    naive_filter(input, guide, p, FilterKind::Iwgif)
}

/// Unclamped filter output from the naive field: every pixel averages the
/// fits of all windows covering it, weighted by `W`.
pub fn naive_filter(input: &Image, guide: &Image, p: &FilterParams, kind: FilterKind) -> Image {
    let (w, h) = (guide.width(), guide.height());
    let f = naive_field(input, guide, p, kind);
    let g = guide.luminance();
    let mut out = Vec::with_capacity(w * h * input.channels());
    for c in 0..input.channels() {
        for k in 0..w * h {
            let (mut sw, mut sa, mut sb) = (0.0, 0.0, 0.0);
            for q in window(k % w, k / w, p.zeta, w, h) {
                let j = q.1 * w + q.0;
                sw += f.w[j];
                sa += f.w[j] * f.a[j];
                sb += f.w[j] * f.b[c][j];
            }
            out.push(sa / sw * g.data()[k] + sb / sw);
        }
    }
    Image::new(w, h, input.channels(), out).unwrap()
}

/// Projects a layer output onto fixed random weights so that a single scalar
/// exercises every output element.
fn projected(out: &Tensor, proj: &[f64]) -> f64 {
    out.data().iter().zip(proj).map(|(a, b)| a * b).sum()
}

/// Checks the gradient of `build` with respect to its input and every
/// parameter coordinate in `store` (or an evenly spaced subset of at most
/// `max_params`).
pub fn layer_gradcheck<F>(store: &ParamStore, x: &Tensor, max_params: usize, seed: u64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore, Var) -> Result<Var>,
{
    let mut g = Graph::new();
    let xv = g.input(x.clone())?;
    let out = build(&mut g, store, xv)?;
    let n_out = g.value(out).len();
    let mut r = rng(seed ^ 0x9e37);
    let proj: Vec<f64> = (0..n_out).map(|_| r.gen_range(-1.0..1.0)).collect();
    let grads = g.backward_with(out, proj.clone());
    let dx = grads.get(xv).expect("input gradient").to_vec();
    let dparams = grads.for_params(store);

    // Flat coordinates: inputs first, then parameters in store order.
    let ids: Vec<_> = store.ids().collect();
    let sizes: Vec<usize> = ids.iter().map(|&id| store.value(id).len()).collect();
    let n_params: usize = sizes.iter().sum();
    let stride = n_params.div_ceil(max_params.max(1)).max(1);
    let mut coords: Vec<usize> = (0..x.len()).collect();
    coords.extend((0..n_params).step_by(stride).map(|i| x.len() + i));
    let locate = |mut i: usize| {
        for (k, &s) in sizes.iter().enumerate() {
            if i < s {
                return (k, i);
            }
            i -= s;
        }
        unreachable!()
    };

    let analytic = |i: usize| {
        if i < x.len() {
            dx[i]
        } else {
            let (k, j) = locate(i - x.len());
            dparams[k][j]
        }
    };
    let eval = |i: usize, delta: f64| -> Result<(f64, u64)> {
        let mut xs = x.clone();
        let mut ps = store.clone();
        if i < x.len() {
            xs.data_mut()[i] += delta;
        } else {
            let (k, j) = locate(i - x.len());
            ps.value_mut(ids[k]).data_mut()[j] += delta;
        }
        let mut g = Graph::new();
        let xv = g.input(xs)?;
        let out = build(&mut g, &ps, xv)?;
        Ok((projected(g.value(out), &proj), g.branch_signature()))
    };
    gradcheck::check(&coords, FD_STEP, analytic, eval)
}
