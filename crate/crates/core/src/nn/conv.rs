//! Stride-1 "same" convolution kernels (zero padding `k / 2`).
//!
//! Batch items are processed in parallel, but every reduction across the
//! batch is summed in index order so results do not depend on thread count.

use rayon::prelude::*;

use super::tensor::Tensor;

/// `dst[y, x] += k · src[y + dy, x + dx]` wherever the source is in bounds.
#[inline]
fn accumulate_shifted(dst: &mut [f64], src: &[f64], w: usize, h: usize, dy: isize, dx: isize, k: f64) {
    let x_lo = (-dx).max(0) as usize;
    let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
    if x_lo >= x_hi {
        return;
    }
    for y in 0..h {
        let sy = y as isize + dy;
        if sy < 0 || sy >= h as isize {
            continue;
        }
        let d = &mut dst[y * w + x_lo..y * w + x_hi];
        let s0 = sy as usize * w + (x_lo as isize + dx) as usize;
        let s = &src[s0..s0 + d.len()];
        for (a, b) in d.iter_mut().zip(s) {
            *a += k * b;
        }
    }
}

/// `Σ_{y,x} a[y, x] · b[y + dy, x + dx]` over in-bounds positions.
#[inline]
fn dot_shifted(a: &[f64], b: &[f64], w: usize, h: usize, dy: isize, dx: isize) -> f64 {
    let x_lo = (-dx).max(0) as usize;
    let x_hi = (w as isize - dx).min(w as isize).max(0) as usize;
    if x_lo >= x_hi {
        return 0.0;
    }
    let mut acc = 0.0;
    for y in 0..h {
        let sy = y as isize + dy;
        if sy < 0 || sy >= h as isize {
            continue;
        }
        let ar = &a[y * w + x_lo..y * w + x_hi];
        let s0 = sy as usize * w + (x_lo as isize + dx) as usize;
        let br = &b[s0..s0 + ar.len()];
        acc += ar.iter().zip(br).map(|(p, q)| p * q).sum::<f64>();
    }
    acc
}

pub(crate) fn forward(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Tensor {
    let [n, ci, h, w] = x.shape();
    let [co, _, k, _] = weight.shape();
    let pad = (k / 2) as isize;
    let plane = h * w;
    let mut out = Tensor::zeros([n, co, h, w]);
    out.data_mut().par_chunks_mut(co * plane).enumerate().for_each(|(b, out_b)| {
        let xb = &x.data()[b * ci * plane..(b + 1) * ci * plane];
        for o in 0..co {
            let dst = &mut out_b[o * plane..(o + 1) * plane];
            dst.fill(bias.data()[o]);
            for i in 0..ci {
                let src = &xb[i * plane..(i + 1) * plane];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = weight.data()[((o * ci + i) * k + ky) * k + kx];
                        if wv != 0.0 {
                            accumulate_shifted(dst, src, w, h, ky as isize - pad, kx as isize - pad, wv);
                        }
                    }
                }
            }
        }
    });
    out
}

/// Returns `(dx, dweight, dbias)`.
pub(crate) fn backward(x: &Tensor, weight: &Tensor, dout: &Tensor) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let [n, ci, h, w] = x.shape();
    let [co, _, k, _] = weight.shape();
    let pad = (k / 2) as isize;
    let plane = h * w;

    let mut dx = vec![0.0; x.len()];
    dx.par_chunks_mut(ci * plane).enumerate().for_each(|(b, dx_b)| {
        let db = &dout.data()[b * co * plane..(b + 1) * co * plane];
        for i in 0..ci {
            let dst = &mut dx_b[i * plane..(i + 1) * plane];
            for o in 0..co {
                let g = &db[o * plane..(o + 1) * plane];
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = weight.data()[((o * ci + i) * k + ky) * k + kx];
                        if wv != 0.0 {
                            accumulate_shifted(dst, g, w, h, pad - ky as isize, pad - kx as isize, wv);
                        }
                    }
                }
            }
        }
    });

    let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|b| {
            let xb = &x.data()[b * ci * plane..(b + 1) * ci * plane];
            let db = &dout.data()[b * co * plane..(b + 1) * co * plane];
            let mut dw = vec![0.0; weight.len()];
            let mut dbias = vec![0.0; co];
            for o in 0..co {
                let g = &db[o * plane..(o + 1) * plane];
                dbias[o] = g.iter().sum();
                for i in 0..ci {
                    let src = &xb[i * plane..(i + 1) * plane];
                    for ky in 0..k {
                        for kx in 0..k {
                            dw[((o * ci + i) * k + ky) * k + kx] =
                                dot_shifted(g, src, w, h, ky as isize - pad, kx as isize - pad);
                        }
                    }
                }
            }
            (dw, dbias)
        })
        .collect();
    let mut dw = vec![0.0; weight.len()];
    let mut dbias = vec![0.0; co];
    for (pw, pb) in partials {
        dw.iter_mut().zip(pw).for_each(|(a, b)| *a += b);
        dbias.iter_mut().zip(pb).for_each(|(a, b)| *a += b);
    }
    (dx, dw, dbias)
}
