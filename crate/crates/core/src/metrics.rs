//! Full-reference quality metrics.
//!
//! PSNR uses peak 1.0 over all channels. SSIM follows the usual Wang et al.
//! configuration: 11x11 Gaussian window with σ = 1.5, `C1 = 0.01²`,
//! `C2 = 0.03²`, averaged over all window positions that fit inside the image,
//! and computed on luminance for color inputs.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::image::Image;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn check_shapes(a: &Image, b: &Image) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(Error::shape(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )))
    }
}

/// Peak signal-to-noise ratio in dB. Identical images give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    check_shapes(a, b)?;
    let sse: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    if sse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let mse = sse / a.data().len() as f64;
    Ok(-10.0 * mse.log10())
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian filtering keeping only positions where the window fits.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w + 1 - n, h + 1 - n);
    let mut horiz = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            horiz[y * ow + x] = k.iter().zip(&row[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|j| k[j] * horiz[(y + j) * ow + x]).sum();
        }
    }
    out
}

/// Mean structural similarity in `[-1, 1]`.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_shapes(a, b)?;
    if a.width().min(a.height()) < SSIM_WINDOW {
        return Err(Error::ImageTooSmall(format!(
            "SSIM needs both dimensions >= {SSIM_WINDOW}, got {}x{}",
            a.width(),
            a.height()
        )));
    }
    let (x, y) = (a.luminance(), b.luminance());
    let (w, h) = (x.width(), x.height());
    let k = gaussian_kernel();
    let xx: Vec<f64> = x.data().iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.data().iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
    let mx = filter_valid(x.data(), w, h, &k);
    let my = filter_valid(y.data(), w, h, &k);
    let mxx = filter_valid(&xx, w, h, &k);
    let myy = filter_valid(&yy, w, h, &k);
    let mxy = filter_valid(&xy, w, h, &k);
    let mut total = 0.0;
    for i in 0..mx.len() {
        let (ux, uy) = (mx[i], my[i]);
        let vx = mxx[i] - ux * ux;
        let vy = myy[i] - uy * uy;
        let cxy = mxy[i] - ux * uy;
        total += ((2.0 * ux * uy + C1) * (2.0 * cxy + C2)) / ((ux * ux + uy * uy + C1) * (vx + vy + C2));
    }
    Ok((total / mx.len() as f64).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub name: String,
    pub psnr_db: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub per_image: Vec<MetricRow>,
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
}

fn format_db(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v:.6}")
    }
}

impl MetricReport {
    pub fn from_rows(per_image: Vec<MetricRow>) -> Self {
        let n = per_image.len().max(1) as f64;
        let mean_psnr_db = per_image.iter().map(|r| r.psnr_db).sum::<f64>() / n;
        let mean_ssim = per_image.iter().map(|r| r.ssim).sum::<f64>() / n;
        MetricReport { per_image, mean_psnr_db, mean_ssim }
    }

    /// CSV with header `name,psnr_db,ssim`, one row per image and a closing
    /// `mean` row. Infinite PSNR is written as `inf`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,psnr_db,ssim\n");
        for r in &self.per_image {
            let _ = writeln!(s, "{},{},{:.6}", r.name, format_db(r.psnr_db), r.ssim);
        }
        let _ = writeln!(s, "mean,{},{:.6}", format_db(self.mean_psnr_db), self.mean_ssim);
        s
    }
}
