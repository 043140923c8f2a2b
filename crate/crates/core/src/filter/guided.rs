//! The guided filter family: plain (GIF), edge-aware weighted (WGIF), and the
//! improved weighted filter (iWGIF) that additionally aggregates overlapping
//! window fits by how well each one explains its own window.

use crate::error::{Error, Result};
use crate::filter::box_filter::RowBox;
use crate::filter::stats::{window_stats, WindowStats};
use crate::filter::weights::{aggregation_weight, aggregation_weights, edge_aware_weight};
use crate::filter::FilterParams;
use crate::image::Image;

/// Per-window linear fit `I ≈ a·G + b`.
#[derive(Debug, Clone)]
pub struct Coefficients {
    pub a: Image,
    pub b: Image,
}

/// Everything the iWGIF computes per window before aggregation.
#[derive(Debug, Clone)]
pub struct CoefficientField {
    pub a: Image,
    pub b: Image,
    pub gamma: Image,
    pub w: Image,
}

#[inline]
fn slope(gamma: f64, cov: f64, var_g: f64, lambda: f64) -> f64 {
    gamma * cov / (gamma * var_g + lambda)
}

#[inline]
fn fit_residual(var_i: f64, a: f64, var_g: f64, gamma: f64, lambda: f64) -> f64 {
    (var_i - a * a * (var_g + 2.0 * lambda / gamma)).max(0.0)
}

/// Ridge solution of the weighted window cost:
/// `a = Γ·cov / (Γ·σ²_G + λ)`, `b = μ_I − a·μ_G`.
///
/// `gamma` is single channel and shared by all channels of `stats`.
pub fn solve_coefficients(stats: &WindowStats, gamma: &Image, lambda: f64) -> Result<Coefficients> {
    if !(lambda > 0.0) {
        return Err(Error::param("lambda must be positive"));
    }
    if !gamma.same_size(&stats.mu_g) || gamma.channels() != 1 {
        return Err(Error::shape("edge-aware weight map does not match window statistics"));
    }
    let n = gamma.pixel_count();
    let ch = stats.mu_g.channels();
    let mut a = Vec::with_capacity(n * ch);
    let mut b = Vec::with_capacity(n * ch);
    for c in 0..ch {
        let (cov, var) = (stats.cov_ig.plane(c), stats.var_g.plane(c));
        let (mu_i, mu_g) = (stats.mu_i.plane(c), stats.mu_g.plane(c));
        for k in 0..n {
            let ak = slope(gamma.data()[k], cov[k], var[k], lambda);
            a.push(ak);
            b.push(mu_i[k] - ak * mu_g[k]);
        }
    }
    let (w, h) = (gamma.width(), gamma.height());
    Ok(Coefficients { a: Image::new(w, h, ch, a)?, b: Image::new(w, h, ch, b)? })
}

/// Mean squared residual of each window's fit, in closed form:
/// `σ²_I − a²·(σ²_G + 2λ/Γ)`, clamped below at zero.
///
/// This only holds for the `a` produced by [`solve_coefficients`] with the
/// same `gamma` and `lambda`.
pub fn residual_mse(stats: &WindowStats, a: &Image, gamma: &Image, lambda: f64) -> Result<Image> {
    if !a.same_shape(&stats.var_i) || !gamma.same_size(a) || gamma.channels() != 1 {
        return Err(Error::shape("coefficients do not match window statistics"));
    }
    let n = a.pixel_count();
    let mut out = Vec::with_capacity(n * a.channels());
    for c in 0..a.channels() {
        let (ac, vi, vg) = (a.plane(c), stats.var_i.plane(c), stats.var_g.plane(c));
        for k in 0..n {
            out.push(fit_residual(vi[k], ac[k], vg[k], gamma.data()[k], lambda));
        }
    }
    Image::new(a.width(), a.height(), a.channels(), out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Gif,
    Wgif,
    Iwgif,
}

impl std::str::FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gif" => Ok(FilterKind::Gif),
            "wgif" => Ok(FilterKind::Wgif),
            "iwgif" => Ok(FilterKind::Iwgif),
            other => Err(Error::param(format!("unknown filter '{other}' (gif, wgif, iwgif)"))),
        }
    }
}

/// Window fits for one run of the chosen filter on single-channel planes.
fn fit_windows(input: &Image, guide: &Image, params: &FilterParams, kind: FilterKind) -> Result<(WindowStats, CoefficientField)> {
    let stats = window_stats(input, guide, params.zeta)?;
    let gamma = match kind {
        FilterKind::Gif => Image::filled(guide.width(), guide.height(), 1, 1.0)?,
        FilterKind::Wgif | FilterKind::Iwgif => edge_aware_weight(guide, params.epsilon)?,
    };
    let Coefficients { a, b } = solve_coefficients(&stats, &gamma, params.lambda)?;
    let w = match kind {
        FilterKind::Iwgif => {
            aggregation_weights(&residual_mse(&stats, &a, &gamma, params.lambda)?, params.eta)?
        }
        _ => Image::filled(guide.width(), guide.height(), 1, 1.0)?,
    };
    Ok((stats, CoefficientField { a, b, gamma, w }))
}

/// Computes the window fits and aggregation weights of the iWGIF on a
/// single-channel pair (color inputs are reduced to luminance).
pub fn iwgif_coefficients(input: &Image, guide: &Image, params: &FilterParams) -> Result<CoefficientField> {
    check_inputs(input, guide, params)?;
    Ok(fit_windows(&input.luminance(), &guide.luminance(), params, FilterKind::Iwgif)?.1)
}

fn check_inputs(input: &Image, guide: &Image, params: &FilterParams) -> Result<()> {
    params.validate()?;
    if !input.same_shape(guide) {
        return Err(Error::shape(format!(
            "input {}x{}x{} vs guidance {}x{}x{}",
            input.width(),
            input.height(),
            input.channels(),
            guide.width(),
            guide.height(),
            guide.channels()
        )));
    }
    Ok(())
}

/// Runs any filter of the family without clamping the output.
///
/// Color inputs share one guidance (luminance) and one slope field computed
/// from the luminance pair; intercepts are per channel, `b_c = μ_{I_c} − a·μ_G`.
///
/// The image is processed in a single top-to-bottom sweep: window statistics
/// for row `y` come from one sliding band, the per-window fit and weight of
/// that row go into a ring of `2ζ + 2` rows, and a second band aggregates
/// the ring into output row `y − ζ`. Apart from the edge-aware weight, which
/// needs a global sum, nothing image-sized is held besides input and output.
pub fn guided_filter_unclamped(input: &Image, guide: &Image, params: &FilterParams, kind: FilterKind) -> Result<Image> {
    check_inputs(input, guide, params)?;
    let (w, h, ch) = (input.width(), input.height(), input.channels());
    let (r, lambda, eta) = (params.zeta, params.lambda, params.eta);
    let g = guide.luminance();
    let lum = input.luminance();
    let (gd, id) = (g.data(), lum.data());
    let gamma = match kind {
        FilterKind::Gif => None,
        FilterKind::Wgif | FilterKind::Iwgif => Some(edge_aware_weight(&g, params.epsilon)?),
    };

    // Per pixel: G, I, G·I, G², I², then every input channel when in color.
    let extra = if ch == 1 { 0 } else { ch };
    let k1 = 5 + extra;
    // Per window: W, W·a, W·b_c.
    let k2 = 2 + ch;
    let stat_row = |y: usize, buf: &mut Vec<f64>| {
        buf.clear();
        for i in y * w..(y + 1) * w {
            let (gv, iv) = (gd[i], id[i]);
            buf.extend_from_slice(&[gv, iv, gv * iv, gv * gv, iv * iv]);
            for c in 0..extra {
                buf.push(input.plane(c)[i]);
            }
        }
    };

    let mut stats_band = RowBox::new(w, k1, r);
    let mut agg_band = RowBox::new(w, k2, r);
    let ring_rows = 2 * r + 2;
    let mut ring = vec![0.0; ring_rows * w * k2];
    let mut buf = Vec::with_capacity(w * k1);
    let mut stats = vec![0.0; w * k1];
    let mut sums = vec![0.0; w * k2];
    let mut out = vec![0.0; w * h * ch];

    for y in 0..r.min(h) {
        stat_row(y, &mut buf);
        stats_band.add(&buf);
    }
    for y in 0..h + r {
        if y < h {
            if y + r < h {
                stat_row(y + r, &mut buf);
                stats_band.add(&buf);
            }
            if y > r {
                stat_row(y - r - 1, &mut buf);
                stats_band.sub(&buf);
            }
            stats_band.means(y, h, &mut stats);
            let slot = &mut ring[(y % ring_rows) * w * k2..][..w * k2];
            for x in 0..w {
                let s = &stats[x * k1..(x + 1) * k1];
                let (mg, mi) = (s[0], s[1]);
                let var_g = (s[3] - mg * mg).max(0.0);
                let gm = gamma.as_ref().map_or(1.0, |gm| gm.data()[y * w + x]);
                let a = slope(gm, s[2] - mg * mi, var_g, lambda);
                let wt = match kind {
                    FilterKind::Iwgif => {
                        aggregation_weight(fit_residual((s[4] - mi * mi).max(0.0), a, var_g, gm, lambda), eta)
                    }
                    _ => 1.0,
                };
                let o = &mut slot[x * k2..(x + 1) * k2];
                o[0] = wt;
                o[1] = wt * a;
                if ch == 1 {
                    o[2] = wt * (mi - a * mg);
                } else {
                    for c in 0..ch {
                        o[2 + c] = wt * (s[5 + c] - a * mg);
                    }
                }
            }
            agg_band.add(slot);
        }
        if y >= r {
            let yo = y - r;
            if yo > r {
                let old = (yo - r - 1) % ring_rows;
                agg_band.sub(&ring[old * w * k2..][..w * k2]);
            }
            agg_band.means(yo, h, &mut sums);
            for x in 0..w {
                let s = &sums[x * k2..(x + 1) * k2];
                let k = yo * w + x;
                for c in 0..ch {
                    out[c * w * h + k] = (s[1] * gd[k] + s[2 + c]) / s[0];
                }
            }
        }
    }
    Image::new(w, h, ch, out)
}

pub fn gif(input: &Image, guide: &Image, zeta: usize, lambda: f64) -> Result<Image> {
    let params = FilterParams { zeta, lambda, ..FilterParams::default() };
    Ok(guided_filter_unclamped(input, guide, &params, FilterKind::Gif)?.clamped())
}

pub fn wgif(input: &Image, guide: &Image, zeta: usize, lambda: f64, epsilon: f64) -> Result<Image> {
    let params = FilterParams { zeta, lambda, epsilon, ..FilterParams::default() };
    Ok(guided_filter_unclamped(input, guide, &params, FilterKind::Wgif)?.clamped())
}

pub fn iwgif(input: &Image, guide: &Image, params: &FilterParams) -> Result<Image> {
    Ok(iwgif_unclamped(input, guide, params)?.clamped())
}

pub fn iwgif_unclamped(input: &Image, guide: &Image, params: &FilterParams) -> Result<Image> {
    guided_filter_unclamped(input, guide, params, FilterKind::Iwgif)
}

/// Self-guided base/detail split of an image.
#[derive(Debug, Clone)]
pub struct Decomposition {
    /// Unclamped iWGIF output.
    pub base: Image,
    /// Signed high-frequency residual `I − base`.
    pub detail: Image,
}

pub fn decompose(input: &Image, params: &FilterParams) -> Result<Decomposition> {
    let base = iwgif_unclamped(input, input, params)?;
    let detail = input.zip_map(&base, |i, b| i - b)?;
    Ok(Decomposition { base, detail })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::stats::window_stats;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, |_, _| 0.0).unwrap().map(|_| rng.gen::<f64>())
    }

    fn ramp(w: usize, h: usize) -> Image {
        // Non-constant in every 3x3 window.
        Image::from_fn(w, h, |x, y| 0.05 * x as f64 + 0.031 * y as f64 + 0.01 * ((x * y) % 3) as f64).unwrap()
    }

    #[test]
    fn constant_pair_fits_flat() {
        let c = Image::filled(6, 6, 1, 0.4).unwrap();
        let s = window_stats(&c, &c, 2).unwrap();
        let gamma = Image::filled(6, 6, 1, 1.0).unwrap();
        let co = solve_coefficients(&s, &gamma, 1e-3).unwrap();
        assert!(co.a.data().iter().all(|v| v.abs() < 1e-12));
        assert!(co.b.data().iter().all(|v| (v - 0.4).abs() < 1e-12));
        let r = residual_mse(&s, &co.a, &gamma, 1e-3).unwrap();
        assert!(r.data().iter().all(|v| *v < 1e-15));
    }

    #[test]
    fn exact_linear_relation_is_recovered() {
        let g = ramp(9, 9);
        let i = g.map(|v| 2.0 * v + 0.1);
        let s = window_stats(&i, &g, 1).unwrap();
        let gamma = edge_aware_weight(&g, 1e-4).unwrap();
        let co = solve_coefficients(&s, &gamma, 1e-12).unwrap();
        for k in 0..81 {
            if s.var_g.data()[k] > 1e-6 {
                assert!((co.a.data()[k] - 2.0).abs() < 1e-6);
                assert!((co.b.data()[k] - 0.1).abs() < 1e-6);
            }
        }
        let r = residual_mse(&s, &co.a, &gamma, 1e-12).unwrap();
        assert!(r.data().iter().all(|v| *v <= 1e-8));
    }

    #[test]
    fn ridge_matches_per_window_closed_form() {
        let (i, g) = (random(8, 8, 1), random(8, 8, 2));
        let lambda = 1e-4;
        let gamma = edge_aware_weight(&g, 1e-4).unwrap();
        let s = window_stats(&i, &g, 2).unwrap();
        let co = solve_coefficients(&s, &gamma, lambda).unwrap();
        for y in 0..8usize {
            for x in 0..8usize {
                // Minimize Σ Γ(aG+b−I)² + λa² via the 2x2 normal equations.
                let (mut sg, mut si, mut sgg, mut sgi, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for yy in y.saturating_sub(2)..(y + 3).min(8) {
                    for xx in x.saturating_sub(2)..(x + 3).min(8) {
                        let (gv, iv) = (g.get(xx, yy, 0), i.get(xx, yy, 0));
                        sg += gv;
                        si += iv;
                        sgg += gv * gv;
                        sgi += gv * iv;
                        n += 1.0;
                    }
                }
                let gm = gamma.get(x, y, 0);
                let (m11, m12, m22) = (gm * sgg + n * lambda, gm * sg, gm * n);
                let (r1, r2) = (gm * sgi, gm * si);
                let det = m11 * m22 - m12 * m12;
                let a = (r1 * m22 - m12 * r2) / det;
                let b = (m11 * r2 - m12 * r1) / det;
                assert!((co.a.get(x, y, 0) - a).abs() < 1e-6);
                assert!((co.b.get(x, y, 0) - b).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn constant_image_passes_through_every_variant() {
        let c = Image::filled(12, 10, 1, 0.37).unwrap();
        let p = FilterParams::default();
        for out in [
            iwgif(&c, &c, &p).unwrap(),
            gif(&c, &c, 3, 1e-3).unwrap(),
            wgif(&c, &c, 3, 1e-3, 1e-4).unwrap(),
        ] {
            assert!(out.max_abs_diff(&c) < 1e-12);
        }
        let rgb = Image::new(4, 4, 3, [0.2; 16].iter().chain(&[0.5; 16]).chain(&[0.9; 16]).copied().collect()).unwrap();
        let out = iwgif(&rgb, &rgb, &FilterParams { zeta: 1, ..p }).unwrap();
        assert!(out.max_abs_diff(&rgb) < 1e-12);
    }

    #[test]
    fn exact_linear_relation_reproduces_input() {
        let g = ramp(14, 12);
        let i = g.map(|v| 2.0 * v + 0.1);
        for eta in [0.01, 0.05, 1.0] {
            let p = FilterParams { zeta: 1, lambda: 1e-12, epsilon: 1e-4, eta };
            let out = iwgif_unclamped(&i, &g, &p).unwrap();
            assert!(out.max_abs_diff(&i) < 1e-5, "eta={eta}");
        }
    }

    #[test]
    fn heavy_regularization_gives_double_mean() {
        let i = random(10, 10, 9);
        let out = gif(&i, &i, 2, 1e6).unwrap();
        let mu = crate::filter::box_mean(&i, 2).unwrap();
        let double = crate::filter::box_mean(&mu, 2).unwrap();
        assert!(out.max_abs_diff(&double) < 1e-4);
    }

    #[test]
    fn decomposition_reconstructs() {
        let i = random(13, 11, 4);
        let d = decompose(&i, &FilterParams { zeta: 2, ..FilterParams::default() }).unwrap();
        let back = d.base.zip_map(&d.detail, |a, b| a + b).unwrap();
        assert!(back.max_abs_diff(&i) <= 1e-12);
        let c = Image::filled(8, 8, 3, 0.6).unwrap();
        let d = decompose(&c, &FilterParams::default()).unwrap();
        assert!(d.detail.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn rejects_bad_input() {
        let i = random(5, 5, 0);
        let g = random(5, 6, 0);
        assert!(iwgif(&i, &g, &FilterParams::default()).is_err());
        let bad = FilterParams { lambda: 0.0, ..FilterParams::default() };
        assert!(iwgif(&i, &i, &bad).is_err());
        assert!(matches!("bilateral".parse::<FilterKind>(), Err(Error::InvalidParam(_))));
    }
}
