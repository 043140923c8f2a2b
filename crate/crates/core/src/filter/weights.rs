use crate::error::{Error, Result};
use crate::filter::box_filter::box_means;
use crate::image::Image;

/// Floor added to every aggregation weight so no window is ever discarded.
pub const WEIGHT_FLOOR: f64 = 0.001;

/// Edge-aware regularization weight from 3x3 local variances of the guidance.
///
/// `Γ(p′) = (σ²(p′) + ε) · (1/M) Σ_p 1 / (σ²(p) + ε)`, i.e. each pixel's
/// variance relative to the harmonic-style average over the whole image. The
/// sum is shared by every pixel, so the map costs O(M). Color guidance is
/// reduced to luminance first; the result is always single channel.
pub fn edge_aware_weight(guide: &Image, epsilon: f64) -> Result<Image> {
    if !(epsilon > 0.0) {
        return Err(Error::param("epsilon must be positive"));
    }
    let g = guide.luminance();
    let (w, h) = (g.width(), g.height());
    let gd = g.data();
    let [mean, mean_sq] = box_means(w, h, 1, |k| [gd[k], gd[k] * gd[k]]);
    let shifted: Vec<f64> = mean
        .iter()
        .zip(&mean_sq)
        .map(|(m, m2)| (m2 - m * m).max(0.0) + epsilon)
        .collect();
    let inv_mean = shifted.iter().map(|v| 1.0 / v).sum::<f64>() / shifted.len() as f64;
    Image::new(w, h, 1, shifted.into_iter().map(|v| v * inv_mean).collect())
}

/// `W = exp(−residual / η) + 0.001`.
pub fn aggregation_weights(residual: &Image, eta: f64) -> Result<Image> {
    if !(eta > 0.0) {
        return Err(Error::param("eta must be positive"));
    }
    Ok(residual.map(|r| aggregation_weight(r, eta)))
}

#[inline]
pub(crate) fn aggregation_weight(residual: f64, eta: f64) -> f64 {
    (-residual.max(0.0) / eta).exp() + WEIGHT_FLOOR
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_guidance_gives_unit_weight() {
        let g = Image::filled(7, 5, 1, 0.3).unwrap();
        let gamma = edge_aware_weight(&g, 1e-4).unwrap();
        assert!(gamma.data().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn step_edge_is_weighted_up() {
        let g = Image::from_fn(16, 16, |x, _| if x < 8 { 0.0 } else { 1.0 }).unwrap();
        let gamma = edge_aware_weight(&g, 1e-4).unwrap();
        for y in 0..16 {
            assert!(gamma.get(7, y, 0) > gamma.get(2, y, 0));
            assert!(gamma.get(8, y, 0) > gamma.get(13, y, 0));
        }
    }

    #[test]
    fn matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let g = Image::from_fn(8, 8, |_, _| 0.0).unwrap().map(|_| rng.gen::<f64>());
        let eps = 1e-4;
        let var3 = |x: usize, y: usize| {
            let mut v = vec![];
            for yy in y.saturating_sub(1)..(y + 2).min(8) {
                for xx in x.saturating_sub(1)..(x + 2).min(8) {
                    v.push(g.get(xx, yy, 0));
                }
            }
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / v.len() as f64
        };
        let fast = edge_aware_weight(&g, eps).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let mut s = 0.0;
                for q in 0..64 {
                    s += (var3(x, y) + eps) / (var3(q % 8, q / 8) + eps);
                }
                assert!((fast.get(x, y, 0) - s / 64.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn aggregation_closed_forms() {
        let eta = 0.05;
        let r = Image::new(3, 1, 1, vec![0.0, 1e6 * eta, eta * 2f64.ln()]).unwrap();
        let w = aggregation_weights(&r, eta).unwrap();
        assert!((w.data()[0] - 1.001).abs() < 1e-12);
        assert!((w.data()[1] - 0.001).abs() < 1e-9);
        assert!((w.data()[2] - 0.501).abs() < 1e-9);
        assert!(aggregation_weights(&r, 0.0).is_err());
    }
}
