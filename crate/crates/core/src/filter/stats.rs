use crate::error::{Error, Result};
use crate::filter::box_filter::{box_means, window_counts};
use crate::image::Image;

/// Local first and second moments of an input/guidance pair over square
/// windows of one radius. Every field has the channel count of the inputs.
#[derive(Debug, Clone)]
pub struct WindowStats {
    pub zeta: usize,
    pub mu_g: Image,
    pub mu_i: Image,
    pub mu_gi: Image,
    /// Clamped at zero; `E[G²] − E[G]²` can dip slightly negative.
    pub var_g: Image,
    pub var_i: Image,
    pub cov_ig: Image,
    /// In-bounds cardinality of each window (single channel).
    pub window_count: Image,
}

pub fn window_stats(input: &Image, guide: &Image, zeta: usize) -> Result<WindowStats> {
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
    if zeta < 1 {
        return Err(Error::param("window radius must be at least 1"));
    }
    let (w, h, ch) = (input.width(), input.height(), input.channels());
    let n = w * h;
    let mut mu_g = Vec::with_capacity(n * ch);
    let mut mu_i = Vec::with_capacity(n * ch);
    let mut mu_gi = Vec::with_capacity(n * ch);
    let mut var_g = Vec::with_capacity(n * ch);
    let mut var_i = Vec::with_capacity(n * ch);
    let mut cov = Vec::with_capacity(n * ch);
    for c in 0..ch {
        let (ip, gp) = (input.plane(c), guide.plane(c));
        let [mg, mi, mgi, mgg, mii] = box_means(w, h, zeta, |k| {
            let (i, g) = (ip[k], gp[k]);
            [g, i, g * i, g * g, i * i]
        });
        for k in 0..n {
            var_g.push((mgg[k] - mg[k] * mg[k]).max(0.0));
            var_i.push((mii[k] - mi[k] * mi[k]).max(0.0));
            cov.push(mgi[k] - mg[k] * mi[k]);
        }
        mu_g.extend(mg);
        mu_i.extend(mi);
        mu_gi.extend(mgi);
    }
    Ok(WindowStats {
        zeta,
        mu_g: Image::new(w, h, ch, mu_g)?,
        mu_i: Image::new(w, h, ch, mu_i)?,
        mu_gi: Image::new(w, h, ch, mu_gi)?,
        var_g: Image::new(w, h, ch, var_g)?,
        var_i: Image::new(w, h, ch, var_i)?,
        cov_ig: Image::new(w, h, ch, cov)?,
        window_count: Image::new(w, h, 1, window_counts(w, h, zeta))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, |_, _| 0.0).unwrap().map(|_| rng.gen::<f64>())
    }

    #[test]
    fn constant_pair() {
        let c = Image::filled(6, 6, 1, 0.5).unwrap();
        let s = window_stats(&c, &c, 2).unwrap();
        for img in [&s.var_g, &s.var_i, &s.cov_ig] {
            assert!(img.data().iter().all(|v| v.abs() < 1e-12));
        }
        for img in [&s.mu_g, &s.mu_i] {
            assert!(img.data().iter().all(|v| (v - 0.5).abs() < 1e-12));
        }
    }

    #[test]
    fn self_covariance_is_variance() {
        let g = random(10, 9, 3);
        let s = window_stats(&g, &g, 2).unwrap();
        assert!(s.cov_ig.max_abs_diff(&s.var_g) < 1e-9);
    }

    #[test]
    fn covariance_definition_holds() {
        let (i, g) = (random(7, 8, 1), random(7, 8, 2));
        let s = window_stats(&i, &g, 1).unwrap();
        for k in 0..56 {
            let want = s.mu_gi.data()[k] - s.mu_g.data()[k] * s.mu_i.data()[k];
            assert_eq!(s.cov_ig.data()[k], want);
        }
    }

    #[test]
    fn matches_brute_force() {
        let (i, g) = (random(8, 8, 4), random(8, 8, 5));
        let s = window_stats(&i, &g, 2).unwrap();
        for y in 0..8usize {
            for x in 0..8usize {
                let mut vals = vec![];
                for yy in y.saturating_sub(2)..(y + 3).min(8) {
                    for xx in x.saturating_sub(2)..(x + 3).min(8) {
                        vals.push((i.get(xx, yy, 0), g.get(xx, yy, 0)));
                    }
                }
                let n = vals.len() as f64;
                let mi = vals.iter().map(|v| v.0).sum::<f64>() / n;
                let mg = vals.iter().map(|v| v.1).sum::<f64>() / n;
                let vg = vals.iter().map(|v| (v.1 - mg).powi(2)).sum::<f64>() / n;
                let vi = vals.iter().map(|v| (v.0 - mi).powi(2)).sum::<f64>() / n;
                let cv = vals.iter().map(|v| (v.0 - mi) * (v.1 - mg)).sum::<f64>() / n;
                let k = y * 8 + x;
                assert!((s.mu_i.data()[k] - mi).abs() < 1e-6);
                assert!((s.mu_g.data()[k] - mg).abs() < 1e-6);
                assert!((s.var_g.data()[k] - vg).abs() < 1e-6);
                assert!((s.var_i.data()[k] - vi).abs() < 1e-6);
                assert!((s.cov_ig.data()[k] - cv).abs() < 1e-6);
                assert_eq!(s.window_count.data()[k], n);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let err = window_stats(&random(4, 4, 0), &random(4, 5, 0), 1).unwrap_err();
        assert!(err.to_string().contains("guidance/input shape mismatch"));
    }
}
