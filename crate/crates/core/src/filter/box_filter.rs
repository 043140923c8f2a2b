//! Constant-time window sums via running column and row sums.
//!
//! Windows are clipped at the image border and averages are normalized by the
//! number of in-bounds pixels, so there is no padding anywhere.

use crate::error::{Error, Result};
use crate::image::Image;

#[inline]
fn clipped(center: usize, radius: usize, len: usize) -> (usize, usize) {
    (center.saturating_sub(radius), (center + radius + 1).min(len))
}

/// `|Ω_r(p) ∩ image|` for every pixel.
pub(crate) fn window_counts(width: usize, height: usize, radius: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let (y0, y1) = clipped(y, radius, height);
        for x in 0..width {
            let (x0, x1) = clipped(x, radius, width);
            out.push(((x1 - x0) * (y1 - y0)) as f64);
        }
    }
    out
}

/// Sliding vertical band of rows with running column sums.
///
/// Each row holds `k` interleaved values per pixel. Callers add rows as they
/// enter the band and subtract them as they leave; [`RowBox::means`] then
/// reads a whole row of clipped window means off a prefix sum of the column
/// sums. Only a few rows are ever live, which keeps large images in cache.
pub(crate) struct RowBox {
    width: usize,
    k: usize,
    radius: usize,
    cols: Vec<f64>,
    prefix: Vec<f64>,
}

impl RowBox {
    pub(crate) fn new(width: usize, k: usize, radius: usize) -> Self {
        RowBox { width, k, radius, cols: vec![0.0; width * k], prefix: vec![0.0; (width + 1) * k] }
    }

    pub(crate) fn add(&mut self, row: &[f64]) {
        self.cols.iter_mut().zip(row).for_each(|(c, v)| *c += v);
    }

    pub(crate) fn sub(&mut self, row: &[f64]) {
        self.cols.iter_mut().zip(row).for_each(|(c, v)| *c -= v);
    }

    /// Means for output row `y` of an image `height` rows tall, assuming the
    /// band currently holds exactly the in-bounds rows of that window.
    pub(crate) fn means(&mut self, y: usize, height: usize, out: &mut [f64]) {
        let k = self.k;
        for x in 0..self.width {
            for j in 0..k {
                self.prefix[(x + 1) * k + j] = self.prefix[x * k + j] + self.cols[x * k + j];
            }
        }
        let (y0, y1) = clipped(y, self.radius, height);
        let rows = (y1 - y0) as f64;
        for x in 0..self.width {
            let (x0, x1) = clipped(x, self.radius, self.width);
            let n = rows * (x1 - x0) as f64;
            for j in 0..k {
                out[x * k + j] = (self.prefix[x1 * k + j] - self.prefix[x0 * k + j]) / n;
            }
        }
    }
}

/// Window means of `K` planes at once, where `value(i)` yields the `K`
/// values at flat pixel index `i`. Derived planes such as `G·I` are formed
/// row by row and never stored. Cost is independent of `radius`.
pub(crate) fn box_means<const K: usize>(
    width: usize,
    height: usize,
    radius: usize,
    value: impl Fn(usize) -> [f64; K],
) -> [Vec<f64>; K] {
    let mut out: [Vec<f64>; K] = std::array::from_fn(|_| Vec::with_capacity(width * height));
    let mut band = RowBox::new(width, K, radius);
    let row = |y: usize| -> Vec<f64> { (0..width).flat_map(|x| value(y * width + x)).collect() };
    let mut means = vec![0.0; width * K];
    for y in 0..radius.min(height) {
        band.add(&row(y));
    }
    for y in 0..height {
        if y + radius < height {
            band.add(&row(y + radius));
        }
        if y > radius {
            band.sub(&row(y - radius - 1));
        }
        band.means(y, height, &mut means);
        for m in means.chunks_exact(K) {
            for j in 0..K {
                out[j].push(m[j]);
            }
        }
    }
    out
}

/// Window mean of one plane.
pub(crate) fn box_mean_plane(src: &[f64], width: usize, height: usize, radius: usize) -> Vec<f64> {
    let [m] = box_means(width, height, radius, |k| [src[k]]);
    m
}

/// Mean over the clipped square window of radius `zeta`, channel by channel.
pub fn box_mean(img: &Image, zeta: usize) -> Result<Image> {
    if zeta < 1 {
        return Err(Error::param("window radius must be at least 1"));
    }
    let (w, h) = (img.width(), img.height());
    let mut data = Vec::with_capacity(img.data().len());
    for c in 0..img.channels() {
        data.extend(box_mean_plane(img.plane(c), w, h, zeta));
    }
    Image::new(w, h, img.channels(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(img: &Image, r: usize) -> Image {
        let (w, h) = (img.width() as isize, img.height() as isize);
        let r = r as isize;
        Image::from_fn(img.width(), img.height(), |x, y| {
            let (mut s, mut n) = (0.0, 0.0);
            for dy in -r..=r {
                for dx in -r..=r {
                    let (xx, yy) = (x as isize + dx, y as isize + dy);
                    if xx >= 0 && yy >= 0 && xx < w && yy < h {
                        s += img.get(xx as usize, yy as usize, 0);
                        n += 1.0;
                    }
                }
            }
            s / n
        })
        .unwrap()
    }

    #[test]
    fn constant_is_preserved() {
        let img = Image::filled(9, 7, 1, 0.7).unwrap();
        for r in [1, 2, 5, 20] {
            let m = box_mean(&img, r).unwrap();
            assert!(m.data().iter().all(|v| (v - 0.7).abs() < 1e-12));
        }
    }

    #[test]
    fn impulse_response() {
        let mut img = Image::zeros(5, 5, 1).unwrap();
        img.set(2, 2, 0, 1.0);
        let m = box_mean(&img, 1).unwrap();
        for y in 0..5 {
            for x in 0..5 {
                let inside = (1..=3).contains(&x) && (1..=3).contains(&y);
                let want = if inside { 1.0 / 9.0 } else { 0.0 };
                assert!((m.get(x, y, 0) - want).abs() < 1e-15, "({x},{y})");
            }
        }
    }

    #[test]
    fn matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = Image::from_fn(16, 16, |_, _| 0.0).unwrap().map(|_| rng.gen::<f64>());
        let fast = box_mean(&img, 3).unwrap();
        let slow = brute_force(&img, 3);
        assert!(fast.max_abs_diff(&slow) < 1e-6);
    }

    #[test]
    fn rejects_zero_radius() {
        let img = Image::filled(3, 3, 1, 0.1).unwrap();
        assert!(box_mean(&img, 0).is_err());
    }

    #[test]
    fn counts_clip_at_borders() {
        let c = window_counts(4, 3, 1);
        assert_eq!(c[0], 4.0);
        assert_eq!(c[1], 6.0);
        assert_eq!(c[5], 9.0);
    }
}
