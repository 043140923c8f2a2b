//! Additive rain model `I = B + S`, synthetic data, and paired dataset I/O.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;

/// Parameters of the synthetic streak renderer.
#[derive(Debug, Clone, PartialEq)]
pub struct StreakParams {
    pub count: usize,
    /// Mean fall angle in degrees from vertical.
    pub angle_deg: f64,
    pub angle_jitter_deg: f64,
    pub length_px: f64,
    pub length_jitter_px: f64,
    pub width_px: f64,
    /// Peak additive brightness.
    pub intensity: f64,
    pub seed: u64,
}

impl Default for StreakParams {
    fn default() -> Self {
        StreakParams {
            count: 100,
            angle_deg: 15.0,
            angle_jitter_deg: 5.0,
            length_px: 12.0,
            length_jitter_px: 4.0,
            width_px: 1.2,
            intensity: 0.4,
            seed: 7,
        }
    }
}

impl StreakParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.intensity) {
            return Err(Error::param("streak intensity must lie in [0, 1]"));
        }
        if self.angle_jitter_deg < 0.0 || self.length_jitter_px < 0.0 {
            return Err(Error::param("streak jitters must be non-negative"));
        }
        if !(self.width_px > 0.0) || !(self.length_px > 0.0) {
            return Err(Error::param("streak width and length must be positive"));
        }
        Ok(())
    }
}

/// `I = clamp(B + S, 0, 1)`. A single-channel `S` is added to every channel.
pub fn compose_rainy(background: &Image, streaks: &Image) -> Result<Image> {
    if !background.same_size(streaks) || (streaks.channels() != 1 && streaks.channels() != background.channels()) {
        return Err(Error::shape("streak map does not match background"));
    }
    if streaks.data().iter().any(|&v| v < 0.0) {
        return Err(Error::param("streak map must be non-negative"));
    }
    let mut out = background.clone();
    for c in 0..background.channels() {
        let s = streaks.plane(if streaks.channels() == 1 { 0 } else { c });
        for (v, sv) in out.plane_mut(c).iter_mut().zip(s) {
            *v = (*v + sv).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

fn segment_distance(px: f64, py: f64, ax: f64, ay: f64, bx: f64, by: f64) -> f64 {
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 { (((px - ax) * dx + (py - ay) * dy) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let (cx, cy) = (ax + t * dx, ay + t * dy);
    ((px - cx).powi(2) + (py - cy).powi(2)).sqrt()
}

/// Renders `count` anti-aliased line segments with a Gaussian cross-section.
///
/// Overlapping streaks combine by maximum, so the map never exceeds
/// `intensity`. The output is single channel and deterministic in `seed`.
pub fn synth_streaks(width: usize, height: usize, params: &StreakParams) -> Result<Image> {
    params.validate()?;
    let mut map = Image::zeros(width, height, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let sigma = params.width_px / 2.0;
    let reach = 3.0 * sigma + 1.0;
    for _ in 0..params.count {
        let cx = rng.gen_range(-0.1..1.1) * width as f64;
        let cy = rng.gen_range(-0.1..1.1) * height as f64;
        let angle = (params.angle_deg + params.angle_jitter_deg * rng.gen_range(-1.0..=1.0)).to_radians();
        let len = (params.length_px + params.length_jitter_px * rng.gen_range(-1.0..=1.0)).max(1.0);
        let peak = params.intensity * rng.gen_range(0.6..=1.0);
        // Angle measured from vertical: streaks fall down and slightly sideways.
        let (hx, hy) = (0.5 * len * angle.sin(), 0.5 * len * angle.cos());
        let (ax, ay, bx, by) = (cx - hx, cy - hy, cx + hx, cy + hy);
        let x0 = (ax.min(bx) - reach).floor().max(0.0) as usize;
        let y0 = (ay.min(by) - reach).floor().max(0.0) as usize;
        let x1 = ((ax.max(bx) + reach).ceil().max(0.0) as usize).min(width);
        let y1 = ((ay.max(by) + reach).ceil().max(0.0) as usize).min(height);
        for y in y0..y1 {
            for x in x0..x1 {
                let d = segment_distance(x as f64 + 0.5, y as f64 + 0.5, ax, ay, bx, by);
                let v = peak * (-d * d / (2.0 * sigma * sigma)).exp();
                if v > map.get(x, y, 0) {
                    map.set(x, y, 0, v);
                }
            }
        }
    }
    Ok(map)
}

/// A smooth synthetic background: a color gradient with a few soft-edged
/// discs and boxes. Used to build toy paired datasets.
pub fn synth_clean_scene(width: usize, height: usize, seed: u64) -> Result<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c1ea_0000_0000);
    let base: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.15..0.55));
    let grad: [(f64, f64); 3] = std::array::from_fn(|_| (rng.gen_range(-0.25..0.25), rng.gen_range(-0.25..0.25)));
    struct Shape {
        cx: f64,
        cy: f64,
        r: f64,
        disc: bool,
        color: [f64; 3],
    }
    let shapes: Vec<Shape> = (0..rng.gen_range(2..5))
        .map(|_| Shape {
            cx: rng.gen_range(0.0..1.0) * width as f64,
            cy: rng.gen_range(0.0..1.0) * height as f64,
            r: rng.gen_range(0.1..0.3) * width.min(height) as f64,
            disc: rng.gen_bool(0.5),
            color: std::array::from_fn(|_| rng.gen_range(0.05..0.6)),
        })
        .collect();
    let n = width * height;
    let mut data = vec![0.0; 3 * n];
    for y in 0..height {
        for x in 0..width {
            let (u, v) = (x as f64 / width as f64, y as f64 / height as f64);
            let mut px: [f64; 3] = std::array::from_fn(|c| base[c] + grad[c].0 * u + grad[c].1 * v);
            for s in &shapes {
                let (dx, dy) = (x as f64 - s.cx, y as f64 - s.cy);
                let d = if s.disc { (dx * dx + dy * dy).sqrt() - s.r } else { dx.abs().max(dy.abs()) - s.r };
                let alpha = 1.0 / (1.0 + (d / 1.5).exp());
                for c in 0..3 {
                    px[c] = (1.0 - alpha) * px[c] + alpha * s.color[c];
                }
            }
            for c in 0..3 {
                data[c * n + y * width + x] = px[c].clamp(0.0, 1.0);
            }
        }
    }
    Image::new(width, height, 3, data)
}

/// A rainy image and its rain-free ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    pub name: String,
    pub rainy: Image,
    pub clean: Image,
}

impl PairedSample {
    pub fn new(name: impl Into<String>, rainy: Image, clean: Image) -> Result<Self> {
        if !rainy.same_shape(&clean) {
            return Err(Error::shape("rainy and clean images differ in shape"));
        }
        Ok(PairedSample { name: name.into(), rainy, clean })
    }
}

/// Builds `count` seeded toy pairs named `pair_000.png`, `pair_001.png`, ...
///
/// Both images are quantized to 8 bits, so writing them as PNG and reading
/// them back is lossless.
pub fn synth_pairs(count: usize, width: usize, height: usize, streaks: &StreakParams, seed: u64) -> Result<Vec<PairedSample>> {
    (0..count)
        .map(|k| {
            let scene_seed = seed.wrapping_mul(1_000_003).wrapping_add(k as u64);
            let clean = synth_clean_scene(width, height, scene_seed)?;
            let params = StreakParams { seed: streaks.seed.wrapping_add(scene_seed), ..streaks.clone() };
            let rainy = compose_rainy(&clean, &synth_streaks(width, height, &params)?)?;
            PairedSample::new(format!("pair_{k:03}.png"), rainy.quantized(), clean.quantized())
        })
        .collect()
}

/// How rainy filenames map to clean filenames.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum PairingRule {
    /// `x.png` pairs with `x.png`.
    #[default]
    SameStem,
    /// Strip everything from the last occurrence of the separator in the rainy
    /// stem, so `x_1.png` pairs with `x.png`.
    StripSuffix(char),
}

impl PairingRule {
    fn clean_stem<'a>(&self, rainy_stem: &'a str) -> &'a str {
        match self {
            PairingRule::SameStem => rainy_stem,
            PairingRule::StripSuffix(sep) => rainy_stem.rfind(*sep).map_or(rainy_stem, |i| &rainy_stem[..i]),
        }
    }
}

fn is_image(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref(),
        Some("png" | "ppm")
    )
}

fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_image(&path) {
            files.push(path);
        }
    }
    files.sort_by(|a, b| a.file_name().cmp(&b.file_name()));
    Ok(files)
}

/// Loads all rainy/clean pairs, sorted by rainy filename.
pub fn load_pairs(rainy_dir: &Path, clean_dir: &Path, rule: &PairingRule) -> Result<Vec<PairedSample>> {
    let clean_files = list_images(clean_dir)?;
    let mut jobs = Vec::new();
    for rainy in list_images(rainy_dir)? {
        let stem = rainy.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let want = rule.clean_stem(stem);
        let clean = clean_files
            .iter()
            .find(|c| c.file_stem().and_then(|s| s.to_str()) == Some(want))
            .ok_or_else(|| Error::OrphanFile(rainy.clone()))?;
        jobs.push((rainy, clean.clone()));
    }
    jobs.par_iter()
        .map(|(r, c)| {
            let name = r.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            let (rainy, clean) = (Image::read(r)?, Image::read(c)?);
            if !rainy.same_size(&clean) {
                return Err(Error::shape(format!("{} and {} differ in size", r.display(), c.display())));
            }
            // Grayscale and color files may be mixed; promote to color.
            let (rainy, clean) = if rainy.channels() != clean.channels() {
                (rainy.to_rgb(), clean.to_rgb())
            } else {
                (rainy, clean)
            };
            PairedSample::new(name, rainy, clean)
        })
        .collect()
}

/// Writes a dataset as `rainy/` and `clean/` subdirectories of `root`.
pub fn write_pairs(root: &Path, samples: &[PairedSample]) -> Result<()> {
    let (rd, cd) = (root.join("rainy"), root.join("clean"));
    for d in [&rd, &cd] {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    for s in samples {
        s.rainy.write_png(rd.join(&s.name))?;
        s.clean.write_png(cd.join(&s.name))?;
    }
    Ok(())
}

/// Cuts the same random `size x size` window out of both images.
pub fn random_crop<R: Rng>(sample: &PairedSample, size: usize, rng: &mut R) -> Result<PairedSample> {
    let (w, h) = (sample.rainy.width(), sample.rainy.height());
    if w < size || h < size {
        return Err(Error::CropTooLarge { width: w, height: h, crop: size });
    }
    let x0 = rng.gen_range(0..=w - size);
    let y0 = rng.gen_range(0..=h - size);
    Ok(PairedSample {
        name: sample.name.clone(),
        rainy: sample.rainy.crop(x0, y0, size, size)?,
        clean: sample.clean.crop(x0, y0, size, size)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_cases() {
        let b = Image::filled(4, 4, 3, 0.3).unwrap();
        let s = Image::filled(4, 4, 1, 0.2).unwrap();
        let i = compose_rainy(&b, &s).unwrap();
        assert!(i.data().iter().all(|v| (v - 0.5).abs() < 1e-12));
        let zero = Image::zeros(4, 4, 1).unwrap();
        assert_eq!(compose_rainy(&b, &zero).unwrap(), b);
        let mut bright = Image::filled(4, 4, 1, 0.9).unwrap();
        let mut spot = Image::zeros(4, 4, 1).unwrap();
        spot.set(1, 2, 0, 0.5);
        bright = compose_rainy(&bright, &spot).unwrap();
        assert_eq!(bright.get(1, 2, 0), 1.0);
        assert!(compose_rainy(&b, &Image::zeros(3, 4, 1).unwrap()).is_err());
    }

    #[test]
    fn streaks_are_deterministic_and_bounded() {
        let p = StreakParams { count: 50, intensity: 0.4, seed: 7, ..StreakParams::default() };
        let a = synth_streaks(128, 128, &p).unwrap();
        let b = synth_streaks(128, 128, &p).unwrap();
        assert_eq!(a, b);
        assert!(a.data().iter().all(|&v| v >= 0.0 && v <= 0.4 * 1.05));
        let frac = a.data().iter().filter(|&&v| v > 0.01).count() as f64 / a.data().len() as f64;
        assert!((0.01..=0.5).contains(&frac), "coverage {frac}");
        let none = synth_streaks(16, 16, &StreakParams { count: 0, ..p }).unwrap();
        assert!(none.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn subtracting_streaks_recovers_background() {
        let clean = synth_clean_scene(32, 32, 3).unwrap();
        let s = synth_streaks(32, 32, &StreakParams { intensity: 0.3, ..StreakParams::default() }).unwrap();
        let rainy = compose_rainy(&clean, &s).unwrap();
        for c in 0..3 {
            for k in 0..32 * 32 {
                let (b, sv) = (clean.plane(c)[k], s.plane(0)[k]);
                if b + sv <= 1.0 {
                    assert!(((rainy.plane(c)[k] - sv).clamp(0.0, 1.0) - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn crop_contract() {
        let s = PairedSample::new("x", Image::filled(128, 128, 3, 0.1).unwrap(), Image::filled(128, 128, 3, 0.2).unwrap())
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(random_crop(&s, 128, &mut rng).unwrap(), s);
        assert!(matches!(random_crop(&s, 129, &mut rng), Err(Error::CropTooLarge { .. })));
    }

    #[test]
    fn crop_offsets_cover_range() {
        let rainy = Image::from_fn(256, 256, |x, y| (x + 256 * y) as f64).unwrap();
        let s = PairedSample::new("x", rainy.clone(), rainy).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut seen_x = [false; 129];
        let mut seen_y = [false; 129];
        for _ in 0..4000 {
            let c = random_crop(&s, 128, &mut rng).unwrap();
            let v = c.rainy.get(0, 0, 0) as usize;
            assert_eq!(c.rainy, c.clean);
            seen_x[v % 256] = true;
            seen_y[v / 256] = true;
        }
        assert!(seen_x.iter().all(|&b| b) && seen_y.iter().all(|&b| b));
        let mut r1 = ChaCha8Rng::seed_from_u64(9);
        let mut r2 = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(random_crop(&s, 64, &mut r1).unwrap(), random_crop(&s, 64, &mut r2).unwrap());
    }

    #[test]
    fn load_pairs_contract() {
        let dir = tempfile::tempdir().unwrap();
        let (rd, cd) = (dir.path().join("rainy"), dir.path().join("clean"));
        std::fs::create_dir_all(&rd).unwrap();
        std::fs::create_dir_all(&cd).unwrap();
        assert!(load_pairs(&rd, &cd, &PairingRule::SameStem).unwrap().is_empty());

        let pairs = synth_pairs(3, 16, 16, &StreakParams::default(), 1).unwrap();
        for p in pairs.iter().rev() {
            p.rainy.write_png(rd.join(&p.name)).unwrap();
            p.clean.write_png(cd.join(&p.name)).unwrap();
        }
        let loaded = load_pairs(&rd, &cd, &PairingRule::SameStem).unwrap();
        let names: Vec<_> = loaded.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, ["pair_000.png", "pair_001.png", "pair_002.png"]);
        assert!(loaded.iter().all(|s| s.rainy.same_shape(&s.clean)));

        std::fs::remove_file(cd.join("pair_001.png")).unwrap();
        std::fs::remove_file(cd.join("pair_002.png")).unwrap();
        std::fs::remove_file(rd.join("pair_002.png")).unwrap();
        let err = load_pairs(&rd, &cd, &PairingRule::SameStem).unwrap_err();
        assert!(err.to_string().contains("pair_001.png"), "{err}");
    }

    #[test]
    fn suffix_stripping_rule() {
        let dir = tempfile::tempdir().unwrap();
        let (rd, cd) = (dir.path().join("r"), dir.path().join("c"));
        std::fs::create_dir_all(&rd).unwrap();
        std::fs::create_dir_all(&cd).unwrap();
        let img = Image::filled(4, 4, 3, 0.5).unwrap();
        for n in ["7_1.png", "7_2.png"] {
            img.write_png(rd.join(n)).unwrap();
        }
        img.write_png(cd.join("7.png")).unwrap();
        assert!(load_pairs(&rd, &cd, &PairingRule::SameStem).is_err());
        assert_eq!(load_pairs(&rd, &cd, &PairingRule::StripSuffix('_')).unwrap().len(), 2);
    }
}
