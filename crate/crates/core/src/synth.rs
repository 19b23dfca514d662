//! Built-in synthetic shapes dataset.
//!
//! Ten categories of colored geometric shapes drawn on low-contrast textured
//! backgrounds. Generation is fully seeded, train and test splits come from
//! disjoint seed streams, and no files are required.

use ndarray::Array3;

use crate::data::{CategoryLabel, LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::RandomSource;

pub const MAX_CATEGORIES: usize = 10;

#[derive(Debug, Clone, Copy)]
pub struct SynthConfig {
    pub image_size: usize,
    pub num_categories: usize,
    pub train_per_category: usize,
    pub test_per_category: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            image_size: 24,
            num_categories: 10,
            train_per_category: 150,
            test_per_category: 40,
        }
    }
}

/// Generate train and test splits.
pub fn generate(cfg: &SynthConfig, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if cfg.image_size < 8 {
        return Err(Error::param("image_size must be at least 8"));
    }
    if cfg.num_categories < 2 || cfg.num_categories > MAX_CATEGORIES {
        return Err(Error::param(format!(
            "num_categories must lie in 2..={MAX_CATEGORIES}"
        )));
    }
    if cfg.train_per_category == 0 || cfg.test_per_category == 0 {
        return Err(Error::param("per-category sample counts must be positive"));
    }
    let root = RandomSource::new(seed);
    let train = render_split(cfg, &root.fork("synth-train"), cfg.train_per_category, Split::Train)?;
    let test = render_split(cfg, &root.fork("synth-test"), cfg.test_per_category, Split::Test)?;
    Ok((train, test))
}

fn render_split(
    cfg: &SynthConfig,
    rng: &RandomSource,
    per_category: usize,
    split: Split,
) -> Result<LabeledDataset> {
    let mut samples = Vec::with_capacity(per_category * cfg.num_categories);
    for cat in 0..cfg.num_categories {
        let mut cat_rng = rng.fork(&format!("cat-{cat}"));
        for _ in 0..per_category {
            let img = render_sample(cfg.image_size, cat, &mut cat_rng);
            samples.push((img, CategoryLabel(cat)));
        }
    }
    LabeledDataset::new(samples, split, cfg.num_categories)
}

fn render_sample(size: usize, category: usize, rng: &mut RandomSource) -> Image {
    let mut pixels = textured_background(size, rng);
    let color = category_color(category, rng);

    let s = size as f64;
    let cx = s / 2.0 + rng.uniform(-s / 8.0, s / 8.0);
    let cy = s / 2.0 + rng.uniform(-s / 8.0, s / 8.0);
    let r = s * rng.uniform(0.28, 0.40);

    for y in 0..size {
        for x in 0..size {
            let dx = x as f64 + 0.5 - cx;
            let dy = y as f64 + 0.5 - cy;
            if shape_mask(category, dx, dy, r) {
                for c in 0..3 {
                    let jitter = rng.uniform(-0.03, 0.03);
                    pixels[[c, y, x]] = (color[c] + jitter).clamp(0.0, 1.0);
                }
            }
        }
    }
    Image::new(pixels).expect("rendered values are clamped")
}

/// Membership test of pixel offset (dx, dy) in the category's shape of
/// radius r.
fn shape_mask(category: usize, dx: f64, dy: f64, r: f64) -> bool {
    let bar = r / 3.0;
    match category {
        // circle
        0 => dx * dx + dy * dy <= r * r,
        // square
        1 => dx.abs() <= r * 0.85 && dy.abs() <= r * 0.85,
        // upward triangle
        2 => dy <= r * 0.6 && dy >= -r && dx.abs() <= (dy + r) * 0.55,
        // diamond
        3 => dx.abs() + dy.abs() <= r,
        // ring
        4 => {
            let d2 = dx * dx + dy * dy;
            d2 <= r * r && d2 >= (r * 0.55) * (r * 0.55)
        }
        // plus
        5 => (dx.abs() <= bar || dy.abs() <= bar) && dx.abs() <= r && dy.abs() <= r,
        // two horizontal bars
        6 => dx.abs() <= r && ((dy - r * 0.5).abs() <= bar || (dy + r * 0.5).abs() <= bar),
        // two vertical bars
        7 => dy.abs() <= r && ((dx - r * 0.5).abs() <= bar || (dx + r * 0.5).abs() <= bar),
        // checkerboard
        8 => {
            dx.abs() <= r
                && dy.abs() <= r
                && (((dx + r) / (r * 0.5)) as usize + ((dy + r) / (r * 0.5)) as usize) % 2 == 0
        }
        // diagonal cross
        9 => ((dx - dy).abs() <= bar * 1.4 || (dx + dy).abs() <= bar * 1.4)
            && dx.abs() <= r
            && dy.abs() <= r,
        _ => false,
    }
}

/// Smooth low-contrast texture: a seeded 4x4 grid upsampled bilinearly.
fn textured_background(size: usize, rng: &mut RandomSource) -> Array3<f64> {
    const G: usize = 4;
    let mut grid = [[[0.0f64; G]; G]; 3];
    for channel in grid.iter_mut() {
        for row in channel.iter_mut() {
            for v in row.iter_mut() {
                *v = rng.uniform(0.22, 0.42);
            }
        }
    }
    Array3::from_shape_fn((3, size, size), |(c, y, x)| {
        let gy = y as f64 / size as f64 * (G - 1) as f64;
        let gx = x as f64 / size as f64 * (G - 1) as f64;
        let (y0, x0) = (gy as usize, gx as usize);
        let (y1, x1) = ((y0 + 1).min(G - 1), (x0 + 1).min(G - 1));
        let (fy, fx) = (gy - y0 as f64, gx - x0 as f64);
        let top = grid[c][y0][x0] * (1.0 - fx) + grid[c][y0][x1] * fx;
        let bot = grid[c][y1][x0] * (1.0 - fx) + grid[c][y1][x1] * fx;
        top * (1.0 - fy) + bot * fy
    })
}

fn category_color(category: usize, rng: &mut RandomSource) -> [f64; 3] {
    let hue = category as f64 / MAX_CATEGORIES as f64 + rng.uniform(-0.02, 0.02);
    hsv_to_rgb(hue.rem_euclid(1.0), 0.8, 0.9)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let i = (h * 6.0).floor();
    let f = h * 6.0 - i;
    let p = v * (1.0 - s);
    let q = v * (1.0 - f * s);
    let t = v * (1.0 - (1.0 - f) * s);
    match (i as i64).rem_euclid(6) {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Two-category variant built to be linearly separable: category 0 renders a
/// dark shape on a light background, category 1 the reverse, so overall
/// intensity alone separates the classes.
pub fn two_class_separable(
    image_size: usize,
    per_category: usize,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let root = RandomSource::new(seed);
    let render = |rng: &RandomSource, n: usize, split: Split| -> Result<LabeledDataset> {
        let mut samples = Vec::with_capacity(2 * n);
        for cat in 0..2usize {
            let mut r = rng.fork(&format!("sep-{cat}"));
            for _ in 0..n {
                let (bg, fg) = if cat == 0 { (0.75, 0.15) } else { (0.2, 0.85) };
                let mut pixels = Array3::from_shape_fn((3, image_size, image_size), |_| {
                    (bg + r.uniform(-0.05, 0.05)).clamp(0.0, 1.0)
                });
                let s = image_size as f64;
                let cx = s / 2.0 + r.uniform(-s / 8.0, s / 8.0);
                let cy = s / 2.0 + r.uniform(-s / 8.0, s / 8.0);
                let rad = s * r.uniform(0.25, 0.35);
                for y in 0..image_size {
                    for x in 0..image_size {
                        let dx = x as f64 + 0.5 - cx;
                        let dy = y as f64 + 0.5 - cy;
                        if shape_mask(cat, dx, dy, rad) {
                            for c in 0..3 {
                                pixels[[c, y, x]] = (fg + r.uniform(-0.05, 0.05)).clamp(0.0, 1.0);
                            }
                        }
                    }
                }
                samples.push((Image::new(pixels).unwrap(), CategoryLabel(cat)));
            }
        }
        LabeledDataset::new(samples, split, 2)
    };
    Ok((
        render(&root.fork("train"), per_category, Split::Train)?,
        render(&root.fork("test"), per_category, Split::Test)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_given_seed() {
        let cfg = SynthConfig {
            image_size: 12,
            num_categories: 4,
            train_per_category: 3,
            test_per_category: 2,
            ..Default::default()
        };
        let (a_train, a_test) = generate(&cfg, 99).unwrap();
        let (b_train, b_test) = generate(&cfg, 99).unwrap();
        for (x, y) in a_train.samples().iter().zip(b_train.samples()) {
            assert_eq!(x.0.pixels(), y.0.pixels());
        }
        assert_eq!(a_test.len(), b_test.len());
    }

    #[test]
    fn splits_differ() {
        let cfg = SynthConfig {
            image_size: 12,
            num_categories: 2,
            train_per_category: 2,
            test_per_category: 2,
            ..Default::default()
        };
        let (train, test) = generate(&cfg, 5).unwrap();
        assert_ne!(
            train.samples()[0].0.pixels(),
            test.samples()[0].0.pixels()
        );
    }

    #[test]
    fn counts_and_labels() {
        let cfg = SynthConfig {
            image_size: 8,
            num_categories: 3,
            train_per_category: 4,
            test_per_category: 2,
            ..Default::default()
        };
        let (train, test) = generate(&cfg, 1).unwrap();
        assert_eq!(train.len(), 12);
        assert_eq!(test.len(), 6);
        for cat in 0..3 {
            assert_eq!(train.indices_of(CategoryLabel(cat)).len(), 4);
        }
    }

    #[test]
    fn separable_classes_have_disjoint_mean_intensity() {
        let (train, _) = two_class_separable(12, 10, 3).unwrap();
        for (img, label) in train.samples() {
            let mean = img.pixels().mean().unwrap();
            if label.index() == 0 {
                assert!(mean > 0.5, "class 0 should be light overall, mean {mean}");
            } else {
                assert!(mean < 0.5, "class 1 should be dark overall, mean {mean}");
            }
        }
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = SynthConfig {
            num_categories: 11,
            ..Default::default()
        };
        assert!(generate(&cfg, 0).is_err());
    }
}
