use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

pub const OUTPUT_HEIGHT: usize = 32;
pub const OUTPUT_WIDTH: usize = 100;

/// A normalised `32 x 100` greyscale network input, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordImage {
    pub pixels: Vec<f32>,
    pub label: String,
    /// Mean before normalisation, on a `[0, 1]` scale.
    pub mean: f64,
    /// Standard deviation before normalisation, on a `[0, 1]` scale.
    pub stddev: f64,
}

impl WordImage {
    /// Normalises an output-sized greyscale image, e.g. one loaded from a dataset.
    pub fn from_grey(img: &GrayImage, label: &str) -> WordImage {
        let plane: Vec<f64> = if img.dimensions() == (OUTPUT_WIDTH as u32, OUTPUT_HEIGHT as u32) {
            img.as_raw().iter().map(|&v| v as f64 / 255.0).collect()
        } else {
            let raw: Vec<f64> = img.as_raw().iter().map(|&v| v as f64 / 255.0).collect();
            resize_bilinear(&raw, img.width() as usize, img.height() as usize, OUTPUT_WIDTH, OUTPUT_HEIGHT)
        };
        normalize(&plane, label)
    }
}

/// Luma with weights 0.299, 0.587, 0.114 on a `[0, 1]` scale.
fn grey_plane(img: &RgbImage) -> Vec<f64> {
    img.pixels()
        .map(|p| (0.299 * p.0[0] as f64 + 0.587 * p.0[1] as f64 + 0.114 * p.0[2] as f64) / 255.0)
        .collect()
}

/// Bilinear resampling with pixel centres at half-integers and clamped edges.
pub fn resize_bilinear(src: &[f64], w: usize, h: usize, ow: usize, oh: usize) -> Vec<f64> {
    let sx = w as f64 / ow as f64;
    let sy = h as f64 / oh as f64;
    let mut out = Vec::with_capacity(ow * oh);
    for y in 0..oh {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let ty = fy - y0 as f64;
        for x in 0..ow {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let tx = fx - x0 as f64;
            let top = (1.0 - tx) * src[y0 * w + x0] + tx * src[y0 * w + x1];
            let bot = (1.0 - tx) * src[y1 * w + x0] + tx * src[y1 * w + x1];
            out.push((1.0 - ty) * top + ty * bot);
        }
    }
    out
}

/// Greyscale, resized to the output size, quantised to 8 bits. This is the
/// form datasets store.
pub fn to_output_grey(img: &RgbImage) -> GrayImage {
    let plane = resize_bilinear(
        &grey_plane(img),
        img.width() as usize,
        img.height() as usize,
        OUTPUT_WIDTH,
        OUTPUT_HEIGHT,
    );
    let bytes = plane.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
    GrayImage::from_raw(OUTPUT_WIDTH as u32, OUTPUT_HEIGHT as u32, bytes).expect("sized buffer")
}

/// Subtracts the mean and divides by the population standard deviation.
/// Flat inputs (stddev below 1e-6) become all zeros.
pub fn normalize(plane: &[f64], label: &str) -> WordImage {
    let n = plane.len() as f64;
    let mean = plane.iter().sum::<f64>() / n;
    let stddev = (plane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let pixels = if stddev < 1e-6 {
        vec![0.0; plane.len()]
    } else {
        plane.iter().map(|v| ((v - mean) / stddev) as f32).collect()
    };
    WordImage {
        pixels,
        label: label.to_string(),
        mean,
        stddev,
    }
}

/// Greyscale conversion, bilinear resize to `32 x 100` ignoring aspect, then
/// per-sample normalisation.
pub fn finalize(img: &RgbImage, label: &str) -> WordImage {
    let plane = resize_bilinear(
        &grey_plane(img),
        img.width() as usize,
        img.height() as usize,
        OUTPUT_WIDTH,
        OUTPUT_HEIGHT,
    );
    normalize(&plane, label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn stats(p: &[f32]) -> (f64, f64) {
        let n = p.len() as f64;
        let m = p.iter().map(|&v| v as f64).sum::<f64>() / n;
        let s = (p.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>() / n).sqrt();
        (m, s)
    }

    #[test]
    fn output_is_32_by_100() {
        let img = RgbImage::from_fn(200, 64, |x, y| image::Rgb([(x % 256) as u8, (y * 3) as u8, 7]));
        let w = finalize(&img, "w");
        assert_eq!(w.pixels.len(), OUTPUT_HEIGHT * OUTPUT_WIDTH);
        assert_eq!(w.label, "w");
    }

    #[test]
    fn constant_input_is_all_zero() {
        let img = RgbImage::from_pixel(50, 20, image::Rgb([90, 90, 90]));
        let w = finalize(&img, "c");
        assert!(w.pixels.iter().all(|&v| v == 0.0));
        assert!((w.mean - 90.0 / 255.0).abs() < 1e-9);
    }

    #[test]
    fn resize_of_a_ramp_is_a_ramp() {
        let src: Vec<f64> = (0..4).map(|x| x as f64).collect();
        let out = resize_bilinear(&src, 4, 1, 8, 1);
        assert_eq!(out, vec![0.0, 0.25, 0.75, 1.25, 1.75, 2.25, 2.75, 3.0]);
        assert_eq!(resize_bilinear(&src, 4, 1, 4, 1), src);
    }

    #[test]
    fn stored_grey_normalises_like_the_direct_path() {
        let img = RgbImage::from_fn(120, 40, |x, y| image::Rgb([(x * 2) as u8, (y * 5) as u8, 40]));
        let a = finalize(&img, "x");
        let b = WordImage::from_grey(&to_output_grey(&img), "x");
        let diff = a.pixels.iter().zip(&b.pixels).map(|(p, q)| (p - q).abs()).fold(0.0f32, f32::max);
        assert!(diff < 0.05, "{diff}");
    }

    proptest! {
        #[test]
        fn normalisation_contract(w in 1u32..80, h in 1u32..40, seed in any::<u64>()) {
            let mut s = seed;
            let img = RgbImage::from_fn(w, h, |_, _| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let b = (s >> 56) as u8;
                image::Rgb([b, b.wrapping_mul(3), b / 2])
            });
            let out = finalize(&img, "p");
            let (m, sd) = stats(&out.pixels);
            prop_assert!(m.abs() < 1e-5);
            if out.stddev >= 1e-6 {
                prop_assert!((sd - 1.0).abs() < 1e-5, "{}", sd);
            } else {
                prop_assert!(out.pixels.iter().all(|&v| v == 0.0));
            }
        }
    }
}
