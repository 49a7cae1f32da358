use std::io::Cursor;

use image::codecs::jpeg::JpegEncoder;
use image::{ImageFormat, RgbImage};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::recipe::NoiseSpec;
use crate::error::{Error, Result};

fn kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let mut k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur of a `w x h` plane with `c` interleaved channels,
/// edges clamped.
fn blur_plane(data: &[f64], w: usize, h: usize, c: usize, sigma: f64) -> Vec<f64> {
    let k = kernel(sigma);
    let r = (k.len() / 2) as i64;
    let mut tmp = vec![0.0; data.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (i, kv) in k.iter().enumerate() {
                    let sx = (x as i64 + i as i64 - r).clamp(0, w as i64 - 1) as usize;
                    acc += kv * data[(y * w + sx) * c + ch];
                }
                tmp[(y * w + x) * c + ch] = acc;
            }
        }
    }
    let mut out = vec![0.0; data.len()];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let mut acc = 0.0;
                for (i, kv) in k.iter().enumerate() {
                    let sy = (y as i64 + i as i64 - r).clamp(0, h as i64 - 1) as usize;
                    acc += kv * tmp[(sy * w + x) * c + ch];
                }
                out[(y * w + x) * c + ch] = acc;
            }
        }
    }
    out
}

fn to_bytes(v: &[f64]) -> Vec<u8> {
    v.iter().map(|x| x.round().clamp(0.0, 255.0) as u8).collect()
}

/// Gaussian blur with a kernel of radius `ceil(3 sigma)`; `sigma <= 0` is the identity.
pub fn gaussian_blur(img: &RgbImage, sigma: f64) -> RgbImage {
    if !(sigma > 0.0) {
        return img.clone();
    }
    let data: Vec<f64> = img.as_raw().iter().map(|&v| v as f64).collect();
    let out = blur_plane(&data, img.width() as usize, img.height() as usize, 3, sigma);
    RgbImage::from_raw(img.width(), img.height(), to_bytes(&out)).expect("same size")
}

fn bilinear(img: &RgbImage, x: f64, y: f64, ch: usize) -> f64 {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let (x0, y0) = (x.floor(), y.floor());
    let (fx, fy) = (x - x0, y - y0);
    let at = |xi: i64, yi: i64| {
        let xi = xi.clamp(0, w - 1) as u32;
        let yi = yi.clamp(0, h - 1) as u32;
        img.get_pixel(xi, yi).0[ch] as f64
    };
    let (x0, y0) = (x0 as i64, y0 as i64);
    (1.0 - fy) * ((1.0 - fx) * at(x0, y0) + fx * at(x0 + 1, y0))
        + fy * ((1.0 - fx) * at(x0, y0 + 1) + fx * at(x0 + 1, y0 + 1))
}

/// Resamples the image along a smooth random displacement field whose
/// largest displacement is `max_disp` pixels.
pub fn elastic_distort<R: Rng>(img: &RgbImage, max_disp: f64, smoothing: f64, rng: &mut R) -> RgbImage {
    if !(max_disp > 0.0) {
        return img.clone();
    }
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut field: Vec<f64> = (0..w * h * 2).map(|_| rng.random_range(-1.0..=1.0)).collect();
    if smoothing > 0.0 {
        field = blur_plane(&field, w, h, 2, smoothing);
    }
    let peak = field.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let s = max_disp / peak;
        field.iter_mut().for_each(|v| *v *= s);
    }
    let mut out = RgbImage::new(img.width(), img.height());
    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = (field[(y * w + x) * 2], field[(y * w + x) * 2 + 1]);
            let px = out.get_pixel_mut(x as u32, y as u32);
            for ch in 0..3 {
                px.0[ch] = bilinear(img, x as f64 + dx, y as f64 + dy, ch).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    out
}

/// Additive Gaussian noise in 8-bit units, shared by the three channels and clamped.
fn add_noise<R: Rng>(img: &mut RgbImage, sigma: f64, rng: &mut R) {
    if !(sigma > 0.0) {
        return;
    }
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    for px in img.pixels_mut() {
        let n: f64 = normal.sample(rng);
        for v in px.0.iter_mut() {
            *v = (*v as f64 + n).round().clamp(0.0, 255.0) as u8;
        }
    }
}

fn jpeg_round_trip(img: &RgbImage, quality: u8) -> Result<RgbImage> {
    let mut buf = Vec::new();
    JpegEncoder::new_with_quality(&mut buf, quality)
        .encode_image(img)
        .map_err(|e| Error::Image(format!("jpeg encode: {e}")))?;
    let decoded = image::load(Cursor::new(buf), ImageFormat::Jpeg).map_err(|e| Error::Image(format!("jpeg decode: {e}")))?;
    Ok(decoded.to_rgb8())
}

/// Elastic distortion, Gaussian blur, additive noise, then a JPEG round trip.
/// Zero parameters and no quality leave the image unchanged.
pub fn degrade<R: Rng>(img: &RgbImage, noise: &NoiseSpec, rng: &mut R) -> Result<RgbImage> {
    let mut out = elastic_distort(img, noise.elastic, noise.elastic_sigma, rng);
    out = gaussian_blur(&out, noise.blur_sigma);
    add_noise(&mut out, noise.gaussian_sigma, rng);
    match noise.jpeg_quality {
        Some(q) => jpeg_round_trip(&out, q),
        None => Ok(out),
    }
}
