use std::path::Path;

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub const BLACK: Rgb = Rgb([0, 0, 0]);
    pub const WHITE: Rgb = Rgb([255, 255, 255]);
}

/// Rec. 601 luma in `[0, 1]`.
pub fn luma(c: Rgb) -> f64 {
    (0.299 * c.0[0] as f64 + 0.587 * c.0[1] as f64 + 0.114 * c.0[2] as f64) / 255.0
}

/// Three colour centroids from one source image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Palette(pub [Rgb; 3]);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorClusterSet {
    pub palettes: Vec<Palette>,
}

const MAX_ITERS: usize = 50;
const TOLERANCE: f64 = 1e-3;
const MAX_POINTS: usize = 4096;

impl ColorClusterSet {
    pub fn len(&self) -> usize {
        self.palettes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.palettes.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("palettes serialise")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("colour clusters: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Splits an image into non-overlapping `size x size` tiles (whole tiles only;
/// an image smaller than one tile is returned as is).
pub fn tiles(img: &RgbImage, size: u32) -> Vec<RgbImage> {
    if img.width() < size || img.height() < size {
        return vec![img.clone()];
    }
    let mut out = Vec::new();
    for ty in 0..img.height() / size {
        for tx in 0..img.width() / size {
            out.push(image::imageops::crop_imm(img, tx * size, ty * size, size, size).to_image());
        }
    }
    out
}

/// One k-means palette per image (k-means++ seeding, at most 50 Lloyd
/// iterations, stopping once no centroid moves more than 1e-3).
pub fn fit_color_clusters(images: &[RgbImage], k: usize, seed: u64) -> Result<ColorClusterSet> {
    if images.is_empty() {
        return Err(Error::NoClusterSources);
    }
    if k != 3 {
        return Err(Error::Config(format!("palettes hold 3 colours, asked for {k}")));
    }
    let mut palettes = Vec::with_capacity(images.len());
    for (i, img) in images.iter().enumerate() {
        if img.width() == 0 || img.height() == 0 {
            return Err(Error::Shape(format!("cluster source {i} is empty")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let points = sample_points(img);
        let c = kmeans(&points, k, &mut rng);
        let to_rgb = |p: [f64; 3]| Rgb(p.map(|v| v.round().clamp(0.0, 255.0) as u8));
        palettes.push(Palette([to_rgb(c[0]), to_rgb(c[1]), to_rgb(c[2])]));
    }
    Ok(ColorClusterSet { palettes })
}

fn sample_points(img: &RgbImage) -> Vec<[f64; 3]> {
    let n = img.width() as usize * img.height() as usize;
    let stride = n.div_ceil(MAX_POINTS).max(1);
    img.pixels()
        .step_by(stride)
        .map(|p| [p.0[0] as f64, p.0[1] as f64, p.0[2] as f64])
        .collect()
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum()
}

fn nearest(p: &[f64; 3], centroids: &[[f64; 3]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = dist2(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

pub(crate) fn kmeans<R: Rng>(points: &[[f64; 3]], k: usize, rng: &mut R) -> Vec<[f64; 3]> {
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    while centroids.len() < k {
        let d: Vec<f64> = points.iter().map(|p| nearest(p, &centroids).1).collect();
        let total: f64 = d.iter().sum();
        if total <= 0.0 {
            // every point coincides with a centroid
            centroids.push(centroids[0]);
            continue;
        }
        let mut r = rng.random::<f64>() * total;
        let mut pick = points.len() - 1;
        for (i, &di) in d.iter().enumerate() {
            if r < di {
                pick = i;
                break;
            }
            r -= di;
        }
        centroids.push(points[pick]);
    }
    for _ in 0..MAX_ITERS {
        let mut sums = vec![[0.0f64; 3]; k];
        let mut counts = vec![0usize; k];
        for p in points {
            let (c, _) = nearest(p, &centroids);
            counts[c] += 1;
            for j in 0..3 {
                sums[c][j] += p[j];
            }
        }
        let mut shift = 0.0f64;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let next = sums[c].map(|s| s / counts[c] as f64);
            shift = shift.max(dist2(&next, &centroids[c]).sqrt());
            centroids[c] = next;
        }
        if shift <= TOLERANCE {
            break;
        }
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_grey_gives_identical_centroids() {
        let img = RgbImage::from_pixel(20, 10, image::Rgb([128, 128, 128]));
        let set = fit_color_clusters(&[img], 3, 1).unwrap();
        assert_eq!(set.palettes[0].0, [Rgb([128, 128, 128]); 3]);
    }

    /// Exhaustive assignment of 3 distinct points to 3 clusters: the optimum
    /// puts each point in its own cluster.
    #[test]
    fn three_blocks_recover_block_colours() {
        let colours = [[200u8, 10, 10], [10, 200, 10], [10, 10, 200]];
        let img = RgbImage::from_fn(30, 10, |x, _| image::Rgb(colours[(x / 10) as usize]));
        let set = fit_color_clusters(&[img], 3, 7).unwrap();
        let mut got: Vec<[u8; 3]> = set.palettes[0].0.iter().map(|c| c.0).collect();
        got.sort();
        let mut want = colours.to_vec();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn one_palette_per_source() {
        let a = RgbImage::from_pixel(4, 4, image::Rgb([1, 2, 3]));
        let b = RgbImage::from_fn(4, 4, |x, y| image::Rgb([(x * 60) as u8, (y * 60) as u8, 9]));
        let set = fit_color_clusters(&[a, b], 3, 0).unwrap();
        assert_eq!(set.len(), 2);
        assert!(matches!(fit_color_clusters(&[], 3, 0), Err(Error::NoClusterSources)));
        assert_eq!(ColorClusterSet::from_json(&set.to_json()).unwrap(), set);
    }

    #[test]
    fn tiling() {
        let img = RgbImage::new(130, 64);
        assert_eq!(tiles(&img, 64).len(), 2);
        assert_eq!(tiles(&RgbImage::new(10, 10), 64).len(), 1);
    }

    proptest! {
        #[test]
        fn centroids_lie_in_the_colour_cube(px in prop::collection::vec(any::<[u8; 3]>(), 1..200), seed in any::<u64>()) {
            let w = px.len() as u32;
            let img = RgbImage::from_fn(w, 1, |x, _| image::Rgb(px[x as usize]));
            let set = fit_color_clusters(&[img], 3, seed).unwrap();
            // centroids are means of input points: inside their bounding box
            for c in set.palettes[0].0 {
                for ch in 0..3 {
                    let lo = px.iter().map(|p| p[ch]).min().unwrap();
                    let hi = px.iter().map(|p| p[ch]).max().unwrap();
                    prop_assert!(c.0[ch] >= lo && c.0[ch] <= hi);
                }
            }
        }
    }
}
