use std::path::{Path, PathBuf};

use image::RgbImage;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::recipe::{BlendLayer, RenderRecipe};
use super::RasterLayer;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlendMode {
    Normal,
    Add,
    Multiply,
    Burn,
    Max,
}

impl BlendMode {
    pub const ALL: [BlendMode; 5] = [
        BlendMode::Normal,
        BlendMode::Add,
        BlendMode::Multiply,
        BlendMode::Burn,
        BlendMode::Max,
    ];
}

const BURN_EPS: f64 = 1e-6;

/// Blends layer value `l` with crop value `c` at strength `a`, all in `[0, 1]`.
pub fn blend_pixel(l: f64, c: f64, a: f64, mode: BlendMode) -> f64 {
    match mode {
        BlendMode::Normal => a * c + (1.0 - a) * l,
        BlendMode::Add => (l + a * c).clamp(0.0, 1.0),
        BlendMode::Multiply => l * (1.0 - a + a * c),
        BlendMode::Burn => 1.0 - ((1.0 - l) / (a * c + (1.0 - a)).max(BURN_EPS)).clamp(0.0, 1.0),
        BlendMode::Max => l.max(a * c),
    }
}

/// Natural images that crops are cut from.
#[derive(Debug, Clone, Default)]
pub struct NaturalCrops {
    images: Vec<RgbImage>,
}

impl NaturalCrops {
    pub fn new(images: Vec<RgbImage>) -> Self {
        NaturalCrops { images }
    }

    /// Every `.jpg`, `.jpeg` or `.png` directly inside `dir`, by file name.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "jpg" | "jpeg" | "png"))
            })
            .collect();
        paths.sort();
        let mut images = Vec::with_capacity(paths.len());
        for p in paths {
            let img = image::open(&p).map_err(|e| Error::Image(format!("{}: {e}", p.display())))?;
            images.push(img.to_rgb8());
        }
        Ok(NaturalCrops { images })
    }

    pub fn bundled() -> Result<Self> {
        Self::from_dir(&Self::bundled_dir())
    }

    pub fn bundled_dir() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("assets").join("natural")
    }

    pub fn images(&self) -> &[RgbImage] {
        &self.images
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// A `w x h` crop of image `id` at a uniformly drawn position. Images
    /// smaller than the crop are first upscaled to cover it.
    pub fn crop<R: Rng>(&self, id: usize, w: u32, h: u32, rng: &mut R) -> Result<RgbImage> {
        let src = self.images.get(id % self.images.len().max(1)).ok_or(Error::MissingNaturalCrops)?;
        let scale = (w as f64 / src.width() as f64).max(h as f64 / src.height() as f64);
        let scaled;
        let img = if scale > 1.0 {
            let nw = ((src.width() as f64 * scale).ceil() as u32).max(w);
            let nh = ((src.height() as f64 * scale).ceil() as u32).max(h);
            scaled = image::imageops::resize(src, nw, nh, image::imageops::FilterType::Triangle);
            &scaled
        } else {
            src
        };
        let x = rng.random_range(0..=img.width() - w);
        let y = rng.random_range(0..=img.height() - h);
        Ok(image::imageops::crop_imm(img, x, y, w, h).to_image())
    }
}

fn blended_rgb<R: Rng>(
    layer: &RasterLayer,
    plan: &BlendLayer,
    crops: &NaturalCrops,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut rgb: Vec<f64> = layer
        .data()
        .chunks_exact(4)
        .flat_map(|p| [p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0])
        .collect();
    if plan.alpha > 0.0 {
        if crops.is_empty() {
            return Err(Error::MissingNaturalCrops);
        }
        let crop = crops.crop(plan.crop_id, layer.width(), layer.height(), rng)?;
        for (v, &c) in rgb.iter_mut().zip(crop.as_raw()) {
            *v = blend_pixel(*v, c as f64 / 255.0, plan.alpha, plan.mode);
        }
    }
    Ok(rgb)
}

/// Blends each layer with its natural crop, then composites background,
/// border/shadow and foreground back to front with alpha-over. The border
/// and foreground alpha are scaled by the plan's composite opacity. Inset
/// borders lie inside the glyphs, so they are composited above the
/// foreground.
pub fn blend_compose<R: Rng>(
    recipe: &RenderRecipe,
    bg: &RasterLayer,
    fg: &RasterLayer,
    border: Option<&RasterLayer>,
    crops: &NaturalCrops,
    rng: &mut R,
) -> Result<RgbImage> {
    let (w, h) = (bg.width(), bg.height());
    for l in std::iter::once(fg).chain(border) {
        if (l.width(), l.height()) != (w, h) {
            return Err(Error::Shape(format!(
                "layer {}x{} does not match background {w}x{h}",
                l.width(),
                l.height()
            )));
        }
    }
    let plan = &recipe.blend;
    let mut out = blended_rgb(bg, &plan.background, crops, rng)?;
    let border_rgb = border
        .map(|b| blended_rgb(b, &plan.border, crops, rng))
        .transpose()?;
    let fg_rgb = blended_rgb(fg, &plan.foreground, crops, rng)?;

    let over = |out: &mut Vec<f64>, layer: &RasterLayer, rgb: &[f64]| {
        for (i, px) in layer.data().chunks_exact(4).enumerate() {
            let a = px[3] as f64 / 255.0 * plan.composite_alpha;
            if a == 0.0 {
                continue;
            }
            for c in 0..3 {
                let o = &mut out[i * 3 + c];
                *o = a * rgb[i * 3 + c] + (1.0 - a) * *o;
            }
        }
    };
    let inset = matches!(recipe.border, Some(b) if b.kind == super::recipe::BorderKind::Inset);
    match (border, &border_rgb) {
        (Some(b), Some(brgb)) if inset => {
            over(&mut out, fg, &fg_rgb);
            over(&mut out, b, brgb);
        }
        (Some(b), Some(brgb)) => {
            over(&mut out, b, brgb);
            over(&mut out, fg, &fg_rgb);
        }
        _ => over(&mut out, fg, &fg_rgb),
    }
    let bytes = out.iter().map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8).collect();
    Ok(RgbImage::from_raw(w, h, bytes).expect("buffer sized to the layer"))
}
