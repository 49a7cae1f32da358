//! Procedural word-image synthesis: font rendering, borders and shadows,
//! colouring, projective distortion, natural-image blending, degradation
//! and the fixed-size normalised network input.

mod blend;
mod border;
mod color;
mod config;
mod dataset;
mod degrade;
mod finalize;
mod fonts;
mod recipe;
mod renderer;
mod text;
mod warp;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use blend::{blend_compose, blend_pixel, BlendMode, NaturalCrops};
pub use border::render_border_shadow;
pub use color::{fit_color_clusters, luma, tiles, ColorClusterSet, Palette, Rgb};
pub use config::RenderConfig;
pub use dataset::{
    generate_dataset, load_dataset, load_word_image, read_manifest, DatasetManifest, ManifestRow,
    MANIFEST_NAME,
};
pub use degrade::{degrade, elastic_distort, gaussian_blur};
pub use finalize::{finalize, normalize, WordImage, OUTPUT_HEIGHT, OUTPUT_WIDTH};
pub use fonts::{FontCatalogue, DEFAULT_FONT};
pub use recipe::{
    recipe_rng, sample_recipe, BlendLayer, BlendPlan, Border, BorderKind, Curve, FontSpec,
    NoiseSpec, RenderRecipe, SampleContext,
};
pub use renderer::{tile_palettes, Renderer, PALETTE_TILE};
pub use text::render_foreground;
pub use warp::{apply_projective, Homography, WarpFrame};

/// RGBA8 image with straight (non-premultiplied) alpha.
#[derive(Clone, PartialEq, Eq)]
pub struct RasterLayer {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl fmt::Debug for RasterLayer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RasterLayer({}x{})", self.width, self.height)
    }
}

impl RasterLayer {
    /// Fully transparent layer.
    pub fn new(width: u32, height: u32) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("layer must be at least 1x1, got {width}x{height}")));
        }
        Ok(RasterLayer {
            width,
            height,
            data: vec![0; width as usize * height as usize * 4],
        })
    }

    pub fn filled(width: u32, height: u32, color: Rgb, alpha: u8) -> Result<Self> {
        let mut layer = Self::new(width, height)?;
        for px in layer.data.chunks_exact_mut(4) {
            px.copy_from_slice(&[color.0[0], color.0[1], color.0[2], alpha]);
        }
        Ok(layer)
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width as usize * height as usize * 4 {
            return Err(Error::Shape(format!(
                "{width}x{height} RGBA layer needs {} bytes, got {}",
                width as usize * height as usize * 4,
                data.len()
            )));
        }
        Ok(RasterLayer { width, height, data })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 4
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 4] {
        let o = self.offset(x, y);
        self.data[o..o + 4].try_into().expect("4 channels")
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, px: [u8; 4]) {
        let o = self.offset(x, y);
        self.data[o..o + 4].copy_from_slice(&px);
    }

    pub fn alpha(&self, x: u32, y: u32) -> u8 {
        self.data[self.offset(x, y) + 3]
    }

    pub fn alpha_plane(&self) -> Vec<u8> {
        self.data.chunks_exact(4).map(|p| p[3]).collect()
    }

    /// Replaces the alpha channel, keeping colour.
    pub fn set_alpha_plane(&mut self, alpha: &[u8]) {
        for (px, &a) in self.data.chunks_exact_mut(4).zip(alpha) {
            px[3] = a;
        }
    }

    /// Sets every pixel's colour, keeping alpha.
    pub fn colorize(&mut self, color: Rgb) {
        for px in self.data.chunks_exact_mut(4) {
            px[..3].copy_from_slice(&color.0);
        }
    }

    /// Inclusive bounding box `(x0, y0, x1, y1)` of pixels with alpha > 0.
    pub fn opaque_bbox(&self) -> Option<(u32, u32, u32, u32)> {
        let mut bb: Option<(u32, u32, u32, u32)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.alpha(x, y) > 0 {
                    bb = Some(match bb {
                        None => (x, y, x, y),
                        Some((x0, y0, x1, y1)) => (x0.min(x), y0.min(y), x1.max(x), y1.max(y)),
                    });
                }
            }
        }
        bb
    }
}

/// Increasing realism of the synthetic data; each level adds to the last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SophisticationLevel {
    /// Black text in the default font on white.
    A,
    /// Any catalogue font with random kerning, weight, underline and curve.
    B,
    /// Palette colours for every layer and borders or shadows.
    C,
    /// Random projective distortion.
    D,
    /// Elastic distortion, blur, noise and JPEG compression.
    E,
    /// Blending with natural image crops.
    F,
}

impl SophisticationLevel {
    pub const ALL: [SophisticationLevel; 6] = [
        SophisticationLevel::A,
        SophisticationLevel::B,
        SophisticationLevel::C,
        SophisticationLevel::D,
        SophisticationLevel::E,
        SophisticationLevel::F,
    ];

    pub fn letter(self) -> char {
        match self {
            SophisticationLevel::A => 'a',
            SophisticationLevel::B => 'b',
            SophisticationLevel::C => 'c',
            SophisticationLevel::D => 'd',
            SophisticationLevel::E => 'e',
            SophisticationLevel::F => 'f',
        }
    }
}

impl fmt::Display for SophisticationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

impl FromStr for SophisticationLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(SophisticationLevel::A),
            "b" => Ok(SophisticationLevel::B),
            "c" => Ok(SophisticationLevel::C),
            "d" => Ok(SophisticationLevel::D),
            "e" => Ok(SophisticationLevel::E),
            "f" => Ok(SophisticationLevel::F),
            _ => Err(Error::Config(format!("unknown level {s:?}, expected a..f"))),
        }
    }
}
