use std::sync::OnceLock;

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::blend::{blend_compose, NaturalCrops};
use super::border::render_border_shadow;
use super::color::{fit_color_clusters, tiles, ColorClusterSet};
use super::config::RenderConfig;
use super::degrade::degrade;
use super::finalize::{finalize, WordImage};
use super::fonts::FontCatalogue;
use super::recipe::{sample_recipe, RenderRecipe, SampleContext};
use super::text::render_foreground;
use super::warp::{warp_into, Homography, WarpFrame};
use super::{RasterLayer, SophisticationLevel};
use crate::error::{Error, Result};

/// Side of the square tiles the bundled palettes are fitted on.
pub const PALETTE_TILE: u32 = 64;

/// Fonts, palettes, natural images and sampling distributions: everything
/// that turns a word into an image. Immutable and shareable across threads.
#[derive(Debug)]
pub struct Renderer {
    pub fonts: FontCatalogue,
    pub palettes: ColorClusterSet,
    pub crops: NaturalCrops,
    pub config: RenderConfig,
}

impl Renderer {
    pub fn new(fonts: FontCatalogue, palettes: ColorClusterSet, crops: NaturalCrops, config: RenderConfig) -> Result<Self> {
        config.validate()?;
        if fonts.is_empty() {
            return Err(Error::Font("font catalogue is empty".into()));
        }
        Ok(Renderer {
            fonts,
            palettes,
            crops,
            config,
        })
    }

    /// Bundled fonts and natural images with palettes fitted on tiles of
    /// those images.
    pub fn bundled() -> Result<Self> {
        let crops = NaturalCrops::bundled()?;
        let palettes = bundled_palettes(&crops)?;
        Renderer::new(FontCatalogue::bundled()?, palettes, crops, RenderConfig::default())
    }

    pub fn with_config(mut self, config: RenderConfig) -> Result<Self> {
        config.validate()?;
        self.config = config;
        Ok(self)
    }

    pub fn context(&self) -> SampleContext<'_> {
        SampleContext {
            fonts: self.fonts.len(),
            default_font: self.fonts.default_id(),
            palettes: &self.palettes,
            crops: self.crops.len(),
        }
    }

    pub fn sample_recipe(&self, word: &str, level: SophisticationLevel, seed: u64, index: u64) -> Result<RenderRecipe> {
        sample_recipe(word, level, seed, index, &self.config, &self.context())
    }

    /// Renders a recipe to a colour image: foreground, border or shadow,
    /// projective warp, crop blending and compositing, degradation.
    pub fn render(&self, recipe: &RenderRecipe) -> Result<RgbImage> {
        recipe.validate()?;
        let fg = render_foreground(recipe, &self.fonts)?;
        let border = render_border_shadow(recipe, &fg)?;
        let (fg, border) = if recipe.projective.is_identity() {
            (fg, border)
        } else {
            let h = recipe.projective.to_pixels(fg.width() as f64, fg.height() as f64);
            let frame = canvas_frame(fg.width(), fg.height(), &h);
            let border = border.map(|b| warp_into(&b, &h, frame)).transpose()?;
            (warp_into(&fg, &h, frame)?, border)
        };
        let bg = RasterLayer::filled(fg.width(), fg.height(), recipe.colors[0], 255)?;
        let mut rng = ChaCha8Rng::seed_from_u64(recipe.seed);
        let img = blend_compose(recipe, &bg, &fg, border.as_ref(), &self.crops, &mut rng)?;
        degrade(&img, &recipe.noise, &mut rng)
    }

    /// Samples, renders and finalises one image.
    pub fn render_word(&self, word: &str, level: SophisticationLevel, seed: u64, index: u64) -> Result<(RenderRecipe, WordImage)> {
        let recipe = self.sample_recipe(word, level, seed, index)?;
        let img = self.render(&recipe)?;
        let out = finalize(&img, &recipe.word);
        Ok((recipe, out))
    }
}

/// Bounding box of the warped canvas rectangle, so a warp keeps the nominal
/// text framing rather than cropping to the ink.
fn canvas_frame(w: u32, h: u32, hom: &Homography) -> WarpFrame {
    let corners = [(0.0, 0.0), (w as f64, 0.0), (w as f64, h as f64), (0.0, h as f64)];
    let pts = corners.map(|(x, y)| hom.apply(x, y));
    let x0 = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min).floor() as i64;
    let y0 = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min).floor() as i64;
    let x1 = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
    let y1 = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max).ceil() as i64;
    WarpFrame {
        origin: (x0, y0),
        width: (x1 - x0).max(1) as u32,
        height: (y1 - y0).max(1) as u32,
    }
}

/// One palette per `64 x 64` tile of the natural images.
pub fn tile_palettes(crops: &NaturalCrops, seed: u64) -> Result<ColorClusterSet> {
    let sources: Vec<RgbImage> = crops.images().iter().flat_map(|i| tiles(i, PALETTE_TILE)).collect();
    fit_color_clusters(&sources, 3, seed)
}

fn bundled_palettes(crops: &NaturalCrops) -> Result<ColorClusterSet> {
    static CACHE: OnceLock<ColorClusterSet> = OnceLock::new();
    if let Some(p) = CACHE.get() {
        return Ok(p.clone());
    }
    let set = tile_palettes(crops, 0)?;
    Ok(CACHE.get_or_init(|| set).clone())
}
