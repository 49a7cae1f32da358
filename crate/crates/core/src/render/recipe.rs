use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::blend::BlendMode;
use super::color::{luma, ColorClusterSet, Rgb};
use super::config::RenderConfig;
use super::warp::Homography;
use super::SophisticationLevel;
use crate::corpus::normalize_word;
use crate::error::{Error, Result};

/// Sinusoidal baseline: `y = amplitude * sin(2 pi x / period + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    /// Pixels.
    pub amplitude: f64,
    /// Pixels.
    pub period: f64,
    /// Radians.
    pub phase: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FontSpec {
    pub font_id: usize,
    /// Pixels per em.
    pub size: f64,
    /// Extra advance per glyph in em.
    pub kerning: f64,
    /// 400 normal, 700 bold.
    pub weight: u16,
    pub underline: bool,
    pub curve: Option<Curve>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BorderKind {
    Inset,
    Outset,
    Shadow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Border {
    pub kind: BorderKind,
    /// Pixels; 0 for a shadow.
    pub width: u32,
    /// Shadow displacement in pixels.
    pub offset: (i32, i32),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendLayer {
    /// Index into the natural-image set.
    pub crop_id: usize,
    pub mode: BlendMode,
    /// Weight of the crop, 0 leaves the layer unchanged.
    pub alpha: f64,
}

impl BlendLayer {
    pub const NEUTRAL: BlendLayer = BlendLayer {
        crop_id: 0,
        mode: BlendMode::Normal,
        alpha: 0.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlendPlan {
    pub background: BlendLayer,
    pub border: BlendLayer,
    pub foreground: BlendLayer,
    /// Opacity of the border and foreground layers over the background.
    pub composite_alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Additive Gaussian noise, 8-bit units.
    pub gaussian_sigma: f64,
    /// Pixels.
    pub blur_sigma: f64,
    /// `None` skips compression.
    pub jpeg_quality: Option<u8>,
    /// Largest elastic displacement in pixels; 0 disables.
    pub elastic: f64,
    /// Smoothing of the elastic displacement field in pixels.
    pub elastic_sigma: f64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec {
        gaussian_sigma: 0.0,
        blur_sigma: 0.0,
        jpeg_quality: None,
        elastic: 0.0,
        elastic_sigma: 0.0,
    };
}

/// Everything needed to render one image; rendering is a pure function of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderRecipe {
    pub word: String,
    pub level: SophisticationLevel,
    pub font: FontSpec,
    pub border: Option<Border>,
    /// Background, foreground, border/shadow.
    pub colors: [Rgb; 3],
    /// Distortion of the unit square, conjugated to layer pixels at render time.
    pub projective: Homography,
    pub blend: BlendPlan,
    pub noise: NoiseSpec,
    /// Seeds render-time randomness (crop positions, noise, elastic field).
    pub seed: u64,
}

impl RenderRecipe {
    pub fn validate(&self) -> Result<()> {
        let d = self.projective.det();
        if !(d.abs() > 1e-9) {
            return Err(Error::SingularHomography(d));
        }
        let b = &self.blend;
        for a in [b.background.alpha, b.border.alpha, b.foreground.alpha, b.composite_alpha] {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("blend alpha {a} outside [0, 1]")));
            }
        }
        if let Some(c) = self.font.curve {
            if !(c.amplitude >= 0.0) || !(c.period > 0.0) {
                return Err(Error::Config("curve needs amplitude >= 0 and period > 0".into()));
            }
        }
        if let Some(q) = self.noise.jpeg_quality {
            if !(1..=100).contains(&q) {
                return Err(Error::Config(format!("jpeg quality {q} outside [1, 100]")));
            }
        }
        Ok(())
    }
}

/// Sizes of the resources a recipe indexes into.
#[derive(Debug, Clone, Copy)]
pub struct SampleContext<'a> {
    pub fonts: usize,
    pub default_font: usize,
    pub palettes: &'a ColorClusterSet,
    pub crops: usize,
}

/// Stable 64-bit mix of `(seed, word, index)`; independent of platform and
/// standard-library hashing.
fn mix(seed: u64, word: &str, index: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    eat(&seed.to_le_bytes());
    eat(word.as_bytes());
    eat(&[0xff]);
    eat(&index.to_le_bytes());
    // splitmix64 finaliser
    let mut z = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn recipe_rng(seed: u64, word: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, word, index))
}

fn uniform<R: Rng>(rng: &mut R, (a, b): (f64, f64)) -> f64 {
    if a == b {
        a
    } else {
        rng.random_range(a..=b)
    }
}

/// Draws a recipe. Every field is sampled at every level, so recipes for the
/// same `(seed, word, index)` share their draws; features above `level` are
/// then reset to neutral values.
pub fn sample_recipe(
    word: &str,
    level: SophisticationLevel,
    seed: u64,
    index: u64,
    config: &RenderConfig,
    ctx: &SampleContext<'_>,
) -> Result<RenderRecipe> {
    let word = normalize_word(word)?;
    if ctx.fonts == 0 {
        return Err(Error::Font("font catalogue is empty".into()));
    }
    let mut rng = recipe_rng(seed, &word, index);
    let render_seed: u64 = rng.random();

    let est_width = word.len() as f64 * config.font_size * 0.6;
    let font = FontSpec {
        font_id: rng.random_range(0..ctx.fonts),
        size: config.font_size,
        kerning: uniform(&mut rng, config.kerning),
        weight: if rng.random_bool(config.bold_probability) { 700 } else { 400 },
        underline: rng.random_bool(config.underline_probability),
        curve: {
            let on = rng.random_bool(config.curve_probability);
            let c = Curve {
                amplitude: uniform(&mut rng, (0.0, config.curve_amplitude_max)),
                period: uniform(&mut rng, config.curve_period) * est_width.max(1.0),
                phase: rng.random_range(0.0..std::f64::consts::TAU),
            };
            on.then_some(c)
        },
    };

    let border = {
        let on = rng.random_bool(config.border_probability);
        let kind = [BorderKind::Inset, BorderKind::Outset, BorderKind::Shadow][rng.random_range(0..3)];
        let width = rng.random_range(config.border_width.0..=config.border_width.1);
        let (o0, o1) = config.shadow_offset;
        let mut offset = (rng.random_range(o0..=o1), rng.random_range(o0..=o1));
        if rng.random_bool(0.5) {
            offset.0 = -offset.0;
        }
        let width = if kind == BorderKind::Shadow { 0 } else { width };
        on.then_some(Border {
            kind,
            width,
            offset: if kind == BorderKind::Shadow { offset } else { (0, 0) },
        })
    };

    let colors = sample_colors(&mut rng, config, ctx.palettes);

    let j = config.corner_jitter;
    let mut quad = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
    for c in quad.iter_mut() {
        c.0 += uniform(&mut rng, (-j, j));
        c.1 += uniform(&mut rng, (-j, j));
    }
    let projective = Homography::from_unit_square(quad)?;

    let crops = ctx.crops.max(1);
    let blend_layer = |rng: &mut ChaCha8Rng| BlendLayer {
        crop_id: rng.random_range(0..crops),
        mode: BlendMode::ALL[rng.random_range(0..BlendMode::ALL.len())],
        alpha: uniform(rng, config.blend_alpha),
    };
    let blend = BlendPlan {
        background: blend_layer(&mut rng),
        border: blend_layer(&mut rng),
        foreground: blend_layer(&mut rng),
        composite_alpha: uniform(&mut rng, config.composite_alpha),
    };

    let noise = NoiseSpec {
        gaussian_sigma: uniform(&mut rng, (0.0, config.noise_sigma_max)),
        blur_sigma: uniform(&mut rng, (0.0, config.blur_sigma_max)),
        jpeg_quality: Some(rng.random_range(config.jpeg_quality.0..=config.jpeg_quality.1)),
        elastic: if config.elastic { config.elastic_max } else { 0.0 },
        elastic_sigma: config.elastic_sigma,
    };

    use SophisticationLevel as L;
    let mut recipe = RenderRecipe {
        word,
        level,
        font,
        border,
        colors: colors.unwrap_or([Rgb::WHITE, Rgb::BLACK, Rgb::BLACK]),
        projective,
        blend,
        noise,
        seed: render_seed,
    };
    if level < L::B {
        recipe.font = FontSpec {
            font_id: ctx.default_font,
            size: config.font_size,
            kerning: 0.0,
            weight: 400,
            underline: false,
            curve: None,
        };
    }
    if level < L::C {
        recipe.border = None;
        recipe.colors = [Rgb::WHITE, Rgb::BLACK, Rgb::BLACK];
    } else if colors.is_none() {
        return Err(Error::MissingPalettes(level.letter()));
    }
    if level < L::D {
        recipe.projective = Homography::IDENTITY;
    }
    if level < L::E {
        recipe.noise = NoiseSpec::NONE;
    }
    if level < L::F {
        recipe.blend = BlendPlan {
            background: BlendLayer::NEUTRAL,
            border: BlendLayer::NEUTRAL,
            foreground: BlendLayer::NEUTRAL,
            composite_alpha: 1.0,
        };
    } else if ctx.crops == 0 {
        return Err(Error::MissingNaturalCrops);
    }
    recipe.validate()?;
    Ok(recipe)
}

/// Palette colours in random order as (background, foreground, border),
/// redrawn until foreground and background differ in luma by the configured
/// contrast. After the attempts run out, the most contrasting pair of the
/// last palette is used, or black on white if even that is too flat.
fn sample_colors<R: Rng>(rng: &mut R, config: &RenderConfig, set: &ColorClusterSet) -> Option<[Rgb; 3]> {
    if set.is_empty() {
        return None;
    }
    let mut last = set.palettes[0];
    for _ in 0..config.color_attempts.max(1) {
        let mut p = set.palettes[rng.random_range(0..set.len())].0;
        p.shuffle(rng);
        if (luma(p[0]) - luma(p[1])).abs() >= config.min_contrast {
            return Some(p);
        }
        last = super::color::Palette(p);
    }
    let p = last.0;
    let pairs = [(0, 1, 2), (0, 2, 1), (1, 2, 0)];
    let (a, b, c) = pairs
        .into_iter()
        .max_by(|x, y| {
            let dx = (luma(p[x.0]) - luma(p[x.1])).abs();
            let dy = (luma(p[y.0]) - luma(p[y.1])).abs();
            dx.total_cmp(&dy)
        })
        .expect("three pairs");
    if (luma(p[a]) - luma(p[b])).abs() >= config.min_contrast {
        let (bg, fg) = if luma(p[a]) > luma(p[b]) { (p[a], p[b]) } else { (p[b], p[a]) };
        Some([bg, fg, p[c]])
    } else {
        Some([Rgb::WHITE, Rgb::BLACK, p[c]])
    }
}
