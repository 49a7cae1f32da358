use ab_glyph::{point, Font, GlyphId, PxScale, Rect, ScaleFont};

use super::border::dilate;
use super::fonts::FontCatalogue;
use super::recipe::{BorderKind, RenderRecipe};
use super::RasterLayer;
use crate::error::{Error, Result};

const MIN_MARGIN: f64 = 2.0;

/// Space reserved around the text for the bold dilation, borders and shadows.
fn margin(recipe: &RenderRecipe, bold: u32) -> f64 {
    let extra = match recipe.border {
        Some(b) if b.kind == BorderKind::Shadow => b.offset.0.unsigned_abs().max(b.offset.1.unsigned_abs()),
        Some(b) if b.kind == BorderKind::Outset => b.width,
        _ => 0,
    };
    MIN_MARGIN + extra as f64 + bold as f64
}

fn bold_radius(recipe: &RenderRecipe) -> u32 {
    if recipe.font.weight >= 600 {
        (recipe.font.size / 30.0).round().max(1.0) as u32
    } else {
        0
    }
}

/// Rasterises the word into the alpha channel of a layer coloured with the
/// recipe's foreground colour. The layer spans the font's ascent to descent
/// (plus any curve, underline and overhang) and a margin of at least 2 px
/// on every side.
pub fn render_foreground(recipe: &RenderRecipe, fonts: &FontCatalogue) -> Result<RasterLayer> {
    let spec = &recipe.font;
    let font = fonts.font(spec.font_id)?;
    let font_name = fonts.name(spec.font_id).unwrap_or("?").to_string();
    let scale = PxScale::from(spec.size as f32);
    let sf = font.as_scaled(scale);

    // lay out on a baseline at y = 0
    let mut caret = 0.0f64;
    let mut prev: Option<GlyphId> = None;
    let mut placed = Vec::with_capacity(recipe.word.len());
    for ch in recipe.word.chars() {
        let id = font.glyph_id(ch);
        if id.0 == 0 {
            return Err(Error::MissingGlyph {
                ch,
                font: font_name,
            });
        }
        if let Some(p) = prev {
            caret += sf.kern(p, id) as f64;
        }
        let adv = sf.h_advance(id) as f64;
        let dy = spec.curve.map_or(0.0, |c| {
            let xc = caret + adv / 2.0;
            c.amplitude * (std::f64::consts::TAU * xc / c.period + c.phase).sin()
        });
        placed.push((id, caret, dy));
        caret += adv + spec.kerning * spec.size;
        prev = Some(id);
    }
    let text_end = caret - spec.kerning * spec.size;

    let ascent = sf.ascent() as f64;
    let descent = sf.descent() as f64;
    let amp = spec.curve.map_or(0.0, |c| c.amplitude);
    let mut outlines = Vec::with_capacity(placed.len());
    let mut bounds = Rect {
        min: point(0.0, (-ascent - amp) as f32),
        max: point(text_end.max(1.0) as f32, (-descent + amp) as f32),
    };
    for &(id, x, dy) in &placed {
        let glyph = id.with_scale_and_position(scale, point(x as f32, dy as f32));
        if let Some(o) = font.outline_glyph(glyph) {
            let b = o.px_bounds();
            bounds.min.x = bounds.min.x.min(b.min.x);
            bounds.min.y = bounds.min.y.min(b.min.y);
            bounds.max.x = bounds.max.x.max(b.max.x);
            bounds.max.y = bounds.max.y.max(b.max.y);
            outlines.push(o);
        }
    }
    let underline = spec.underline.then(|| {
        let y = 0.12 * spec.size;
        let t = (0.05 * spec.size).max(1.0);
        (y, y + t)
    });
    if let Some((_, y1)) = underline {
        bounds.max.y = bounds.max.y.max(y1 as f32);
    }

    let bold = bold_radius(recipe);
    let m = margin(recipe, bold);
    let ox = m - bounds.min.x.floor() as f64;
    let oy = m - bounds.min.y.floor() as f64;
    let width = (bounds.max.x.ceil() as f64 - bounds.min.x.floor() as f64 + 2.0 * m) as u32;
    let height = (bounds.max.y.ceil() as f64 - bounds.min.y.floor() as f64 + 2.0 * m) as u32;
    let mut alpha = vec![0u8; width as usize * height as usize];
    for o in &outlines {
        let b = o.px_bounds();
        let (bx, by) = (b.min.x as f64 + ox, b.min.y as f64 + oy);
        o.draw(|gx, gy, cov| {
            let x = bx as i64 + gx as i64;
            let y = by as i64 + gy as i64;
            if x >= 0 && y >= 0 && (x as u32) < width && (y as u32) < height {
                let v = (cov.clamp(0.0, 1.0) * 255.0).round() as u8;
                let i = y as usize * width as usize + x as usize;
                alpha[i] = alpha[i].max(v);
            }
        });
    }
    if let Some((y0, y1)) = underline {
        let (xa, xb) = ((ox).round() as u32, (text_end + ox).round() as u32);
        for y in (y0 + oy).round() as u32..(y1 + oy).round() as u32 {
            for x in xa..xb.min(width) {
                alpha[y as usize * width as usize + x as usize] = 255;
            }
        }
    }
    if bold > 0 {
        alpha = dilate(&alpha, width, height, bold);
    }
    let mut layer = RasterLayer::filled(width, height, recipe.colors[1], 0)?;
    layer.set_alpha_plane(&alpha);
    Ok(layer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::recipe::{Curve, SampleContext};
    use crate::render::{sample_recipe, ColorClusterSet, RenderConfig, SophisticationLevel};

    fn recipe(word: &str, fonts: &FontCatalogue) -> RenderRecipe {
        let p = ColorClusterSet { palettes: vec![] };
        let ctx = SampleContext {
            fonts: fonts.len(),
            default_font: fonts.default_id(),
            palettes: &p,
            crops: 0,
        };
        sample_recipe(word, SophisticationLevel::A, 0, 0, &RenderConfig::default(), &ctx).unwrap()
    }

    fn support_width(l: &RasterLayer) -> u32 {
        let (x0, _, x1, _) = l.opaque_bbox().unwrap();
        x1 - x0 + 1
    }

    #[test]
    fn width_grows_with_glyphs() {
        let fonts = FontCatalogue::bundled().unwrap();
        let one = render_foreground(&recipe("i", &fonts), &fonts).unwrap();
        let three = render_foreground(&recipe("iii", &fonts), &fonts).unwrap();
        assert!(support_width(&one) < support_width(&three));
    }

    #[test]
    fn text_is_inside_a_margin() {
        let fonts = FontCatalogue::bundled().unwrap();
        for id in 0..fonts.len() {
            let mut r = recipe("quickly9", &fonts);
            r.font.font_id = id;
            r.font.weight = 700;
            r.font.underline = true;
            let l = render_foreground(&r, &fonts).unwrap();
            let (x0, y0, x1, y1) = l.opaque_bbox().expect("something drawn");
            assert!(x0 >= 2 && y0 >= 2, "font {id}");
            assert!(x1 + 2 < l.width() && y1 + 2 < l.height(), "font {id}");
        }
    }

    /// Bottom row of each glyph's ink, scanning the columns of each letter.
    fn glyph_bottoms(l: &RasterLayer, n: usize) -> Vec<u32> {
        let (x0, _, x1, _) = l.opaque_bbox().unwrap();
        let span = (x1 - x0 + 1) as usize / n;
        (0..n)
            .map(|i| {
                let xs = x0 as usize + i * span + span / 4..x0 as usize + i * span + 3 * span / 4;
                let mut bottom = 0;
                for x in xs {
                    for y in 0..l.height() {
                        if l.alpha(x as u32, y) > 127 {
                            bottom = bottom.max(y);
                        }
                    }
                }
                bottom
            })
            .collect()
    }

    #[test]
    fn flat_curve_keeps_a_straight_baseline() {
        let fonts = FontCatalogue::bundled().unwrap();
        let mut r = recipe("xxxxx", &fonts);
        r.font.curve = Some(Curve {
            amplitude: 0.0,
            period: 50.0,
            phase: 1.0,
        });
        let b = glyph_bottoms(&render_foreground(&r, &fonts).unwrap(), 5);
        assert!(b.iter().max().unwrap() - b.iter().min().unwrap() <= 1, "{b:?}");
        r.font.curve = Some(Curve {
            amplitude: 4.0,
            period: 60.0,
            phase: 0.0,
        });
        let b = glyph_bottoms(&render_foreground(&r, &fonts).unwrap(), 5);
        assert!(b.iter().max().unwrap() - b.iter().min().unwrap() >= 3, "{b:?}");
    }

    #[test]
    fn every_word_draws_ink_and_missing_glyphs_fail() {
        let fonts = FontCatalogue::bundled().unwrap();
        for w in ["a", "0", "word", "zz9"] {
            let l = render_foreground(&recipe(w, &fonts), &fonts).unwrap();
            assert!(l.alpha_plane().iter().any(|&a| a > 0));
        }
        let mut r = recipe("a", &fonts);
        r.word = "a\u{e000}".into();
        assert!(matches!(render_foreground(&r, &fonts), Err(Error::MissingGlyph { .. })));
    }
}
