use super::recipe::{BorderKind, RenderRecipe};
use super::RasterLayer;
use crate::error::{Error, Result};

fn disc(radius: u32) -> Vec<(i64, i64)> {
    let r = radius as i64;
    let mut out = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                out.push((dx, dy));
            }
        }
    }
    out
}

/// Grey-level morphology with a disc: max filter when `dilate`, otherwise
/// min filter with everything outside the layer counted as 0.
fn morph(alpha: &[u8], w: u32, h: u32, radius: u32, dilate: bool) -> Vec<u8> {
    let offsets = disc(radius);
    let (w, h) = (w as i64, h as i64);
    let mut out = vec![0u8; alpha.len()];
    for y in 0..h {
        for x in 0..w {
            let mut v = if dilate { 0u8 } else { 255u8 };
            for &(dx, dy) in &offsets {
                let (sx, sy) = (x + dx, y + dy);
                let s = if sx < 0 || sy < 0 || sx >= w || sy >= h {
                    0
                } else {
                    alpha[(sy * w + sx) as usize]
                };
                v = if dilate { v.max(s) } else { v.min(s) };
            }
            out[(y * w + x) as usize] = v;
        }
    }
    out
}

pub(crate) fn dilate(alpha: &[u8], w: u32, h: u32, radius: u32) -> Vec<u8> {
    morph(alpha, w, h, radius, true)
}

/// Border or shadow layer on the foreground's canvas, coloured with the
/// recipe's third colour. Outset: the foreground dilated by the width.
/// Inset: the band removed by eroding the foreground by the width.
/// Shadow: the foreground translated by the offset.
pub fn render_border_shadow(recipe: &RenderRecipe, fg: &RasterLayer) -> Result<Option<RasterLayer>> {
    let Some(border) = recipe.border else {
        return Ok(None);
    };
    let (w, h) = (fg.width(), fg.height());
    let min_dim = w.min(h);
    if border.width > min_dim / 2 {
        return Err(Error::BorderTooWide {
            width: border.width,
            min_dim,
        });
    }
    let a = fg.alpha_plane();
    let alpha = match border.kind {
        BorderKind::Outset => dilate(&a, w, h, border.width),
        BorderKind::Inset => {
            let eroded = morph(&a, w, h, border.width, false);
            a.iter().zip(&eroded).map(|(&v, &e)| v.saturating_sub(e)).collect()
        }
        BorderKind::Shadow => {
            let (dx, dy) = (border.offset.0 as i64, border.offset.1 as i64);
            let mut out = vec![0u8; a.len()];
            for y in 0..h as i64 {
                for x in 0..w as i64 {
                    let (sx, sy) = (x - dx, y - dy);
                    if sx >= 0 && sy >= 0 && sx < w as i64 && sy < h as i64 {
                        out[(y * w as i64 + x) as usize] = a[(sy * w as i64 + sx) as usize];
                    }
                }
            }
            out
        }
    };
    let mut layer = RasterLayer::filled(w, h, recipe.colors[2], 0)?;
    layer.set_alpha_plane(&alpha);
    Ok(Some(layer))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::recipe::Border;
    use crate::render::{sample_recipe, ColorClusterSet, RenderConfig, SampleContext, SophisticationLevel};

    fn recipe(border: Option<Border>) -> RenderRecipe {
        let p = ColorClusterSet { palettes: vec![] };
        let ctx = SampleContext {
            fonts: 1,
            default_font: 0,
            palettes: &p,
            crops: 0,
        };
        let mut r = sample_recipe("dot", SophisticationLevel::A, 0, 0, &RenderConfig::default(), &ctx).unwrap();
        r.border = border;
        r
    }

    fn dot() -> RasterLayer {
        let mut l = RasterLayer::new(21, 21).unwrap();
        l.set_pixel(10, 10, [0, 0, 0, 255]);
        l
    }

    #[test]
    fn no_border_no_layer() {
        assert!(render_border_shadow(&recipe(None), &dot()).unwrap().is_none());
    }

    #[test]
    fn outset_of_a_dot_is_a_disc() {
        let r = recipe(Some(Border {
            kind: BorderKind::Outset,
            width: 2,
            offset: (0, 0),
        }));
        let layer = render_border_shadow(&r, &dot()).unwrap().unwrap();
        for y in 0..21i64 {
            for x in 0..21i64 {
                let inside = (x - 10).pow(2) + (y - 10).pow(2) <= 4;
                assert_eq!(layer.alpha(x as u32, y as u32) > 0, inside, "({x},{y})");
            }
        }
    }

    #[test]
    fn shadow_is_a_translation() {
        let mut fg = RasterLayer::new(30, 20).unwrap();
        for (i, px) in fg.data_mut().chunks_exact_mut(4).enumerate() {
            px[3] = ((i * 37) % 256) as u8;
        }
        let r = recipe(Some(Border {
            kind: BorderKind::Shadow,
            width: 0,
            offset: (3, 3),
        }));
        let s = render_border_shadow(&r, &fg).unwrap().unwrap();
        for y in 3..20 {
            for x in 3..30 {
                assert_eq!(s.alpha(x, y), fg.alpha(x - 3, y - 3));
            }
        }
    }

    #[test]
    fn inset_is_an_inner_band() {
        let mut fg = RasterLayer::new(20, 20).unwrap();
        for y in 4..16 {
            for x in 4..16 {
                fg.set_pixel(x, y, [0, 0, 0, 255]);
            }
        }
        let r = recipe(Some(Border {
            kind: BorderKind::Inset,
            width: 1,
            offset: (0, 0),
        }));
        let band = render_border_shadow(&r, &fg).unwrap().unwrap();
        assert_eq!(band.alpha(4, 10), 255);
        assert_eq!(band.alpha(10, 10), 0);
        assert_eq!(band.alpha(2, 10), 0);
    }

    #[test]
    fn too_wide_is_an_error() {
        let r = recipe(Some(Border {
            kind: BorderKind::Outset,
            width: 6,
            offset: (0, 0),
        }));
        let small = RasterLayer::new(10, 10).unwrap();
        assert!(matches!(render_border_shadow(&r, &small), Err(Error::BorderTooWide { .. })));
    }
}
