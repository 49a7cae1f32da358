use serde::{Deserialize, Serialize};

use super::RasterLayer;
use crate::error::{Error, Result};

/// Row-major 3x3 projective transform acting on `(x, y, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homography(pub [[f64; 3]; 3]);

const SINGULAR: f64 = 1e-9;

impl Homography {
    pub const IDENTITY: Homography = Homography([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn translation(tx: f64, ty: f64) -> Self {
        Homography([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]])
    }

    pub fn scaling(sx: f64, sy: f64) -> Self {
        Homography([[sx, 0.0, 0.0], [0.0, sy, 0.0], [0.0, 0.0, 1.0]])
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::IDENTITY
    }

    pub fn inverse(&self) -> Result<Self> {
        let d = self.det();
        if !(d.abs() > SINGULAR) {
            return Err(Error::SingularHomography(d));
        }
        let m = &self.0;
        let c = |r0: usize, c0: usize, r1: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
        let adj = [
            [c(1, 1, 2, 2), -c(0, 1, 2, 2), c(0, 1, 1, 2)],
            [-c(1, 0, 2, 2), c(0, 0, 2, 2), -c(0, 0, 1, 2)],
            [c(1, 0, 2, 1), -c(0, 0, 2, 1), c(0, 0, 1, 1)],
        ];
        Ok(Homography(adj.map(|row| row.map(|v| v / d))))
    }

    /// `self * other`: applies `other` first.
    pub fn compose(&self, other: &Homography) -> Homography {
        let (a, b) = (&self.0, &other.0);
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        Homography(out)
    }

    pub fn apply(&self, x: f64, y: f64) -> (f64, f64) {
        let m = &self.0;
        let w = m[2][0] * x + m[2][1] * y + m[2][2];
        (
            (m[0][0] * x + m[0][1] * y + m[0][2]) / w,
            (m[1][0] * x + m[1][1] * y + m[1][2]) / w,
        )
    }

    /// Transform taking the unit square corners (0,0), (1,0), (1,1), (0,1)
    /// to the given quad.
    pub fn from_unit_square(quad: [(f64, f64); 4]) -> Result<Self> {
        // Solve for h00..h21 with h22 = 1 by Gaussian elimination.
        let src = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let mut a = [[0.0f64; 9]; 8];
        for (i, (&(x, y), &(u, v))) in src.iter().zip(&quad).enumerate() {
            a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
            a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
        }
        for col in 0..8 {
            let pivot = (col..8)
                .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
                .expect("non-empty");
            if a[pivot][col].abs() < 1e-12 {
                return Err(Error::SingularHomography(0.0));
            }
            a.swap(col, pivot);
            for r in 0..8 {
                if r != col {
                    let f = a[r][col] / a[col][col];
                    for c in col..9 {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
        let h: Vec<f64> = (0..8).map(|i| a[i][8] / a[i][i]).collect();
        let out = Homography([[h[0], h[1], h[2]], [h[3], h[4], h[5]], [h[6], h[7], 1.0]]);
        if !(out.det().abs() > SINGULAR) {
            return Err(Error::SingularHomography(out.det()));
        }
        Ok(out)
    }

    /// Conjugates a transform of the unit square into pixel coordinates of a
    /// `w x h` layer.
    pub fn to_pixels(&self, w: f64, h: f64) -> Homography {
        Homography::scaling(w, h)
            .compose(self)
            .compose(&Homography::scaling(1.0 / w, 1.0 / h))
    }
}

/// Output canvas of a warp: `size` pixels whose top-left corner sits at
/// `origin` in the transform's destination coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpFrame {
    pub origin: (i64, i64),
    pub width: u32,
    pub height: u32,
}

impl WarpFrame {
    /// Bounding box of the warped opaque pixels of every layer, plus margin.
    pub fn covering(layers: &[&RasterLayer], h: &Homography, margin: u32) -> Option<WarpFrame> {
        let mut bb: Option<(f64, f64, f64, f64)> = None;
        for layer in layers {
            let Some((x0, y0, x1, y1)) = layer.opaque_bbox() else {
                continue;
            };
            let corners = [
                (x0 as f64, y0 as f64),
                (x1 as f64 + 1.0, y0 as f64),
                (x1 as f64 + 1.0, y1 as f64 + 1.0),
                (x0 as f64, y1 as f64 + 1.0),
            ];
            for (x, y) in corners {
                let (u, v) = h.apply(x, y);
                bb = Some(match bb {
                    None => (u, v, u, v),
                    Some((a, b, c, d)) => (a.min(u), b.min(v), c.max(u), d.max(v)),
                });
            }
        }
        let (x0, y0, x1, y1) = bb?;
        let m = margin as i64;
        let ox = x0.floor() as i64 - m;
        let oy = y0.floor() as i64 - m;
        let w = (x1.ceil() as i64 + m - ox).max(1) as u32;
        let hgt = (y1.ceil() as i64 + m - oy).max(1) as u32;
        Some(WarpFrame {
            origin: (ox, oy),
            width: w,
            height: hgt,
        })
    }
}

/// Inverse-warps `layer` through `h` into `frame` with bilinear sampling.
/// Samples outside the source are transparent; colour is interpolated with
/// alpha weighting so transparent texels do not bleed.
pub fn warp_into(layer: &RasterLayer, h: &Homography, frame: WarpFrame) -> Result<RasterLayer> {
    let inv = h.inverse()?;
    let mut out = RasterLayer::new(frame.width, frame.height)?;
    let (w, hgt) = (layer.width() as i64, layer.height() as i64);
    let src = layer.data();
    for y in 0..frame.height {
        for x in 0..frame.width {
            let dx = (x as i64 + frame.origin.0) as f64 + 0.5;
            let dy = (y as i64 + frame.origin.1) as f64 + 0.5;
            let (sx, sy) = inv.apply(dx, dy);
            let (fx, fy) = (sx - 0.5, sy - 0.5);
            if !(fx > -1.0 && fy > -1.0 && fx < w as f64 && fy < hgt as f64) {
                continue;
            }
            let (x0, y0) = (fx.floor() as i64, fy.floor() as i64);
            let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
            let mut acc = [0.0f64; 4];
            for (cx, cy, wgt) in [
                (x0, y0, (1.0 - tx) * (1.0 - ty)),
                (x0 + 1, y0, tx * (1.0 - ty)),
                (x0, y0 + 1, (1.0 - tx) * ty),
                (x0 + 1, y0 + 1, tx * ty),
            ] {
                if cx < 0 || cy < 0 || cx >= w || cy >= hgt || wgt == 0.0 {
                    continue;
                }
                let o = ((cy * w + cx) * 4) as usize;
                let a = src[o + 3] as f64 * wgt;
                for c in 0..3 {
                    acc[c] += src[o + c] as f64 * a;
                }
                acc[3] += a;
            }
            if acc[3] <= 0.0 {
                continue;
            }
            let px = [
                (acc[0] / acc[3]).round() as u8,
                (acc[1] / acc[3]).round() as u8,
                (acc[2] / acc[3]).round() as u8,
                acc[3].round().min(255.0) as u8,
            ];
            out.set_pixel(x, y, px);
        }
    }
    Ok(out)
}

/// Warps a layer onto a canvas covering its transformed opaque region plus a
/// 2 px margin. Returns the layer and the canvas origin in destination
/// coordinates.
pub fn apply_projective(layer: &RasterLayer, h: &Homography) -> Result<(RasterLayer, (i64, i64))> {
    h.inverse()?;
    let frame = WarpFrame::covering(&[layer], h, 2).unwrap_or(WarpFrame {
        origin: (0, 0),
        width: layer.width(),
        height: layer.height(),
    });
    Ok((warp_into(layer, h, frame)?, frame.origin))
}
