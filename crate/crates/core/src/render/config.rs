use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Every sampling distribution used by the renderer. Loaded from TOML;
/// missing keys take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    /// Glyph size in pixels per em.
    pub font_size: f64,
    /// Extra advance per glyph, in em: uniform on `[min, max]`.
    pub kerning: (f64, f64),
    pub bold_probability: f64,
    pub underline_probability: f64,
    pub curve_probability: f64,
    /// Baseline curve amplitude in pixels: uniform on `[0, max]`.
    pub curve_amplitude_max: f64,
    /// Curve period as a multiple of the text width: uniform on `[min, max]`.
    pub curve_period: (f64, f64),
    pub border_probability: f64,
    /// Border width in pixels: uniform integer on `[min, max]`.
    pub border_width: (u32, u32),
    /// Shadow offset per axis in pixels: uniform integer on `[min, max]`.
    pub shadow_offset: (i32, i32),
    /// Minimum luma difference between foreground and background, 0..1.
    pub min_contrast: f64,
    /// Attempts at a palette assignment before the fallback.
    pub color_attempts: u32,
    /// Projective corner displacement as a fraction of the layer size.
    pub corner_jitter: f64,
    /// Crop blend strength at level F: uniform on `[min, max]`.
    pub blend_alpha: (f64, f64),
    /// Opacity of the border and foreground layers over the background at
    /// level F: uniform on `[min, max]`.
    pub composite_alpha: (f64, f64),
    /// Additive noise standard deviation in 8-bit units: uniform on `[0, max]`.
    pub noise_sigma_max: f64,
    /// Blur standard deviation in pixels: uniform on `[0, max]`.
    pub blur_sigma_max: f64,
    /// JPEG quality: uniform integer on `[min, max]`.
    pub jpeg_quality: (u8, u8),
    pub elastic: bool,
    /// Largest elastic displacement in pixels.
    pub elastic_max: f64,
    /// Smoothing of the elastic displacement field in pixels.
    pub elastic_sigma: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            font_size: 36.0,
            kerning: (-0.05, 0.1),
            bold_probability: 0.3,
            underline_probability: 0.05,
            curve_probability: 0.2,
            curve_amplitude_max: 4.0,
            curve_period: (1.0, 2.0),
            border_probability: 0.3,
            border_width: (1, 3),
            shadow_offset: (1, 3),
            min_contrast: 25.0 / 255.0,
            color_attempts: 20,
            corner_jitter: 0.12,
            blend_alpha: (0.1, 0.6),
            composite_alpha: (0.7, 1.0),
            noise_sigma_max: 8.0,
            blur_sigma_max: 1.5,
            jpeg_quality: (60, 95),
            elastic: true,
            elastic_max: 1.5,
            elastic_sigma: 4.0,
        }
    }
}

impl RenderConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RenderConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("render config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("render config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let prob = |name: &str, p: f64| {
            if (0.0..=1.0).contains(&p) {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be a probability, got {p}")))
            }
        };
        let range = |name: &str, (a, b): (f64, f64)| {
            if a.is_finite() && b.is_finite() && a <= b {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} range [{a}, {b}] is empty")))
            }
        };
        prob("bold_probability", self.bold_probability)?;
        prob("underline_probability", self.underline_probability)?;
        prob("curve_probability", self.curve_probability)?;
        prob("border_probability", self.border_probability)?;
        prob("min_contrast", self.min_contrast)?;
        range("kerning", self.kerning)?;
        range("curve_period", self.curve_period)?;
        range("blend_alpha", self.blend_alpha)?;
        range("composite_alpha", self.composite_alpha)?;
        if !(self.font_size >= 8.0 && self.font_size <= 256.0) {
            return Err(Error::Config(format!("font_size {} outside [8, 256]", self.font_size)));
        }
        if self.curve_period.0 <= 0.0 {
            return Err(Error::Config("curve_period must be positive".into()));
        }
        for (name, (a, b)) in [("blend_alpha", self.blend_alpha), ("composite_alpha", self.composite_alpha)] {
            if a < 0.0 || b > 1.0 {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.border_width.0 == 0 || self.border_width.0 > self.border_width.1 {
            return Err(Error::Config("border_width range must be within [1, max]".into()));
        }
        if self.shadow_offset.0 > self.shadow_offset.1 {
            return Err(Error::Config("shadow_offset range is empty".into()));
        }
        let (q0, q1) = self.jpeg_quality;
        if q0 == 0 || q1 > 100 || q0 > q1 {
            return Err(Error::Config("jpeg_quality range must be within [1, 100]".into()));
        }
        for (name, v) in [
            ("curve_amplitude_max", self.curve_amplitude_max),
            ("corner_jitter", self.corner_jitter),
            ("noise_sigma_max", self.noise_sigma_max),
            ("blur_sigma_max", self.blur_sigma_max),
            ("elastic_max", self.elastic_max),
            ("elastic_sigma", self.elastic_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.corner_jitter >= 0.25 {
            return Err(Error::Config("corner_jitter must be < 0.25".into()));
        }
        Ok(())
    }
}
