use std::fmt;
use std::path::{Path, PathBuf};

use ab_glyph::FontVec;

use crate::error::{Error, Result};

/// File name of the font used at level A when the catalogue has it.
pub const DEFAULT_FONT: &str = "DejaVuSans.ttf";

/// Immutable set of fonts, ordered by file name.
pub struct FontCatalogue {
    names: Vec<String>,
    fonts: Vec<FontVec>,
    default: usize,
}

impl fmt::Debug for FontCatalogue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FontCatalogue")
            .field("names", &self.names)
            .field("default", &self.default)
            .finish()
    }
}

impl FontCatalogue {
    /// Every `.ttf` / `.otf` file directly inside `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        let mut paths: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "ttf" | "otf"))
            })
            .collect();
        paths.sort();
        let mut named = Vec::with_capacity(paths.len());
        for p in paths {
            let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            named.push((name, bytes));
        }
        Self::from_bytes(named)
    }

    pub fn from_bytes(named: Vec<(String, Vec<u8>)>) -> Result<Self> {
        if named.is_empty() {
            return Err(Error::Font("font catalogue is empty".into()));
        }
        let mut names = Vec::with_capacity(named.len());
        let mut fonts = Vec::with_capacity(named.len());
        for (name, bytes) in named {
            let font = FontVec::try_from_vec(bytes)
                .map_err(|e| Error::Font(format!("{name}: {e}")))?;
            names.push(name);
            fonts.push(font);
        }
        let default = names.iter().position(|n| n == DEFAULT_FONT).unwrap_or(0);
        Ok(FontCatalogue {
            names,
            fonts,
            default,
        })
    }

    /// Fonts shipped with the crate.
    pub fn bundled() -> Result<Self> {
        Self::from_dir(&Self::bundled_dir())
    }

    pub fn bundled_dir() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("assets").join("fonts")
    }

    pub fn len(&self) -> usize {
        self.fonts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fonts.is_empty()
    }

    pub fn default_id(&self) -> usize {
        self.default
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn font(&self, id: usize) -> Result<&FontVec> {
        self.fonts
            .get(id)
            .ok_or_else(|| Error::Font(format!("font id {id} not in a catalogue of {}", self.len())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_catalogue_loads() {
        let cat = FontCatalogue::bundled().unwrap();
        assert!(cat.len() >= 5);
        assert_eq!(cat.name(cat.default_id()), Some(DEFAULT_FONT));
        assert!(cat.font(cat.len()).is_err());
    }

    #[test]
    fn garbage_font_is_an_error() {
        let r = FontCatalogue::from_bytes(vec![("x.ttf".into(), vec![1, 2, 3])]);
        assert!(matches!(r, Err(Error::Font(_))));
        assert!(FontCatalogue::from_bytes(Vec::new()).is_err());
    }
}
