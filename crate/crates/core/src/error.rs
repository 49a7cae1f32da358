use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid word {word:?}: {reason}")]
    InvalidWord { word: String, reason: &'static str },

    #[error("lexicon is empty after filtering")]
    EmptyLexicon,

    #[error("word {0:?} is not in the lexicon")]
    OutOfLexicon(String),

    #[error("no cluster sources")]
    NoClusterSources,

    #[error("font error: {0}")]
    Font(String),

    #[error("glyph missing for character {ch:?} in font {font}")]
    MissingGlyph { ch: char, font: String },

    #[error("border width {width} exceeds half of layer dimension {min_dim}")]
    BorderTooWide { width: u32, min_dim: u32 },

    #[error("homography is not invertible (|det| = {0:e})")]
    SingularHomography(f64),

    #[error("missing natural image crops for level F rendering")]
    MissingNaturalCrops,

    #[error("no colour palettes available for level {0}")]
    MissingPalettes(char),

    #[error("image error: {0}")]
    Image(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("no word admissible under the language prior")]
    NoAdmissibleWord,

    #[error("gram {0:?} has zero corpus frequency")]
    ZeroFrequency(String),

    #[error("training set contains a single class")]
    SingleClass,

    #[error("model head {model} is incompatible with {requested}")]
    HeadMismatch { model: String, requested: String },

    #[error("malformed {what} at line {line}: {detail}")]
    Parse {
        what: &'static str,
        line: usize,
        detail: String,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
