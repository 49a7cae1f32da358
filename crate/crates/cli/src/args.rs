use std::path::PathBuf;

use clap::{Args, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use wordsynth::render::SophisticationLevel;

/// Rendering resources; unset paths fall back to the bundled assets.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RenderArgs {
    /// Font directory; defaults to $WORDSYNTH_FONT_DIR, then the bundled fonts.
    #[arg(long, value_name = "DIR")]
    pub fonts: Option<PathBuf>,
    /// Directory of natural images for level-F blending and palettes.
    #[arg(long, value_name = "DIR")]
    pub natural: Option<PathBuf>,
    /// Colour palettes written by `clusters`; fitted on the natural images when unset.
    #[arg(long, value_name = "FILE")]
    pub palettes: Option<PathBuf>,
    /// Sampling distributions (TOML); defaults when unset.
    #[arg(long, value_name = "FILE")]
    pub render_config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    Dict,
    Charseq,
    Ngram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    Base,
    Plus2,
}

/// Network shape and optimiser settings.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "base")]
    pub variant: VariantKind,
    /// Channel widths of the four convolutions.
    #[arg(long, default_value = "16,32,64,64")]
    pub widths: String,
    /// Width of the fully connected layers.
    #[arg(long, default_value_t = 256)]
    pub fc: usize,
    #[arg(long, default_value_t = 0.5)]
    pub dropout: f64,
    #[arg(long, default_value_t = 10)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0.0)]
    pub weight_decay: f64,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    /// Render a labelled dataset with a manifest.
    Gen(GenArgs),
    /// Fit colour palettes on natural images.
    Clusters(ClustersArgs),
    /// Select the N-gram vocabulary of a word list.
    Vocab(VocabArgs),
    /// Train a recogniser on a generated dataset.
    Train(TrainArgs),
    /// Score a trained recogniser on a dataset.
    Eval(EvalArgs),
    /// Train at every rendering level and test at level F.
    Ablate(AblateArgs),
    /// Dump the label encodings of a lexicon.
    Encode(EncodeArgs),
    /// Render one sample and its recipe.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct GenArgs {
    #[arg(long, value_name = "FILE")]
    pub lexicon: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub per_word: usize,
    #[arg(long, default_value = "f")]
    pub level: SophisticationLevel,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[command(flatten)]
    pub render: RenderArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ClustersArgs {
    /// Directory of natural images; defaults to the bundled set.
    #[arg(long, value_name = "DIR")]
    pub images: Option<PathBuf>,
    /// Tile side; one palette is fitted per tile.
    #[arg(long, default_value_t = 64)]
    pub tile: u32,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct VocabArgs {
    /// Word list; defaults to the bundled list.
    #[arg(long, value_name = "FILE")]
    pub words: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub max_n: usize,
    #[arg(long, default_value_t = 10)]
    pub min_count: u64,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TrainArgs {
    /// Dataset directory or manifest file.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub head: HeadKind,
    /// Class order of the dict head.
    #[arg(long, value_name = "FILE")]
    pub lexicon: Option<PathBuf>,
    /// Vocabulary dump for the ngram head.
    #[arg(long, value_name = "FILE")]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub max_n: usize,
    #[arg(long, default_value_t = 10)]
    pub min_count: u64,
    /// Incremental dict stages as class-count increments, e.g. `25,25`.
    #[arg(long)]
    pub schedule: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Dataset directory or manifest file.
    #[arg(long, value_name = "PATH")]
    pub data: PathBuf,
    /// Decoder; defaults to the model's head.
    #[arg(long, value_enum)]
    pub decoder: Option<HeadKind>,
    #[arg(long, value_name = "FILE")]
    pub lexicon: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub max_n: usize,
    #[arg(long, default_value_t = 10)]
    pub min_count: u64,
    /// Constrain each prediction to the truth plus K - 1 lexicon distractors.
    #[arg(long, value_name = "K")]
    pub sublexicon: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Report file.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AblateArgs {
    #[arg(long, value_name = "FILE")]
    pub lexicon: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub per_word: usize,
    #[arg(long, default_value_t = 50)]
    pub reduced_per_word: usize,
    #[arg(long, default_value_t = 20)]
    pub test_per_word: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub render: RenderArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingKind {
    Dict,
    Charseq,
    Ngram,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EncodeArgs {
    #[arg(long, value_name = "FILE")]
    pub lexicon: PathBuf,
    #[arg(long, value_enum)]
    pub kind: EncodingKind,
    /// Vocabulary dump; selected from the lexicon when unset.
    #[arg(long, value_name = "FILE")]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub max_n: usize,
    #[arg(long, default_value_t = 10)]
    pub min_count: u64,
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InspectArgs {
    #[arg(long)]
    pub word: String,
    #[arg(long, default_value = "f")]
    pub level: SophisticationLevel,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub index: u64,
    /// PNG path; the recipe is written next to it as JSON.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    #[command(flatten)]
    pub render: RenderArgs,
}
