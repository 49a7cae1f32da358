//! Word accuracy and error edit distance of a recogniser on a dataset, and
//! the rendering-level ablation ladder.

mod ablation;

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{LanguagePrior, Lexicon, NGramVocab};
use crate::encode::{
    constrain_lexicon, decode_charseq, decode_ngrams_nn, encode_charseq, encode_dict, encode_ngrams, levenshtein,
    score_dict, CharProbs, GramActivations, NGramCodebook, NGramSvm,
};
use crate::error::{Error, Result};
use crate::net::{HeadSpec, Network, Sample, Target, Tensor};
use crate::render::{load_dataset, DatasetManifest, WordImage};

pub use ablation::{run_ablation, AblationConfig, AblationResult, AblationRow};

/// Anything that maps a normalised word image to head activations.
pub trait Recognizer: Sync {
    fn head(&self) -> HeadSpec;
    /// Activated head outputs (probabilities or logistic values).
    fn activations(&self, image: &WordImage) -> Result<Vec<f32>>;
    fn id(&self) -> String {
        self.head().name().to_string()
    }
}

impl Recognizer for Network<f32> {
    fn head(&self) -> HeadSpec {
        *self.head_spec()
    }

    fn activations(&self, image: &WordImage) -> Result<Vec<f32>> {
        let [c, h, w] = self.spec().input;
        let x = Tensor::from_vec(&[1, c, h, w], image.pixels.clone())?;
        Ok(self.forward(&x)?.into_data())
    }

    fn id(&self) -> String {
        format!(
            "{:?}-{}-{}",
            self.spec().variant,
            self.head_spec().name(),
            self.param_count()
        )
        .to_lowercase()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LexiconMode {
    /// Unconstrained prediction.
    None,
    /// Each sample gets its own lexicon: the truth plus `k - 1` distractors
    /// drawn from the full lexicon.
    Sublexicon(usize),
}

/// How head outputs become words.
#[derive(Debug, Clone, Copy)]
pub enum Decoder<'a> {
    Dict {
        lexicon: &'a Lexicon,
        prior: &'a LanguagePrior,
    },
    /// The lexicon is only needed to draw sublexicons.
    CharSeq { lexicon: Option<&'a Lexicon> },
    NGram {
        lexicon: &'a Lexicon,
        codebook: &'a NGramCodebook,
    },
    NGramSvm {
        lexicon: &'a Lexicon,
        svm: &'a NGramSvm,
    },
}

impl Decoder<'_> {
    fn name(&self) -> String {
        match self {
            Decoder::Dict { lexicon, .. } => format!("dict decoder over {} words", lexicon.len()),
            Decoder::CharSeq { .. } => "charseq decoder".into(),
            Decoder::NGram { codebook, .. } => format!("ngram decoder over {} grams", codebook.dim()),
            Decoder::NGramSvm { lexicon, .. } => format!("ngram svm over {} words", lexicon.len()),
        }
    }

    fn lexicon(&self) -> Option<&Lexicon> {
        match self {
            Decoder::Dict { lexicon, .. } | Decoder::NGram { lexicon, .. } | Decoder::NGramSvm { lexicon, .. } => {
                Some(lexicon)
            }
            Decoder::CharSeq { lexicon } => *lexicon,
        }
    }

    /// Errors unless the decoder can read the head's outputs.
    pub fn check(&self, head: &HeadSpec) -> Result<()> {
        let ok = match (self, head) {
            (Decoder::Dict { lexicon, prior }, HeadSpec::Dict { classes }) => {
                *classes == lexicon.len() && prior.values().len() == lexicon.len()
            }
            (Decoder::CharSeq { .. }, HeadSpec::CharSeq) => true,
            (Decoder::NGram { lexicon, codebook }, HeadSpec::NGram { grams }) => {
                *grams == codebook.dim() && codebook.len() == lexicon.len()
            }
            (Decoder::NGramSvm { lexicon, svm }, HeadSpec::NGram { .. }) => svm.classes() == lexicon.len(),
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::HeadMismatch {
                model: format!("{head:?}"),
                requested: self.name(),
            })
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DecoderConfig<'a> {
    pub decoder: Decoder<'a>,
    pub mode: LexiconMode,
    /// Seeds the sublexicon draws.
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    /// Position of the sample in the dataset.
    pub index: usize,
    pub truth: String,
    pub raw: String,
    pub constrained: Option<String>,
    pub correct: bool,
}

impl EvalRecord {
    pub fn prediction(&self) -> &str {
        self.constrained.as_deref().unwrap_or(&self.raw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    pub dataset_id: String,
    pub lexicon_mode: LexiconMode,
    pub word_accuracy: f64,
    /// Mean edit distance between prediction and truth over wrong samples;
    /// absent when every sample is right.
    pub error_mean_edit_distance: Option<f64>,
    /// Samples dropped by the evaluation filter.
    pub skipped: usize,
    pub records: Vec<EvalRecord>,
}

impl EvalReport {
    /// Summary statistics recomputed from the per-sample records.
    pub fn from_records(
        model_id: String,
        dataset_id: String,
        lexicon_mode: LexiconMode,
        records: Vec<EvalRecord>,
        skipped: usize,
    ) -> EvalReport {
        let correct = records.iter().filter(|r| r.correct).count();
        let word_accuracy = if records.is_empty() {
            0.0
        } else {
            correct as f64 / records.len() as f64
        };
        let errors: Vec<usize> = records
            .iter()
            .filter(|r| !r.correct)
            .map(|r| levenshtein(&r.prediction().to_lowercase(), &r.truth.to_lowercase()))
            .collect();
        let error_mean_edit_distance =
            (!errors.is_empty()).then(|| errors.iter().sum::<usize>() as f64 / errors.len() as f64);
        EvalReport {
            model_id,
            dataset_id,
            lexicon_mode,
            word_accuracy,
            error_mean_edit_distance,
            skipped,
            records,
        }
    }

    /// `index<TAB>truth<TAB>raw<TAB>constrained<TAB>correct` lines followed by
    /// a `#`-prefixed summary block.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                r.index,
                r.truth,
                r.raw,
                r.constrained.as_deref().unwrap_or("-"),
                u8::from(r.correct)
            );
        }
        let mode = match self.lexicon_mode {
            LexiconMode::None => "none".to_string(),
            LexiconMode::Sublexicon(k) => format!("sublexicon({k})"),
        };
        let _ = writeln!(out, "# model\t{}", self.model_id);
        let _ = writeln!(out, "# dataset\t{}", self.dataset_id);
        let _ = writeln!(out, "# lexicon_mode\t{mode}");
        let _ = writeln!(out, "# samples\t{}", self.records.len());
        let _ = writeln!(out, "# skipped\t{}", self.skipped);
        let _ = writeln!(out, "# word_accuracy\t{:.6}", self.word_accuracy);
        match self.error_mean_edit_distance {
            Some(d) => {
                let _ = writeln!(out, "# error_mean_edit_distance\t{d:.6}");
            }
            None => {
                let _ = writeln!(out, "# error_mean_edit_distance\t-");
            }
        }
        out
    }
}

/// Labels scored by the protocol: alphanumeric and at least three characters.
pub fn is_evaluable(label: &str) -> bool {
    label.chars().count() >= 3 && label.chars().all(|c| c.is_ascii_alphanumeric())
}

/// The truth plus `k - 1` distinct distractors from the lexicon.
fn sublexicon(truth: &str, lexicon: &Lexicon, k: usize, seed: u64, index: usize) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let others: Vec<&String> = lexicon.words().iter().filter(|w| w.as_str() != truth).collect();
    let take = k.saturating_sub(1).min(others.len());
    let mut out: Vec<String> = others.choose_multiple(&mut rng, take).map(|w| w.to_string()).collect();
    out.push(truth.to_string());
    out.sort();
    out
}

fn best_of<F: Fn(usize) -> f64>(candidates: &[usize], lexicon: &Lexicon, score: F) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for &i in candidates {
        let s = score(i);
        let better = match best {
            None => true,
            Some((bs, bi)) => s > bs || (s == bs && lexicon.word(i) < lexicon.word(bi)),
        };
        if better {
            best = Some((s, i));
        }
    }
    best.map(|(_, i)| i)
}

fn ngram_score(act: &[f32], support: &[u32], norm: f64) -> f64 {
    let dot: f64 = support.iter().map(|&i| act[i as usize] as f64).sum();
    -(norm + support.len() as f64 - 2.0 * dot)
}

fn decode_one(act: Vec<f32>, truth: &str, index: usize, cfg: &DecoderConfig<'_>) -> Result<EvalRecord> {
    let sub = match cfg.mode {
        LexiconMode::None => None,
        LexiconMode::Sublexicon(k) => {
            let lex = cfg
                .decoder
                .lexicon()
                .ok_or_else(|| Error::Config("sublexicon mode needs a lexicon".into()))?;
            Some(sublexicon(truth, lex, k, cfg.seed, index))
        }
    };
    let in_lex = |lex: &Lexicon, s: &[String]| s.iter().filter_map(|w| lex.position(w)).collect::<Vec<_>>();
    let (raw, constrained) = match cfg.decoder {
        Decoder::Dict { lexicon, prior } => {
            let raw = lexicon.word(score_dict(&act, prior, lexicon)?).to_string();
            let c = sub.map(|s| best_of(&in_lex(lexicon, &s), lexicon, |i| act[i] as f64));
            (raw, c.map(|c| c.map(|i| lexicon.word(i).to_string()).unwrap_or_default()))
        }
        Decoder::CharSeq { .. } => {
            let raw = decode_charseq(&CharProbs::new(act)?);
            let c = sub.map(|s| constrain_lexicon(&raw, &s).unwrap_or_default());
            (raw, c)
        }
        Decoder::NGram { lexicon, codebook } => {
            let act = GramActivations(act);
            let raw = lexicon.word(decode_ngrams_nn(&act, codebook, lexicon)).to_string();
            let norm: f64 = act.0.iter().map(|&a| a as f64 * a as f64).sum();
            let c = sub.map(|s| {
                best_of(&in_lex(lexicon, &s), lexicon, |i| ngram_score(&act.0, codebook.support(i), norm))
            });
            (raw, c.map(|c| c.map(|i| lexicon.word(i).to_string()).unwrap_or_default()))
        }
        Decoder::NGramSvm { lexicon, svm } => {
            let act = GramActivations(act);
            let raw = lexicon.word(svm.decode(&act)).to_string();
            let scores = svm.scores(&act.0);
            let c = sub.map(|s| best_of(&in_lex(lexicon, &s), lexicon, |i| scores[i]));
            (raw, c.map(|c| c.map(|i| lexicon.word(i).to_string()).unwrap_or_default()))
        }
    };
    let pred = constrained.as_deref().unwrap_or(&raw);
    let correct = pred.eq_ignore_ascii_case(truth);
    Ok(EvalRecord {
        index,
        truth: truth.to_string(),
        raw,
        constrained,
        correct,
    })
}

/// Scores a recogniser on in-memory images. Samples whose label fails
/// [`is_evaluable`] are skipped; records stay in image order.
pub fn evaluate_images<M: Recognizer + ?Sized>(
    model: &M,
    images: &[WordImage],
    cfg: &DecoderConfig<'_>,
    dataset_id: &str,
) -> Result<EvalReport> {
    cfg.decoder.check(&model.head())?;
    let kept: Vec<usize> = (0..images.len()).filter(|&i| is_evaluable(&images[i].label)).collect();
    let records = kept
        .par_iter()
        .map(|&i| {
            let act = model.activations(&images[i])?;
            decode_one(act, &images[i].label, i, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_records(
        model.id(),
        dataset_id.to_string(),
        cfg.mode,
        records,
        images.len() - kept.len(),
    ))
}

/// Loads a dataset manifest and scores the recogniser on it.
pub fn evaluate<M: Recognizer + ?Sized>(
    model: &M,
    manifest: &DatasetManifest,
    cfg: &DecoderConfig<'_>,
) -> Result<EvalReport> {
    cfg.decoder.check(&model.head())?;
    let images = load_dataset(manifest)?;
    evaluate_images(model, &images, cfg, &manifest.root.display().to_string())
}

/// Label encoding used to turn word images into training samples.
#[derive(Debug, Clone, Copy)]
pub enum TargetKind<'a> {
    Dict(&'a Lexicon),
    CharSeq,
    NGram(&'a NGramVocab),
}

impl TargetKind<'_> {
    pub fn encode(&self, label: &str) -> Result<Target> {
        Ok(match self {
            TargetKind::Dict(lex) => Target::Dict(encode_dict(label, lex)?.0),
            TargetKind::CharSeq => Target::CharSeq(encode_charseq(label)?),
            TargetKind::NGram(vocab) => Target::NGram(encode_ngrams(label, vocab)),
        })
    }
}

pub fn make_samples(images: Vec<WordImage>, kind: TargetKind<'_>) -> Result<Vec<Sample>> {
    images
        .into_iter()
        .map(|img| {
            Ok(Sample {
                target: kind.encode(&img.label)?,
                image: img.pixels,
            })
        })
        .collect()
}

/// Distinct labels of a dataset, in first-seen order.
pub fn dataset_labels(manifest: &DatasetManifest) -> Vec<String> {
    let mut seen = HashSet::new();
    manifest
        .labels()
        .filter(|l| seen.insert(l.to_string()))
        .map(str::to_string)
        .collect()
}
