use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{evaluate_images, make_samples, Decoder, DecoderConfig, LexiconMode, TargetKind};
use crate::corpus::{LanguagePrior, Lexicon};
use crate::error::{Error, Result};
use crate::net::{sgd_train, HeadSpec, Network, NetworkSpec, TrainConfig};
use crate::render::{generate_dataset, load_dataset, Renderer, SophisticationLevel};

/// One model template trained once per rendering level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationConfig {
    /// Network with a dict head over the lexicon.
    pub spec: NetworkSpec,
    pub train: TrainConfig,
    /// Training images per word at levels A and F.
    pub per_word: usize,
    /// Training images per word at levels B to E.
    pub reduced_per_word: usize,
    /// Level-F test images per word.
    pub test_per_word: usize,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub level: SophisticationLevel,
    pub train_samples: usize,
    /// Word accuracy on the shared level-F test set.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub rows: Vec<AblationRow>,
}

impl AblationResult {
    pub fn accuracy(&self, level: SophisticationLevel) -> Option<f64> {
        self.rows.iter().find(|r| r.level == level).map(|r| r.accuracy)
    }

    /// `level<TAB>accuracy` lines.
    pub fn plot_data(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            let _ = writeln!(out, "{}\t{:.6}", r.level.letter(), r.accuracy);
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("level  train  accuracy\n");
        for r in &self.rows {
            let _ = writeln!(out, "{:<5}  {:>5}  {:.4}", r.level.letter(), r.train_samples, r.accuracy);
        }
        out
    }
}

/// For every level: renders a training set at that level, trains a fresh
/// copy of the template and scores it on one level-F test set. Datasets are
/// written under `work_dir`.
pub fn run_ablation(
    renderer: &Renderer,
    lexicon: &Lexicon,
    config: &AblationConfig,
    work_dir: &Path,
) -> Result<AblationResult> {
    match config.spec.head {
        HeadSpec::Dict { classes } if classes == lexicon.len() => {}
        other => {
            return Err(Error::HeadMismatch {
                model: format!("{other:?}"),
                requested: format!("dict head over {} words", lexicon.len()),
            })
        }
    }
    let words = lexicon.words();
    let test_dir = work_dir.join("test_f");
    let test_manifest = generate_dataset(
        renderer,
        words,
        config.test_per_word,
        SophisticationLevel::F,
        config.seed ^ 0x7e57,
        &test_dir,
        config.workers,
    )?;
    let test = load_dataset(&test_manifest)?;
    let prior = LanguagePrior::uniform(lexicon);
    let decoder = DecoderConfig {
        decoder: Decoder::Dict { lexicon, prior: &prior },
        mode: LexiconMode::None,
        seed: 0,
    };
    let mut rows = Vec::with_capacity(SophisticationLevel::ALL.len());
    for level in SophisticationLevel::ALL {
        let per_word = match level {
            SophisticationLevel::A | SophisticationLevel::F => config.per_word,
            _ => config.reduced_per_word,
        };
        let dir = work_dir.join(format!("train_{}", level.letter()));
        let manifest = generate_dataset(renderer, words, per_word, level, config.seed, &dir, config.workers)?;
        let samples = make_samples(load_dataset(&manifest)?, TargetKind::Dict(lexicon))?;
        let mut net = Network::<f32>::new(&config.spec, config.seed)?;
        sgd_train(&mut net, &samples, &config.train, None)?;
        let report = evaluate_images(&net, &test, &decoder, &test_dir.display().to_string())?;
        log::info!("ablation level {level}: accuracy {:.4}", report.word_accuracy);
        rows.push(AblationRow {
            level,
            train_samples: samples.len(),
            accuracy: report.word_accuracy,
        });
    }
    Ok(AblationResult { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::LayerSpec;

    fn tiny(classes: usize) -> AblationConfig {
        let spec = NetworkSpec::custom(
            [1, 32, 100],
            vec![
                LayerSpec::MaxPool,
                LayerSpec::MaxPool,
                LayerSpec::Conv {
                    out_channels: 2,
                    kernel: 3,
                },
                LayerSpec::Relu,
                LayerSpec::MaxPool,
            ],
            HeadSpec::Dict { classes },
        );
        AblationConfig {
            spec,
            train: TrainConfig {
                epochs: 1,
                batch_size: 4,
                ..TrainConfig::default()
            },
            per_word: 2,
            reduced_per_word: 1,
            test_per_word: 1,
            seed: 3,
            workers: 1,
        }
    }

    #[test]
    fn six_rows_and_deterministic() {
        let r = Renderer::bundled().unwrap();
        let lex = Lexicon::from_words(["cat", "dog", "sun"]).unwrap().0;
        let cfg = tiny(3);
        let a = run_ablation(&r, &lex, &cfg, tempfile::tempdir().unwrap().path()).unwrap();
        let b = run_ablation(&r, &lex, &cfg, tempfile::tempdir().unwrap().path()).unwrap();
        assert_eq!(a.rows.len(), 6);
        assert_eq!(a, b);
        assert_eq!(a.plot_data().lines().count(), 6);
        assert_eq!(a.rows[0].train_samples, 6);
        assert_eq!(a.rows[1].train_samples, 3);
    }

    #[test]
    fn head_must_match_lexicon() {
        let r = Renderer::bundled().unwrap();
        let lex = Lexicon::from_words(["cat", "dog", "sun"]).unwrap().0;
        let err = run_ablation(&r, &lex, &tiny(4), tempfile::tempdir().unwrap().path());
        assert!(matches!(err, Err(Error::HeadMismatch { .. })));
    }
}
