//! One-vs-rest linear SVMs mapping gram activations to lexicon words.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::GramActivations;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    /// L2 regularisation strength.
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            lambda: 1e-3,
            epochs: 30,
            seed: 0,
        }
    }
}

/// Per-word linear scorers; the bias is stored as the last weight of each row.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramSvm {
    weights: Vec<f64>,
    dim: usize,
    classes: usize,
}

impl NGramSvm {
    pub fn scores(&self, x: &[f32]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim);
        (0..self.classes)
            .map(|c| {
                let row = &self.weights[c * (self.dim + 1)..(c + 1) * (self.dim + 1)];
                dot_aug(row, x)
            })
            .collect()
    }

    /// Index of the highest-scoring word (lowest index on ties).
    pub fn decode(&self, act: &GramActivations) -> usize {
        let scores = self.scores(&act.0);
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        best
    }

    pub fn classes(&self) -> usize {
        self.classes
    }
}

fn dot_aug(row: &[f64], x: &[f32]) -> f64 {
    let (w, b) = row.split_at(x.len());
    w.iter().zip(x).map(|(a, &b)| a * b as f64).sum::<f64>() + b[0]
}

/// Hinge-loss SGD with step size `1 / (lambda t)` on each one-vs-rest
/// problem, all classes updated from the same sample stream.
pub fn train_ngram_svm(
    samples: &[(GramActivations, usize)],
    classes: usize,
    config: &SvmConfig,
) -> Result<NGramSvm> {
    if classes < 2 {
        return Err(Error::SingleClass);
    }
    let Some(first) = samples.first() else {
        return Err(Error::SingleClass);
    };
    if samples.iter().all(|(_, c)| *c == first.1) {
        return Err(Error::SingleClass);
    }
    if !(config.lambda > 0.0) {
        return Err(Error::Config("svm lambda must be > 0".into()));
    }
    let dim = first.0 .0.len();
    if let Some((a, _)) = samples.iter().find(|(a, _)| a.0.len() != dim) {
        return Err(Error::Shape(format!(
            "svm input length {} != {}",
            a.0.len(),
            dim
        )));
    }
    if let Some((_, c)) = samples.iter().find(|(_, c)| *c >= classes) {
        return Err(Error::Shape(format!("svm label {c} >= {classes}")));
    }

    let stride = dim + 1;
    let mut weights = vec![0.0f64; classes * stride];
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut t = 0u64;
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (config.lambda * t as f64);
            let shrink = 1.0 - eta * config.lambda;
            let (x, label) = (&samples[i].0 .0, samples[i].1);
            for c in 0..classes {
                let row = &mut weights[c * stride..(c + 1) * stride];
                let y = if c == label { 1.0 } else { -1.0 };
                let margin = y * dot_aug(row, x);
                row.iter_mut().for_each(|w| *w *= shrink);
                if margin < 1.0 {
                    for (w, &xi) in row.iter_mut().zip(x) {
                        *w += eta * y * xi as f64;
                    }
                    row[dim] += eta * y;
                }
            }
        }
    }
    Ok(NGramSvm {
        weights,
        dim,
        classes,
    })
}
