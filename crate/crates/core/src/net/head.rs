//! Output normalisation and losses for the three heads.

use crate::corpus::GramWeights;
use crate::encode::{CharProbs, CharSeqTarget, NGramTarget, CHAR_CLASSES, CHAR_SLOTS};

use super::spec::HeadSpec;
use super::tensor::Real;

const EPS: f64 = 1e-12;

/// Supervision for one sample, matching the head kind.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Target {
    Dict(usize),
    CharSeq(CharSeqTarget),
    NGram(NGramTarget),
}

fn clamp_p(p: f64) -> f64 {
    p.clamp(EPS, 1.0 - EPS)
}

fn softmax_into<T: Real>(logits: &[T], out: &mut [T]) {
    let max = logits.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut sum = T::zero();
    for (o, &v) in out.iter_mut().zip(logits) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o = *o / sum;
    }
}

fn sigmoid<T: Real>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

/// Converts one sample's logits to head outputs: a softmax for dict,
/// 23 row softmaxes for charseq, logistic values for ngram.
pub fn activate<T: Real>(head: &HeadSpec, logits: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); logits.len()];
    match head {
        HeadSpec::Dict { .. } => softmax_into(logits, &mut out),
        HeadSpec::CharSeq => {
            for (l, o) in logits.chunks(CHAR_CLASSES).zip(out.chunks_mut(CHAR_CLASSES)) {
                softmax_into(l, o);
            }
        }
        HeadSpec::NGram { .. } => {
            for (o, &l) in out.iter_mut().zip(logits) {
                *o = sigmoid(l);
            }
        }
    }
    out
}

/// Negative log-probability of the target word.
pub fn loss_dict(probs: &[f32], target: usize) -> f64 {
    -clamp_p(probs[target] as f64).ln()
}

/// Sum of the 23 per-slot negative log-likelihoods.
pub fn loss_charseq(probs: &CharProbs, target: &CharSeqTarget) -> f64 {
    (0..CHAR_SLOTS)
        .map(|s| -clamp_p(probs.row(s)[target.0[s] as usize] as f64).ln())
        .sum()
}

/// Weighted binary cross-entropy over every gram output.
pub fn loss_ngram(acts: &[f32], target: &NGramTarget, weights: &GramWeights) -> f64 {
    let mut on = vec![false; acts.len()];
    for &i in &target.support {
        on[i as usize] = true;
    }
    acts.iter()
        .zip(&on)
        .zip(&weights.weights)
        .map(|((&a, &bit), &w)| {
            let p = clamp_p(a as f64);
            w as f64 * if bit { -p.ln() } else { -(1.0 - p).ln() }
        })
        .sum()
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().fold(f64::NEG_INFINITY, |m, &x| m.max(x));
    max + v.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Loss of one sample and its gradient with respect to the logits.
///
/// The loss is evaluated from the logits (log-softmax, softplus) so it stays
/// smooth where a probability would underflow; the logit gradient is
/// `p - y`, weighted per gram for ngram.
pub fn loss_and_grad<T: Real>(
    head: &HeadSpec,
    logits: &[T],
    target: &Target,
    gram_weights: Option<&[f32]>,
    dlogits: &mut [T],
) -> f64 {
    let p = activate(head, logits);
    let l: Vec<f64> = logits.iter().map(|v| v.as_f64()).collect();
    match (head, target) {
        (HeadSpec::Dict { .. }, Target::Dict(t)) => {
            dlogits.copy_from_slice(&p);
            dlogits[*t] = dlogits[*t] - T::one();
            log_sum_exp(&l) - l[*t]
        }
        (HeadSpec::CharSeq, Target::CharSeq(t)) => {
            dlogits.copy_from_slice(&p);
            let mut loss = 0.0;
            for (s, &c) in t.0.iter().enumerate() {
                let i = s * CHAR_CLASSES + c as usize;
                dlogits[i] = dlogits[i] - T::one();
                loss += log_sum_exp(&l[s * CHAR_CLASSES..(s + 1) * CHAR_CLASSES]) - l[i];
            }
            loss
        }
        (HeadSpec::NGram { .. }, Target::NGram(t)) => {
            let mut y = vec![false; p.len()];
            for &i in &t.support {
                y[i as usize] = true;
            }
            let mut loss = 0.0;
            for i in 0..p.len() {
                let w = gram_weights.map_or(1.0, |w| w[i] as f64);
                let (nll, yi) = if y[i] {
                    (softplus(-l[i]), T::one())
                } else {
                    (softplus(l[i]), T::zero())
                };
                loss += w * nll;
                dlogits[i] = T::from_f64(w) * (p[i] - yi);
            }
            loss
        }
        _ => panic!("target kind does not match the {} head", head.name()),
    }
}

/// Whether a sample's prediction is correct: argmax for dict, every slot's
/// argmax for charseq, all bits on the correct side of 0.5 for ngram.
pub fn is_correct<T: Real>(head: &HeadSpec, logits: &[T], target: &Target) -> bool {
    match target {
        Target::Dict(t) => argmax(logits) == *t,
        Target::CharSeq(t) => logits
            .chunks(CHAR_CLASSES)
            .zip(t.0.iter())
            .all(|(row, &c)| argmax(row) == c as usize),
        Target::NGram(t) => {
            debug_assert!(matches!(head, HeadSpec::NGram { .. }));
            let mut y = vec![false; logits.len()];
            for &i in &t.support {
                y[i as usize] = true;
            }
            logits.iter().zip(&y).all(|(&l, &b)| (l > T::zero()) == b)
        }
    }
}

pub fn argmax<T: Real>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}
