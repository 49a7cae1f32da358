use std::cmp::Ordering;

use super::{class_char, encode_ngrams, CharProbs, GramActivations, CHAR_SLOTS, NGRAM_THRESHOLD};
use crate::corpus::{LanguagePrior, Lexicon, NGramVocab};
use crate::error::{Error, Result};

/// Per-slot argmax, with null predictions removed wherever they occur.
pub fn decode_charseq(probs: &CharProbs) -> String {
    let mut out = String::new();
    for slot in 0..CHAR_SLOTS {
        let row = probs.row(slot);
        let mut best = 0;
        for (i, &p) in row.iter().enumerate() {
            if p > row[best] {
                best = i;
            }
        }
        if let Some(c) = class_char(best as u8) {
            out.push(c);
        }
    }
    out
}

/// Unit-cost Levenshtein distance over bytes (inputs are ASCII).
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a = a.as_bytes();
    let b = b.as_bytes();
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, &ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, &cb) in b.iter().enumerate() {
            let above = row[j + 1];
            let cost = usize::from(ca != cb);
            row[j + 1] = (above + 1).min(row[j] + 1).min(diag + cost);
            diag = above;
        }
    }
    row[b.len()]
}

/// Closest sublexicon word by edit distance; ties go to the
/// lexicographically smaller word.
pub fn constrain_lexicon<S: AsRef<str>>(predicted: &str, sublexicon: &[S]) -> Option<String> {
    constrain_lexicon_with_prior(predicted, sublexicon, |_| 0.0)
}

/// Closest sublexicon word by edit distance; ties go to the higher prior,
/// then the lexicographically smaller word.
pub fn constrain_lexicon_with_prior<S, F>(
    predicted: &str,
    sublexicon: &[S],
    prior: F,
) -> Option<String>
where
    S: AsRef<str>,
    F: Fn(&str) -> f64,
{
    let mut best: Option<(usize, f64, &str)> = None;
    for w in sublexicon {
        let w = w.as_ref();
        let d = levenshtein(predicted, w);
        let p = prior(w);
        let better = match best {
            None => true,
            Some((bd, bp, bw)) => d
                .cmp(&bd)
                .then_with(|| bp.partial_cmp(&p).unwrap_or(Ordering::Equal))
                .then_with(|| w.cmp(bw))
                == Ordering::Less,
        };
        if better {
            best = Some((d, p, w));
        }
    }
    best.map(|(_, _, w)| w.to_string())
}

/// `argmax_w P(w|x) P(w|L)`, ties broken lexicographically.
pub fn score_dict(probs: &[f32], prior: &LanguagePrior, lexicon: &Lexicon) -> Result<usize> {
    if probs.len() != lexicon.len() || prior.values().len() != lexicon.len() {
        return Err(Error::Shape(format!(
            "dict scores: {} probs, {} prior values, {} words",
            probs.len(),
            prior.values().len(),
            lexicon.len()
        )));
    }
    let mut best: Option<(f64, usize)> = None;
    for (i, (&p, &q)) in probs.iter().zip(prior.values()).enumerate() {
        let s = p as f64 * q;
        if s <= 0.0 {
            continue;
        }
        let better = match best {
            None => true,
            Some((bs, bi)) => s > bs || (s == bs && lexicon.word(i) < lexicon.word(bi)),
        };
        if better {
            best = Some((s, i));
        }
    }
    best.map(|(_, i)| i).ok_or(Error::NoAdmissibleWord)
}

/// Precomputed gram supports for every lexicon word.
#[derive(Debug, Clone)]
pub struct NGramCodebook {
    supports: Vec<Vec<u32>>,
    dim: usize,
}

impl NGramCodebook {
    pub fn new(lexicon: &Lexicon, vocab: &NGramVocab) -> Self {
        NGramCodebook {
            supports: lexicon
                .words()
                .iter()
                .map(|w| encode_ngrams(w, vocab).support)
                .collect(),
            dim: vocab.len(),
        }
    }

    pub fn support(&self, idx: usize) -> &[u32] {
        &self.supports[idx]
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.supports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.supports.is_empty()
    }
}

/// Lexicon word whose binary encoding is nearest in Euclidean distance.
///
/// Uses `|a - b|^2 = |a|^2 + |S| - 2 sum_{i in S} a_i` for a binary `b`
/// with support `S`, so each word costs O(|S|).
pub fn decode_ngrams_nn(act: &GramActivations, codebook: &NGramCodebook, lexicon: &Lexicon) -> usize {
    assert_eq!(act.0.len(), codebook.dim, "activation length != vocab size");
    let norm: f64 = act.0.iter().map(|&a| (a as f64) * (a as f64)).sum();
    let mut best: Option<(f64, usize)> = None;
    for (idx, support) in codebook.supports.iter().enumerate() {
        let dot: f64 = support.iter().map(|&i| act.0[i as usize] as f64).sum();
        let d2 = norm + support.len() as f64 - 2.0 * dot;
        let better = match best {
            None => true,
            Some((bd, bi)) => d2 < bd || (d2 == bd && lexicon.word(idx) < lexicon.word(bi)),
        };
        if better {
            best = Some((d2, idx));
        }
    }
    best.map(|(_, i)| i).expect("empty codebook")
}

/// Binarises activations at [`NGRAM_THRESHOLD`] before nearest-neighbour search.
pub fn decode_ngrams_thresholded(
    act: &GramActivations,
    codebook: &NGramCodebook,
    lexicon: &Lexicon,
) -> usize {
    let binary = GramActivations(
        act.0
            .iter()
            .map(|&a| if a > NGRAM_THRESHOLD { 1.0 } else { 0.0 })
            .collect(),
    );
    decode_ngrams_nn(&binary, codebook, lexicon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_prior, select_ngram_vocab, PriorMode};
    use crate::encode::{encode_charseq, CHAR_CLASSES, NULL_CLASS};

    /// Full-matrix Wagner-Fischer, kept separate from the two-row version.
    fn dp_oracle(a: &str, b: &str) -> usize {
        let a: Vec<char> = a.chars().collect();
        let b: Vec<char> = b.chars().collect();
        let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
        for (i, row) in d.iter_mut().enumerate() {
            row[0] = i;
        }
        for j in 0..=b.len() {
            d[0][j] = j;
        }
        for i in 1..=a.len() {
            for j in 1..=b.len() {
                let sub = d[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
                d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
            }
        }
        d[a.len()][b.len()]
    }

    fn slots(spec: &[Option<char>]) -> CharProbs {
        let mut data = vec![0.0; CHAR_SLOTS * CHAR_CLASSES];
        for slot in 0..CHAR_SLOTS {
            let class = spec
                .get(slot)
                .copied()
                .flatten()
                .map(|c| super::super::char_class(c).unwrap())
                .unwrap_or(NULL_CLASS);
            data[slot * CHAR_CLASSES + class as usize] = 1.0;
        }
        CharProbs::new(data).unwrap()
    }

    #[test]
    fn charseq_decoding() {
        assert_eq!(decode_charseq(&slots(&[Some('d'), Some('o'), Some('g')])), "dog");
        assert_eq!(
            decode_charseq(&slots(&[Some('d'), None, Some('o'), Some('g')])),
            "dog"
        );
        assert_eq!(decode_charseq(&slots(&[])), "");
        let t = encode_charseq("x9").unwrap();
        assert_eq!(decode_charseq(&CharProbs::one_hot(&t)), "x9");
    }

    #[test]
    fn edit_distances_match_oracle() {
        assert_eq!(dp_oracle("hosptal", "hospital"), 1);
        // delete p, substitute a -> e
        assert_eq!(dp_oracle("hosptal", "hostel"), 2);
        for (a, b) in [("hosptal", "hospital"), ("hosptal", "hostel"), ("", "bb"), ("kitten", "sitting")] {
            assert_eq!(levenshtein(a, b), dp_oracle(a, b));
        }
    }

    #[test]
    fn constrain_examples() {
        assert_eq!(
            constrain_lexicon("hosptal", &["hospital", "hostel"]).as_deref(),
            Some("hospital")
        );
        assert_eq!(constrain_lexicon("cat", &["bat", "cat", "cut"]).as_deref(), Some("cat"));
        assert_eq!(constrain_lexicon("", &["a", "bb"]).as_deref(), Some("a"));
        // tie on distance: lexicographic
        assert_eq!(constrain_lexicon("ab", &["cb", "ac"]).as_deref(), Some("ac"));
        // tie on distance: higher prior wins first
        let prior = |w: &str| if w == "cb" { 0.9 } else { 0.1 };
        assert_eq!(
            constrain_lexicon_with_prior("ab", &["cb", "ac"], prior).as_deref(),
            Some("cb")
        );
        assert_eq!(constrain_lexicon::<&str>("ab", &[]), None);
    }

    fn lex(words: &[&str]) -> Lexicon {
        Lexicon::from_words(words.iter().copied()).unwrap().0
    }

    #[test]
    fn dict_scoring_uses_product() {
        let lexicon = lex(&["first", "second"]);
        let freq = crate::corpus::FrequencyTable::from_pairs([("first", 0u64), ("second", 8)]);
        let prior = build_prior(&lexicon, Some(&freq), PriorMode::PowerLaw { alpha: 1.0 }).unwrap();
        // prior = (1/10, 9/10); products 0.06 vs 0.36
        assert_eq!(score_dict(&[0.6, 0.4], &prior, &lexicon).unwrap(), 1);
        let uniform = LanguagePrior::uniform(&lexicon);
        assert_eq!(score_dict(&[0.6, 0.4], &uniform, &lexicon).unwrap(), 0);
    }

    #[test]
    fn dict_scoring_respects_sublexicon_support() {
        let words: Vec<String> = (0..100).map(|i| format!("w{i:03}")).collect();
        let (lexicon, _) = Lexicon::from_words(&words).unwrap();
        let prior = build_prior(
            &lexicon,
            None,
            PriorMode::Uniform {
                sublexicon: words[50..].to_vec(),
            },
        )
        .unwrap();
        let mut probs = vec![0.001f32; 100];
        probs[3] = 0.9;
        probs[77] = 0.05;
        assert_eq!(score_dict(&probs, &prior, &lexicon).unwrap(), 77);
        let mut zeroed = vec![0.0f32; 100];
        zeroed[3] = 1.0;
        assert!(matches!(
            score_dict(&zeroed, &prior, &lexicon),
            Err(Error::NoAdmissibleWord)
        ));
    }

    #[test]
    fn dict_scoring_ties_are_lexicographic() {
        let lexicon = lex(&["zeta", "alpha"]);
        let uniform = LanguagePrior::uniform(&lexicon);
        assert_eq!(score_dict(&[0.5, 0.5], &uniform, &lexicon).unwrap(), 1);
    }

    #[test]
    fn ngram_nn_decoding() {
        let lexicon = lex(&["dog", "cat"]);
        let vocab = select_ngram_vocab(lexicon.words(), 4, 1);
        let book = NGramCodebook::new(&lexicon, &vocab);
        let dog = crate::encode::encode_ngrams("dog", &vocab).bits();
        assert_eq!(decode_ngrams_nn(&GramActivations(dog.clone()), &book, &lexicon), 0);
        // one flipped bit: distance 1 to dog, |S(dog)| + |S(cat)| - 1 = 11 to cat
        let mut flipped = dog.clone();
        let i = flipped.iter().position(|&b| b == 1.0).unwrap();
        flipped[i] = 0.0;
        assert_eq!(decode_ngrams_nn(&GramActivations(flipped), &book, &lexicon), 0);
        assert_eq!(decode_ngrams_thresholded(&GramActivations(dog), &book, &lexicon), 0);
    }

    #[test]
    fn zero_activation_picks_smallest_support() {
        let lexicon = lex(&["banana", "ox", "kettle"]);
        let vocab = select_ngram_vocab(lexicon.words(), 4, 1);
        let book = NGramCodebook::new(&lexicon, &vocab);
        let zero = GramActivations(vec![0.0; vocab.len()]);
        assert_eq!(lexicon.word(decode_ngrams_nn(&zero, &book, &lexicon)), "ox");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn levenshtein_matches_oracle(a in "[a-d]{0,9}", b in "[a-d]{0,9}") {
                prop_assert_eq!(levenshtein(&a, &b), dp_oracle(&a, &b));
            }

            #[test]
            fn member_words_constrain_to_themselves(
                words in prop::collection::btree_set("[a-f]{1,6}", 1..20),
                pick in any::<prop::sample::Index>(),
            ) {
                let words: Vec<String> = words.into_iter().collect();
                let w = pick.get(&words);
                let got = constrain_lexicon(w, &words);
                prop_assert_eq!(got.as_deref(), Some(w.as_str()));
            }

            #[test]
            fn uniform_prior_scoring_is_scale_invariant(
                probs in prop::collection::vec(0.001f32..1.0, 2..20),
                scale in 0.01f32..100.0,
            ) {
                let words: Vec<String> = (0..probs.len()).map(|i| format!("w{i:02}")).collect();
                let (lexicon, _) = Lexicon::from_words(&words).unwrap();
                let prior = LanguagePrior::uniform(&lexicon);
                let scaled: Vec<f32> = probs.iter().map(|p| p * scale).collect();
                let a = score_dict(&probs, &prior, &lexicon).unwrap();
                let b = score_dict(&scaled, &prior, &lexicon).unwrap();
                // scaling in f32 can only split exact ties, never reorder distinct scores
                prop_assert!(a == b || (probs[a] - probs[b]).abs() <= f32::EPSILON * probs[a]);
            }
        }
    }
}
