//! Label encodings for the three recogniser heads and the procedures that
//! turn head outputs back into words.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use crate::corpus::{Lexicon, NGramVocab, MAX_WORD_LEN};
use crate::error::{Error, Result};

mod collisions;
mod decode;
mod svm;

pub use collisions::{count_collisions, CollisionBasis, CollisionStats};
pub use decode::{
    constrain_lexicon, constrain_lexicon_with_prior, decode_charseq, decode_ngrams_nn,
    decode_ngrams_thresholded, levenshtein, score_dict, NGramCodebook,
};
pub use svm::{train_ngram_svm, NGramSvm, SvmConfig};

/// Number of character slots in the sequence head.
pub const CHAR_SLOTS: usize = MAX_WORD_LEN;
/// Classes per slot: 36 characters plus the null class.
pub const CHAR_CLASSES: usize = 37;
/// Class id of the null ("no character") symbol.
pub const NULL_CLASS: u8 = 36;

/// Binarisation threshold used by the thresholded N-gram decoder.
pub const NGRAM_THRESHOLD: f32 = 0.99;

/// All distinct substrings of `word` with length `1..=n`.
pub fn grams(word: &str, n: usize) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let len = word.len();
    for start in 0..len {
        for l in 1..=n.min(len - start) {
            out.insert(word[start..start + l].to_string());
        }
    }
    out
}

pub fn char_class(c: char) -> Option<u8> {
    match c {
        '0'..='9' => Some(c as u8 - b'0'),
        'a'..='z' => Some(c as u8 - b'a' + 10),
        _ => None,
    }
}

pub fn class_char(class: u8) -> Option<char> {
    match class {
        0..=9 => Some((b'0' + class) as char),
        10..=35 => Some((b'a' + class - 10) as char),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DictTarget(pub usize);

pub fn encode_dict(word: &str, lexicon: &Lexicon) -> Result<DictTarget> {
    lexicon
        .position(word)
        .map(DictTarget)
        .ok_or_else(|| Error::OutOfLexicon(word.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CharSeqTarget(pub [u8; CHAR_SLOTS]);

impl CharSeqTarget {
    /// Slot string with the null class printed as `_`.
    pub fn slot_string(&self) -> String {
        self.0
            .iter()
            .map(|&c| class_char(c).unwrap_or('_'))
            .collect()
    }
}

pub fn encode_charseq(word: &str) -> Result<CharSeqTarget> {
    if word.len() > CHAR_SLOTS {
        return Err(Error::InvalidWord {
            word: word.to_string(),
            reason: "longer than 23 characters",
        });
    }
    let mut slots = [NULL_CLASS; CHAR_SLOTS];
    for (slot, c) in slots.iter_mut().zip(word.chars()) {
        *slot = char_class(c).ok_or_else(|| Error::InvalidWord {
            word: word.to_string(),
            reason: "characters outside [a-z0-9]",
        })?;
    }
    Ok(CharSeqTarget(slots))
}

/// Sparse binary gram-occurrence vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NGramTarget {
    /// Sorted indices of vocab grams present in the word.
    pub support: Vec<u32>,
    pub dim: usize,
}

impl NGramTarget {
    pub fn bits(&self) -> Vec<f32> {
        let mut v = vec![0.0; self.dim];
        for &i in &self.support {
            v[i as usize] = 1.0;
        }
        v
    }
}

/// Grams of `word` outside the vocabulary are silently absent.
pub fn encode_ngrams(word: &str, vocab: &NGramVocab) -> NGramTarget {
    let mut support: Vec<u32> = grams(word, vocab.max_n)
        .iter()
        .filter_map(|g| vocab.position(g))
        .map(|i| i as u32)
        .collect();
    support.sort_unstable();
    NGramTarget {
        support,
        dim: vocab.len(),
    }
}

/// 23 x 37 row-stochastic matrix of per-slot character probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct CharProbs {
    data: Vec<f32>,
}

impl CharProbs {
    pub fn new(data: Vec<f32>) -> Result<Self> {
        if data.len() != CHAR_SLOTS * CHAR_CLASSES {
            return Err(Error::Shape(format!(
                "char probs need {} values, got {}",
                CHAR_SLOTS * CHAR_CLASSES,
                data.len()
            )));
        }
        Ok(CharProbs { data })
    }

    pub fn one_hot(target: &CharSeqTarget) -> Self {
        let mut data = vec![0.0; CHAR_SLOTS * CHAR_CLASSES];
        for (slot, &c) in target.0.iter().enumerate() {
            data[slot * CHAR_CLASSES + c as usize] = 1.0;
        }
        CharProbs { data }
    }

    pub fn row(&self, slot: usize) -> &[f32] {
        &self.data[slot * CHAR_CLASSES..(slot + 1) * CHAR_CLASSES]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }
}

/// Per-gram presence probabilities from the logistic head.
#[derive(Debug, Clone, PartialEq)]
pub struct GramActivations(pub Vec<f32>);

/// `word<TAB>class` lines for the dictionary encoding.
pub fn dict_dump(lexicon: &Lexicon) -> String {
    let mut out = String::new();
    for (i, w) in lexicon.words().iter().enumerate() {
        let _ = writeln!(out, "{w}\t{i}");
    }
    out
}

/// `word<TAB>slot-string` lines for the character-sequence encoding.
pub fn charseq_dump(lexicon: &Lexicon) -> Result<String> {
    let mut out = String::new();
    for w in lexicon.words() {
        let _ = writeln!(out, "{w}\t{}", encode_charseq(w)?.slot_string());
    }
    Ok(out)
}

/// `word<TAB>comma-separated support indices` lines for the N-gram encoding.
pub fn ngram_dump(lexicon: &Lexicon, vocab: &NGramVocab) -> String {
    let mut out = String::new();
    for w in lexicon.words() {
        let t = encode_ngrams(w, vocab);
        let idx: Vec<String> = t.support.iter().map(|i| i.to_string()).collect();
        let _ = writeln!(out, "{w}\t{}", idx.join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::select_ngram_vocab;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    /// Enumerates every (start, end) pair and deduplicates; independent of
    /// the nested-loop bound arithmetic in `grams`.
    fn brute_grams(word: &str, n: usize) -> BTreeSet<String> {
        let chars: Vec<char> = word.chars().collect();
        let mut out = BTreeSet::new();
        for i in 0..chars.len() {
            for j in i..chars.len() {
                if j - i < n {
                    out.insert(chars[i..=j].iter().collect());
                }
            }
        }
        out
    }

    #[test]
    fn grams_of_spires() {
        let expected = set(&[
            "s", "p", "i", "r", "e", "s", "sp", "pi", "ir", "re", "es", "spi", "pir", "ire", "res",
        ]);
        assert_eq!(grams("spires", 3), expected);
        assert_eq!(expected.len(), 14);
    }

    #[test]
    fn grams_small_cases() {
        assert_eq!(grams("a", 4), set(&["a"]));
        assert_eq!(grams("abab", 2), brute_grams("abab", 2));
        assert_eq!(grams("abab", 2), set(&["a", "b", "ab", "ba"]));
    }

    #[test]
    fn charseq_of_cat() {
        let t = encode_charseq("cat").unwrap();
        assert_eq!(&t.0[..3], &[12, 10, 29]);
        assert!(t.0[3..].iter().all(|&c| c == NULL_CLASS));
        assert_eq!(t.slot_string(), format!("cat{}", "_".repeat(20)));
    }

    #[test]
    fn charseq_rejects_overlong() {
        assert!(encode_charseq(&"a".repeat(24)).is_err());
        assert!(encode_charseq(&"a".repeat(23)).is_ok());
    }

    #[test]
    fn dict_encoding_is_lexicon_position() {
        let words: Vec<String> = (0..10).map(|i| format!("word{i}")).collect();
        let (lexicon, _) = Lexicon::from_words(&words).unwrap();
        assert_eq!(encode_dict(lexicon.word(7), &lexicon).unwrap(), DictTarget(7));
        assert!(encode_dict("nothere", &lexicon).is_err());
    }

    #[test]
    fn ngram_support_matches_gram_set() {
        let vocab = select_ngram_vocab(&["spires"], 4, 1);
        let t = encode_ngrams("spires", &vocab);
        assert_eq!(t.support.len(), brute_grams("spires", 4).len());
        let bits = t.bits();
        for (i, g) in vocab.grams().iter().enumerate() {
            assert_eq!(bits[i] == 1.0, "spires".contains(g.as_str()));
        }
    }

    #[test]
    fn dumps_have_expected_shape() {
        let (lexicon, _) = Lexicon::from_words(["ab", "b"]).unwrap();
        let vocab = select_ngram_vocab(lexicon.words(), 2, 1);
        assert_eq!(dict_dump(&lexicon), "ab\t0\nb\t1\n");
        let cs = charseq_dump(&lexicon).unwrap();
        assert!(cs.starts_with("ab\tab_____________________\n"));
        // vocab order: a, b, ab
        assert_eq!(ngram_dump(&lexicon, &vocab), "ab\t0,1,2\nb\t1\n");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn grams_agree_with_brute_force(word in "[a-z0-9]{1,12}", n in 1usize..6) {
                prop_assert_eq!(grams(&word, n), brute_grams(&word, n));
            }

            #[test]
            fn charseq_round_trip(word in "[a-z0-9]{0,23}") {
                let t = encode_charseq(&word).unwrap();
                prop_assert_eq!(decode_charseq(&CharProbs::one_hot(&t)), word);
            }
        }
    }
}
