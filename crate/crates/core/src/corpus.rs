//! Word lists, word-frequency priors and the N-gram vocabulary.
//!
//! A [`Lexicon`] is the ordered class list shared by every recogniser head;
//! its position map doubles as the dictionary-head class index.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Longest word representable by the character-sequence head.
pub const MAX_WORD_LEN: usize = 23;

/// Recognised characters: ten digits then the lowercase Latin letters.
pub const ALPHABET: &str = "0123456789abcdefghijklmnopqrstuvwxyz";

/// Default gram length and frequency threshold for the N-gram head.
pub const DEFAULT_MAX_N: usize = 4;
pub const DEFAULT_MIN_COUNT: u64 = 10;

pub fn is_alphabet_char(c: char) -> bool {
    c.is_ascii_digit() || c.is_ascii_lowercase()
}

/// Case-folds `word` and checks it against the recognised alphabet and the
/// length bound.
pub fn normalize_word(word: &str) -> Result<String> {
    let folded = word.trim().to_lowercase();
    if folded.is_empty() {
        return Err(Error::InvalidWord {
            word: word.to_string(),
            reason: "empty",
        });
    }
    if !folded.chars().all(is_alphabet_char) {
        return Err(Error::InvalidWord {
            word: word.to_string(),
            reason: "characters outside [a-z0-9]",
        });
    }
    if folded.len() > MAX_WORD_LEN {
        return Err(Error::InvalidWord {
            word: word.to_string(),
            reason: "longer than 23 characters",
        });
    }
    Ok(folded)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    pub accepted: usize,
    pub duplicates: usize,
    pub too_long: usize,
    pub invalid: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Lexicon {
    /// Builds a lexicon from raw entries: case-folds, drops entries outside
    /// `[a-z0-9]{1,23}`, and keeps the first occurrence of duplicates.
    pub fn from_words<I, S>(entries: I) -> Result<(Self, LoadReport)>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut report = LoadReport::default();
        let mut words = Vec::new();
        let mut index = HashMap::new();
        for entry in entries {
            let raw = entry.as_ref().trim();
            if raw.is_empty() {
                continue;
            }
            let folded = raw.to_lowercase();
            if !folded.chars().all(is_alphabet_char) {
                report.invalid += 1;
                continue;
            }
            if folded.len() > MAX_WORD_LEN {
                report.too_long += 1;
                continue;
            }
            if index.contains_key(&folded) {
                report.duplicates += 1;
                continue;
            }
            index.insert(folded.clone(), words.len());
            words.push(folded);
        }
        if words.is_empty() {
            return Err(Error::EmptyLexicon);
        }
        report.accepted = words.len();
        Ok((Lexicon { words, index }, report))
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn word(&self, idx: usize) -> &str {
        &self.words[idx]
    }

    pub fn position(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    /// The first `n` words as a new lexicon (used for incremental stages).
    pub fn prefix(&self, n: usize) -> Lexicon {
        let words: Vec<String> = self.words[..n.min(self.words.len())].to_vec();
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Lexicon { words, index }
    }
}

/// Reads one word per line. Entries that fail the alphabet or length filter
/// are counted in the returned report and logged.
pub fn load_lexicon(path: impl AsRef<Path>) -> Result<(Lexicon, LoadReport)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (lexicon, report) = Lexicon::from_words(text.lines())?;
    if report.too_long + report.invalid > 0 {
        log::warn!(
            "{}: dropped {} overlong and {} invalid entries",
            path.display(),
            report.too_long,
            report.invalid
        );
    }
    Ok((lexicon, report))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: HashMap<String, u64>,
}

impl FrequencyTable {
    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, u64)>,
        S: AsRef<str>,
    {
        let mut counts = HashMap::new();
        for (w, c) in pairs {
            *counts.entry(w.as_ref().to_lowercase()).or_insert(0) += c;
        }
        FrequencyTable { counts }
    }

    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

/// Parses `word<TAB>count` lines.
pub fn load_frequency_table(path: impl AsRef<Path>) -> Result<FrequencyTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (word, count) = line.split_once('\t').ok_or_else(|| Error::Parse {
            what: "frequency table",
            line: lineno + 1,
            detail: "expected word<TAB>count".into(),
        })?;
        let count: u64 = count.trim().parse().map_err(|e| Error::Parse {
            what: "frequency table",
            line: lineno + 1,
            detail: format!("{e}"),
        })?;
        pairs.push((word.to_string(), count));
    }
    Ok(FrequencyTable::from_pairs(pairs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PriorMode {
    /// Equal mass on the listed words, zero elsewhere.
    Uniform { sublexicon: Vec<String> },
    /// Mass proportional to `(count + 1)^alpha`.
    PowerLaw { alpha: f64 },
}

/// Per-word prior probability aligned with lexicon positions.
#[derive(Debug, Clone, PartialEq)]
pub struct LanguagePrior {
    pub mode: PriorMode,
    values: Vec<f64>,
}

impl LanguagePrior {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    /// Uniform prior over the entire lexicon.
    pub fn uniform(lexicon: &Lexicon) -> Self {
        let p = 1.0 / lexicon.len() as f64;
        LanguagePrior {
            mode: PriorMode::Uniform {
                sublexicon: lexicon.words().to_vec(),
            },
            values: vec![p; lexicon.len()],
        }
    }
}

pub fn build_prior(
    lexicon: &Lexicon,
    freq: Option<&FrequencyTable>,
    mode: PriorMode,
) -> Result<LanguagePrior> {
    let values = match &mode {
        PriorMode::Uniform { sublexicon } => {
            let mut members = vec![false; lexicon.len()];
            for w in sublexicon {
                let idx = lexicon
                    .position(w)
                    .ok_or_else(|| Error::OutOfLexicon(w.clone()))?;
                members[idx] = true;
            }
            let n = members.iter().filter(|&&m| m).count();
            if n == 0 {
                return Err(Error::Config("uniform prior needs a non-empty sublexicon".into()));
            }
            let p = 1.0 / n as f64;
            members.iter().map(|&m| if m { p } else { 0.0 }).collect()
        }
        PriorMode::PowerLaw { alpha } => {
            if !(*alpha > 0.0) {
                return Err(Error::Config(format!("power-law exponent must be > 0, got {alpha}")));
            }
            let freq = freq.ok_or_else(|| {
                Error::Config("power-law prior requires a frequency table".into())
            })?;
            if !lexicon.words().iter().any(|w| freq.count(w) > 0) {
                return Err(Error::Config(
                    "frequency table covers no lexicon word".into(),
                ));
            }
            let raw: Vec<f64> = lexicon
                .words()
                .iter()
                .map(|w| (freq.count(w) as f64 + 1.0).powf(*alpha))
                .collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / total).collect()
        }
    };
    Ok(LanguagePrior { mode, values })
}

/// Counts every occurrence of every substring of length `1..=max_n`.
fn substring_counts<'a, S: AsRef<str>>(words: &'a [S], max_n: usize) -> HashMap<&'a str, u64> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for w in words {
        let w = w.as_ref();
        let bytes = w.len();
        for start in 0..bytes {
            for len in 1..=max_n.min(bytes - start) {
                *counts.entry(&w[start..start + len]).or_insert(0) += 1;
            }
        }
    }
    counts
}

/// Selected N-grams ordered by length, then lexicographically.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NGramVocab {
    grams: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
    pub max_n: usize,
    pub min_count: u64,
}

impl NGramVocab {
    pub fn grams(&self) -> &[String] {
        &self.grams
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    pub fn position(&self, gram: &str) -> Option<usize> {
        self.index.get(gram).copied()
    }

    /// Number of selected grams of each length `1..=max_n`.
    pub fn per_length(&self) -> Vec<usize> {
        let mut out = vec![0; self.max_n];
        for g in &self.grams {
            out[g.len() - 1] += 1;
        }
        out
    }

    /// Builds a vocabulary from an explicit gram list (counts are taken as given).
    pub fn from_grams(grams: Vec<(String, u64)>, max_n: usize, min_count: u64) -> Self {
        let mut grams = grams;
        grams.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(&b.0)));
        grams.dedup_by(|a, b| a.0 == b.0);
        let index = grams
            .iter()
            .enumerate()
            .map(|(i, (g, _))| (g.clone(), i))
            .collect();
        let (grams, counts) = grams.into_iter().unzip();
        NGramVocab {
            grams,
            counts,
            index,
            max_n,
            min_count,
        }
    }
}

/// Keeps every gram of length `<= max_n` occurring at least `min_count`
/// times across `words`. Single characters present in the corpus are always
/// kept so every word stays representable.
pub fn select_ngram_vocab<S: AsRef<str>>(words: &[S], max_n: usize, min_count: u64) -> NGramVocab {
    let counts = substring_counts(words, max_n);
    let selected: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|(g, c)| *c >= min_count || g.len() == 1)
        .map(|(g, c)| (g.to_string(), c))
        .collect();
    NGramVocab::from_grams(selected, max_n, min_count)
}

/// Per-gram loss weights, inversely proportional to corpus frequency and
/// normalised to unit mean.
#[derive(Debug, Clone, PartialEq)]
pub struct GramWeights {
    pub weights: Vec<f32>,
}

pub fn gram_weights<S: AsRef<str>>(words: &[S], vocab: &NGramVocab) -> Result<GramWeights> {
    let counts = substring_counts(words, vocab.max_n);
    let mut inv = Vec::with_capacity(vocab.len());
    for g in vocab.grams() {
        let c = counts.get(g.as_str()).copied().unwrap_or(0);
        if c == 0 {
            return Err(Error::ZeroFrequency(g.clone()));
        }
        inv.push(1.0 / c as f64);
    }
    let mean = inv.iter().sum::<f64>() / inv.len().max(1) as f64;
    Ok(GramWeights {
        weights: inv.into_iter().map(|v| (v / mean) as f32).collect(),
    })
}

/// `gram<TAB>count<TAB>weight` lines.
pub fn vocab_dump(vocab: &NGramVocab, weights: &GramWeights) -> String {
    let mut out = String::new();
    for ((g, c), w) in vocab.grams().iter().zip(vocab.counts()).zip(&weights.weights) {
        let _ = writeln!(out, "{g}\t{c}\t{w}");
    }
    out
}

/// Parses a vocab dump back into a vocabulary (weights are recomputed on use).
pub fn parse_vocab_dump(text: &str, max_n: usize, min_count: u64) -> Result<NGramVocab> {
    let mut grams = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let gram = fields.next().unwrap_or_default().to_string();
        let count = fields
            .next()
            .and_then(|c| c.parse::<u64>().ok())
            .ok_or_else(|| Error::Parse {
                what: "vocab dump",
                line: lineno + 1,
                detail: "expected gram<TAB>count<TAB>weight".into(),
            })?;
        grams.push((gram, count));
    }
    Ok(NGramVocab::from_grams(grams, max_n, min_count))
}

/// Path of the bundled frequency-ordered English word list.
pub fn bundled_word_list() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/words_60k.txt")
}

/// Path of the bundled `word<TAB>count` table matching [`bundled_word_list`].
pub fn bundled_frequency_table() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/word_freq_60k.tsv")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn lex(words: &[&str]) -> Lexicon {
        Lexicon::from_words(words.iter().copied()).unwrap().0
    }

    #[test]
    fn load_case_folds_and_dedups() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "Cat\ncat\ndog\n").unwrap();
        let (lexicon, report) = load_lexicon(f.path()).unwrap();
        assert_eq!(lexicon.words(), &["cat", "dog"]);
        assert_eq!(report.duplicates, 1);
        assert_eq!(lexicon.position("dog"), Some(1));
    }

    #[test]
    fn overlong_words_are_dropped_and_counted() {
        let long = "a".repeat(24);
        let ok = "b".repeat(23);
        let (lexicon, report) = Lexicon::from_words([long.as_str(), ok.as_str()]).unwrap();
        assert_eq!(lexicon.words(), &[ok]);
        assert_eq!(report.too_long, 1);
    }

    #[test]
    fn punctuation_only_file_is_an_error() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        write!(f, "!!!\n").unwrap();
        assert!(matches!(load_lexicon(f.path()), Err(Error::EmptyLexicon)));
    }

    #[test]
    fn uniform_prior_over_fifty_words() {
        let words: Vec<String> = (0..80).map(|i| format!("w{i}")).collect();
        let (lexicon, _) = Lexicon::from_words(&words).unwrap();
        let prior = build_prior(
            &lexicon,
            None,
            PriorMode::Uniform {
                sublexicon: words[..50].to_vec(),
            },
        )
        .unwrap();
        for i in 0..50 {
            assert!((prior.get(i) - 0.02).abs() < 1e-15);
        }
        for i in 50..80 {
            assert_eq!(prior.get(i), 0.0);
        }
        assert!((prior.values().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn power_law_add_one_smoothing() {
        let lexicon = lex(&["a", "b"]);
        let freq = FrequencyTable::from_pairs([("a", 9), ("b", 0)]);
        let prior = build_prior(&lexicon, Some(&freq), PriorMode::PowerLaw { alpha: 1.0 }).unwrap();
        assert!((prior.get(0) - 10.0 / 11.0).abs() < 1e-12);
        assert!((prior.get(1) - 1.0 / 11.0).abs() < 1e-12);
    }

    #[test]
    fn power_law_vanishing_exponent_is_uniform() {
        let lexicon = lex(&["a", "b", "c", "d"]);
        let freq = FrequencyTable::from_pairs([("a", 1_000_000), ("b", 3), ("c", 70)]);
        let prior =
            build_prior(&lexicon, Some(&freq), PriorMode::PowerLaw { alpha: 1e-9 }).unwrap();
        for &v in prior.values() {
            assert!((v - 0.25).abs() < 1e-6);
        }
    }

    #[test]
    fn power_law_rejects_non_positive_exponent() {
        let lexicon = lex(&["a"]);
        let freq = FrequencyTable::from_pairs([("a", 1)]);
        for alpha in [0.0, -1.0, f64::NAN] {
            assert!(build_prior(&lexicon, Some(&freq), PriorMode::PowerLaw { alpha }).is_err());
        }
    }

    #[test]
    fn vocab_threshold_on_repeated_word() {
        let words = vec!["aaaa"; 10];
        let vocab = select_ngram_vocab(&words, 4, 10);
        assert_eq!(vocab.grams(), &["a", "aa", "aaa", "aaaa"]);
        assert_eq!(vocab.counts(), &[40, 30, 20, 10]);
        let weights = gram_weights(&words, &vocab).unwrap();
        // 1/40 : 1/30 : 1/20 : 1/10, normalised to mean 1
        let inv = [1.0 / 40.0, 1.0 / 30.0, 1.0 / 20.0, 1.0 / 10.0];
        let mean: f64 = inv.iter().sum::<f64>() / 4.0;
        for (w, i) in weights.weights.iter().zip(inv) {
            assert!((*w as f64 - i / mean).abs() < 1e-6);
        }
    }

    #[test]
    fn vocab_min_count_one() {
        let vocab = select_ngram_vocab(&["ab"], 4, 1);
        assert_eq!(vocab.grams(), &["a", "b", "ab"]);
    }

    #[test]
    fn weights_inverse_ratio() {
        let vocab = NGramVocab::from_grams(vec![("x".into(), 10), ("y".into(), 40)], 1, 1);
        let mut words = vec!["x"; 10];
        words.extend(vec!["y"; 40]);
        let w = gram_weights(&words, &vocab).unwrap();
        assert!((w.weights[0] / w.weights[1] - 4.0).abs() < 1e-5);
        assert!(((w.weights[0] + w.weights[1]) / 2.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn equal_frequencies_give_unit_weights() {
        let words = ["ab", "ba"];
        let vocab = select_ngram_vocab(&words, 1, 1);
        let w = gram_weights(&words, &vocab).unwrap();
        assert_eq!(w.weights, vec![1.0, 1.0]);
    }

    #[test]
    fn zero_frequency_gram_rejected() {
        let vocab = NGramVocab::from_grams(vec![("zz".into(), 3)], 2, 1);
        assert!(matches!(
            gram_weights(&["ab"], &vocab),
            Err(Error::ZeroFrequency(g)) if g == "zz"
        ));
    }

    #[test]
    fn vocab_dump_round_trips() {
        let words = ["spires", "spire", "tire", "tires"];
        let vocab = select_ngram_vocab(&words, 4, 2);
        let weights = gram_weights(&words, &vocab).unwrap();
        let dump = vocab_dump(&vocab, &weights);
        let parsed = parse_vocab_dump(&dump, 4, 2).unwrap();
        assert_eq!(parsed, vocab);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn word() -> impl Strategy<Value = String> {
            "[a-e0-2]{1,8}"
        }

        proptest! {
            #[test]
            fn vocab_is_order_independent_and_idempotent(
                mut words in prop::collection::vec(word(), 1..40),
                min_count in 1u64..4,
            ) {
                let a = select_ngram_vocab(&words, 4, min_count);
                let b = select_ngram_vocab(&words, 4, min_count);
                prop_assert_eq!(&a, &b);
                words.reverse();
                let c = select_ngram_vocab(&words, 4, min_count);
                prop_assert_eq!(&a, &c);
            }

            #[test]
            fn vocab_keeps_every_frequent_gram(
                words in prop::collection::vec(word(), 1..40),
                min_count in 1u64..4,
            ) {
                let vocab = select_ngram_vocab(&words, 4, min_count);
                let mut brute: HashMap<String, u64> = HashMap::new();
                for w in &words {
                    for i in 0..w.len() {
                        for j in i + 1..=(i + 4).min(w.len()) {
                            *brute.entry(w[i..j].to_string()).or_default() += 1;
                        }
                    }
                }
                for (g, c) in brute {
                    if c >= min_count {
                        prop_assert!(vocab.position(&g).is_some(), "dropped {}", g);
                    }
                }
            }

            #[test]
            fn priors_sum_to_one(
                counts in prop::collection::vec(0u64..1000, 1..30),
                alpha in 0.01f64..3.0,
            ) {
                let words: Vec<String> = (0..counts.len()).map(|i| format!("w{i}")).collect();
                let (lexicon, _) = Lexicon::from_words(&words).unwrap();
                let freq = FrequencyTable::from_pairs(
                    words.iter().zip(&counts).map(|(w, c)| (w.as_str(), *c + 1)),
                );
                let p = build_prior(&lexicon, Some(&freq), PriorMode::PowerLaw { alpha }).unwrap();
                prop_assert!((p.values().iter().sum::<f64>() - 1.0).abs() < 1e-9);
                let half = words[..(words.len() + 1) / 2].to_vec();
                let u = build_prior(&lexicon, None, PriorMode::Uniform { sublexicon: half }).unwrap();
                prop_assert!((u.values().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }
}
