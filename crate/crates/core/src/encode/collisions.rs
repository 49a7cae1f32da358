use super::{encode_ngrams, grams};
use crate::corpus::NGramVocab;

/// Which gram set identifies a word.
#[derive(Debug, Clone, Copy)]
pub enum CollisionBasis<'a> {
    /// The full set `G_N(w)` of substrings up to length N.
    Full(usize),
    /// `G_N(w)` restricted to a selected vocabulary.
    Vocab(&'a NGramVocab),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CollisionStats {
    /// Sum over equivalence groups of (group size - 1): a colliding pair
    /// contributes one.
    pub collisions: usize,
    /// Number of words that share their gram set with some other word.
    pub words_involved: usize,
    /// Indices of words in each group of size >= 2, ascending.
    pub groups: Vec<Vec<usize>>,
}

fn fnv1a(bytes: impl IntoIterator<Item = u8>, mut h: u64) -> u64 {
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;

enum Key {
    Grams(Vec<String>),
    Support(Vec<u32>),
}

impl Key {
    fn fingerprint(&self) -> u64 {
        match self {
            Key::Grams(g) => g
                .iter()
                .fold(FNV_OFFSET, |h, s| fnv1a(s.bytes().chain([0xff]), h)),
            Key::Support(s) => s
                .iter()
                .fold(FNV_OFFSET, |h, i| fnv1a(i.to_le_bytes(), h)),
        }
    }

    fn same(&self, other: &Key) -> bool {
        match (self, other) {
            (Key::Grams(a), Key::Grams(b)) => a == b,
            (Key::Support(a), Key::Support(b)) => a == b,
            _ => false,
        }
    }
}

/// Groups words with identical gram sets.
///
/// Words are bucketed by a 64-bit fingerprint of their sorted gram list;
/// each bucket is then split by exact comparison, so fingerprint clashes
/// never merge distinct sets.
pub fn count_collisions<S: AsRef<str>>(words: &[S], basis: CollisionBasis<'_>) -> CollisionStats {
    let keys: Vec<Key> = words
        .iter()
        .map(|w| match basis {
            CollisionBasis::Full(n) => Key::Grams(grams(w.as_ref(), n).into_iter().collect()),
            CollisionBasis::Vocab(v) => Key::Support(encode_ngrams(w.as_ref(), v).support),
        })
        .collect();
    let mut order: Vec<(u64, usize)> = keys
        .iter()
        .enumerate()
        .map(|(i, k)| (k.fingerprint(), i))
        .collect();
    order.sort_unstable();

    let mut stats = CollisionStats::default();
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && order[end].0 == order[start].0 {
            end += 1;
        }
        if end - start > 1 {
            let mut pending: Vec<usize> = order[start..end].iter().map(|&(_, i)| i).collect();
            while let Some(first) = pending.first().copied() {
                let (group, rest): (Vec<usize>, Vec<usize>) =
                    pending.iter().partition(|&&i| keys[i].same(&keys[first]));
                if group.len() > 1 {
                    stats.collisions += group.len() - 1;
                    stats.words_involved += group.len();
                    stats.groups.push(group);
                }
                pending = rest;
            }
        }
        start = end;
    }
    for g in &mut stats.groups {
        g.sort_unstable();
    }
    stats.groups.sort();
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{BTreeSet, HashMap};

    fn oracle(words: &[&str], n: usize) -> usize {
        let mut groups: HashMap<BTreeSet<String>, usize> = HashMap::new();
        for w in words {
            let mut set = BTreeSet::new();
            for i in 0..w.len() {
                for j in i + 1..=w.len().min(i + n) {
                    set.insert(w[i..j].to_string());
                }
            }
            *groups.entry(set).or_default() += 1;
        }
        groups.values().map(|c| c - 1).sum()
    }

    #[test]
    fn anagram_collides_only_at_unigrams() {
        assert_eq!(count_collisions(&["ab", "ba"], CollisionBasis::Full(1)).collisions, 1);
        assert_eq!(count_collisions(&["ab", "ba"], CollisionBasis::Full(2)).collisions, 0);
    }

    #[test]
    fn group_accounting() {
        let words = ["aaa", "aaaa", "aaaaa", "ab", "ba", "c"];
        let s = count_collisions(&words, CollisionBasis::Full(2));
        // {aaa,aaaa,aaaaa} share {a,aa}; ab/ba differ at N=2
        assert_eq!(s.collisions, 2);
        assert_eq!(s.words_involved, 3);
        assert_eq!(s.groups, vec![vec![0, 1, 2]]);
        assert_eq!(s.collisions, oracle(&words, 2));
    }

    #[test]
    fn vocab_basis_merges_words_differing_only_in_rare_grams() {
        let vocab = NGramVocab::from_grams(vec![("a".into(), 1), ("b".into(), 1)], 4, 1);
        let s = count_collisions(&["ab", "ba", "a"], CollisionBasis::Vocab(&vocab));
        assert_eq!(s.collisions, 1);
        assert_eq!(s.groups, vec![vec![0, 1]]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn agrees_with_grouping_oracle(
                words in prop::collection::btree_set("[ab]{1,5}", 1..30),
                n in 1usize..5,
            ) {
                let words: Vec<&str> = words.iter().map(|s| s.as_str()).collect();
                let s = count_collisions(&words, CollisionBasis::Full(n));
                prop_assert_eq!(s.collisions, oracle(&words, n));
            }
        }
    }
}
