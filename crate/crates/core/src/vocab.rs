//! Type and value vocabularies with `PAD`, `UNK` and `EMPTY` sentinels.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use sha2::{Digest, Sha256};

use crate::corpus::{AstTree, EMPTY, PAD, UNK};
use crate::error::{Error, Result};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const EMPTY_ID: u32 = 2;
const NUM_SPECIALS: usize = 3;

/// Default number of most-frequent values kept.
pub const DEFAULT_VALUE_VOCAB: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Specials {
    pub pad: u32,
    pub unk: u32,
    pub empty: u32,
}

/// Occurrence counts of strings, mergeable across files.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenCounts(BTreeMap<String, u64>);

impl TokenCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, token: &str) {
        if let Some(c) = self.0.get_mut(token) {
            *c += 1;
        } else {
            self.0.insert(token.into(), 1);
        }
    }

    pub fn add_n(&mut self, token: &str, n: u64) {
        *self.0.entry(token.into()).or_insert(0) += n;
    }

    pub fn merge(&mut self, other: &TokenCounts) {
        for (t, &c) in &other.0 {
            self.add_n(t, c);
        }
    }

    pub fn get(&self, token: &str) -> u64 {
        self.0.get(token).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.0.values().sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.0.iter().map(|(t, &c)| (t.as_str(), c))
    }

    /// Type counts of a tree.
    pub fn add_types(&mut self, tree: &AstTree) {
        for n in tree.nodes() {
            self.add(&n.kind);
        }
    }

    /// Value counts of a tree, with absent values counted as `EMPTY`.
    pub fn add_values(&mut self, tree: &AstTree) {
        for n in tree.nodes() {
            self.add(n.value.as_deref().unwrap_or(EMPTY));
        }
    }
}

/// Bidirectional token/id map. Ids `0..3` are `PAD`, `UNK`, `EMPTY`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: BTreeMap<String, u32>,
    max_values: Option<usize>,
}

impl Vocab {
    /// Rebuilds a vocabulary from its ordered token list (specials first).
    pub fn from_tokens(tokens: Vec<String>, max_values: Option<usize>) -> Result<Self> {
        if tokens.len() < NUM_SPECIALS || tokens[0] != PAD || tokens[1] != UNK || tokens[2] != EMPTY {
            return Err(Error::Config("vocabulary must start with the PAD, UNK, EMPTY sentinels".into()));
        }
        let mut ids = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Config(alloc::format!("duplicate vocabulary entry `{t}`")));
            }
        }
        Ok(Self { tokens, ids, max_values })
    }

    fn with_entries(entries: impl IntoIterator<Item = String>, max_values: Option<usize>) -> Self {
        let mut tokens: Vec<String> = [PAD, UNK, EMPTY].iter().map(|s| String::from(*s)).collect();
        tokens.extend(entries.into_iter().filter(|t| t != PAD && t != UNK && t != EMPTY));
        Self::from_tokens(tokens, max_values).expect("entries are distinct")
    }

    /// Every distinct type, in lexicographic order.
    pub fn types_from_counts(counts: &TokenCounts) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        Ok(Self::with_entries(counts.0.keys().cloned(), None))
    }

    /// The `k` most frequent values; ties at equal frequency go to the
    /// lexicographically smaller string. `EMPTY` competes for a slot like any
    /// other value but always keeps its reserved id.
    pub fn values_from_counts(counts: &TokenCounts, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("value vocabulary size k must be at least 1".into()));
        }
        let mut ranked: Vec<(&String, u64)> = counts.0.iter().map(|(t, &c)| (t, c)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(k);
        Ok(Self::with_entries(ranked.into_iter().map(|(t, _)| t.clone()), Some(k)))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn specials(&self) -> Specials {
        Specials { pad: PAD_ID, unk: UNK_ID, empty: EMPTY_ID }
    }

    pub fn max_values(&self) -> Option<usize> {
        self.max_values
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn contains(&self, token: &str) -> bool {
        self.ids.contains_key(token)
    }

    /// Id of `token`, or `UNK` when it is out of vocabulary.
    pub fn encode(&self, token: &str) -> u32 {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn decode(&self, id: u32) -> Result<&str> {
        self.tokens
            .get(id as usize)
            .map(String::as_str)
            .ok_or(Error::Index { index: id as usize, len: self.tokens.len() })
    }

    /// SHA-256 over the ordered token list and `k`, as lowercase hex.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        h.update(alloc::format!("k={:?}", self.max_values).as_bytes());
        let mut out = String::with_capacity(64);
        for b in h.finalize().iter() {
            let _ = write!(out, "{b:02x}");
        }
        out
    }

    /// Fraction of `tokens` that encode to `UNK`.
    pub fn unk_rate<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> f64 {
        let (mut unk, mut total) = (0usize, 0usize);
        for t in tokens {
            total += 1;
            if self.encode(t) == UNK_ID {
                unk += 1;
            }
        }
        if total == 0 {
            0.0
        } else {
            unk as f64 / total as f64
        }
    }
}

pub fn build_type_vocab(corpus: &[AstTree]) -> Result<Vocab> {
    let mut counts = TokenCounts::new();
    for t in corpus {
        counts.add_types(t);
    }
    Vocab::types_from_counts(&counts)
}

pub fn build_value_vocab(corpus: &[AstTree], k: usize) -> Result<Vocab> {
    let mut counts = TokenCounts::new();
    for t in corpus {
        counts.add_values(t);
    }
    Vocab::values_from_counts(&counts, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AstNode;
    use alloc::vec;

    fn leaf_tree(values: &[&str]) -> AstTree {
        let mut nodes = vec![AstNode::new("Root", None, (1..=values.len()).collect())];
        nodes.extend(values.iter().map(|v| AstNode::new("Leaf", Some(v), vec![])));
        AstTree::new(nodes).unwrap()
    }

    #[test]
    fn type_vocab_has_all_types() {
        let t = AstTree::new(vec![AstNode::new("A", None, vec![1]), AstNode::new("B", None, vec![])]).unwrap();
        let v = build_type_vocab(&[t]).unwrap();
        assert_eq!(v.len(), 5);
        assert!(v.contains("A") && v.contains("B"));
        assert_eq!(v.encode(PAD), PAD_ID);
        assert_eq!(v.encode("C"), UNK_ID);
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert_eq!(build_type_vocab(&[]), Err(Error::EmptyCorpus));
    }

    #[test]
    fn top_k_values() {
        let mut c = TokenCounts::new();
        c.add_n("a", 3);
        c.add_n("b", 2);
        c.add_n("c", 1);
        let v = Vocab::values_from_counts(&c, 2).unwrap();
        assert_eq!(v.tokens()[3..], ["a", "b"]);
        assert_eq!(v.encode("c"), UNK_ID);

        let all = Vocab::values_from_counts(&c, 10).unwrap();
        assert_eq!(all.len(), 6);
    }

    #[test]
    fn ties_break_lexicographically() {
        let mut c = TokenCounts::new();
        c.add_n("zeta", 2);
        c.add_n("alpha", 2);
        c.add_n("mid", 2);
        let v = Vocab::values_from_counts(&c, 2).unwrap();
        assert_eq!(v.tokens()[3..], ["alpha", "mid"]);
    }

    #[test]
    fn empty_competes_for_a_slot() {
        let t = leaf_tree(&["x", "x", "y"]);
        let v = build_value_vocab(&[t], 2).unwrap();
        // EMPTY (root) has count 1, x has 2, y has 1; EMPTY < y lexicographically.
        assert_eq!(v.tokens()[3..], ["x"]);
        assert_eq!(v.encode(EMPTY), EMPTY_ID);
        assert_eq!(v.encode("y"), UNK_ID);
    }

    #[test]
    fn round_trip_and_decode_errors() {
        let v = build_value_vocab(&[leaf_tree(&["a"])], DEFAULT_VALUE_VOCAB).unwrap();
        assert_eq!(v.decode(v.encode("a")).unwrap(), "a");
        assert_eq!(v.encode("zzz"), UNK_ID);
        let size = v.len() as u32;
        assert!(matches!(v.decode(size + 1), Err(Error::Index { .. })));
    }

    #[test]
    fn fingerprint_is_stable() {
        let a = build_value_vocab(&[leaf_tree(&["a", "b", "b"])], 5).unwrap();
        let b = build_value_vocab(&[leaf_tree(&["b", "a", "b"])], 5).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        let c = build_value_vocab(&[leaf_tree(&["b", "a", "b"])], 4).unwrap();
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn unk_rate_counts_oov() {
        let v = build_value_vocab(&[leaf_tree(&["a", "a", "b"])], 2).unwrap();
        assert!((v.unk_rate(["a", "b", "c", "a"]) - 0.5).abs() < 1e-12);
    }
}
