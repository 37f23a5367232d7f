use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Dialogue, ROOT_RELATION};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";

/// Word and relation-type ids. Words: `PAD = 0`, `UNK = 1`, then kept words
/// in order of first appearance. Relations: `ROOT = 0`, then types in order
/// of first appearance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    words: Vec<String>,
    relations: Vec<String>,
    #[serde(skip)]
    word_ids: HashMap<String, usize>,
    #[serde(skip)]
    rel_ids: HashMap<String, usize>,
}

impl Vocab {
    pub const PAD_ID: usize = 0;
    pub const UNK_ID: usize = 1;
    pub const ROOT_ID: usize = 0;

    pub fn new(words: Vec<String>, relations: Vec<String>) -> Self {
        let mut v = Vocab {
            words,
            relations,
            word_ids: HashMap::new(),
            rel_ids: HashMap::new(),
        };
        v.reindex();
        v
    }

    /// Rebuilds lookup tables, e.g. after deserialization.
    pub fn reindex(&mut self) {
        self.word_ids = self.words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
        self.rel_ids = self.relations.iter().enumerate().map(|(i, r)| (r.clone(), i)).collect();
    }

    pub fn word_id(&self, word: &str) -> usize {
        self.word_ids.get(word).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn num_words(&self) -> usize {
        self.words.len()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn relation_id(&self, rtype: &str) -> Option<usize> {
        self.rel_ids.get(rtype).copied()
    }

    pub fn relation(&self, id: usize) -> &str {
        &self.relations[id]
    }

    /// Relation label count including `ROOT` (that is, K + 1).
    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.word_id(t)).collect()
    }
}

/// Builds the vocabulary from tokenized dialogues. Words seen fewer than
/// `min_freq` times map to `UNK`.
pub fn build_vocab(dialogues: &[Dialogue], min_freq: usize) -> Vocab {
    let min_freq = min_freq.max(1);
    let mut order: Vec<&str> = Vec::new();
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for d in dialogues {
        for e in d.edus.iter().skip(1) {
            for t in &e.tokens {
                let c = counts.entry(t.as_str()).or_insert(0);
                if *c == 0 {
                    order.push(t.as_str());
                }
                *c += 1;
            }
        }
    }
    let mut words = vec![PAD.to_owned(), UNK.to_owned()];
    words.extend(
        order
            .into_iter()
            .filter(|w| *w != PAD && *w != UNK && counts[w] >= min_freq)
            .map(str::to_owned),
    );

    let mut relations = vec![ROOT_RELATION.to_owned()];
    for d in dialogues {
        for r in &d.relations {
            if !relations.contains(&r.rtype) {
                relations.push(r.rtype.clone());
            }
        }
    }
    Vocab::new(words, relations)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{attach_root, tokenize, Edu};

    fn corpus(texts: &[&str]) -> Vec<Dialogue> {
        let mut edus = vec![Edu::root()];
        for (i, t) in texts.iter().enumerate() {
            edus.push(Edu {
                index: i + 1,
                speaker: "a".into(),
                text: t.to_string(),
                tokens: tokenize(t),
            });
        }
        vec![attach_root(Dialogue {
            id: "x".into(),
            edus,
            relations: vec![],
        })]
    }

    #[test]
    fn frequency_threshold() {
        let v = build_vocab(&corpus(&["a a b"]), 2);
        assert_eq!(v.words(), [PAD, UNK, "a"]);
        assert_eq!(v.word_id("b"), Vocab::UNK_ID);
    }

    #[test]
    fn min_freq_one_keeps_all() {
        let v = build_vocab(&corpus(&["a a b", "c"]), 1);
        assert_eq!(v.words(), [PAD, UNK, "a", "b", "c"]);
        assert_eq!(v.relations(), [ROOT_RELATION]);
    }

    #[test]
    fn deterministic() {
        let c = corpus(&["the quick fox", "the lazy dog ?"]);
        assert_eq!(build_vocab(&c, 1), build_vocab(&c, 1));
    }

    #[test]
    fn serde_roundtrip_reindexes() {
        let v = build_vocab(&corpus(&["x y"]), 1);
        let s = serde_json::to_string(&v).unwrap();
        let mut back: Vocab = serde_json::from_str(&s).unwrap();
        back.reindex();
        assert_eq!(back.word_id("y"), v.word_id("y"));
        assert_eq!(back, v);
    }
}
