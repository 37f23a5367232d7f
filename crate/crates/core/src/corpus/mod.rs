//! Dialogue data model and preprocessing.
//!
//! A [`RawDialogue`] mirrors the corpus file: relations may point at complex
//! discourse units (CDUs). [`preprocess`] turns it into a [`Dialogue`] over
//! EDUs only, with the dummy root `u_0` prepended and every orphan EDU
//! attached to it by a `ROOT` relation.

mod cdu;
mod format;
mod stats;
pub mod synthetic;
mod tokenize;
mod vocab;

pub use cdu::{cdu_head, eliminate_cdus};
pub use format::{parse_corpus, read_corpus, to_canonical, write_corpus, CorpusFile};
pub use stats::{corpus_stats, CorpusStats};
pub use tokenize::tokenize;
pub use vocab::{build_vocab, Vocab, PAD, UNK};

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::CorpusError;

/// Relation type linking the dummy root to EDUs without a parent.
pub const ROOT_RELATION: &str = "ROOT";

/// Speaker id reserved for the dummy root.
pub const ROOT_SPEAKER: &str = "<root>";

/// An elementary discourse unit. Index 0 is the dummy root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edu {
    pub index: usize,
    pub speaker: String,
    pub text: String,
    pub tokens: Vec<String>,
}

impl Edu {
    pub fn root() -> Self {
        Edu {
            index: 0,
            speaker: ROOT_SPEAKER.to_owned(),
            text: String::new(),
            tokens: Vec::new(),
        }
    }

    pub fn is_root(&self) -> bool {
        self.index == 0
    }
}

/// A typed link `source -> target` between EDU indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationInstance {
    pub source: usize,
    pub target: usize,
    pub rtype: String,
}

impl RelationInstance {
    pub fn new(source: usize, target: usize, rtype: impl Into<String>) -> Self {
        RelationInstance {
            source,
            target,
            rtype: rtype.into(),
        }
    }
}

/// EDU as it appears in the corpus file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawEdu {
    pub speaker: String,
    pub text: String,
}

/// Relation whose endpoints are unit ids (EDU positions or CDU ids).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawRelation {
    pub x: String,
    pub y: String,
    pub rtype: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cdu {
    pub id: String,
    pub members: Vec<String>,
}

/// A dialogue before CDU elimination. EDU ids are the 1-based positions
/// as strings.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawDialogue {
    pub id: String,
    pub edus: Vec<RawEdu>,
    pub relations: Vec<RawRelation>,
    pub cdus: Vec<Cdu>,
}

/// Resolved discourse unit reference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub(crate) enum Unit {
    /// 1-based EDU index.
    Edu(usize),
    /// Position in `RawDialogue::cdus`.
    Cdu(usize),
}

impl RawDialogue {
    pub(crate) fn unit_index(&self) -> HashMap<&str, Unit> {
        let mut map = HashMap::new();
        for (i, c) in self.cdus.iter().enumerate() {
            map.insert(c.id.as_str(), Unit::Cdu(i));
        }
        map
    }

    pub(crate) fn resolve(&self, id: &str, cdus: &HashMap<&str, Unit>) -> Option<Unit> {
        if let Ok(i) = id.parse::<usize>() {
            if i >= 1 && i <= self.edus.len() && id == i.to_string() {
                return Some(Unit::Edu(i));
            }
        }
        cdus.get(id).copied()
    }

    /// Checks referential integrity and CDU acyclicity.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let invalid = |msg: String| CorpusError::Invalid {
            dialogue: self.id.clone(),
            msg,
        };
        let cdus = self.unit_index();
        if cdus.len() != self.cdus.len() {
            return Err(invalid("duplicate CDU id".into()));
        }
        for c in &self.cdus {
            if let Ok(i) = c.id.parse::<usize>() {
                if i >= 1 && i <= self.edus.len() {
                    return Err(invalid(format!("CDU id '{}' collides with an EDU id", c.id)));
                }
            }
            if c.members.is_empty() {
                return Err(invalid(format!("CDU '{}' has no members", c.id)));
            }
        }
        let check = |id: &str| {
            self.resolve(id, &cdus).ok_or_else(|| CorpusError::Integrity {
                dialogue: self.id.clone(),
                id: id.to_owned(),
            })
        };
        for r in &self.relations {
            check(&r.x)?;
            check(&r.y)?;
        }
        let mut members = Vec::with_capacity(self.cdus.len());
        for c in &self.cdus {
            members.push(c.members.iter().map(|m| check(m)).collect::<Result<Vec<_>, _>>()?);
        }

        // Depth-first search for a cycle in CDU membership.
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            New,
            Active,
            Done,
        }
        fn visit(c: usize, members: &[Vec<Unit>], marks: &mut [Mark]) -> bool {
            match marks[c] {
                Mark::Done => return true,
                Mark::Active => return false,
                Mark::New => {}
            }
            marks[c] = Mark::Active;
            for m in &members[c] {
                if let Unit::Cdu(d) = *m {
                    if !visit(d, members, marks) {
                        return false;
                    }
                }
            }
            marks[c] = Mark::Done;
            true
        }
        let mut marks = vec![Mark::New; self.cdus.len()];
        for c in 0..self.cdus.len() {
            if !visit(c, &members, &mut marks) {
                return Err(invalid(format!("CDU membership cycle through '{}'", self.cdus[c].id)));
            }
        }
        Ok(())
    }
}

/// A dialogue over EDUs only. `edus[0]` is the dummy root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dialogue {
    pub id: String,
    pub edus: Vec<Edu>,
    pub relations: Vec<RelationInstance>,
}

/// Gold parent of one EDU.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldParent {
    pub parent: usize,
    pub rtype: String,
}

impl Dialogue {
    /// Number of real EDUs (excluding the root).
    pub fn len(&self) -> usize {
        self.edus.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Distinct speakers in order of first appearance (root excluded).
    pub fn speakers(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for e in self.edus.iter().skip(1) {
            if seen.insert(e.speaker.as_str()) {
                out.push(e.speaker.clone());
            }
        }
        out
    }

    /// Gold parents for EDUs `1..=n` (position `i - 1` holds EDU `i`).
    pub fn gold_parents(&self) -> Vec<GoldParent> {
        gold_parents(self)
    }

    /// Relations whose type is not `ROOT`.
    pub fn non_root_relations(&self) -> impl Iterator<Item = &RelationInstance> {
        self.relations.iter().filter(|r| r.rtype != ROOT_RELATION)
    }
}

/// Prepends `u_0` if needed and links every EDU without an incoming
/// relation from the root with type `ROOT`.
pub fn attach_root(mut dialogue: Dialogue) -> Dialogue {
    if dialogue.edus.first().is_none_or(|e| !e.is_root()) {
        dialogue.edus.insert(0, Edu::root());
    }
    let n = dialogue.edus.len() - 1;
    let mut has_incoming = vec![false; n + 1];
    for r in &dialogue.relations {
        has_incoming[r.target] = true;
    }
    for (i, inc) in has_incoming.iter().enumerate().skip(1) {
        if !inc {
            dialogue.relations.push(RelationInstance::new(0, i, ROOT_RELATION));
        }
    }
    dialogue
}

/// For each EDU, the incoming relation with the smallest source index among
/// preceding units; EDUs with none get `(0, ROOT)`.
pub fn gold_parents(dialogue: &Dialogue) -> Vec<GoldParent> {
    let n = dialogue.len();
    let mut best: Vec<Option<&RelationInstance>> = vec![None; n + 1];
    for r in &dialogue.relations {
        if r.target == 0 || r.target > n || r.source >= r.target {
            continue;
        }
        match best[r.target] {
            Some(b) if b.source <= r.source => {}
            _ => best[r.target] = Some(r),
        }
    }
    (1..=n)
        .map(|i| match best[i] {
            Some(r) => GoldParent {
                parent: r.source,
                rtype: r.rtype.clone(),
            },
            None => GoldParent {
                parent: 0,
                rtype: ROOT_RELATION.to_owned(),
            },
        })
        .collect()
}

/// Full pipeline: validation, CDU elimination, removal of backward links,
/// tokenization and root attachment.
pub fn preprocess(raw: &RawDialogue) -> Result<Dialogue, CorpusError> {
    let mut d = eliminate_cdus(raw)?;
    let before = d.relations.len();
    d.relations.retain(|r| r.source < r.target);
    if d.relations.len() != before {
        log::debug!(
            "dialogue '{}': dropped {} backward relation(s)",
            d.id,
            before - d.relations.len()
        );
    }
    Ok(attach_root(d))
}

pub fn preprocess_all(raws: &[RawDialogue]) -> Result<Vec<Dialogue>, CorpusError> {
    raws.iter().map(preprocess).collect()
}

/// Splits off the last tenth of the dialogues (file order) for validation.
pub fn split_validation<T: Clone>(items: &[T]) -> (Vec<T>, Vec<T>) {
    let n_valid = (items.len() as f64 * 0.1).round() as usize;
    let cut = items.len() - n_valid;
    (items[..cut].to_vec(), items[cut..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn dialogue(n: usize, rels: &[(usize, usize, &str)]) -> Dialogue {
        let mut edus = vec![Edu::root()];
        for i in 1..=n {
            edus.push(Edu {
                index: i,
                speaker: format!("s{}", i % 2),
                text: format!("edu {}", i),
                tokens: vec!["edu".into()],
            });
        }
        Dialogue {
            id: "d".into(),
            edus,
            relations: rels.iter().map(|&(s, t, r)| RelationInstance::new(s, t, r)).collect(),
        }
    }

    #[test]
    fn attach_root_only_orphans() {
        let d = attach_root(dialogue(3, &[(1, 2, "Q"), (1, 3, "Q")]));
        let roots: Vec<_> = d.relations.iter().filter(|r| r.rtype == ROOT_RELATION).collect();
        assert_eq!(roots, vec![&RelationInstance::new(0, 1, ROOT_RELATION)]);
        assert!(d.relations.iter().all(|r| r.target != 0));
    }

    #[test]
    fn attach_root_all_orphans() {
        let d = attach_root(dialogue(2, &[]));
        assert_eq!(
            d.relations,
            vec![
                RelationInstance::new(0, 1, ROOT_RELATION),
                RelationInstance::new(0, 2, ROOT_RELATION)
            ]
        );
    }

    #[test]
    fn attach_root_chain() {
        let d = attach_root(dialogue(4, &[(1, 2, "A"), (2, 3, "A"), (3, 4, "A")]));
        assert_eq!(d.relations.len(), 4);
        assert!(d.relations.contains(&RelationInstance::new(0, 1, ROOT_RELATION)));
    }

    #[test]
    fn attach_root_is_idempotent() {
        let once = attach_root(dialogue(3, &[(1, 3, "A")]));
        let twice = attach_root(once.clone());
        assert_eq!(once, twice);
    }

    #[test]
    fn gold_parent_takes_earliest_source() {
        let d = attach_root(dialogue(5, &[(3, 5, "Acknowledgement"), (1, 5, "QAP")]));
        let g = d.gold_parents();
        assert_eq!(
            g[4],
            GoldParent {
                parent: 1,
                rtype: "QAP".into()
            }
        );
    }

    #[test]
    fn gold_parent_unique_and_orphan() {
        let d = attach_root(dialogue(4, &[(2, 3, "Elaboration")]));
        let g = d.gold_parents();
        assert_eq!(
            g[2],
            GoldParent {
                parent: 2,
                rtype: "Elaboration".into()
            }
        );
        assert_eq!(
            g[3],
            GoldParent {
                parent: 0,
                rtype: ROOT_RELATION.into()
            }
        );
    }

    #[test]
    fn gold_parent_ignores_backward_links() {
        let d = dialogue(3, &[(3, 2, "Comment")]);
        let g = gold_parents(&d);
        assert_eq!(g[1].parent, 0);
    }

    #[test]
    fn validation_split_is_last_tenth() {
        let items: Vec<usize> = (0..20).collect();
        let (train, valid) = split_validation(&items);
        assert_eq!(train.len(), 18);
        assert_eq!(valid, vec![18, 19]);
    }
}
