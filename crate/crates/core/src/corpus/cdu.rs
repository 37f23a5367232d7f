use std::collections::{HashMap, HashSet};

use super::{tokenize, Dialogue, Edu, RawDialogue, RelationInstance, Unit};
use crate::error::CorpusError;

struct CduIndex<'a> {
    raw: &'a RawDialogue,
    ids: HashMap<&'a str, Unit>,
    members: Vec<Vec<Unit>>,
    /// (source, target) of every relation as resolved units.
    links: Vec<(Unit, Unit)>,
}

impl<'a> CduIndex<'a> {
    fn new(raw: &'a RawDialogue) -> Result<Self, CorpusError> {
        raw.validate()?;
        let ids = raw.unit_index();
        let resolve = |id: &str| raw.resolve(id, &ids).expect("validated");
        let members = raw
            .cdus
            .iter()
            .map(|c| c.members.iter().map(|m| resolve(m)).collect())
            .collect();
        let links = raw.relations.iter().map(|r| (resolve(&r.x), resolve(&r.y))).collect();
        Ok(CduIndex {
            raw,
            ids,
            members,
            links,
        })
    }

    /// Smallest EDU index contained in a unit.
    fn first_edu(&self, u: Unit) -> usize {
        match u {
            Unit::Edu(i) => i,
            Unit::Cdu(c) => self.members[c]
                .iter()
                .map(|&m| self.first_edu(m))
                .min()
                .expect("non-empty CDU"),
        }
    }

    /// All units nested (transitively) inside a CDU.
    fn contents(&self, c: usize, out: &mut HashSet<Unit>) {
        for &m in &self.members[c] {
            if out.insert(m) {
                if let Unit::Cdu(d) = m {
                    self.contents(d, out);
                }
            }
        }
    }

    fn head(&self, c: usize) -> usize {
        let mut inside = HashSet::new();
        self.contents(c, &mut inside);

        let mut ordered: Vec<(usize, usize, Unit)> = self.members[c]
            .iter()
            .enumerate()
            .map(|(pos, &m)| (self.first_edu(m), pos, m))
            .collect();
        ordered.sort_by_key(|&(first, pos, _)| (first, pos));

        let has_incoming = |m: Unit| self.links.iter().any(|&(src, tgt)| tgt == m && inside.contains(&src));
        let chosen = match ordered.iter().find(|&&(_, _, m)| !has_incoming(m)) {
            Some(&(_, _, m)) => m,
            None => {
                log::warn!(
                    "dialogue '{}': every member of CDU '{}' has an incoming relation, using the earliest",
                    self.raw.id,
                    self.raw.cdus[c].id
                );
                ordered[0].2
            }
        };
        self.resolve_edu(chosen)
    }

    fn resolve_edu(&self, u: Unit) -> usize {
        match u {
            Unit::Edu(i) => i,
            Unit::Cdu(c) => self.head(c),
        }
    }
}

/// Head EDU of a CDU: its earliest member without an incoming relation from
/// inside the CDU, resolved recursively through nested CDUs. When every
/// member has such a relation the earliest member is used.
pub fn cdu_head(cdu_id: &str, raw: &RawDialogue) -> Result<usize, CorpusError> {
    let index = CduIndex::new(raw)?;
    match index.ids.get(cdu_id) {
        Some(&Unit::Cdu(c)) => Ok(index.head(c)),
        _ => Err(CorpusError::Integrity {
            dialogue: raw.id.clone(),
            id: cdu_id.to_owned(),
        }),
    }
}

/// Replaces CDU endpoints by their heads. Self-loops created by the
/// collapse are removed, and of several identical relations only the first
/// is kept. The returned dialogue has `u_0` prepended but no `ROOT` links.
pub fn eliminate_cdus(raw: &RawDialogue) -> Result<Dialogue, CorpusError> {
    let index = CduIndex::new(raw)?;
    let mut relations = Vec::with_capacity(raw.relations.len());
    let mut seen = HashSet::new();
    for (r, &(src, tgt)) in raw.relations.iter().zip(&index.links) {
        let source = index.resolve_edu(src);
        let target = index.resolve_edu(tgt);
        if source == target {
            continue;
        }
        let rel = RelationInstance::new(source, target, r.rtype.clone());
        if seen.insert(rel.clone()) {
            relations.push(rel);
        }
    }

    let mut edus = Vec::with_capacity(raw.edus.len() + 1);
    edus.push(Edu::root());
    for (i, e) in raw.edus.iter().enumerate() {
        edus.push(Edu {
            index: i + 1,
            speaker: e.speaker.clone(),
            text: e.text.clone(),
            tokens: tokenize(&e.text),
        });
    }
    Ok(Dialogue {
        id: raw.id.clone(),
        edus,
        relations,
    })
}
