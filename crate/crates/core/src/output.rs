//! Parse-output files (one JSON record per line), scoring them against a
//! gold corpus, and Graphviz export.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, RelationInstance};
use crate::error::{CorpusError, EvalError};
use crate::eval::{gold_relations, EvalCounts, EvalReport, GoldMode};
use crate::predictor::ParsedDialogue;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkRecord {
    pub child: usize,
    pub parent: usize,
    #[serde(rename = "type")]
    pub rtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rel_prob: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParseRecord {
    pub id: String,
    pub links: Vec<LinkRecord>,
}

impl ParseRecord {
    pub fn relations(&self) -> Vec<RelationInstance> {
        self.links
            .iter()
            .map(|l| RelationInstance::new(l.parent, l.child, l.rtype.clone()))
            .collect()
    }

    /// Record holding the gold tree of a dialogue.
    pub fn gold(d: &Dialogue) -> Self {
        ParseRecord {
            id: d.id.clone(),
            links: gold_relations(d, GoldMode::Tree)
                .into_iter()
                .map(|r| LinkRecord {
                    child: r.target,
                    parent: r.source,
                    rtype: r.rtype,
                    link_prob: None,
                    rel_prob: None,
                })
                .collect(),
        }
    }
}

impl From<&ParsedDialogue> for ParseRecord {
    fn from(p: &ParsedDialogue) -> Self {
        let links = p
            .tree
            .arcs()
            .map(|(parent, child)| LinkRecord {
                child,
                parent,
                rtype: p.tree.label(child).unwrap_or("").to_owned(),
                link_prob: p.link_probs.get(child - 1).copied(),
                rel_prob: p.rel_probs.get(child - 1).copied(),
            })
            .collect();
        ParseRecord {
            id: p.id.clone(),
            links,
        }
    }
}

pub fn write_parses<W: Write>(mut w: W, records: &[ParseRecord]) -> Result<(), CorpusError> {
    for r in records {
        let line = serde_json::to_string(r).map_err(std::io::Error::from)?;
        writeln!(w, "{}", line)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads records, skipping blank lines.
pub fn read_parses<R: BufRead>(r: R) -> Result<Vec<ParseRecord>, CorpusError> {
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: k + 1,
            column: e.column(),
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Scores records against gold dialogues given in the same order.
pub fn score_records(records: &[ParseRecord], gold: &[Dialogue], mode: GoldMode) -> Result<EvalReport, EvalError> {
    for (r, g) in records.iter().zip(gold) {
        if r.id != g.id {
            return Err(EvalError::Alignment {
                predicted: r.id.clone(),
                gold: g.id.clone(),
            });
        }
    }
    if records.len() != gold.len() {
        return Err(EvalError::Count {
            predicted: records.len(),
            gold: gold.len(),
        });
    }
    let mut counts = EvalCounts::default();
    for (r, g) in records.iter().zip(gold) {
        if let Some(l) = r
            .links
            .iter()
            .find(|l| l.child == 0 || l.child > g.len() || l.parent > g.len())
        {
            return Err(EvalError::OutOfRange {
                dialogue: r.id.clone(),
                source_id: l.parent,
                target: l.child,
                edus: g.len(),
            });
        }
        counts.add(&r.relations(), &gold_relations(g, mode));
    }
    Ok(counts.report())
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' | '\r' => out.push(' '),
            c => out.push(c),
        }
    }
    out
}

/// Graphviz digraph of a parse over its dialogue's EDUs.
pub fn to_dot(parsed: &ParsedDialogue, dialogue: &Dialogue) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "digraph \"{}\" {{", escape(&parsed.id));
    s.push_str("  node [shape=box];\n");
    for e in &dialogue.edus {
        let label = if e.is_root() {
            "ROOT".to_owned()
        } else {
            format!("{}: {}", e.speaker, e.text)
        };
        let _ = writeln!(s, "  {} [label=\"{}\"];", e.index, escape(&label));
    }
    for (p, c) in parsed.tree.arcs() {
        let _ = writeln!(
            s,
            "  {} -> {} [label=\"{}\"];",
            p,
            c,
            escape(parsed.tree.label(c).unwrap_or(""))
        );
    }
    s.push_str("}\n");
    s
}
