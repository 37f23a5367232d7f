//! Micro-averaged precision, recall and F1 for links and typed links.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, RelationInstance};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    fn from_counts(matches: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(matches, predicted);
        let recall = ratio(matches, gold);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Prf { precision, recall, f1 }
    }
}

/// Match counts pooled over any number of dialogues.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalCounts {
    pub gold: usize,
    pub predicted: usize,
    pub link_matches: usize,
    pub link_rel_matches: usize,
}

impl EvalCounts {
    /// Adds one dialogue. A predicted link matches when its endpoints occur
    /// in gold; a typed link also needs the same type.
    pub fn add(&mut self, predicted: &[RelationInstance], gold: &[RelationInstance]) {
        let gold_links: HashSet<(usize, usize)> = gold.iter().map(|r| (r.source, r.target)).collect();
        let gold_typed: HashSet<(usize, usize, &str)> =
            gold.iter().map(|r| (r.source, r.target, r.rtype.as_str())).collect();
        let pred_links: HashSet<(usize, usize)> = predicted.iter().map(|r| (r.source, r.target)).collect();
        let pred_typed: HashSet<(usize, usize, &str)> = predicted
            .iter()
            .map(|r| (r.source, r.target, r.rtype.as_str()))
            .collect();
        self.gold += gold.len();
        self.predicted += predicted.len();
        self.link_matches += pred_links.intersection(&gold_links).count();
        self.link_rel_matches += pred_typed.intersection(&gold_typed).count();
    }

    pub fn report(&self) -> EvalReport {
        EvalReport {
            link: Prf::from_counts(self.link_matches, self.predicted, self.gold),
            link_rel: Prf::from_counts(self.link_rel_matches, self.predicted, self.gold),
            counts: *self,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    pub link: Prf,
    pub link_rel: Prf,
    pub counts: EvalCounts,
}

/// Which gold relations predictions are scored against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GoldMode {
    /// One gold parent per EDU, as used for training.
    #[default]
    Tree,
    /// Every gold relation, including extra parents.
    Graph,
}

/// Gold relations of a preprocessed dialogue.
pub fn gold_relations(d: &Dialogue, mode: GoldMode) -> Vec<RelationInstance> {
    match mode {
        GoldMode::Tree => d
            .gold_parents()
            .into_iter()
            .enumerate()
            .map(|(k, g)| RelationInstance::new(g.parent, k + 1, g.rtype))
            .collect(),
        GoldMode::Graph => d.relations.clone(),
    }
}

/// Scores a single prediction set against gold.
pub fn micro_f1(predicted: &[RelationInstance], gold: &[RelationInstance]) -> EvalReport {
    let mut c = EvalCounts::default();
    c.add(predicted, gold);
    c.report()
}

impl EvalReport {
    /// Machine-readable `key=value` lines.
    pub fn key_values(&self) -> String {
        format!(
            "link_precision={:.6}\nlink_recall={:.6}\nlink_f1={:.6}\n\
             link_rel_precision={:.6}\nlink_rel_recall={:.6}\nlink_rel_f1={:.6}\n\
             gold={}\npredicted={}\nlink_matches={}\nlink_rel_matches={}",
            self.link.precision,
            self.link.recall,
            self.link.f1,
            self.link_rel.precision,
            self.link_rel.recall,
            self.link_rel.f1,
            self.counts.gold,
            self.counts.predicted,
            self.counts.link_matches,
            self.counts.link_rel_matches,
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>9} {:>9} {:>9}", "", "P", "R", "F1")?;
        for (name, m) in [("Link", self.link), ("Link&Rel", self.link_rel)] {
            writeln!(
                f,
                "{:<10} {:>9.1} {:>9.1} {:>9.1}",
                name,
                100.0 * m.precision,
                100.0 * m.recall,
                100.0 * m.f1
            )?;
        }
        write!(
            f,
            "gold relations: {}, predicted relations: {}",
            self.counts.gold, self.counts.predicted
        )
    }
}
