use std::fmt;

use super::{eliminate_cdus, RawDialogue};
use crate::error::CorpusError;

/// Corpus counts after CDU elimination. Relations exclude `ROOT` links.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorpusStats {
    pub dialogues: usize,
    pub edus: usize,
    pub relations: usize,
    pub cdus: usize,
    /// Relations whose source follows their target.
    pub backward_relations: usize,
    /// EDUs with more than one incoming relation.
    pub multi_parent_edus: usize,
    pub speakers_max: usize,
}

impl CorpusStats {
    pub fn multi_parent_ratio(&self) -> f64 {
        if self.edus == 0 {
            0.0
        } else {
            self.multi_parent_edus as f64 / self.edus as f64
        }
    }
}

pub fn corpus_stats(raws: &[RawDialogue]) -> Result<CorpusStats, CorpusError> {
    let mut s = CorpusStats {
        dialogues: raws.len(),
        ..Default::default()
    };
    for raw in raws {
        let d = eliminate_cdus(raw)?;
        let n = d.len();
        s.edus += n;
        s.cdus += raw.cdus.len();
        s.relations += d.relations.len();
        s.backward_relations += d.relations.iter().filter(|r| r.source > r.target).count();
        let mut incoming = vec![0usize; n + 1];
        for r in &d.relations {
            incoming[r.target] += 1;
        }
        s.multi_parent_edus += incoming.iter().filter(|&&c| c > 1).count();
        s.speakers_max = s.speakers_max.max(d.speakers().len());
    }
    Ok(s)
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dialogues\t{}", self.dialogues)?;
        writeln!(f, "edus\t{}", self.edus)?;
        writeln!(f, "relations\t{}", self.relations)?;
        writeln!(f, "cdus\t{}", self.cdus)?;
        writeln!(f, "backward_relations\t{}", self.backward_relations)?;
        writeln!(f, "multi_parent_edus\t{}", self.multi_parent_edus)?;
        writeln!(f, "multi_parent_ratio\t{:.4}", self.multi_parent_ratio())?;
        write!(f, "max_speakers\t{}", self.speakers_max)
    }
}
