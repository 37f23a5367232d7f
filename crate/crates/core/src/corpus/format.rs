//! Canonical JSON corpus format.
//!
//! ```json
//! [{"id": "d1",
//!   "edus": [{"speaker": "A", "text": "anyone has wood?"}],
//!   "relations": [{"x": "1", "y": "c1", "type": "Continuation"}],
//!   "cdus": [{"id": "c1", "members": ["2", "3"]}]}]
//! ```
//!
//! EDU ids are 1-based positions written as strings; CDU ids are arbitrary.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Cdu, Dialogue, RawDialogue, RawEdu, RawRelation, ROOT_RELATION};
use crate::error::CorpusError;

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum UnitId {
    Str(String),
    Num(u64),
}

impl UnitId {
    fn into_string(self) -> String {
        match self {
            UnitId::Str(s) => s,
            UnitId::Num(n) => n.to_string(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileEdu {
    speaker: String,
    text: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileRelation {
    x: UnitId,
    y: UnitId,
    #[serde(rename = "type")]
    rtype: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileCdu {
    id: UnitId,
    members: Vec<UnitId>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileDialogue {
    id: String,
    edus: Vec<FileEdu>,
    #[serde(default)]
    relations: Vec<FileRelation>,
    #[serde(default)]
    cdus: Vec<FileCdu>,
}

/// A serializable corpus, as written by [`write_corpus`].
#[derive(Serialize)]
#[serde(transparent)]
pub struct CorpusFile(Vec<FileDialogue>);

/// Parses a corpus and validates referential integrity of every dialogue.
pub fn parse_corpus(bytes: &[u8]) -> Result<Vec<RawDialogue>, CorpusError> {
    let file: Vec<FileDialogue> = serde_json::from_slice(bytes).map_err(|e| CorpusError::Parse {
        line: e.line(),
        column: e.column(),
        msg: e.to_string(),
    })?;
    let mut out = Vec::with_capacity(file.len());
    for d in file {
        let raw = RawDialogue {
            id: d.id,
            edus: d
                .edus
                .into_iter()
                .map(|e| RawEdu {
                    speaker: e.speaker,
                    text: e.text,
                })
                .collect(),
            relations: d
                .relations
                .into_iter()
                .map(|r| RawRelation {
                    x: r.x.into_string(),
                    y: r.y.into_string(),
                    rtype: r.rtype,
                })
                .collect(),
            cdus: d
                .cdus
                .into_iter()
                .map(|c| Cdu {
                    id: c.id.into_string(),
                    members: c.members.into_iter().map(UnitId::into_string).collect(),
                })
                .collect(),
        };
        raw.validate()?;
        out.push(raw);
    }
    Ok(out)
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<RawDialogue>, CorpusError> {
    parse_corpus(&fs::read(path)?)
}

/// Converts preprocessed dialogues back into the canonical format. `ROOT`
/// links are omitted; they are re-derived when the file is read again.
pub fn to_canonical(dialogues: &[Dialogue]) -> CorpusFile {
    CorpusFile(
        dialogues
            .iter()
            .map(|d| FileDialogue {
                id: d.id.clone(),
                edus: d
                    .edus
                    .iter()
                    .skip(1)
                    .map(|e| FileEdu {
                        speaker: e.speaker.clone(),
                        text: e.text.clone(),
                    })
                    .collect(),
                relations: d
                    .relations
                    .iter()
                    .filter(|r| r.rtype != ROOT_RELATION)
                    .map(|r| FileRelation {
                        x: UnitId::Str(r.source.to_string()),
                        y: UnitId::Str(r.target.to_string()),
                        rtype: r.rtype.clone(),
                    })
                    .collect(),
                cdus: Vec::new(),
            })
            .collect(),
    )
}

pub fn write_corpus<W: Write>(w: W, dialogues: &[Dialogue]) -> Result<(), CorpusError> {
    serde_json::to_writer_pretty(w, &to_canonical(dialogues)).map_err(|e| CorpusError::Parse {
        line: 0,
        column: 0,
        msg: e.to_string(),
    })
}
