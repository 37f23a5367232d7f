//! Checkpoint files: a magic header line followed by a JSON document
//! holding free-form metadata and every parameter as name, shape and
//! row-major values.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{ParamStore, Tensor};
use crate::error::CheckpointError;

pub const CHECKPOINT_MAGIC: &str = "DLGPARSE-CKPT-1";

#[derive(Serialize, Deserialize)]
struct StoredParam {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Body {
    meta: Value,
    params: Vec<StoredParam>,
}

pub fn write_checkpoint<W: Write>(mut w: W, meta: &Value, params: &ParamStore) -> Result<(), CheckpointError> {
    let body = Body {
        meta: meta.clone(),
        params: params
            .iter()
            .map(|(_, name, t)| StoredParam {
                name: name.to_owned(),
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect(),
    };
    writeln!(w, "{}", CHECKPOINT_MAGIC)?;
    serde_json::to_writer(&mut w, &body).map_err(|e| CheckpointError::Format(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Reads metadata and the stored tensors, in file order.
pub fn read_checkpoint<R: Read>(r: R) -> Result<(Value, Vec<(String, Tensor)>), CheckpointError> {
    let mut reader = BufReader::new(r);
    let mut magic = String::new();
    reader.read_line(&mut magic)?;
    if magic.trim_end() != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic(magic.trim_end().chars().take(40).collect()));
    }
    let body: Body = serde_json::from_reader(reader).map_err(|e| CheckpointError::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(body.params.len());
    for p in body.params {
        let t = Tensor::new(p.shape, p.data).map_err(|e| CheckpointError::Param {
            name: p.name.clone(),
            msg: e.to_string(),
        })?;
        out.push((p.name, t));
    }
    Ok((body.meta, out))
}
