use std::io;

use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },

    #[error("dialogue '{dialogue}': undeclared discourse unit id '{id}'")]
    Integrity { dialogue: String, id: String },

    #[error("dialogue '{dialogue}': {msg}")]
    Invalid { dialogue: String, msg: String },
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("not a checkpoint file (header '{0}')")]
    BadMagic(String),

    #[error("malformed checkpoint: {0}")]
    Format(String),

    #[error("parameter '{name}': {msg}")]
    Param { name: String, msg: String },
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("candidate parent {parent} does not precede EDU {child}")]
    Ordering { child: usize, parent: usize },

    #[error("structured representation of EDU {0} requested before it was built")]
    Sequencing(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss at epoch {epoch} in dialogue '{dialogue}'")]
    NonFinite { epoch: usize, dialogue: String },
}

#[derive(Debug, Error, PartialEq)]
pub enum DecodeError {
    #[error("no arborescence rooted at 0 reaches nodes {unreachable:?}")]
    Infeasible { unreachable: Vec<usize> },

    #[error("brute force enumeration is limited to {max} nodes, got {n}")]
    TooLarge { n: usize, max: usize },

    #[error("score matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("dialogue mismatch: prediction '{predicted}' vs gold '{gold}'")]
    Alignment { predicted: String, gold: String },

    #[error("dialogue count mismatch: {predicted} predicted vs {gold} gold")]
    Count { predicted: usize, gold: usize },

    #[error("dialogue '{dialogue}': predicted link {source_id} -> {target} is outside the {edus} EDUs")]
    OutOfRange {
        dialogue: String,
        source_id: usize,
        target: usize,
        edus: usize,
    },
}
