//! Deep sequential discourse dependency parsing for multi-party dialogues.

pub mod corpus;
pub mod decode;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod model;
pub mod output;
pub mod predictor;
pub mod tensor;
pub mod training;
pub mod tree;
