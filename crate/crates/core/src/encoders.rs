//! Local, non-structured global and structured discourse representations.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::ModelError;
use crate::model::{EncoderStack, Mode};
use crate::tensor::{Tape, Tensor, Var};

/// Training switches for a forward pass.
pub struct ForwardCtx {
    pub dropout: f64,
    rng: Option<ChaCha8Rng>,
}

impl ForwardCtx {
    /// No dropout.
    pub fn eval() -> Self {
        ForwardCtx {
            dropout: 0.0,
            rng: None,
        }
    }

    /// Inverted dropout with probability `p`, masks drawn from `rng`.
    pub fn train(p: f64, rng: ChaCha8Rng) -> Self {
        ForwardCtx {
            dropout: p,
            rng: Some(rng),
        }
    }

    /// Applies dropout to a recurrent-cell input; identity at eval time.
    pub fn dropout(&mut self, tape: &mut Tape<'_>, x: Var) -> Result<Var, ModelError> {
        let p = self.dropout;
        let rng = match (&mut self.rng, p > 0.0) {
            (Some(rng), true) => rng,
            _ => return Ok(x),
        };
        let (r, c) = tape.shape(x);
        let keep = 1.0 / (1.0 - p);
        let mask = (0..r * c)
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        Ok(tape.dropout_mask(x, mask)?)
    }
}

/// Per-EDU, per-speaker structured representations built so far.
pub struct StructuredState {
    num_speakers: usize,
    reps: Vec<Option<Vec<Var>>>,
}

impl StructuredState {
    /// State for `n` EDUs with the root's representations set to zero.
    pub fn new(tape: &mut Tape<'_>, n: usize, num_speakers: usize, dim: usize) -> Self {
        let zero = tape.constant(&Tensor::zeros(&[1, dim]));
        let mut reps = vec![None; n + 1];
        reps[0] = Some(vec![zero; num_speakers]);
        StructuredState { num_speakers, reps }
    }

    pub fn num_speakers(&self) -> usize {
        self.num_speakers
    }

    /// Representation of EDU `i` highlighting speaker `a`.
    pub fn get(&self, i: usize, a: usize) -> Result<Var, ModelError> {
        self.reps
            .get(i)
            .and_then(|r| r.as_ref())
            .map(|r| r[a])
            .ok_or(ModelError::Sequencing(i))
    }

    pub fn is_built(&self, i: usize) -> bool {
        self.reps.get(i).is_some_and(Option::is_some)
    }

    /// All speakers' representations of EDU `i`.
    pub fn all(&self, i: usize) -> Result<&[Var], ModelError> {
        self.reps
            .get(i)
            .and_then(|r| r.as_deref())
            .ok_or(ModelError::Sequencing(i))
    }
}

/// Local representation of one EDU: final forward and backward bi-GRU
/// states, concatenated. The token-less root uses a learned vector.
pub fn encode_local(
    tape: &mut Tape<'_>,
    stack: &EncoderStack,
    word_ids: &[usize],
    ctx: &mut ForwardCtx,
) -> Result<Var, ModelError> {
    if word_ids.is_empty() {
        return Ok(tape.param(stack.root_local));
    }
    let table = tape.param(stack.word_emb);
    let mut inputs = Vec::with_capacity(word_ids.len());
    for &id in word_ids {
        let x = tape.rows(table, &[id])?;
        inputs.push(ctx.dropout(tape, x)?);
    }
    let zero_f = tape.constant(&Tensor::zeros(&[1, stack.fwd.dims.hidden]));
    let zero_b = tape.constant(&Tensor::zeros(&[1, stack.bwd.dims.hidden]));
    let mut hf = zero_f;
    for &x in &inputs {
        hf = stack.fwd.step(tape, x, hf)?;
    }
    let mut hb = zero_b;
    for &x in inputs.iter().rev() {
        hb = stack.bwd.step(tape, x, hb)?;
    }
    Ok(tape.concat(&[hf, hb])?)
}

/// Hidden states of a unidirectional GRU over the local representations,
/// starting at the root.
pub fn encode_global(
    tape: &mut Tape<'_>,
    stack: &EncoderStack,
    locals: &[Var],
    ctx: &mut ForwardCtx,
) -> Result<Vec<Var>, ModelError> {
    let mut h = tape.constant(&Tensor::zeros(&[1, stack.global.dims.hidden]));
    let mut out = Vec::with_capacity(locals.len());
    for &x in locals {
        let x = ctx.dropout(tape, x)?;
        h = stack.global.step(tape, x, h)?;
        out.push(h);
    }
    Ok(out)
}

/// Builds the structured representations of EDU `i` for every speaker from
/// those of its parent. The highlighting cell is used for the speaker of
/// `u_i`, the general cell for everyone else; with `Mode::NoShm` the
/// highlighting cell serves all speakers.
#[allow(clippy::too_many_arguments)]
pub fn structured_step(
    tape: &mut Tape<'_>,
    stack: &EncoderStack,
    mode: Mode,
    state: &mut StructuredState,
    i: usize,
    parent: usize,
    relation: usize,
    local: Var,
    speaker: usize,
    ctx: &mut ForwardCtx,
) -> Result<(), ModelError> {
    if i == 0 || parent >= i {
        return Err(ModelError::Ordering { child: i, parent });
    }
    if i >= state.reps.len() {
        return Err(ModelError::Sequencing(i));
    }
    let parent_reps = state.all(parent)?.to_vec();
    let table = tape.param(stack.rel_emb);
    let rel = tape.rows(table, &[relation])?;
    let x = tape.concat(&[local, rel])?;
    let x = ctx.dropout(tape, x)?;
    let mut reps = Vec::with_capacity(parent_reps.len());
    for (a, &prev) in parent_reps.iter().enumerate() {
        let cell = if mode == Mode::NoShm || a == speaker {
            &stack.struct_hl
        } else {
            &stack.struct_gen
        };
        reps.push(cell.step(tape, x, prev)?);
    }
    state.reps[i] = Some(reps);
    Ok(())
}
