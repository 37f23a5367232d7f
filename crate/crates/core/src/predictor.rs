//! Joint input vectors, link and relation heads, and the sequential
//! parse loop that alternates prediction with structure building.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, Vocab};
use crate::decode::{greedy_decode, mst_decode, EdgeSet, ScoreMatrix};
use crate::encoders::{encode_global, encode_local, structured_step, ForwardCtx, StructuredState};
use crate::error::ModelError;
use crate::model::{EncoderStack, Head, Mode, Model};
use crate::tensor::{argmax, softmax_slice, Tape, Var};
use crate::tree::DependencyTree;

/// Vocabulary ids and speaker indices of one dialogue.
#[derive(Clone, Debug, PartialEq)]
pub struct DialogueInput {
    pub id: String,
    /// Word ids per EDU; empty for the root.
    pub words: Vec<Vec<usize>>,
    /// Speaker index per EDU (into the dialogue's speaker list); 0 for the root.
    pub speakers: Vec<usize>,
    pub num_speakers: usize,
}

impl DialogueInput {
    pub fn new(d: &Dialogue, vocab: &Vocab) -> Self {
        let names = d.speakers();
        let words = d
            .edus
            .iter()
            .map(|e| {
                if e.is_root() {
                    Vec::new()
                } else {
                    vocab.encode(&e.tokens)
                }
            })
            .collect();
        let speakers = d
            .edus
            .iter()
            .map(|e| names.iter().position(|s| *s == e.speaker).unwrap_or(0))
            .collect();
        DialogueInput {
            id: d.id.clone(),
            words,
            speakers,
            num_speakers: names.len().max(1),
        }
    }

    /// Number of EDUs, root excluded.
    pub fn len(&self) -> usize {
        self.words.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Representations produced by one encoder stack for one dialogue.
pub struct Reprs {
    pub local: Vec<Var>,
    pub global: Vec<Var>,
    pub structured: StructuredState,
}

/// Runs the local and global encoders; structured representations start
/// with only the root filled in.
pub fn encode_dialogue(
    tape: &mut Tape<'_>,
    stack: &EncoderStack,
    repr_dim: usize,
    input: &DialogueInput,
    ctx: &mut ForwardCtx,
) -> Result<Reprs, ModelError> {
    let local = input
        .words
        .iter()
        .map(|ids| encode_local(tape, stack, ids, ctx))
        .collect::<Result<Vec<_>, _>>()?;
    let global = encode_global(tape, stack, &local, ctx)?;
    let structured = StructuredState::new(tape, input.len(), input.num_speakers, repr_dim);
    Ok(Reprs {
        local,
        global,
        structured,
    })
}

/// Joint input for the pair (`u_i`, candidate parent `u_j`).
///
/// Structured modes: `h_i ++ g_i ++ g_j ++ s_{j, speaker(i)}`.
/// Baseline mode: `h_i ++ g_i ++ h_j ++ g_j`.
pub fn build_input(
    tape: &mut Tape<'_>,
    reprs: &Reprs,
    i: usize,
    j: usize,
    speaker_i: usize,
    mode: Mode,
) -> Result<Var, ModelError> {
    if j >= i {
        return Err(ModelError::Ordering { child: i, parent: j });
    }
    pair_input(tape, reprs, i, j, speaker_i, mode)
}

fn pair_input(
    tape: &mut Tape<'_>,
    reprs: &Reprs,
    i: usize,
    j: usize,
    speaker_i: usize,
    mode: Mode,
) -> Result<Var, ModelError> {
    let parts = if mode.uses_structure() {
        [
            reprs.local[i],
            reprs.global[i],
            reprs.global[j],
            reprs.structured.get(j, speaker_i)?,
        ]
    } else {
        [reprs.local[i], reprs.global[i], reprs.local[j], reprs.global[j]]
    };
    Ok(tape.concat(&parts)?)
}

fn head_forward(tape: &mut Tape<'_>, head: &Head, inputs: &[Var]) -> Result<Var, ModelError> {
    let h = tape.stack_rows(inputs)?;
    let w = tape.param(head.w);
    let b = tape.param(head.b);
    let u = tape.param(head.u);
    let b_out = tape.param(head.b_out);
    let hidden = tape.matmul(h, w)?;
    let hidden = tape.add_row(hidden, b)?;
    let hidden = tape.tanh(hidden)?;
    let out = tape.matmul(hidden, u)?;
    Ok(tape.add_row(out, b_out)?)
}

/// Link logits for every candidate input, as a `1 x m` row.
pub fn link_logits(tape: &mut Tape<'_>, head: &Head, inputs: &[Var]) -> Result<Var, ModelError> {
    let col = head_forward(tape, head, inputs)?;
    Ok(tape.reshape(col, 1, inputs.len())?)
}

/// Relation-type logits (`1 x (K + 1)`) for one input.
pub fn relation_logits(tape: &mut Tape<'_>, head: &Head, input: Var) -> Result<Var, ModelError> {
    head_forward(tape, head, &[input])
}

/// Probability distribution over candidate parents and the chosen one
/// (lowest index on ties).
pub fn predict_link(logits: &[f64]) -> Result<(Vec<f64>, usize), ModelError> {
    let p = softmax_slice(logits)?;
    let best = argmax(&p);
    Ok((p, best))
}

/// Distribution over relation types and the chosen one (lowest id on ties).
pub fn classify_relation(logits: &[f64]) -> Result<(Vec<f64>, usize), ModelError> {
    predict_link(logits)
}

/// Uniformly random parent (earlier EDU) and relation type per EDU.
pub fn random_structure(n: usize, num_relations: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    (1..=n)
        .map(|i| (rng.gen_range(0..i), rng.gen_range(0..num_relations)))
        .collect()
}

/// Seed for the random structure of one dialogue in one epoch.
pub fn structure_seed(seed: u64, epoch: u64, dialogue_id: &str) -> u64 {
    // FNV-1a over the id, mixed with seed and epoch
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in dialogue_id.bytes().chain(seed.to_le_bytes()).chain(epoch.to_le_bytes()) {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Incremental state of a sequential parse.
pub struct ParseState {
    /// Next EDU to attach.
    pub i: usize,
    /// `(parent, relation id)` of EDUs `1..i`.
    pub predicted: Vec<(usize, usize)>,
    /// One representation set per distinct encoder stack.
    pub reprs: Vec<Reprs>,
}

impl ParseState {
    fn record(&mut self, parent: usize, relation: usize) {
        debug_assert!(parent < self.i);
        self.predicted.push((parent, relation));
        self.i += 1;
    }
}

/// One parsed dialogue with the probabilities of the chosen decisions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParsedDialogue {
    pub id: String,
    pub tree: DependencyTree,
    pub link_probs: Vec<f64>,
    pub rel_probs: Vec<f64>,
}

/// How trees are decoded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decoder {
    /// Alternating link prediction and structure building.
    Sequential,
    /// Independent best parent per EDU from local scores.
    Greedy,
    /// Maximum spanning arborescence over local scores.
    Mst(EdgeSet),
}

/// Parses a dialogue sequentially. `seed` only matters for `Mode::Random`.
pub fn parse_dialogue(model: &Model, dialogue: &Dialogue, seed: u64) -> Result<ParsedDialogue, ModelError> {
    parse_dialogue_with(model, dialogue, seed, &mut |_, _| {})
}

/// [`parse_dialogue`] with a hook that may rewrite the link logits of
/// each step before the decision is taken.
pub fn parse_dialogue_with(
    model: &Model,
    dialogue: &Dialogue,
    seed: u64,
    hook: &mut dyn FnMut(usize, &mut [f64]),
) -> Result<ParsedDialogue, ModelError> {
    let cfg = &model.config;
    let input = DialogueInput::new(dialogue, &model.vocab);
    let n = input.len();
    let mut tape = Tape::with_params(&model.params);
    let mut ctx = ForwardCtx::eval();
    let stacks = model.stacks();
    let mut state = ParseState {
        i: 1,
        predicted: Vec::with_capacity(n),
        reprs: stacks
            .iter()
            .map(|s| encode_dialogue(&mut tape, s, cfg.repr_dim, &input, &mut ctx))
            .collect::<Result<_, _>>()?,
    };
    let rel_idx = if cfg.shared { 0 } else { 1 };
    let random = if cfg.mode == Mode::Random {
        let mut rng = ChaCha8Rng::seed_from_u64(structure_seed(seed, 0, &input.id));
        Some(random_structure(n, model.vocab.num_relations(), &mut rng))
    } else {
        None
    };

    let mut link_probs = Vec::with_capacity(n);
    let mut rel_probs = Vec::with_capacity(n);
    while state.i <= n {
        let i = state.i;
        let spk = input.speakers[i];
        let inputs = (0..i)
            .map(|j| build_input(&mut tape, &state.reprs[0], i, j, spk, cfg.mode))
            .collect::<Result<Vec<_>, _>>()?;
        let logits = link_logits(&mut tape, &model.link_head, &inputs)?;
        let mut scores = tape.value(logits).to_vec();
        hook(i, &mut scores);
        let (lp, parent) = predict_link(&scores)?;

        let h = build_input(&mut tape, &state.reprs[rel_idx], i, parent, spk, cfg.mode)?;
        let rl = relation_logits(&mut tape, &model.rel_head, h)?;
        let (rp, rel) = classify_relation(tape.value(rl))?;
        link_probs.push(lp[parent]);
        rel_probs.push(rp[rel]);

        if cfg.mode.uses_structure() {
            let (sp, sr) = random.as_ref().map_or((parent, rel), |r| r[i - 1]);
            for (stack, reprs) in stacks.iter().zip(state.reprs.iter_mut()) {
                let local = reprs.local[i];
                structured_step(
                    &mut tape,
                    stack,
                    cfg.mode,
                    &mut reprs.structured,
                    i,
                    sp,
                    sr,
                    local,
                    spk,
                    &mut ctx,
                )?;
            }
        }
        state.record(parent, rel);
    }

    let parents = state.predicted.iter().map(|&(p, _)| p).collect();
    let labels = state
        .predicted
        .iter()
        .map(|&(_, r)| model.vocab.relation(r).to_owned())
        .collect();
    Ok(ParsedDialogue {
        id: input.id,
        tree: DependencyTree::labeled(parents, labels),
        link_probs,
        rel_probs,
    })
}

/// Local log-probabilities of every link from the non-structured model.
/// Candidates of `u_i` are all earlier nodes (`Forward`) or every other
/// node (`AllPairs`); each column is normalized over its candidates.
pub fn score_matrix(model: &Model, dialogue: &Dialogue, edges: EdgeSet) -> Result<ScoreMatrix, ModelError> {
    require_baseline(model)?;
    let input = DialogueInput::new(dialogue, &model.vocab);
    let n = input.len();
    let mut tape = Tape::with_params(&model.params);
    let mut ctx = ForwardCtx::eval();
    let reprs = encode_dialogue(&mut tape, &model.link_stack, model.config.repr_dim, &input, &mut ctx)?;
    let mut s = ScoreMatrix::from_fn(n, |_, _| f64::NEG_INFINITY);
    for i in 1..=n {
        let cands: Vec<usize> = match edges {
            EdgeSet::Forward => (0..i).collect(),
            EdgeSet::AllPairs => (0..=n).filter(|&j| j != i).collect(),
        };
        let inputs = cands
            .iter()
            .map(|&j| pair_input(&mut tape, &reprs, i, j, 0, Mode::Ns))
            .collect::<Result<Vec<_>, _>>()?;
        let logits = link_logits(&mut tape, &model.link_head, &inputs)?;
        let p = softmax_slice(tape.value(logits))?;
        for (&j, pj) in cands.iter().zip(p) {
            s.set(j, i, pj.ln());
        }
    }
    Ok(s)
}

fn require_baseline(model: &Model) -> Result<(), ModelError> {
    if model.config.mode != Mode::Ns {
        return Err(ModelError::Config(format!(
            "greedy and MST decoding need local scores from a non-structured model, got mode '{}'",
            model.config.mode
        )));
    }
    Ok(())
}

/// Decodes with local scores, then types each chosen link.
pub fn parse_with_local_decoder(
    model: &Model,
    dialogue: &Dialogue,
    decoder: Decoder,
) -> Result<ParsedDialogue, ModelError> {
    let edges = match decoder {
        Decoder::Mst(e) => e,
        _ => EdgeSet::Forward,
    };
    let scores = score_matrix(model, dialogue, edges)?;
    let unlabeled = match decoder {
        Decoder::Greedy => greedy_decode(&scores),
        Decoder::Mst(e) => mst_decode(&scores, e).map_err(|e| ModelError::Config(e.to_string()))?,
        Decoder::Sequential => {
            return Err(ModelError::Config(
                "sequential decoding does not use local scores".into(),
            ))
        }
    };

    let input = DialogueInput::new(dialogue, &model.vocab);
    let mut tape = Tape::with_params(&model.params);
    let mut ctx = ForwardCtx::eval();
    let reprs = encode_dialogue(&mut tape, &model.rel_stack, model.config.repr_dim, &input, &mut ctx)?;
    let mut labels = Vec::with_capacity(input.len());
    let mut link_probs = Vec::with_capacity(input.len());
    let mut rel_probs = Vec::with_capacity(input.len());
    for (p, c) in unlabeled.arcs() {
        let h = pair_input(&mut tape, &reprs, c, p, 0, Mode::Ns)?;
        let rl = relation_logits(&mut tape, &model.rel_head, h)?;
        let (rp, rel) = classify_relation(tape.value(rl))?;
        labels.push(model.vocab.relation(rel).to_owned());
        link_probs.push(scores.get(p, c).exp());
        rel_probs.push(rp[rel]);
    }
    Ok(ParsedDialogue {
        id: input.id,
        tree: DependencyTree::labeled(unlabeled.parents().to_vec(), labels),
        link_probs,
        rel_probs,
    })
}

/// Dispatches on the decoder.
pub fn parse(model: &Model, dialogue: &Dialogue, decoder: Decoder, seed: u64) -> Result<ParsedDialogue, ModelError> {
    match decoder {
        Decoder::Sequential => parse_dialogue(model, dialogue, seed),
        other => parse_with_local_decoder(model, dialogue, other),
    }
}
