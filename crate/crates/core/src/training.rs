//! Teacher-forced loss, mini-batch SGD and model selection.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dialogue, Vocab};
use crate::encoders::{structured_step, ForwardCtx};
use crate::error::ModelError;
use crate::eval::{gold_relations, EvalCounts, EvalReport, GoldMode};
use crate::model::{Mode, Model};
use crate::predictor::{
    build_input, encode_dialogue, link_logits, parse, random_structure, relation_logits, structure_seed, Decoder,
    DialogueInput,
};
use crate::tensor::{sgd_step, ParamGrads, Tape, TensorError, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Dialogues per parameter update.
    pub batch_size: usize,
    /// Learning rate of epoch 0.
    pub lr: f64,
    /// Multiplicative learning-rate decay per epoch.
    pub lr_decay: f64,
    /// Dropout on every recurrent cell input.
    pub dropout: f64,
    pub seed: u64,
    /// Rescales each update to at most this global gradient norm.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 4,
            lr: 0.1,
            lr_decay: 0.98,
            dropout: 0.5,
            seed: 0,
            clip_norm: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        if self.batch_size == 0 {
            return err("batch size must be positive".into());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return err(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay.is_finite()) {
            return err(format!("learning-rate decay must be positive, got {}", self.lr_decay));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return err(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return err(format!("clipping norm must be positive, got {}", c));
            }
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr * self.lr_decay.powi(epoch as i32)
    }
}

/// Default schedule: `0.1 * 0.98^epoch`.
pub fn lr_schedule(epoch: usize) -> f64 {
    TrainConfig::default().lr_at(epoch)
}

/// Gold `(parent, relation id)` for EDUs `1..=n`.
pub fn gold_targets(d: &Dialogue, vocab: &Vocab) -> Result<Vec<(usize, usize)>, ModelError> {
    d.gold_parents()
        .into_iter()
        .map(|g| {
            vocab.relation_id(&g.rtype).map(|r| (g.parent, r)).ok_or_else(|| {
                ModelError::Config(format!(
                    "dialogue '{}': relation type '{}' is not in the model vocabulary",
                    d.id, g.rtype
                ))
            })
        })
        .collect()
}

/// Loss terms of one dialogue, recorded on the tape.
#[derive(Clone, Copy, Debug)]
pub struct LossParts {
    pub link: Var,
    pub rel: Var,
    pub all: Var,
}

/// Records the link, relation and joint negative log-likelihood of one
/// dialogue. Structured representations follow the gold structure, or
/// `structure` when given.
pub fn dialogue_loss(
    tape: &mut Tape<'_>,
    model: &Model,
    input: &DialogueInput,
    gold: &[(usize, usize)],
    structure: Option<&[(usize, usize)]>,
    ctx: &mut ForwardCtx,
) -> Result<LossParts, ModelError> {
    let cfg = &model.config;
    let n = input.len();
    if gold.len() != n || n == 0 {
        return Err(ModelError::Config(format!(
            "dialogue '{}': {} gold parents for {} EDUs",
            input.id,
            gold.len(),
            n
        )));
    }
    let stacks = model.stacks();
    let mut reprs = stacks
        .iter()
        .map(|s| encode_dialogue(tape, s, cfg.repr_dim, input, ctx))
        .collect::<Result<Vec<_>, _>>()?;
    let rel_idx = if cfg.shared { 0 } else { 1 };

    let mut link_terms = Vec::with_capacity(n);
    let mut rel_terms = Vec::with_capacity(n);
    for i in 1..=n {
        let (parent, rel) = gold[i - 1];
        let spk = input.speakers[i];
        let inputs = (0..i)
            .map(|j| build_input(tape, &reprs[0], i, j, spk, cfg.mode))
            .collect::<Result<Vec<_>, _>>()?;
        let logits = link_logits(tape, &model.link_head, &inputs)?;
        link_terms.push(tape.nll(logits, parent)?);

        let h = build_input(tape, &reprs[rel_idx], i, parent, spk, cfg.mode)?;
        let rl = relation_logits(tape, &model.rel_head, h)?;
        rel_terms.push(tape.nll(rl, rel)?);

        if cfg.mode.uses_structure() {
            let (sp, sr) = structure.map_or((parent, rel), |s| s[i - 1]);
            for (stack, r) in stacks.iter().zip(reprs.iter_mut()) {
                let local = r.local[i];
                structured_step(tape, stack, cfg.mode, &mut r.structured, i, sp, sr, local, spk, ctx)?;
            }
        }
    }
    let link = tape.add_n(&link_terms)?;
    let rel = tape.add_n(&rel_terms)?;
    let all = tape.add(link, rel)?;
    Ok(LossParts { link, rel, all })
}

/// Loss values of one dialogue.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossValues {
    pub link: f64,
    pub rel: f64,
    pub all: f64,
}

/// Loss and parameter gradients for one dialogue.
pub fn loss_and_grads(
    model: &Model,
    dialogue: &Dialogue,
    structure: Option<&[(usize, usize)]>,
    ctx: &mut ForwardCtx,
) -> Result<(LossValues, ParamGrads), ModelError> {
    let input = DialogueInput::new(dialogue, &model.vocab);
    let gold = gold_targets(dialogue, &model.vocab)?;
    let mut tape = Tape::with_params(&model.params);
    let parts = dialogue_loss(&mut tape, model, &input, &gold, structure, ctx)?;
    let values = LossValues {
        link: tape.scalar(parts.link),
        rel: tape.scalar(parts.rel),
        all: tape.scalar(parts.all),
    };
    let grads = tape.backward(parts.all)?.param_grads();
    Ok((values, grads))
}

/// Evaluation-mode loss of one dialogue without gradients.
pub fn compute_loss(model: &Model, dialogue: &Dialogue) -> Result<LossValues, ModelError> {
    let input = DialogueInput::new(dialogue, &model.vocab);
    let gold = gold_targets(dialogue, &model.vocab)?;
    let mut tape = Tape::with_params(&model.params);
    let structure = random_for(model, dialogue, 0, 0);
    let parts = dialogue_loss(
        &mut tape,
        model,
        &input,
        &gold,
        structure.as_deref(),
        &mut ForwardCtx::eval(),
    )?;
    Ok(LossValues {
        link: tape.scalar(parts.link),
        rel: tape.scalar(parts.rel),
        all: tape.scalar(parts.all),
    })
}

fn random_for(model: &Model, d: &Dialogue, seed: u64, epoch: u64) -> Option<Vec<(usize, usize)>> {
    (model.config.mode == Mode::Random).then(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(structure_seed(seed, epoch, &d.id));
        random_structure(d.len(), model.vocab.num_relations(), &mut rng)
    })
}

/// Parses every dialogue and pools the scores.
pub fn evaluate(
    model: &Model,
    dialogues: &[Dialogue],
    decoder: Decoder,
    gold_mode: GoldMode,
    seed: u64,
) -> Result<EvalReport, ModelError> {
    let mut counts = EvalCounts::default();
    for d in dialogues {
        let out = parse(model, d, decoder, seed)?;
        counts.add(&out.tree.relations(), &gold_relations(d, gold_mode));
    }
    Ok(counts.report())
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    /// Summed joint loss over the epoch's training dialogues.
    pub train_loss: f64,
    pub valid_link_f1: f64,
    pub valid_link_rel_f1: f64,
}

impl EpochMetrics {
    pub const HEADER: &'static str = "epoch\tlr\ttrain_loss\tvalid_link_f1\tvalid_link_rel_f1";
}

impl fmt::Display for EpochMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
            self.epoch, self.lr, self.train_loss, self.valid_link_f1, self.valid_link_rel_f1
        )
    }
}

pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation Link&Rel F1.
    pub best: Model,
    pub best_epoch: usize,
    pub metrics: Vec<EpochMetrics>,
}

/// Trains `model` in place. After every epoch the model is scored on
/// `valid` (on `train` when `valid` is empty) and `on_epoch` is called.
pub fn train(
    model: &mut Model,
    train_set: &[Dialogue],
    valid: &[Dialogue],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochMetrics),
) -> Result<TrainOutcome, ModelError> {
    cfg.validate()?;
    model.validate()?;
    let train_set: Vec<&Dialogue> = train_set.iter().filter(|d| !d.is_empty()).collect();
    if train_set.is_empty() {
        return Err(ModelError::Config("no training dialogues".into()));
    }
    for d in &train_set {
        gold_targets(d, &model.vocab)?;
    }
    let valid: Vec<Dialogue> = if valid.is_empty() {
        log::warn!("no validation dialogues; selecting on the training set");
        train_set.iter().map(|d| (*d).clone()).collect()
    } else {
        valid.to_vec()
    };

    let mut order_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut ctx = ForwardCtx::train(cfg.dropout, ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_d409));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(f64, usize, Model)> = None;
    let mut metrics = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut acc = ParamGrads::new();
            for &k in batch {
                let d = train_set[k];
                let structure = random_for(model, d, cfg.seed, epoch as u64);
                let non_finite = || {
                    log::error!("non-finite loss at epoch {} on dialogue '{}'", epoch, d.id);
                    ModelError::NonFinite {
                        epoch,
                        dialogue: d.id.clone(),
                    }
                };
                let (loss, grads) = match loss_and_grads(model, d, structure.as_deref(), &mut ctx) {
                    Err(ModelError::Tensor(TensorError::Domain { .. })) => return Err(non_finite()),
                    r => r?,
                };
                if !loss.all.is_finite() || !grads.all_finite() {
                    return Err(non_finite());
                }
                total += loss.all;
                acc.merge(&grads);
            }
            acc.scale(1.0 / batch.len() as f64);
            if let Some(c) = cfg.clip_norm {
                let norm = acc.norm();
                if norm > c {
                    acc.scale(c / norm);
                }
            }
            sgd_step(&mut model.params, &acc, lr)?;
        }

        let report = evaluate(model, &valid, Decoder::Sequential, GoldMode::Tree, cfg.seed)?;
        let m = EpochMetrics {
            epoch,
            lr,
            train_loss: total,
            valid_link_f1: report.link.f1,
            valid_link_rel_f1: report.link_rel.f1,
        };
        log::info!("{}", m);
        on_epoch(&m);
        metrics.push(m);
        if best.as_ref().is_none_or(|(f, _, _)| m.valid_link_rel_f1 > *f) {
            best = Some((m.valid_link_rel_f1, epoch, model.clone()));
        }
    }

    let (best_epoch, best) = match best {
        Some((_, e, m)) => (e, m),
        None => (0, model.clone()),
    };
    Ok(TrainOutcome {
        best,
        best_epoch,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab, preprocess_all, synthetic};
    use crate::model::ModelConfig;

    fn small(mode: Mode) -> ModelConfig {
        ModelConfig {
            word_dim: 6,
            repr_dim: 8,
            rel_dim: 4,
            head_dim: 8,
            mode,
            ..Default::default()
        }
    }

    fn corpus(n: usize) -> Vec<Dialogue> {
        preprocess_all(&synthetic::generate(n, 11)).unwrap()
    }

    #[test]
    fn schedule_values() {
        assert_eq!(lr_schedule(0), 0.1);
        assert!((lr_schedule(1) - 0.098).abs() < 1e-15);
        assert!((lr_schedule(5) - 0.090392).abs() < 1e-6);
        assert!((lr_schedule(35) - 0.04930).abs() < 1e-5);
        assert!((0..500).all(|e| lr_schedule(e) > 0.0));
    }

    #[test]
    fn single_edu_has_zero_link_loss() {
        let mut ds = corpus(1);
        let vocab = build_vocab(&ds, 1);
        let d = &mut ds[0];
        d.edus.truncate(2);
        d.relations.retain(|r| r.target == 1);
        let m = Model::new(small(Mode::Full), vocab, 1).unwrap();
        let l = compute_loss(&m, &ds[0]).unwrap();
        assert_eq!(l.link, 0.0);
        assert!(l.rel > 0.0);
        assert!((l.all - l.rel).abs() < 1e-12);
    }

    #[test]
    fn loss_matches_parse_probabilities() {
        // with gold equal to the model's own choices, teacher forcing and
        // free-running parsing see identical structures
        let ds = corpus(3);
        let vocab = build_vocab(&ds, 1);
        let m = Model::new(small(Mode::Full), vocab, 2).unwrap();
        let out = crate::predictor::parse_dialogue(&m, &ds[0], 0).unwrap();
        let mut d = ds[0].clone();
        d.relations = out.tree.relations();
        let l = compute_loss(&m, &d).unwrap();
        let link: f64 = out.link_probs.iter().map(|p| -p.ln()).sum();
        let rel: f64 = out.rel_probs.iter().map(|p| -p.ln()).sum();
        assert!((l.link - link).abs() < 1e-9, "{} vs {}", l.link, link);
        assert!((l.rel - rel).abs() < 1e-9);
    }

    #[test]
    fn unknown_relation_is_reported() {
        let ds = corpus(2);
        let words = vec!["<pad>".into(), "<unk>".into()];
        let m = Model::new(small(Mode::Full), Vocab::new(words, vec!["ROOT".into()]), 1).unwrap();
        assert!(matches!(compute_loss(&m, &ds[0]), Err(ModelError::Config(_))));
    }

    #[test]
    fn bad_config_rejected() {
        for cfg in [
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
            TrainConfig {
                lr: 0.0,
                ..Default::default()
            },
            TrainConfig {
                dropout: 1.0,
                ..Default::default()
            },
        ] {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn training_is_deterministic_and_logs_every_epoch() {
        let ds = corpus(6);
        let vocab = build_vocab(&ds, 1);
        let cfg = TrainConfig {
            epochs: 3,
            seed: 4,
            ..Default::default()
        };
        let run = |mode| {
            let mut m = Model::new(small(mode), vocab.clone(), 9).unwrap();
            let mut lines = Vec::new();
            let out = train(&mut m, &ds[..5], &ds[5..], &cfg, &mut |e| lines.push(e.to_string())).unwrap();
            assert_eq!(out.metrics.len(), 3);
            (lines, out.best.params)
        };
        for mode in [Mode::Full, Mode::Random] {
            let (a, pa) = run(mode);
            let (b, pb) = run(mode);
            assert_eq!(a, b);
            assert_eq!(pa, pb);
            assert_eq!(a[0].split('\t').count(), 5);
        }
    }

    #[test]
    fn non_finite_loss_aborts_with_dialogue_id() {
        let ds = corpus(2);
        let vocab = build_vocab(&ds, 1);
        let mut m = Model::new(small(Mode::Full), vocab, 1).unwrap();
        let id = m.link_head.b_out;
        m.params.get_mut(id).data_mut()[0] = f64::NAN;
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 1,
            ..Default::default()
        };
        match train(&mut m, &ds, &[], &cfg, &mut |_| {}) {
            Err(ModelError::NonFinite { epoch: 0, dialogue }) => {
                assert!(ds.iter().any(|d| d.id == dialogue))
            }
            other => panic!("expected non-finite error, got {:?}", other.err()),
        }
    }
}
