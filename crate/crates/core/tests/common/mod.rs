#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dlgparse::corpus::{build_vocab, preprocess_all, Cdu, Dialogue, RawDialogue, RawEdu, RawRelation, Vocab};
use dlgparse::decode::ScoreMatrix;
use dlgparse::encoders::ForwardCtx;
use dlgparse::model::{Mode, Model, ModelConfig};
use dlgparse::predictor::{encode_dialogue, DialogueInput};
use dlgparse::tensor::{ParamStore, Tape, Tensor, Var};
use dlgparse::training::{dialogue_loss, gold_targets};

pub const FD_STEP: f64 = 1e-5;
/// Denominator floor for relative errors, so that gradients that are
/// zero on both sides do not divide by zero.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_tensor(rows: usize, cols: usize, scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::matrix(rows, cols, data).unwrap().with_grad()
}

/// Worst relative error between analytic gradients of `f` with respect to
/// each leaf and central differences.
pub fn check_leaves(inputs: &[Tensor], f: impl Fn(&mut Tape<'_>, &[Var]) -> Var) -> f64 {
    let eval = |vals: &[Tensor]| {
        let mut t = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|v| t.leaf(v)).collect();
        let loss = f(&mut t, &vars);
        t.scalar(loss)
    };
    let mut t = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| t.leaf(v)).collect();
    let loss = f(&mut t, &vars);
    let grads = t.backward(loss).unwrap();

    let mut worst: f64 = 0.0;
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads.grad(*v);
        for idx in 0..inputs[k].len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[idx] += FD_STEP;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[idx] -= FD_STEP;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic[idx], numeric));
        }
    }
    worst
}

/// Worst relative error over every entry of every parameter, plus the
/// name of the parameter where it occurred.
pub fn check_params(
    store: &ParamStore,
    loss: impl Fn(&ParamStore) -> f64,
    analytic: &dlgparse::tensor::ParamGrads,
) -> (f64, String) {
    let mut worst = (0.0, String::new());
    let mut work = store.clone();
    for (id, name, t) in store.iter() {
        let zeros = vec![0.0; t.len()];
        let a = analytic.get(id).unwrap_or(&zeros);
        for idx in 0..t.len() {
            let orig = t.data()[idx];
            work.get_mut(id).data_mut()[idx] = orig + FD_STEP;
            let lp = loss(&work);
            work.get_mut(id).data_mut()[idx] = orig - FD_STEP;
            let lm = loss(&work);
            work.get_mut(id).data_mut()[idx] = orig;
            let numeric = (lp - lm) / (2.0 * FD_STEP);
            let e = rel_err(a[idx], numeric);
            if e > worst.0 {
                worst = (
                    e,
                    format!("{}[{}]: analytic {:e}, numeric {:e}", name, idx, a[idx], numeric),
                );
            }
        }
    }
    worst
}

pub fn tiny_config(mode: Mode, shared: bool) -> ModelConfig {
    ModelConfig {
        word_dim: 4,
        repr_dim: 8,
        rel_dim: 4,
        head_dim: 8,
        mode,
        shared,
        init_bound: 0.5,
        embedding_init_bound: 0.5,
    }
}

pub fn raw(id: &str, edus: &[(&str, &str)], rels: &[(&str, &str, &str)], cdus: &[(&str, &[&str])]) -> RawDialogue {
    RawDialogue {
        id: id.into(),
        edus: edus
            .iter()
            .map(|&(s, t)| RawEdu {
                speaker: s.into(),
                text: t.into(),
            })
            .collect(),
        relations: rels
            .iter()
            .map(|&(x, y, t)| RawRelation {
                x: x.into(),
                y: y.into(),
                rtype: t.into(),
            })
            .collect(),
        cdus: cdus
            .iter()
            .map(|&(id, m)| Cdu {
                id: id.into(),
                members: m.iter().map(|s| s.to_string()).collect(),
            })
            .collect(),
    }
}

/// Two short dialogues with a vocabulary under 20 words.
pub fn toy_corpus() -> (Vec<Dialogue>, Vocab) {
    let raws = vec![
        raw(
            "toy-1",
            &[
                ("A", "who has wood"),
                ("B", "i do"),
                ("C", "me too"),
                ("A", "great thanks"),
            ],
            &[("1", "2", "QAP"), ("1", "3", "QAP"), ("2", "4", "Ack")],
            &[],
        ),
        raw(
            "toy-2",
            &[("B", "any clay"), ("A", "no"), ("B", "ok")],
            &[("1", "2", "QAP"), ("2", "3", "Ack")],
            &[],
        ),
    ];
    let ds = preprocess_all(&raws).unwrap();
    let vocab = build_vocab(&ds, 1);
    assert!(vocab.num_words() <= 20);
    (ds, vocab)
}

/// Evaluation-mode joint loss of a dialogue under `params`.
pub fn loss_with(model: &Model, params: &ParamStore, d: &Dialogue) -> f64 {
    let input = DialogueInput::new(d, &model.vocab);
    let gold = gold_targets(d, &model.vocab).unwrap();
    let mut tape = Tape::with_params(params);
    let parts = dialogue_loss(&mut tape, model, &input, &gold, None, &mut ForwardCtx::eval()).unwrap();
    tape.scalar(parts.all)
}

/// Analytic gradient of the summed loss of `ds`.
pub fn grads_of(model: &Model, ds: &[Dialogue]) -> dlgparse::tensor::ParamGrads {
    let mut acc = dlgparse::tensor::ParamGrads::new();
    for d in ds {
        let input = DialogueInput::new(d, &model.vocab);
        let gold = gold_targets(d, &model.vocab).unwrap();
        let mut tape = Tape::with_params(&model.params);
        let parts = dialogue_loss(&mut tape, model, &input, &gold, None, &mut ForwardCtx::eval()).unwrap();
        tape.backward(parts.all).unwrap().accumulate_into(&mut acc);
    }
    acc
}

/// Random all-pairs score matrix with continuous weights.
pub fn random_scores(n: usize, rng: &mut ChaCha8Rng) -> ScoreMatrix {
    let w: Vec<Vec<f64>> = (0..=n)
        .map(|_| (0..=n).map(|_| rng.gen_range(-5.0..5.0)).collect())
        .collect();
    ScoreMatrix::from_fn(n, |j, i| w[j][i])
}

/// Structured representations of every EDU for every speaker, built along
/// the dialogue's gold structure.
pub fn structured_table(model: &Model, input: &DialogueInput, gold: &[(usize, usize)]) -> Vec<Vec<Vec<f64>>> {
    let mut tape = Tape::with_params(&model.params);
    let mut ctx = ForwardCtx::eval();
    let mut r = encode_dialogue(&mut tape, &model.link_stack, model.config.repr_dim, input, &mut ctx).unwrap();
    for i in 1..=input.len() {
        let (p, rel) = gold[i - 1];
        let local = r.local[i];
        dlgparse::encoders::structured_step(
            &mut tape,
            &model.link_stack,
            model.config.mode,
            &mut r.structured,
            i,
            p,
            rel,
            local,
            input.speakers[i],
            &mut ctx,
        )
        .unwrap();
    }
    (0..=input.len())
        .map(|i| {
            (0..input.num_speakers)
                .map(|a| tape.value(r.structured.get(i, a).unwrap()).to_vec())
                .collect()
        })
        .collect()
}
