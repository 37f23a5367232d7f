mod common;

use std::collections::HashSet;

use common::*;
use proptest::prelude::*;
use rand::Rng;

use dlgparse::corpus::{parse_corpus, preprocess, preprocess_all, synthetic, write_corpus, Dialogue};
use dlgparse::decode::{brute_force_arborescence, greedy_decode, mst_decode, EdgeSet};
use dlgparse::encoders::ForwardCtx;
use dlgparse::eval::micro_f1;
use dlgparse::model::{Mode, Model};
use dlgparse::predictor::{parse_dialogue, parse_dialogue_with, DialogueInput};
use dlgparse::tensor::softmax_slice;
use dlgparse::training::{gold_targets, loss_and_grads};

fn modes() -> impl Strategy<Value = Mode> {
    prop_oneof![Just(Mode::Full), Just(Mode::Ns), Just(Mode::Random), Just(Mode::NoShm)]
}

fn synthetic_dialogue(seed: u64) -> Dialogue {
    preprocess_all(&synthetic::generate(1, seed)).unwrap().remove(0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_is_a_shift_invariant_distribution(
        v in prop::collection::vec(-50.0f64..50.0, 1..10),
        c in -100.0f64..100.0,
    ) {
        let p = softmax_slice(&v).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| x >= 0.0));
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let q = softmax_slice(&shifted).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mst_matches_brute_force(n in 1usize..=6, seed in any::<u64>()) {
        let s = random_scores(n, &mut rng(seed));
        let mst = mst_decode(&s, EdgeSet::AllPairs).unwrap();
        let bf = brute_force_arborescence(&s).unwrap();
        prop_assert!(mst.is_tree());
        prop_assert_eq!(s.weight(&mst), s.weight(&bf));
    }

    #[test]
    fn forward_mst_is_greedy(n in 1usize..=12, seed in any::<u64>()) {
        let s = random_scores(n, &mut rng(seed));
        let g = greedy_decode(&s);
        prop_assert_eq!(mst_decode(&s, EdgeSet::Forward).unwrap(), g.clone());
        prop_assert!(g.is_tree() && g.is_forward());
    }

    #[test]
    fn equal_sized_predictions_have_equal_precision_and_recall(
        n in 1usize..10,
        seed in any::<u64>(),
    ) {
        let mut g = rng(seed);
        let labels = ["A", "B", "C"];
        let mk = |g: &mut rand_chacha::ChaCha8Rng| -> Vec<_> {
            (1..=n)
                .map(|i| dlgparse::corpus::RelationInstance::new(g.gen_range(0..i), i, labels[g.gen_range(0..3)]))
                .collect()
        };
        let (pred, gold) = (mk(&mut g), mk(&mut g));
        let r = micro_f1(&pred, &gold);
        prop_assert_eq!(r.link.precision, r.link.recall);
        prop_assert!(r.link_rel.f1 <= r.link.f1);
        prop_assert!((0.0..=1.0).contains(&r.link.f1));
    }

    #[test]
    fn corpus_round_trips_through_canonical_file(seed in any::<u64>(), count in 1usize..5) {
        let ds = preprocess_all(&synthetic::generate(count, seed)).unwrap();
        let mut buf = Vec::new();
        write_corpus(&mut buf, &ds).unwrap();
        let again = preprocess_all(&parse_corpus(&buf).unwrap()).unwrap();
        prop_assert_eq!(again, ds);
    }

    #[test]
    fn preprocessing_yields_forward_rooted_graphs(
        n in 2usize..9,
        seed in any::<u64>(),
    ) {
        // random CDU over a contiguous span plus random relations between units
        let mut g = rng(seed);
        let start = g.gen_range(1..n);
        let end = g.gen_range(start + 1..=n);
        let members: Vec<String> = (start..=end).map(|i| i.to_string()).collect();
        let units: Vec<String> = (1..=n).map(|i| i.to_string()).chain(["c".to_string()]).collect();
        let rels: Vec<(String, String)> = (0..g.gen_range(0..2 * n))
            .map(|_| (units[g.gen_range(0..units.len())].clone(), units[g.gen_range(0..units.len())].clone()))
            .collect();
        let edus: Vec<(&str, &str)> = (0..n).map(|k| (["A", "B", "C"][k % 3], "text")).collect();
        let rel_refs: Vec<(&str, &str, &str)> = rels.iter().map(|(x, y)| (x.as_str(), y.as_str(), "R")).collect();
        let member_refs: Vec<&str> = members.iter().map(|s| s.as_str()).collect();
        let raw_d = raw("r", &edus, &rel_refs, &[("c", &member_refs)]);

        let d = preprocess(&raw_d).unwrap();
        let mut seen = HashSet::new();
        let mut has_incoming = vec![false; n + 1];
        for r in &d.relations {
            prop_assert!(r.source < r.target);
            prop_assert!(r.target >= 1 && r.target <= n);
            prop_assert!(seen.insert((r.source, r.target, r.rtype.clone())));
            has_incoming[r.target] = true;
        }
        prop_assert!(has_incoming[1..].iter().all(|&b| b));
        for (k, gp) in d.gold_parents().iter().enumerate() {
            prop_assert!(gp.parent < k + 1);
        }
    }

    #[test]
    fn parses_are_forward_trees(seed in 0u64..1000, mode in modes(), shared in any::<bool>()) {
        let d = synthetic_dialogue(seed);
        let vocab = dlgparse::corpus::build_vocab(std::slice::from_ref(&d), 1);
        let m = Model::new(tiny_config(mode, shared), vocab, seed).unwrap();
        let out = parse_dialogue(&m, &d, seed).unwrap();
        prop_assert_eq!(out.tree.len(), d.len());
        prop_assert!(out.tree.is_tree() && out.tree.is_forward());
        prop_assert!(out.tree.arcs().all(|(_, c)| c != 0));
    }

    #[test]
    fn adding_a_constant_to_link_logits_keeps_the_parse(seed in 0u64..1000, c in -20.0f64..20.0) {
        let d = synthetic_dialogue(seed);
        let vocab = dlgparse::corpus::build_vocab(std::slice::from_ref(&d), 1);
        let m = Model::new(tiny_config(Mode::Full, false), vocab, seed).unwrap();
        let base = parse_dialogue(&m, &d, 0).unwrap();
        let shifted = parse_dialogue_with(&m, &d, 0, &mut |_, s| s.iter_mut().for_each(|v| *v += c)).unwrap();
        prop_assert_eq!(base.tree, shifted.tree);
    }

    #[test]
    fn highlighting_ignores_identity_of_other_speakers(seed in 0u64..1000, mode in prop_oneof![Just(Mode::Full), Just(Mode::NoShm)]) {
        let d = synthetic_dialogue(seed);
        let vocab = dlgparse::corpus::build_vocab(std::slice::from_ref(&d), 1);
        let m = Model::new(tiny_config(mode, false), vocab, seed).unwrap();
        let input = DialogueInput::new(&d, &m.vocab);
        let gold = gold_targets(&d, &m.vocab).unwrap();
        let before = structured_table(&m, &input, &gold);
        for a in 0..input.num_speakers {
            // move every EDU not spoken by `a` to another speaker that is not `a`
            let mut relabeled = input.clone();
            for i in 1..=input.len() {
                if relabeled.speakers[i] != a {
                    let mut b = (relabeled.speakers[i] + 1) % input.num_speakers;
                    if b == a {
                        b = (b + 1) % input.num_speakers;
                    }
                    if input.num_speakers > 2 {
                        relabeled.speakers[i] = b;
                    }
                }
            }
            let after = structured_table(&m, &relabeled, &gold);
            for i in 0..=input.len() {
                prop_assert_eq!(&before[i][a], &after[i][a]);
            }
            // the relabeled speakers themselves do see a difference
            if mode == Mode::Full && relabeled.speakers != input.speakers {
                prop_assert_ne!(&before, &after);
            }
        }
    }

    #[test]
    fn structured_state_depends_only_on_its_path(seed in 0u64..1000) {
        let d = synthetic_dialogue(seed);
        let vocab = dlgparse::corpus::build_vocab(std::slice::from_ref(&d), 1);
        let m = Model::new(tiny_config(Mode::Full, false), vocab, seed).unwrap();
        let input = DialogueInput::new(&d, &m.vocab);
        let gold = gold_targets(&d, &m.vocab).unwrap();
        let n = input.len();
        let before = structured_table(&m, &input, &gold);
        let mut on_path = vec![false; n + 1];
        let mut k = n;
        while k != 0 {
            on_path[k] = true;
            k = gold[k - 1].0;
        }
        let mut g = rng(seed);
        let mut changed = gold.clone();
        for i in 1..=n {
            if !on_path[i] {
                changed[i - 1].0 = g.gen_range(0..i);
            }
        }
        let after = structured_table(&m, &input, &changed);
        prop_assert_eq!(&before[n], &after[n]);
    }
}

#[test]
fn gradient_sum_is_insensitive_to_batch_order() {
    let ds = preprocess_all(&synthetic::generate(4, 9)).unwrap();
    let vocab = dlgparse::corpus::build_vocab(&ds, 1);
    let m = Model::new(tiny_config(Mode::Full, false), vocab, 3).unwrap();
    let sum = |order: &[usize]| {
        let mut acc = dlgparse::tensor::ParamGrads::new();
        for &k in order {
            let (_, g) = loss_and_grads(&m, &ds[k], None, &mut ForwardCtx::eval()).unwrap();
            acc.merge(&g);
        }
        acc
    };
    let a = sum(&[0, 1, 2, 3]);
    let b = sum(&[3, 1, 0, 2]);
    for ((_, x), (_, y)) in a.iter().zip(b.iter()) {
        for (p, q) in x.iter().zip(y) {
            assert!((p - q).abs() <= 1e-6 * p.abs().max(q.abs()).max(1e-12));
        }
    }
}

#[test]
fn training_structure_follows_gold_not_predictions() {
    // the loss of a dialogue depends on the gold structure only, so it is
    // the same whether or not the model's own parse agrees with gold
    let d = synthetic_dialogue(4);
    let vocab = dlgparse::corpus::build_vocab(std::slice::from_ref(&d), 1);
    let m = Model::new(tiny_config(Mode::Full, false), vocab, 1).unwrap();
    let gold = gold_targets(&d, &m.vocab).unwrap();
    let (l1, _) = loss_and_grads(&m, &d, None, &mut ForwardCtx::eval()).unwrap();
    let (l2, _) = loss_and_grads(&m, &d, Some(&gold), &mut ForwardCtx::eval()).unwrap();
    assert_eq!(l1, l2);
}
