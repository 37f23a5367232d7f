#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use rand::Rng;

use dlgparse::model::{Mode, Model};
use dlgparse::tensor::{GruCell, GruCellParams, ParamStore, Tape, Tensor, Var};

const TOL: f64 = 1e-3;
const INSTANCES: u64 = 20;

/// Reduces any output to a scalar with fixed random weights so every
/// output entry contributes a distinct gradient.
fn weighted_sum(t: &mut Tape<'_>, out: Var, seed: u64) -> Var {
    let (r, c) = t.shape(out);
    let w = random_tensor(r, c, 1.0, &mut rng(seed ^ 0xabc));
    let w = t.constant(&w);
    let m = t.mul(out, w).unwrap();
    t.sum(m).unwrap()
}

fn each_instance(mut f: impl FnMut(u64, &mut rand_chacha::ChaCha8Rng) -> f64) {
    for seed in 0..INSTANCES {
        let mut g = rng(seed);
        let e = f(seed, &mut g);
        assert!(e < TOL, "instance {} relative error {:e}", seed, e);
    }
}

#[test]
fn matmul_gradient() {
    each_instance(|seed, g| {
        let (m, k, n) = (g.gen_range(1..4), g.gen_range(1..4), g.gen_range(1..4));
        let ins = [random_tensor(m, k, 1.0, g), random_tensor(k, n, 1.0, g)];
        check_leaves(&ins, |t, v| {
            let o = t.matmul(v[0], v[1]).unwrap();
            weighted_sum(t, o, seed)
        })
    });
}

#[test]
fn elementwise_binary_gradients() {
    each_instance(|seed, g| {
        let (r, c) = (g.gen_range(1..4), g.gen_range(1..5));
        let ins = [random_tensor(r, c, 1.0, g), random_tensor(r, c, 1.0, g)];
        let add = check_leaves(&ins, |t, v| {
            let o = t.add(v[0], v[1]).unwrap();
            weighted_sum(t, o, seed)
        });
        let sub = check_leaves(&ins, |t, v| {
            let o = t.sub(v[0], v[1]).unwrap();
            weighted_sum(t, o, seed)
        });
        let mul = check_leaves(&ins, |t, v| {
            let o = t.mul(v[0], v[1]).unwrap();
            weighted_sum(t, o, seed)
        });
        add.max(sub).max(mul)
    });
}

#[test]
fn add_row_gradient() {
    each_instance(|seed, g| {
        let (r, c) = (g.gen_range(1..5), g.gen_range(1..5));
        let ins = [random_tensor(r, c, 1.0, g), random_tensor(1, c, 1.0, g)];
        check_leaves(&ins, |t, v| {
            let o = t.add_row(v[0], v[1]).unwrap();
            weighted_sum(t, o, seed)
        })
    });
}

#[test]
fn activation_gradients() {
    each_instance(|seed, g| {
        let ins = [random_tensor(2, 3, 3.0, g)];
        let th = check_leaves(&ins, |t, v| {
            let o = t.tanh(v[0]).unwrap();
            weighted_sum(t, o, seed)
        });
        let sg = check_leaves(&ins, |t, v| {
            let o = t.sigmoid(v[0]).unwrap();
            weighted_sum(t, o, seed)
        });
        th.max(sg)
    });
}

#[test]
fn concat_stack_reshape_gradients() {
    each_instance(|seed, g| {
        let c = g.gen_range(1..4);
        let ins = [
            random_tensor(1, c, 1.0, g),
            random_tensor(1, 2, 1.0, g),
            random_tensor(1, c, 1.0, g),
        ];
        let cat = check_leaves(&ins, |t, v| {
            let o = t.concat(v).unwrap();
            weighted_sum(t, o, seed)
        });
        let stack = check_leaves(&[ins[0].clone(), ins[2].clone()], |t, v| {
            let o = t.stack_rows(v).unwrap();
            weighted_sum(t, o, seed)
        });
        let reshape = check_leaves(&[random_tensor(2, 3, 1.0, g)], |t, v| {
            let o = t.reshape(v[0], 3, 2).unwrap();
            weighted_sum(t, o, seed)
        });
        cat.max(stack).max(reshape)
    });
}

#[test]
fn embedding_lookup_gradient() {
    each_instance(|seed, g| {
        let table = random_tensor(5, 3, 1.0, g);
        let ids: Vec<usize> = (0..4).map(|_| g.gen_range(0..5)).collect();
        check_leaves(&[table], |t, v| {
            let o = t.rows(v[0], &ids).unwrap();
            weighted_sum(t, o, seed)
        })
    });
}

#[test]
fn dropout_mask_gradient() {
    each_instance(|seed, g| {
        let x = random_tensor(1, 6, 1.0, g);
        let mask: Vec<f64> = (0..6).map(|_| if g.gen_bool(0.5) { 2.0 } else { 0.0 }).collect();
        check_leaves(&[x], |t, v| {
            let o = t.dropout_mask(v[0], mask.clone()).unwrap();
            weighted_sum(t, o, seed)
        })
    });
}

#[test]
fn softmax_nll_sum_gradients() {
    each_instance(|seed, g| {
        let n = g.gen_range(1..6);
        let target = g.gen_range(0..n);
        let ins = [random_tensor(1, n, 3.0, g)];
        let sm = check_leaves(&ins, |t, v| {
            let o = t.softmax(v[0]).unwrap();
            weighted_sum(t, o, seed)
        });
        let nll = check_leaves(&ins, |t, v| t.nll(v[0], target).unwrap());
        let addn = check_leaves(&[ins[0].clone(), random_tensor(1, n, 1.0, g)], |t, v| {
            let o = t.add_n(v).unwrap();
            weighted_sum(t, o, seed)
        });
        sm.max(nll).max(addn)
    });
}

#[test]
fn gru_three_step_chain() {
    each_instance(|seed, g| {
        let dims = GruCellParams { input: 3, hidden: 4 };
        let mut store = ParamStore::new();
        let cell = GruCell::new(&mut store, "cell", dims, 0.5, g);
        let xs: Vec<Tensor> = (0..3).map(|_| random_tensor(1, 3, 1.0, g)).collect();
        let h0 = random_tensor(1, 4, 0.5, g);

        let run = |store: &ParamStore, xs: &[Tensor], h0: &Tensor| {
            let mut t = Tape::with_params(store);
            let vars: Vec<Var> = xs.iter().map(|x| t.leaf(x)).collect();
            let mut h = t.leaf(h0);
            let hv = h;
            for &x in &vars {
                h = cell.step(&mut t, x, h).unwrap();
            }
            let loss = weighted_sum(&mut t, h, seed);
            (t.scalar(loss), t.backward(loss).unwrap(), vars, hv)
        };

        let (_, grads, vars, hv) = run(&store, &xs, &h0);
        let (param_err, _) = check_params(&store, |s| run(s, &xs, &h0).0, &grads.param_grads());

        let mut worst = param_err;
        let mut inputs = xs.clone();
        inputs.push(h0.clone());
        let leaf_vars: Vec<Var> = vars.iter().copied().chain([hv]).collect();
        for (k, v) in leaf_vars.iter().enumerate() {
            let a = grads.grad(*v);
            for idx in 0..inputs[k].len() {
                let mut p = inputs.clone();
                p[k].data_mut()[idx] += FD_STEP;
                let mut m = inputs.clone();
                m[k].data_mut()[idx] -= FD_STEP;
                let (lp, ..) = run(&store, &p[..3], &p[3]);
                let (lm, ..) = run(&store, &m[..3], &m[3]);
                worst = worst.max(rel_err(a[idx], (lp - lm) / (2.0 * FD_STEP)));
            }
        }
        worst
    });
}

fn check_model(mode: Mode, shared: bool) {
    let (ds, vocab) = toy_corpus();
    let model = Model::new(tiny_config(mode, shared), vocab, 17).unwrap();
    let analytic = grads_of(&model, &ds);
    let (err, at) = check_params(
        &model.params,
        |p| ds.iter().map(|d| loss_with(&model, p, d)).sum(),
        &analytic,
    );
    assert!(err < TOL, "{} shared={}: {:e} at {}", mode, shared, err, at);
}

#[test]
fn joint_loss_gradient_full() {
    check_model(Mode::Full, false);
}

#[test]
fn joint_loss_gradient_shared() {
    check_model(Mode::Full, true);
}

#[test]
fn joint_loss_gradient_baseline() {
    check_model(Mode::Ns, false);
}

#[test]
fn joint_loss_gradient_without_highlighting() {
    check_model(Mode::NoShm, false);
}
