use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::error::Error;

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn run_unary(t: &Tensor, f: impl Fn(&mut Graph, Var) -> Var) -> Vec<f64> {
    let mut g = Graph::new();
    let a = g.constant(t);
    let out = f(&mut g, a);
    g.value(out).to_vec()
}

#[test]
fn matmul_identity_and_hand_case() {
    let a = Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
    let mut g = Graph::new();
    let av = g.constant(&a);
    let id = g.constant(&Tensor::identity(2));
    let out = g.matmul(av, id).unwrap();
    assert_eq!(g.value(out), a.data());

    let b = g.constant(&Tensor::from_rows(&[[5.0], [6.0]]).unwrap());
    let out = g.matmul(av, b).unwrap();
    assert_eq!(g.shape(out), &[2, 1]);
    assert_eq!(g.value(out), &[17.0, 39.0]);
}

#[test]
fn matmul_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a = Tensor::uniform(&[4, 3], 2.0, &mut rng);
    let b = Tensor::uniform(&[3, 2], 2.0, &mut rng);
    let mut reference = [0.0; 8];
    for i in 0..4 {
        for j in 0..2 {
            for p in 0..3 {
                reference[i * 2 + j] += a.get(i, p) * b.get(p, j);
            }
        }
    }
    let mut g = Graph::new();
    let (av, bv) = (g.constant(&a), g.constant(&b));
    let out = g.matmul(av, bv).unwrap();
    assert!(close(g.value(out), &reference, 1e-12));
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let mut g = Graph::new();
    let a = g.constant(&Tensor::zeros(&[2, 3]));
    let b = g.constant(&Tensor::zeros(&[2, 3]));
    let err = g.matmul(a, b).unwrap_err();
    match &err {
        Error::Dimension { left, right, .. } => {
            assert_eq!(left, &[2, 3]);
            assert_eq!(right, &[2, 3]);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(err.to_string().contains("[2, 3]"));
}

#[test]
fn elementwise_examples() {
    let z = Tensor::scalar(0.0);
    assert_eq!(
        run_unary(&z, |g, a| g.elementwise(Elementwise::Sigmoid, a, None).unwrap()),
        vec![0.5]
    );
    assert_eq!(
        run_unary(&z, |g, a| g.elementwise(Elementwise::Tanh, a, None).unwrap()),
        vec![0.0]
    );
    let mut g = Graph::new();
    let a = g.constant(&Tensor::row(vec![1.0, 2.0]));
    let b = g.constant(&Tensor::row(vec![3.0, 4.0]));
    let s = g.elementwise(Elementwise::Add, a, Some(b)).unwrap();
    assert_eq!(g.value(s), &[4.0, 6.0]);

    let c = g.constant(&Tensor::row(vec![1.0, 2.0, 3.0]));
    assert!(matches!(g.mul(a, c), Err(Error::Dimension { .. })));
    assert!(matches!(
        g.elementwise(Elementwise::Sub, a, None),
        Err(Error::Contract(_))
    ));
}

#[test]
fn saturating_activations_stay_in_range() {
    let t = Tensor::row(vec![-800.0, -30.0, 0.0, 30.0, 800.0]);
    for v in run_unary(&t, |g, a| g.sigmoid(a)) {
        assert!((0.0..=1.0).contains(&v) && v.is_finite());
    }
    for v in run_unary(&t, |g, a| g.tanh(a)) {
        assert!((-1.0..=1.0).contains(&v));
    }
}

#[test]
fn add_row_broadcasts_bias_only() {
    let mut g = Graph::new();
    let a = g.constant(&Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap());
    let b = g.constant(&Tensor::row(vec![10.0, 20.0]));
    let out = g.add_row(a, b).unwrap();
    assert_eq!(g.value(out), &[11.0, 22.0, 13.0, 24.0]);
    let bad = g.constant(&Tensor::row(vec![1.0, 2.0, 3.0]));
    assert!(g.add_row(a, bad).is_err());
}

#[test]
fn softmax_examples() {
    let rows = |r: Vec<f64>| {
        let t = Tensor::row(r);
        run_unary(&t, |g, a| g.softmax_rows(a).unwrap())
    };
    assert_eq!(rows(vec![0.0, 0.0]), vec![0.5, 0.5]);
    let big = rows(vec![1000.0, 1000.0, 1000.0]);
    assert!(close(&big, &[1.0 / 3.0; 3], 1e-15));
    let logs = rows(vec![1f64.ln(), 2f64.ln(), 3f64.ln()]);
    assert!(close(&logs, &[1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0], 1e-12));
}

#[test]
fn concat_examples() {
    let mut g = Graph::new();
    let a = g.constant(&Tensor::from_rows(&[[1.0]]).unwrap());
    let b = g.constant(&Tensor::from_rows(&[[2.0]]).unwrap());
    let c = g.concat_cols(a, b).unwrap();
    assert_eq!(g.value(c), &[1.0, 2.0]);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = Tensor::uniform(&[3, 2], 1.0, &mut rng);
    let y = Tensor::uniform(&[3, 4], 1.0, &mut rng);
    let (xv, yv) = (g.constant(&x), g.constant(&y));
    let xy = g.concat_cols(xv, yv).unwrap();
    let back_x = g.slice_cols(xy, 0, 2).unwrap();
    let back_y = g.slice_cols(xy, 2, 4).unwrap();
    assert_eq!(g.value(back_x), x.data());
    assert_eq!(g.value(back_y), y.data());

    let short = g.constant(&Tensor::zeros(&[2, 1]));
    assert!(matches!(
        g.concat_cols(xv, short),
        Err(Error::Dimension { .. })
    ));
}

#[test]
fn concat_backward_is_ones() {
    let mut store = ParamStore::new();
    let a = store.add("a", Tensor::zeros(&[2, 2]));
    let b = store.add("b", Tensor::zeros(&[2, 3]));
    let mut g = Graph::new();
    let (av, bv) = (g.param(&store, a), g.param(&store, b));
    let c = g.concat_cols(av, bv).unwrap();
    let s = g.sum(c);
    g.backward(s, &mut store).unwrap();
    assert!(store.get(a).grad().iter().all(|&v| v == 1.0));
    assert!(store.get(b).grad().iter().all(|&v| v == 1.0));
}

#[test]
fn backward_of_sum_and_square() {
    let mut store = ParamStore::new();
    let x = store.add("x", Tensor::zeros(&[2, 3]));
    let mut g = Graph::new();
    let xv = g.param(&store, x);
    let s = g.sum(xv);
    g.backward(s, &mut store).unwrap();
    assert_eq!(store.get(x).grad(), &[1.0; 6]);

    let y = store.add("y", Tensor::row(vec![3.0]));
    let mut g = Graph::new();
    let yv = g.param(&store, y);
    let sq = g.mul(yv, yv).unwrap();
    let s = g.sum(sq);
    g.backward(s, &mut store).unwrap();
    assert_eq!(store.get(y).grad(), &[6.0]);

    // accumulation is additive
    g.backward(s, &mut store).unwrap();
    assert_eq!(store.get(y).grad(), &[12.0]);
}

#[test]
fn backward_requires_scalar_root() {
    let mut store = ParamStore::new();
    let x = store.add("x", Tensor::zeros(&[2, 2]));
    let mut g = Graph::new();
    let xv = g.param(&store, x);
    assert!(matches!(
        g.backward(xv, &mut store),
        Err(Error::Contract(_))
    ));
}

#[test]
fn frozen_leaves_get_no_gradient() {
    let mut store = ParamStore::new();
    let x = store.add("x", Tensor::row(vec![1.0, 2.0]));
    store.get_mut(x).set_requires_grad(false);
    let mut g = Graph::new();
    let xv = g.param(&store, x);
    let s = g.sum(xv);
    g.backward(s, &mut store).unwrap();
    assert_eq!(store.get(x).grad(), &[0.0, 0.0]);
}

// ---- finite-difference properties -------------------------------------

type Build = fn(&mut Graph, &[Var]) -> Var;

/// Backward vs central differences for `build`, reduced to a scalar by a
/// fixed random weighting so that no output coordinate is trivially ignored.
fn check_op(inputs: &[Tensor], build: Build, seed: u64) -> f64 {
    let mut store = ParamStore::new();
    let ids: Vec<_> = inputs
        .iter()
        .enumerate()
        .map(|(i, t)| store.add(format!("in{i}"), t.clone()))
        .collect();
    let weights_for = |shape: &[usize]| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n: usize = shape.iter().product();
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor::new(shape, v).unwrap()
    };
    let forward = |store: &ParamStore, g: &mut Graph| {
        let vars: Vec<_> = ids.iter().map(|&id| g.param(store, id)).collect();
        let out = build(g, &vars);
        let w = g.constant(&weights_for(g.shape(out)));
        let prod = g.mul(out, w).unwrap();
        g.sum(prod)
    };
    let mut g = Graph::new();
    let root = forward(&store, &mut g);
    g.backward(root, &mut store).unwrap();
    let mut worst: f64 = 0.0;
    for &id in &ids {
        let numeric = finite_diff_param(&store, id, 1e-5, |s| {
            let mut g = Graph::new();
            let r = forward(s, &mut g);
            g.value(r)[0]
        });
        worst = worst.max(max_relative_error(
            store.get(id).grad(),
            numeric.data(),
            1e-6,
        ));
    }
    worst
}

fn tensor_strategy(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-2.0f64..2.0, rows * cols)
        .prop_map(move |v| Tensor::new(&[rows, cols], v).unwrap())
}

const BUILDS: &[(&str, Build, usize)] = &[
    ("add", |g, v| g.add(v[0], v[1]).unwrap(), 2),
    ("sub", |g, v| g.sub(v[0], v[1]).unwrap(), 2),
    ("mul", |g, v| g.mul(v[0], v[1]).unwrap(), 2),
    ("sigmoid", |g, v| g.sigmoid(v[0]), 1),
    ("tanh", |g, v| g.tanh(v[0]), 1),
    ("softmax", |g, v| g.softmax_rows(v[0]).unwrap(), 1),
    ("concat", |g, v| g.concat_cols(v[0], v[1]).unwrap(), 2),
    ("transpose", |g, v| g.transpose(v[0]).unwrap(), 1),
    ("scale", |g, v| g.scale(v[0], -1.7), 1),
    ("slice_rows", |g, v| g.slice_rows(v[0], 1, 2).unwrap(), 1),
    ("slice_cols", |g, v| g.slice_cols(v[0], 1, 2).unwrap(), 1),
    ("gather", |g, v| g.gather_rows(v[0], &[2, 0, 2, 1]).unwrap(), 1),
    ("concat_rows", |g, v| g.concat_rows(&[v[0], v[1], v[0]]).unwrap(), 2),
    (
        "add_row",
        |g, v| {
            let b = g.slice_rows(v[1], 0, 1).unwrap();
            g.add_row(v[0], b).unwrap()
        },
        2,
    ),
    (
        "log_of_softmax_pick",
        |g, v| {
            let p = g.softmax_rows(v[0]).unwrap();
            let picked = g.pick(p, &[0, 2, 1]).unwrap();
            g.log_floor(picked, 1e-12)
        },
        1,
    ),
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn every_op_matches_finite_differences(
        a in tensor_strategy(3, 3),
        b in tensor_strategy(3, 3),
        seed in any::<u64>(),
    ) {
        for (name, build, arity) in BUILDS {
            let inputs = if *arity == 1 { vec![a.clone()] } else { vec![a.clone(), b.clone()] };
            let err = check_op(&inputs, *build, seed);
            prop_assert!(err < 1e-4, "{name}: relative error {err}");
        }
    }

    #[test]
    fn matmul_matches_finite_differences(
        a in tensor_strategy(3, 4),
        b in tensor_strategy(4, 2),
        seed in any::<u64>(),
    ) {
        let err = check_op(&[a, b], |g, v| g.matmul(v[0], v[1]).unwrap(), seed);
        prop_assert!(err < 1e-4, "matmul: {err}");
    }

    #[test]
    fn three_op_chain_matches_finite_differences(
        a in tensor_strategy(2, 3),
        b in tensor_strategy(3, 3),
        seed in any::<u64>(),
    ) {
        let err = check_op(&[a, b], |g, v| {
            let m = g.matmul(v[0], v[1]).unwrap();
            let t = g.tanh(m);
            g.softmax_rows(t).unwrap()
        }, seed);
        prop_assert!(err < 1e-4, "chain: {err}");
    }

    #[test]
    fn softmax_rows_are_distributions(
        a in prop::collection::vec(-50.0f64..50.0, 12),
    ) {
        let t = Tensor::new(&[3, 4], a).unwrap();
        let out = run_unary(&t, |g, v| g.softmax_rows(v).unwrap());
        for row in out.chunks(4) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
    }
}

#[test]
fn identical_inputs_are_bit_identical() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = Tensor::uniform(&[5, 4], 2.0, &mut rng);
        let b = Tensor::uniform(&[4, 6], 2.0, &mut rng);
        let mut g = Graph::new();
        let (av, bv) = (g.constant(&a), g.constant(&b));
        let m = g.matmul(av, bv).unwrap();
        let s = g.softmax_rows(m).unwrap();
        g.value(s).to_vec()
    };
    assert_eq!(run(), run());
}

#[test]
fn tensor_invariants() {
    assert!(Tensor::new(&[2, 0], vec![]).is_err());
    assert!(Tensor::new(&[2, 2], vec![1.0; 3]).is_err());
    let t = Tensor::new(&[2, 3], vec![0.5; 6]).unwrap();
    assert_eq!(t.grad().len(), t.data().len());
}
