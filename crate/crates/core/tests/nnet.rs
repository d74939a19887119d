use std::sync::Arc;

use graphdg_core::nnet::{AdamConfig, AdamState, Mlp, NnError, ParamStore, Tape, Tensor};
use graphdg_core::rng_stream;
use rand::Rng;

fn row(values: &[f64]) -> Tensor {
    Tensor::matrix(1, values.len(), values.to_vec()).unwrap()
}

#[test]
fn relu_forward() {
    let mut tape = Tape::new();
    let x = tape.leaf(row(&[-1.0, 0.0, 2.0]));
    let y = tape.relu(x);
    assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
}

#[test]
fn identity_matmul() {
    let mut tape = Tape::new();
    let i3 = tape.leaf(Tensor::identity(3));
    let v = tape.leaf(Tensor::column(vec![1.5, -2.0, 4.0]));
    let y = tape.matmul(i3, v).unwrap();
    assert_eq!(tape.value(y).data(), &[1.5, -2.0, 4.0]);
}

#[test]
fn shape_mismatch_is_an_error() {
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::zeros(vec![2, 3]));
    let b = tape.leaf(Tensor::zeros(vec![2, 3]));
    assert!(matches!(tape.matmul(a, b), Err(NnError::Shape { op: "matmul", .. })));
    let c = tape.leaf(Tensor::zeros(vec![3, 2]));
    assert!(matches!(tape.add(a, c), Err(NnError::Shape { .. })));
    assert!(matches!(Tensor::new(vec![2, 2], vec![1.0]), Err(NnError::ValueCount { .. })));
}

#[test]
fn scatter_sum_on_path_graph() {
    // Path 0 - 1 - 2 with edges e0 = (0,1), e1 = (1,2); each edge vector is
    // added onto both endpoints. The middle node receives e0 + e1.
    let mut tape = Tape::new();
    let edges = tape.leaf(Tensor::matrix(2, 2, vec![1.0, 2.0, 10.0, 20.0]).unwrap());
    let r: Arc<[usize]> = Arc::from(vec![0, 1]);
    let s: Arc<[usize]> = Arc::from(vec![1, 2]);
    let to_r = tape.scatter_add(edges, &r, 3).unwrap();
    let to_s = tape.scatter_add(edges, &s, 3).unwrap();
    let nodes = tape.add(to_r, to_s).unwrap();
    assert_eq!(tape.value(nodes).data(), &[1.0, 2.0, 11.0, 22.0, 10.0, 20.0]);
}

#[test]
fn gather_then_backward_accumulates() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::column(vec![1.0, 2.0, 3.0]));
    let idx: Arc<[usize]> = Arc::from(vec![2, 0, 2]);
    let g = tape.gather(x, &idx).unwrap();
    assert_eq!(tape.value(g).data(), &[3.0, 1.0, 3.0]);
    let loss = tape.sum(g);
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[1.0, 0.0, 2.0]);
    assert!(matches!(tape.gather(x, &Arc::from(vec![3])), Err(NnError::Index { .. })));
}

#[test]
fn relu_sum_gradient() {
    let mut tape = Tape::new();
    let x = tape.leaf(row(&[-1.0, 2.0]));
    let y = tape.relu(x);
    let loss = tape.sum(y);
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[0.0, 1.0]);
}

#[test]
fn product_rule() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::scalar(3.0));
    let y = tape.mul(x, x).unwrap();
    let grads = tape.backward(y).unwrap();
    assert_eq!(grads.get(x).unwrap().item(), 6.0);
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut tape = Tape::new();
    let x = tape.leaf(row(&[1.0, 2.0]));
    assert_eq!(tape.backward(x).unwrap_err(), NnError::NonScalarLoss(vec![1, 2]));
}

/// Scalar function of the MLP output exercising most primitives.
fn mlp_loss(store: &ParamStore, mlp: &Mlp, input: &Tensor) -> (f64, Vec<Tensor>) {
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let x = tape.leaf(input.clone());
    let h = mlp.forward(&mut tape, &bound, x).unwrap();
    let sq = tape.square(h);
    let scaled = tape.scale(sq, 0.1);
    let e = tape.exp(scaled);
    let floor = tape.clamp_min(e, 1e-6);
    let lg = tape.log(floor);
    let rt = tape.sqrt(floor);
    let q = tape.div(lg, rt).unwrap();
    let cat = tape.concat(&[q, h]).unwrap();
    let loss = tape.sum(cat);
    let grads = tape.backward(loss).unwrap();
    (tape.value(loss).item(), store.collect_grads(&bound, &grads))
}

#[test]
fn three_layer_mlp_matches_finite_differences() {
    let mut rng = rng_stream(11, 0);
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "mlp", 4, &[6, 5, 3], &mut rng);
    let input = Tensor::matrix(3, 4, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let (_, analytic) = mlp_loss(&store, &mlp, &input);

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for p in 0..store.len() {
        for k in 0..store.tensors()[p].len() {
            let orig = store.tensors()[p].data()[k];
            store.tensors_mut()[p].data_mut()[k] = orig + h;
            let (up, _) = mlp_loss(&store, &mlp, &input);
            store.tensors_mut()[p].data_mut()[k] = orig - h;
            let (down, _) = mlp_loss(&store, &mlp, &input);
            store.tensors_mut()[p].data_mut()[k] = orig;
            let fd = (up - down) / (2.0 * h);
            let an = analytic[p].data()[k];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    assert!(worst < 1e-4, "max relative error {worst}");
}

#[test]
fn backward_is_linear_in_the_loss() {
    let mut rng = rng_stream(5, 0);
    let mut store = ParamStore::new();
    let mlp = Mlp::new(&mut store, "m", 3, &[4, 2], &mut rng);
    let input = Tensor::matrix(2, 3, (0..6).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();

    let grads_of = |which: u8| {
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let x = tape.leaf(input.clone());
        let h = mlp.forward(&mut tape, &bound, x).unwrap();
        let a = {
            let s = tape.square(h);
            tape.sum(s)
        };
        let b = {
            let e = tape.exp(h);
            tape.sum(e)
        };
        let loss = match which {
            0 => a,
            1 => b,
            _ => tape.add(a, b).unwrap(),
        };
        let g = tape.backward(loss).unwrap();
        store.collect_grads(&bound, &g)
    };
    let (ga, gb, gab) = (grads_of(0), grads_of(1), grads_of(2));
    for ((a, b), ab) in ga.iter().zip(&gb).zip(&gab) {
        for ((x, y), z) in a.data().iter().zip(b.data()).zip(ab.data()) {
            assert!((x + y - z).abs() <= 1e-12 * (1.0 + z.abs()));
        }
    }
}

#[test]
fn adam_zero_gradient_leaves_params_unchanged() {
    let mut params = vec![row(&[1.0, -2.0])];
    let before = params.clone();
    let mut adam = AdamState::new(AdamConfig::default(), &params);
    adam.step(&mut params, &[Tensor::zeros(vec![1, 2])]).unwrap();
    assert_eq!(params, before);
}

#[test]
fn adam_descends_on_parabola() {
    let mut params = vec![Tensor::scalar(1.0)];
    let mut adam = AdamState::new(AdamConfig { learning_rate: 0.001, ..AdamConfig::default() }, &params);
    let grad = Tensor::scalar(2.0 * params[0].item());
    adam.step(&mut params, &[grad]).unwrap();
    assert!(params[0].item() < 1.0);
}

#[test]
fn adam_converges_on_convex_quadratic() {
    // f(x) = Σ a_i (x_i - c_i)², minimizer c.
    let a = [1.0, 3.0, 0.5];
    let c = [0.3, -1.2, 2.0];
    let mut params = vec![row(&[1.0, 1.0, 1.0])];
    let mut adam = AdamState::new(AdamConfig::default(), &params);
    for _ in 0..10_000 {
        let x = params[0].data();
        let g: Vec<f64> = (0..3).map(|i| 2.0 * a[i] * (x[i] - c[i])).collect();
        adam.step(&mut params, &[row(&g)]).unwrap();
    }
    for i in 0..3 {
        assert!((params[0].data()[i] - c[i]).abs() < 1e-3, "{:?}", params[0].data());
    }
}
