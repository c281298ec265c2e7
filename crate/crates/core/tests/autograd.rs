use dinterp::autograd::{gradcheck, Graph, Tensor};
use proptest::prelude::*;

#[test]
fn operation_suite_passes() {
    let report = gradcheck::op_suite().unwrap();
    assert!(report.len() >= 20);
    for (name, err) in report {
        assert!(err < 1e-4, "{name}: {err}");
    }
}

fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
        }
    }
    out
}

proptest! {
    #[test]
    fn matmul_matches_triple_loop(
        (m, k, n) in (1usize..6, 1usize..6, 1usize..6),
        seed in any::<u64>(),
    ) {
        let mut s = seed | 1;
        let mut next = || { s ^= s << 13; s ^= s >> 7; s ^= s << 17; (s % 2001) as f64 / 1000.0 - 1.0 };
        let a: Vec<f64> = (0..m * k).map(|_| next()).collect();
        let b: Vec<f64> = (0..k * n).map(|_| next()).collect();
        let mut g = Graph::<f64>::new();
        let va = g.constant(Tensor::new(vec![m, k], a.clone()).unwrap());
        let vb = g.constant(Tensor::new(vec![k, n], b.clone()).unwrap());
        let c = g.matmul(va, vb).unwrap();
        let want = naive_matmul(&a, &b, m, k, n);
        for (x, y) in g.value(c).data().iter().zip(&want) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rows_are_distributions(vals in prop::collection::vec(-30.0f64..30.0, 12)) {
        let mut g = Graph::<f64>::new();
        let x = g.constant(Tensor::new(vec![3, 4], vals).unwrap());
        let s = g.softmax(x, 1).unwrap();
        for row in g.value(s).data().chunks(4) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&p| p >= 0.0));
        }
    }
}

#[test]
fn gradients_accumulate_over_reuse() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap());
    let y = g.mul(x, x).unwrap();
    let z = g.add(y, x).unwrap();
    let l = g.sum(z);
    g.backward(l).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[3.0, -3.0, 2.0]);
}
