use dactag_core::gradsuite::run_suite;
use dactag_core::numcore::{Graph, Tensor};
use proptest::prelude::*;

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(-10.0..10.0f64, rows * cols).prop_map(move |d| Tensor::matrix(rows, cols, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn every_case_passes_for_random_seeds(seed in any::<u64>()) {
        for r in run_suite(seed, None).unwrap() {
            prop_assert!(r.passed(), "{} {:.3e}", r.name, r.max_relative_error);
        }
    }
}

proptest! {
    #[test]
    fn softmax_sums_to_one(logits in prop::collection::vec(-50.0..50.0f64, 1..60)) {
        let mut g = Graph::new();
        let x = g.constant(Tensor::vector(logits).unwrap());
        let p = g.softmax(x).unwrap();
        let v = g.value(p);
        prop_assert!(v.data().iter().all(|&q| q >= 0.0));
        prop_assert!((v.sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn max_pool_ignores_row_order_and_dominated_rows(
        h in (1usize..8, 1usize..5).prop_flat_map(|(t, d)| matrix(t, d)),
        seed in any::<u64>(),
        slack in 0.0..5.0f64,
    ) {
        let pool = |t: &Tensor| {
            let mut g = Graph::new();
            let x = g.constant(t.clone());
            let y = g.max_pool_time(x).unwrap();
            g.value(y).data().to_vec()
        };
        let base = pool(&h);
        let (rows, d) = (h.shape()[0], h.shape()[1]);
        let mut order: Vec<usize> = (0..rows).collect();
        let mut s = seed;
        for i in (1..rows).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            order.swap(i, (s >> 33) as usize % (i + 1));
        }
        let permuted: Vec<Vec<f64>> = order.iter().map(|&i| h.row(i).to_vec()).collect();
        prop_assert_eq!(pool(&Tensor::from_rows(&permuted).unwrap()), base.clone());

        let mut extended: Vec<Vec<f64>> = (0..rows).map(|i| h.row(i).to_vec()).collect();
        extended.push((0..d).map(|j| base[j] - slack).collect());
        prop_assert_eq!(pool(&Tensor::from_rows(&extended).unwrap()), base);
    }

    #[test]
    fn forward_values_are_reproducible(a in matrix(3, 4), b in matrix(4, 2)) {
        let run = || {
            let mut g = Graph::new();
            let x = g.constant(a.clone());
            let y = g.constant(b.clone());
            let m = g.matmul(x, y).unwrap();
            let t = g.tanh(m).unwrap();
            let s = g.sigmoid(t).unwrap();
            g.value(s).clone()
        };
        prop_assert_eq!(run(), run());
    }
}

#[test]
fn f32_graph_matches_f64_closely() {
    let a = Tensor::<f64>::matrix(2, 2, vec![0.5, -1.0, 2.0, 0.25]).unwrap();
    let run64 = {
        let mut g = Graph::<f64>::new();
        let x = g.constant(a.clone());
        let y = g.tanh(x).unwrap();
        g.value(y).clone()
    };
    let mut g = Graph::<f32>::new();
    let x = g.constant(a.cast::<f32>());
    let y = g.tanh(x).unwrap();
    for (p, q) in g.value(y).data().iter().zip(run64.data()) {
        assert!((f64::from(*p) - q).abs() < 1e-6);
    }
}
