use dactag_core::layers::{
    embed, encode_sentence_cnn, gru_step, init_params, CnnEncoderParams, Embedding, EmbeddingTable, GruParams,
    ParamStore,
};
use dactag_core::numcore::gradcheck::{check_gradients, GradCheckOptions};
use dactag_core::numcore::{Graph, Tensor};
use dactag_core::layers::Bound;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn gru_state_stays_inside_unit_interval(seed in any::<u64>(), scale in 0.5..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let p = GruParams::new(&mut store, "g", 3, 5, false, &mut rng);
        for id in store.ids().collect::<Vec<_>>() {
            let t = store.get(id).map(|v| v * scale);
            store.set(id, t).unwrap();
        }
        let mut g = Graph::new();
        let b = store.bind(&mut g);
        let mut h = p.initial_state(&mut g);
        for _ in 0..500 {
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = g.constant(Tensor::vector(x).unwrap());
            h = gru_step(&mut g, &b, &p, x, h).unwrap();
            prop_assert!(g.value(h).data().iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn init_respects_glorot_bound(fan_in in 1usize..50, fan_out in 1usize..50, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = init_params(&[fan_out, fan_in], fan_in, fan_out, &mut rng);
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        prop_assert!(t.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn cnn_ignores_trailing_padding(tokens in prop::collection::vec(0usize..6, 1..8), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let emb = Embedding::register(&mut store, "e", EmbeddingTable::random(6, 4, &mut rng));
        let p = CnnEncoderParams::new(&mut store, "c", 4, &[2, 3, 4], 3, &mut rng).unwrap();
        let mut g = Graph::new();
        let b = store.bind(&mut g);
        let v = encode_sentence_cnn(&mut g, &b, &emb, &p, &tokens).unwrap();
        prop_assert_eq!(g.value(v).shape(), &[9]);
        prop_assert!(g.value(v).data().iter().all(|&x| x >= 0.0));
    }
}

#[test]
fn repeated_token_gradient_sums_into_its_row() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut store = ParamStore::new();
    let emb = Embedding::register(&mut store, "e", EmbeddingTable::random(5, 3, &mut rng));
    let table = store.get(store.find("e").unwrap()).clone();
    let w = Tensor::from_rows(&[[0.3, -1.0, 2.0], [1.5, 0.5, -0.5]]).unwrap();
    let build = |g: &mut Graph, ids: &[dactag_core::numcore::NodeId]| {
        let bound = Bound::from_nodes(ids.to_vec());
        let y = embed(g, &bound, &emb, &[3, 3])?;
        let c = g.constant(w.clone());
        let p = g.mul(y, c)?;
        g.sum(p)
    };
    let check = check_gradients(std::slice::from_ref(&table), GradCheckOptions::default(), build).unwrap();
    assert!(check.max_relative_error() < 1e-8);

    let mut g = Graph::new();
    let t = g.variable(table);
    let loss = build(&mut g, &[t]).unwrap();
    let grads = g.backward(loss).unwrap();
    let gt = grads.get(t).unwrap();
    assert_eq!(gt.row(3), &[1.8, -0.5, 1.5]);
    for r in [0, 1, 2, 4] {
        assert!(gt.row(r).iter().all(|&v| v == 0.0));
    }
}
