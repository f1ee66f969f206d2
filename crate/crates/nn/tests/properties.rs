use obslab_nn::{
    build_preset, load_checkpoint, save_checkpoint, LayerSpec, Network, Preset, Shape, StochasticKey, Tensor,
};
use proptest::prelude::*;

fn small_net(seed: u64) -> Network<f32> {
    Network::new(
        Shape::image(2, 8, 8),
        vec![
            LayerSpec::BatchFlip { p: 0.5 },
            LayerSpec::conv(2, 4, 3, 1),
            LayerSpec::BatchNorm2d { features: 4 },
            LayerSpec::leaky(),
            LayerSpec::pool(2),
            LayerSpec::Dropout { p: 0.3 },
            LayerSpec::Reshape { features: 64 },
            LayerSpec::Linear { inputs: 64, outputs: 5 },
            LayerSpec::LogSoftMax,
        ],
        seed,
    )
    .unwrap()
}

fn batch(values: &[f32]) -> Tensor<f32> {
    Tensor::new(vec![values.len() / 128, 2, 8, 8], values.to_vec()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn log_softmax_rows_normalize_and_ignore_shifts(
        rows in prop::collection::vec(prop::collection::vec(-30.0f64..30.0, 6), 1..5),
        shift in -50.0f64..50.0,
    ) {
        let net = Network::<f64>::new(Shape::Flat(6), vec![LayerSpec::LogSoftMax], 0).unwrap();
        let flat: Vec<f64> = rows.concat();
        let shifted: Vec<f64> = flat.iter().map(|v| v + shift).collect();
        let a = net.infer(&Tensor::from_f64(vec![rows.len(), 6], &flat).unwrap()).unwrap();
        let b = net.infer(&Tensor::from_f64(vec![rows.len(), 6], &shifted).unwrap()).unwrap();
        for i in 0..rows.len() {
            let total: f64 = a.item(i).iter().map(|v| v.exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-5);
        }
        for (x, y) in a.data().iter().zip(b.data()) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn train_mode_is_a_function_of_the_key(
        values in prop::collection::vec(-1.0f32..1.0, 256),
        seed in any::<u64>(),
        epoch in 0u64..1000,
        b in 0u64..1000,
    ) {
        let x = batch(&values);
        let key = StochasticKey::new(seed, epoch, b);
        let mut first = small_net(4);
        let mut second = small_net(4);
        let y1 = first.forward_train(&x, key).unwrap();
        let y2 = second.forward_train(&x, key).unwrap();
        prop_assert_eq!(y1.data(), y2.data());
        let g1 = first.backward(&Tensor::new(y1.shape().to_vec(), vec![0.1; y1.len()]).unwrap()).unwrap();
        let g2 = second.backward(&Tensor::new(y2.shape().to_vec(), vec![0.1; y2.len()]).unwrap()).unwrap();
        prop_assert_eq!(g1.data(), g2.data());
        // eval mode ignores the key and repeats exactly
        let (e1, e2) = (first.infer(&x).unwrap(), first.infer(&x).unwrap());
        prop_assert_eq!(e1.data(), e2.data());
    }
}

#[test]
fn checkpoint_file_round_trip_preserves_eval_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut net: Network<f32> = build_preset(Preset::Mnist, 10, 9).unwrap();
    let values: Vec<f32> = (0..3 * 1024).map(|i| ((i * 37) % 23) as f32 / 23.0).collect();
    let x = Tensor::new(vec![3, 1, 32, 32], values).unwrap();
    net.set_iteration(42);
    let path = dir.path().join("net.ckpt");
    save_checkpoint(&net, &path).unwrap();
    let back = load_checkpoint(&path).unwrap();
    assert_eq!(back.iteration(), 42);
    assert_eq!(back.specs(), net.specs());
    assert_eq!(back.infer(&x).unwrap().data(), net.infer(&x).unwrap().data());
    assert!(save_checkpoint(&small_net(1), &dir.path().join("bare.ckpt")).is_err());
}
