mod common;

use braidforge::nn::{
    read_checkpoint, write_checkpoint, Activation, AdamState, Architecture, BraidEncoder, Encoder, Gradients,
    InputEncoding, SignedScaler,
};
use braidforge::BraidWord;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_input(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.5..1.5))
}

#[test]
fn gradients_match_finite_differences_for_every_activation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for act in [Activation::Tanh, Activation::LeakyRelu, Activation::Gelu, Activation::Identity] {
        let arch = Architecture::Mlp { input_dim: 5, hidden: vec![6, 4], activation: act, embedding_dim: 3 };
        let enc = Encoder::new(&arch, &mut rng);
        let x = random_input(&mut rng, 4, 5);
        let w = random_input(&mut rng, 4, 3);
        let err = common::max_gradient_error(&enc, &x, &w, 1e-5);
        assert!(err < 1e-4, "{act:?}: {err}");
    }
}

#[test]
fn conv_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let arch = Architecture::CircularConv {
        input_len: 6,
        filters: 5,
        conv_activation: Activation::Gelu,
        hidden: vec![4],
        activation: Activation::Tanh,
        embedding_dim: 2,
    };
    let enc = Encoder::new(&arch, &mut rng);
    let x = random_input(&mut rng, 3, 6);
    let w = random_input(&mut rng, 3, 2);
    assert!(common::max_gradient_error(&enc, &x, &w, 1e-5) < 1e-4);
}

#[test]
fn constant_loss_has_zero_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let enc = Encoder::new(&Architecture::default_conv(8, 4), &mut rng);
    let x = random_input(&mut rng, 5, 8);
    let (loss, g) = enc.gradients(&x, |out| (7.0, Array2::zeros(out.dim()))).unwrap();
    assert_eq!(loss, 7.0);
    assert_eq!(g.max_abs(), 0.0);
}

#[test]
fn linear_net_matches_normal_equation_gradient() {
    // loss = 0.5 |X W^T + b - Y|^2, so dW = R^T X and db = sum of residual rows.
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let arch = Architecture::Mlp { input_dim: 3, hidden: vec![], activation: Activation::Identity, embedding_dim: 2 };
    let enc = Encoder::new(&arch, &mut rng);
    let x = random_input(&mut rng, 6, 3);
    let y = random_input(&mut rng, 6, 2);
    let (_, g) = enc
        .gradients(&x, |out| {
            let r = out - &y;
            (0.5 * r.mapv(|v| v * v).sum(), r)
        })
        .unwrap();
    let Encoder::Mlp(m) = &enc else { unreachable!() };
    let residual = x.dot(&m.layers[0].weight.t()) + &m.layers[0].bias - &y;
    let dw = residual.t().dot(&x);
    for (a, b) in g.0[0].iter().zip(dw.iter()) {
        assert!((a - b).abs() < 1e-12);
    }
    for (a, b) in g.0[1].iter().zip(residual.sum_axis(ndarray::Axis(0)).iter()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn conv_embeddings_are_rotation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let len = 12;
    let enc = Encoder::new(&Architecture::default_conv(len, 16), &mut rng);
    let x: Vec<f64> = (0..len).map(|_| rng.random_range(-2.0..2.0)).collect();
    let base = enc.forward_one(&x).unwrap();
    for r in 1..len {
        let mut rotated = x.clone();
        rotated.rotate_left(r);
        let out = enc.forward_one(&rotated).unwrap();
        for (a, b) in base.iter().zip(&out) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

#[test]
fn training_step_reduces_a_quadratic_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut enc = Encoder::new(&Architecture::default_mlp(4, 2), &mut rng);
    let x = random_input(&mut rng, 16, 4);
    let mut adam = AdamState::new(1e-2);
    let loss_of = |enc: &Encoder| enc.forward(&x).unwrap().mapv(|v| v * v).sum();
    let before = loss_of(&enc);
    for _ in 0..50 {
        let (_, g): (f64, Gradients) = enc.gradients(&x, |out| (0.0, out * 2.0)).unwrap();
        adam.update(enc.parameters_mut(), &g).unwrap();
    }
    assert!(loss_of(&enc) < 0.1 * before);
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let words = [BraidWord::new(vec![1, -2, 3], 4).unwrap(), BraidWord::new(vec![2, 2], 3).unwrap()];
    for arch in [Architecture::default_mlp(5, 16), Architecture::default_conv(5, 16)] {
        let model = BraidEncoder {
            input: InputEncoding::signed(5, SignedScaler::fit(&words, 5)),
            net: Encoder::new(&arch, &mut rng),
        };
        let extra = serde_json::json!({"epochs": 3});
        let mut bytes = Vec::new();
        write_checkpoint(&model, &extra, &mut bytes).unwrap();
        assert!(bytes.starts_with(b"bf-ckpt-1\n"));
        let (back, back_extra) = read_checkpoint(bytes.as_slice()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back_extra, extra);
        assert_eq!(back.embed(&words).unwrap(), model.embed(&words).unwrap());
        let mut again = Vec::new();
        write_checkpoint(&back, &extra, &mut again).unwrap();
        assert_eq!(again, bytes);
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
    }
}
