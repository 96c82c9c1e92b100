use std::collections::BTreeMap;

use braidforge::datagen::{generate_dataset, GenParams};
use braidforge::invariants::PaddingSpec;
use braidforge::nn::{Architecture, BraidEncoder, Encoder, InputEncoding};
use braidforge::probe::{
    build_probe_dataset, rank_stability, run_probe, spearman, train_student, Channel, ProbeDataset, StudentConfig,
};
use ndarray::{Array2, Axis};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn teacher_and_data() -> (BraidEncoder, braidforge::datagen::KnotClassDataset) {
    let ds = generate_dataset(&GenParams {
        n_letters: 10,
        n_strands: 4,
        n_scrambles: 3,
        n_classes: 30,
        reps_per_class: 3,
        seed: 2,
        ..GenParams::default()
    })
    .unwrap();
    let input = InputEncoding::one_hot(ds.word_length(), ds.max_strands());
    let arch = Architecture::default_mlp(input.dim(), 6);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    (BraidEncoder { net: Encoder::new(&arch, &mut rng), input }, ds)
}

#[test]
fn probe_dataset_shapes() {
    let (teacher, ds) = teacher_and_data();
    let data = build_probe_dataset(&teacher, &ds, 200, 1.0).unwrap();
    assert_eq!(data.len(), 30);
    assert!(data.targets.ncols() <= 6, "pc_count is clipped to the embedding width");
    for (c, m) in &data.inputs {
        assert_eq!(m.nrows(), 30, "{c}");
    }
    let words = teacher.input.encode_batch(ds.classes.iter().map(|c| c.canonical())).unwrap();
    assert_eq!(data.inputs[&Channel::BraidWord], words);
    assert_eq!(data.inputs[&Channel::Scalars].ncols(), 3);

    let narrow = build_probe_dataset(&teacher, &ds, 2, 1.0).unwrap();
    assert_eq!(narrow.targets.ncols(), 2);
    let capped = build_probe_dataset(&teacher, &ds, 200, 0.5).unwrap();
    assert!(capped.targets.ncols() < data.targets.ncols());
}

#[test]
fn targets_are_centred_principal_coordinates() {
    let (teacher, ds) = teacher_and_data();
    let data = build_probe_dataset(&teacher, &ds, 200, 1.0).unwrap();
    let mean = data.targets.mean_axis(Axis(0)).unwrap();
    assert!(mean.iter().all(|m| m.abs() < 1e-9));
    let var = data.targets.var_axis(Axis(0), 0.0);
    assert!(var.windows(2).into_iter().all(|w| w[0] >= w[1] - 1e-12));
}

/// Targets that depend linearly on one channel and not at all on another.
fn planted(seed: u64) -> ProbeDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 120;
    let signal = Array2::from_shape_simple_fn((n, 3), || rng.random_range(-1.0..1.0));
    let noise = Array2::from_shape_simple_fn((n, 3), || rng.random_range(-1.0..1.0));
    let mix = ndarray::array![[1.0, 0.5], [-0.5, 1.0], [0.25, 0.0]];
    let targets = signal.dot(&mix);
    let mut inputs = BTreeMap::new();
    inputs.insert(Channel::Scalars, signal);
    inputs.insert(Channel::Jones, noise);
    ProbeDataset { class_ids: (0..n).collect(), inputs, targets, padding: PaddingSpec::centered(1, 1, 1) }
}

#[test]
fn planted_signal_ranks_first_and_beats_its_shuffle() {
    let data = planted(0);
    let cfg = StudentConfig { epochs: 150, learning_rate: 3e-3, ..StudentConfig::default() };
    let report = run_probe(&data, &cfg, 4).unwrap();
    assert_eq!(report.ranking()[0], Channel::Scalars);
    let s = report.get(Channel::Scalars).unwrap();
    assert!(s.relative_mse < 0.05, "{s:?}");
    assert!(s.val_mse < s.shuffled_val_mse);
    let var = data.target_variance();
    for c in &report.channels {
        let ratio = c.shuffled_val_mse / var;
        assert!((0.6..1.4).contains(&ratio), "{:?} shuffled ratio {ratio}", c.channel);
    }
}

#[test]
fn probes_are_reproducible() {
    let data = planted(1);
    let cfg = StudentConfig { epochs: 20, ..StudentConfig::default() };
    assert_eq!(run_probe(&data, &cfg, 9).unwrap(), run_probe(&data, &cfg, 9).unwrap());
}

#[test]
fn zero_targets_are_fit_by_every_channel() {
    let mut data = planted(2);
    data.targets.fill(0.0);
    let cfg = StudentConfig { epochs: 80, ..StudentConfig::default() };
    let report = run_probe(&data, &cfg, 0).unwrap();
    for c in &report.channels {
        assert!(c.val_mse < 1e-3, "{c:?}");
        assert_eq!(c.relative_mse, 0.0);
    }
}

#[test]
fn stability_of_identical_rankings_is_one() {
    let data = planted(3);
    let cfg = StudentConfig { epochs: 30, ..StudentConfig::default() };
    let a = run_probe(&data, &cfg, 0).unwrap();
    assert_eq!(rank_stability(&[a.clone(), a]), 1.0);
}

#[test]
fn mismatched_rows_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let x = Array2::zeros((5, 2));
    let y = Array2::zeros((4, 1));
    assert!(train_student(&x, &y, &StudentConfig::default(), &mut rng).is_err());
}

proptest! {
    #[test]
    fn spearman_is_bounded_and_symmetric(a in prop::collection::vec(-10.0f64..10.0, 5), b in prop::collection::vec(-10.0f64..10.0, 5)) {
        let r = spearman(&a, &b);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
        prop_assert!((r - spearman(&b, &a)).abs() < 1e-12);
        prop_assert!((spearman(&a, &a) - 1.0).abs() < 1e-12 || a.windows(2).all(|w| w[0] == w[1]));
    }
}
