use braidforge::analysis::nearest_centroid_accuracy;
use braidforge::contrastive::{
    centroid_loss, centroid_repulsion_loss, mine_semi_hard, train_contrastive, triplet_loss, update_centroids,
    write_log, CentroidTable, ContrastiveError, LossConfig, LossKind,
};
use braidforge::datagen::{generate_dataset, split_dataset, DatasetSplits, GenParams};
use braidforge::nn::{Architecture, BraidEncoder, Encoder, InputEncoding};
use ndarray::{array, Array2};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

#[test]
fn triplet_loss_examples() {
    assert_eq!(triplet_loss(&[0.0], &[0.0], &[1.0], 1.0).unwrap(), 0.0);
    assert_eq!(triplet_loss(&[0.0], &[1.0], &[0.0], 0.5).unwrap(), 1.5);
    assert_eq!(triplet_loss(&[0.0, 0.0], &[0.0, 0.0], &[1.0, 1.0], 1.0).unwrap(), 0.0);
    assert!(matches!(triplet_loss(&[0.0], &[0.0, 1.0], &[0.0], 1.0), Err(ContrastiveError::DimensionMismatch { .. })));
}

#[test]
fn semi_hard_mining_respects_the_margin() {
    // d(a,p) = 1, d(a,n) = 1.5 with kappa = 1 is semi-hard.
    let emb = array![[0.0], [1.0], [1.5f64.sqrt()]];
    let labels = [0, 0, 1];
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let t = mine_semi_hard(&emb, &labels, 1.0, &mut rng).unwrap();
    assert!(t.contains(&(0, 1, 2)));
    // Negative closer than the positive.
    let emb = array![[0.0], [2.0], [0.5]];
    let t = mine_semi_hard(&emb, &labels, 1.0, &mut rng).unwrap_or_default();
    assert!(!t.contains(&(0, 1, 2)));
    // Negatives beyond the margin.
    let emb = array![[0.0], [0.1], [10.0]];
    assert!(matches!(mine_semi_hard(&emb, &labels, 1.0, &mut rng), Err(ContrastiveError::NoTripletsFound)));
}

#[test]
fn centroid_loss_examples() {
    let emb = array![[-1.0], [1.0]];
    let table = CentroidTable::from_embeddings(&emb, &[0, 0]);
    assert_eq!(centroid_loss(&table, &emb, &[0, 0]).unwrap(), 1.0);

    // Class 0 has mean squared distance 1, class 1 has 4.
    let emb = array![[-1.0], [1.0], [8.0], [12.0]];
    let labels = [0, 0, 1, 1];
    let table = CentroidTable::from_embeddings(&emb, &labels);
    assert_eq!(centroid_loss(&table, &emb, &labels).unwrap(), 2.5);
    assert!(matches!(centroid_loss(&table, &emb, &[0, 0, 1, 7]), Err(ContrastiveError::UnknownClass(7))));
}

#[test]
fn repulsion_counts_ordered_pairs() {
    let table = CentroidTable::new(vec![0, 1], array![[0.0, 0.0], [0.0, 0.0]], vec![1, 1]);
    assert_eq!(table.repulsion(1.0), 2.0);
    let emb = array![[0.0, 0.0], [0.0, 0.0]];
    assert_eq!(centroid_repulsion_loss(&table, &emb, &[0, 1], 1.0, 1.0).unwrap(), 2.0);
    assert_eq!(centroid_repulsion_loss(&table, &emb, &[0, 1], 1.0, 0.0).unwrap(), 0.0);
    let far = CentroidTable::new(vec![0, 1], array![[0.0, 0.0], [3.0, 4.0]], vec![1, 1]);
    assert_eq!(far.repulsion(5.0), 0.0);
    assert_eq!(far.repulsion(6.0), 2.0);
}

#[test]
fn update_centroids_takes_class_means() {
    let emb = array![[0.0, 1.0], [2.0, 1.0], [5.0, 5.0]];
    let stale = CentroidTable::new(vec![0, 1], Array2::zeros((2, 2)), vec![2, 1]);
    let t = update_centroids(&stale, &emb, &[0, 0, 1]);
    assert_eq!(t.centroid(0).unwrap().to_vec(), vec![1.0, 1.0]);
    assert_eq!(t.centroid(1).unwrap().to_vec(), vec![5.0, 5.0]);
}

fn toy_problem(seed: u64) -> (BraidEncoder, DatasetSplits) {
    let params = GenParams {
        n_letters: 10,
        n_strands: 4,
        n_scrambles: 3,
        n_classes: 24,
        reps_per_class: 10,
        seed,
        ..GenParams::default()
    };
    let ds = generate_dataset(&params).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let splits = split_dataset(&ds, 3, 0.25, &mut rng).unwrap();
    let input = InputEncoding::one_hot(ds.word_length(), ds.max_strands());
    let arch = Architecture::default_mlp(input.dim(), 8);
    let model = BraidEncoder { net: Encoder::new(&arch, &mut rng), input };
    (model, splits)
}

#[test]
fn zero_epochs_leave_the_encoder_unchanged() {
    let (model, splits) = toy_problem(1);
    let cfg = LossConfig { epochs: 0, ..LossConfig::default() };
    let out = train_contrastive(&model, &splits, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(out.model, model);
    assert!(out.log.is_empty());
    assert_eq!(out.epochs_run, 0);
}

#[test]
fn training_is_reproducible_and_clusters_classes() {
    let (model, splits) = toy_problem(2);
    let cfg = LossConfig { epochs: 40, learning_rate: 3e-3, lambda: 0.1, ..LossConfig::default() };
    let a = train_contrastive(&model, &splits, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let b = train_contrastive(&model, &splits, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let (mut la, mut lb) = (Vec::new(), Vec::new());
    write_log(&a.log, &mut la).unwrap();
    write_log(&b.log, &mut lb).unwrap();
    assert_eq!(la, lb);
    assert_eq!(a.model, b.model);

    let x = |s: &[braidforge::datagen::Sample]| a.model.embed(s.iter().map(|s| &s.word)).unwrap();
    let labels = |s: &[braidforge::datagen::Sample]| s.iter().map(|s| s.class_id).collect::<Vec<_>>();
    let train_emb = x(&splits.train);
    let table = CentroidTable::from_embeddings(&train_emb, &labels(&splits.train));
    let before = {
        let e = model.embed(splits.train.iter().map(|s| &s.word)).unwrap();
        let t = CentroidTable::from_embeddings(&e, &labels(&splits.train));
        nearest_centroid_accuracy(&model.embed(splits.in_dist_test.iter().map(|s| &s.word)).unwrap(), &labels(&splits.in_dist_test), &t)
    };
    let after = nearest_centroid_accuracy(&x(&splits.in_dist_test), &labels(&splits.in_dist_test), &table);
    assert!(after > before, "accuracy {before} -> {after}");
    assert!((after - a.best_in_dist_acc).abs() < 1e-12);
}

#[test]
fn triplet_training_runs() {
    let (model, splits) = toy_problem(3);
    let cfg = LossConfig { kind: LossKind::TripletSemiHard, epochs: 5, ..LossConfig::default() };
    let out = train_contrastive(&model, &splits, &cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(out.log.iter().all(|r| r.loss.is_finite() && r.loss >= 0.0));
}

#[test]
fn invalid_configs_are_rejected() {
    let (model, splits) = toy_problem(4);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for cfg in [
        LossConfig { kappa: 0.0, ..LossConfig::default() },
        LossConfig { lambda: -1.0, ..LossConfig::default() },
        LossConfig { batch_size: 0, ..LossConfig::default() },
    ] {
        assert!(matches!(train_contrastive(&model, &splits, &cfg, &mut rng), Err(ContrastiveError::InvalidConfig(_))));
    }
}

fn arb_batch() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
    (2usize..12).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), n),
            prop::collection::vec(0usize..3, n),
        )
    })
}

fn to_array(rows: &[Vec<f64>]) -> Array2<f64> {
    Array2::from_shape_vec((rows.len(), 2), rows.concat()).unwrap()
}

proptest! {
    #[test]
    fn mined_triples_are_semi_hard((rows, labels) in arb_batch(), kappa in 0.1f64..3.0, seed in any::<u64>()) {
        let emb = to_array(&rows);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        if let Ok(triples) = mine_semi_hard(&emb, &labels, kappa, &mut rng) {
            for (a, p, n) in triples {
                let (dap, dan) = (sq(&rows[a], &rows[p]), sq(&rows[a], &rows[n]));
                prop_assert!(labels[a] == labels[p] && labels[a] != labels[n] && a != p);
                prop_assert!(dap < dan && dan < dap + kappa);
            }
        }
    }

    #[test]
    fn losses_are_nonnegative((rows, labels) in arb_batch(), kappa in 0.1f64..3.0, lambda in 0.0f64..2.0) {
        let emb = to_array(&rows);
        let table = CentroidTable::from_embeddings(&emb, &labels);
        prop_assert!(centroid_loss(&table, &emb, &labels).unwrap() >= 0.0);
        prop_assert!(centroid_repulsion_loss(&table, &emb, &labels, kappa, lambda).unwrap() >= 0.0);
        prop_assert!(triplet_loss(&rows[0], &rows[1], &rows[rows.len() - 1], kappa).unwrap() >= 0.0);
    }

    #[test]
    fn moving_toward_the_centroid_never_increases_the_loss(
        (rows, labels) in arb_batch(), pick in any::<prop::sample::Index>(), t in 0.0f64..1.0,
    ) {
        let emb = to_array(&rows);
        let table = CentroidTable::from_embeddings(&emb, &labels);
        let i = pick.index(rows.len());
        let c = table.centroid(labels[i]).unwrap().to_owned();
        let mut moved = emb.clone();
        let new_row = &emb.row(i) + &((&c - &emb.row(i)) * t);
        moved.row_mut(i).assign(&new_row);
        let before = centroid_loss(&table, &emb, &labels).unwrap();
        let after = centroid_loss(&table, &moved, &labels).unwrap();
        prop_assert!(after <= before + 1e-12);
    }
}
