//! Triplet and centroid objectives and the contrastive training loop.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{leave_one_out_accuracy, nearest_centroid_accuracy};
use crate::datagen::{DatasetSplits, Sample};
use crate::nn::{AdamState, BraidEncoder, NnError};

#[derive(Debug, Error)]
pub enum ContrastiveError {
    #[error("embedding dimensions differ ({0} vs {1})")]
    DimensionMismatch(usize, usize),
    #[error("no triplet satisfies the mining condition")]
    NoTripletsFound,
    #[error("class {0} has no centroid")]
    UnknownClass(usize),
    #[error("invalid loss configuration: {0}")]
    InvalidConfig(String),
    #[error("training set is empty")]
    EmptyDataset,
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    TripletSemiHard,
    Centroid,
    CentroidRepulsion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CentroidRefresh {
    /// Moving average over touched classes, full recomputation every epoch.
    Ema,
    /// Full recomputation after every step.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub kind: LossKind,
    pub kappa: f64,
    pub lambda: f64,
    pub batch_size: usize,
    /// Representatives of one class drawn together into a batch.
    pub reps_per_batch_class: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub refresh: CentroidRefresh,
    pub ema_decay: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            kind: LossKind::CentroidRepulsion,
            kappa: 1.0,
            lambda: 0.02,
            batch_size: 128,
            reps_per_batch_class: 4,
            epochs: 2000,
            learning_rate: 5e-3,
            patience: 20,
            refresh: CentroidRefresh::Full,
            ema_decay: 0.9,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), ContrastiveError> {
        let bad = |m: &str| Err(ContrastiveError::InvalidConfig(m.into()));
        if !(self.kappa > 0.0) {
            return bad("kappa must be positive");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda must be nonnegative");
        }
        if self.batch_size == 0 || self.reps_per_batch_class == 0 {
            return bad("batch sizes must be positive");
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return bad("ema_decay must lie in [0, 1)");
        }
        Ok(())
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `max(|a - p|^2 - |a - n|^2 + kappa, 0)`.
pub fn triplet_loss(a: &[f64], p: &[f64], n: &[f64], kappa: f64) -> Result<f64, ContrastiveError> {
    if a.len() != p.len() || a.len() != n.len() {
        return Err(ContrastiveError::DimensionMismatch(a.len(), p.len().max(n.len())));
    }
    let d = |x: &[f64]| -> f64 { a.iter().zip(x).map(|(u, v)| (u - v) * (u - v)).sum() };
    Ok((d(p) - d(n) + kappa).max(0.0))
}

fn pairwise_sq(emb: &Array2<f64>) -> Array2<f64> {
    let n = emb.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let v = sq_dist(emb.row(i), emb.row(j));
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Every anchor-positive pair that has a semi-hard negative, with one such
/// negative chosen uniformly.
pub fn mine_semi_hard<R: Rng + ?Sized>(
    emb: &Array2<f64>,
    labels: &[usize],
    kappa: f64,
    rng: &mut R,
) -> Result<Vec<(usize, usize, usize)>, ContrastiveError> {
    let d = pairwise_sq(emb);
    let mut out = Vec::new();
    let mut candidates = Vec::new();
    for a in 0..labels.len() {
        for p in 0..labels.len() {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            let dap = d[[a, p]];
            candidates.clear();
            candidates.extend((0..labels.len()).filter(|&n| {
                labels[n] != labels[a] && dap < d[[a, n]] && d[[a, n]] < dap + kappa
            }));
            if !candidates.is_empty() {
                out.push((a, p, candidates[rng.random_range(0..candidates.len())]));
            }
        }
    }
    if out.is_empty() {
        Err(ContrastiveError::NoTripletsFound)
    } else {
        Ok(out)
    }
}

/// For each anchor-positive pair, the closest negative that still violates
/// the margin.
pub fn mine_hardest(emb: &Array2<f64>, labels: &[usize], kappa: f64) -> Vec<(usize, usize, usize)> {
    let d = pairwise_sq(emb);
    let mut out = Vec::new();
    for a in 0..labels.len() {
        for p in 0..labels.len() {
            if p == a || labels[p] != labels[a] {
                continue;
            }
            let hardest = (0..labels.len())
                .filter(|&n| labels[n] != labels[a] && d[[a, n]] < d[[a, p]] + kappa)
                .min_by(|&x, &y| d[[a, x]].total_cmp(&d[[a, y]]));
            if let Some(n) = hardest {
                out.push((a, p, n));
            }
        }
    }
    out
}

/// Mean triplet loss and its gradient with respect to the embeddings.
pub fn triplet_batch_loss(emb: &Array2<f64>, triples: &[(usize, usize, usize)], kappa: f64) -> (f64, Array2<f64>) {
    let mut grad = Array2::zeros(emb.dim());
    if triples.is_empty() {
        return (0.0, grad);
    }
    let scale = 1.0 / triples.len() as f64;
    let mut total = 0.0;
    for &(a, p, n) in triples {
        let (ea, ep, en) = (emb.row(a), emb.row(p), emb.row(n));
        let l = sq_dist(ea, ep) - sq_dist(ea, en) + kappa;
        if l <= 0.0 {
            continue;
        }
        total += l;
        let ga = (&en - &ep) * (2.0 * scale);
        let gp = (&ep - &ea) * (2.0 * scale);
        let gn = (&ea - &en) * (2.0 * scale);
        grad.row_mut(a).scaled_add(1.0, &ga);
        grad.row_mut(p).scaled_add(1.0, &gp);
        grad.row_mut(n).scaled_add(1.0, &gn);
    }
    (total * scale, grad)
}

/// Per-class centroids in embedding space, rows sorted by class id.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidTable {
    class_ids: Vec<usize>,
    centroids: Array2<f64>,
    counts: Vec<usize>,
}

impl CentroidTable {
    /// Class means of `emb`.
    pub fn from_embeddings(emb: &Array2<f64>, labels: &[usize]) -> Self {
        let mut rows: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &l) in labels.iter().enumerate() {
            rows.entry(l).or_default().push(i);
        }
        let mut centroids = Array2::zeros((rows.len(), emb.ncols()));
        let mut counts = Vec::with_capacity(rows.len());
        for (k, members) in rows.values().enumerate() {
            let mut c = centroids.row_mut(k);
            for &i in members {
                c += &emb.row(i);
            }
            c /= members.len() as f64;
            counts.push(members.len());
        }
        Self { class_ids: rows.into_keys().collect(), centroids, counts }
    }

    pub fn new(class_ids: Vec<usize>, centroids: Array2<f64>, counts: Vec<usize>) -> Self {
        assert_eq!(class_ids.len(), centroids.nrows());
        assert!(class_ids.windows(2).all(|w| w[0] < w[1]), "class ids must be sorted");
        Self { class_ids, centroids, counts }
    }

    pub fn class_ids(&self) -> &[usize] {
        &self.class_ids
    }

    pub fn centroids(&self) -> &Array2<f64> {
        &self.centroids
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    pub fn row_of(&self, class_id: usize) -> Option<usize> {
        self.class_ids.binary_search(&class_id).ok()
    }

    pub fn centroid(&self, class_id: usize) -> Option<ArrayView1<'_, f64>> {
        self.row_of(class_id).map(|r| self.centroids.row(r))
    }

    /// `max(kappa - |c_i - c_j|, 0)` summed over ordered pairs `i != j`.
    pub fn repulsion(&self, kappa: f64) -> f64 {
        let m = self.len();
        let mut total = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                let d = sq_dist(self.centroids.row(i), self.centroids.row(j)).sqrt();
                total += 2.0 * (kappa - d).max(0.0);
            }
        }
        total
    }
}

/// Groups sample rows by class, preserving first-seen order of classes.
fn group_by_class(labels: &[usize]) -> Vec<(usize, Vec<usize>)> {
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    let mut index: BTreeMap<usize, usize> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        let g = *index.entry(l).or_insert_with(|| {
            groups.push((l, Vec::new()));
            groups.len() - 1
        });
        groups[g].1.push(i);
    }
    groups
}

/// Mean over classes of the mean squared distance to the class centroid.
pub fn centroid_loss(table: &CentroidTable, emb: &Array2<f64>, labels: &[usize]) -> Result<f64, ContrastiveError> {
    Ok(centroid_attraction(table, emb, labels)?.0)
}

/// Centroid loss plus `lambda` times the table's repulsion term.
pub fn centroid_repulsion_loss(
    table: &CentroidTable,
    emb: &Array2<f64>,
    labels: &[usize],
    kappa: f64,
    lambda: f64,
) -> Result<f64, ContrastiveError> {
    Ok(centroid_loss(table, emb, labels)? + lambda * table.repulsion(kappa))
}

/// Centroid loss with the centroids held fixed, and its gradient.
fn centroid_attraction(
    table: &CentroidTable,
    emb: &Array2<f64>,
    labels: &[usize],
) -> Result<(f64, Array2<f64>), ContrastiveError> {
    let groups = group_by_class(labels);
    let mut grad = Array2::zeros(emb.dim());
    if groups.is_empty() {
        return Ok((0.0, grad));
    }
    let m = groups.len() as f64;
    let mut total = 0.0;
    for (class, members) in &groups {
        let c = table.centroid(*class).ok_or(ContrastiveError::UnknownClass(*class))?;
        let n = members.len() as f64;
        for &i in members {
            let diff = &emb.row(i) - &c;
            total += diff.dot(&diff) / (n * m);
            grad.row_mut(i).assign(&(diff * (2.0 / (n * m))));
        }
    }
    Ok((total, grad))
}

/// Repulsion with the batch's classes represented by their batch means and
/// the remaining classes by the table; gradient flows through the means.
/// The returned value covers pairs with at least one batch class.
fn batch_repulsion(
    table: &CentroidTable,
    emb: &Array2<f64>,
    labels: &[usize],
    kappa: f64,
    lambda: f64,
) -> Result<(f64, Array2<f64>), ContrastiveError> {
    let groups = group_by_class(labels);
    let mut grad = Array2::zeros(emb.dim());
    let mut centres = table.centroids.clone();
    let mut in_batch = vec![None; table.len()];
    for (g, (class, members)) in groups.iter().enumerate() {
        let row = table.row_of(*class).ok_or(ContrastiveError::UnknownClass(*class))?;
        let mut mean = centres.row_mut(row);
        mean.fill(0.0);
        for &i in members {
            mean += &emb.row(i);
        }
        mean /= members.len() as f64;
        in_batch[row] = Some(g);
    }

    // Only pairs touching a batch class carry gradient; the rest are skipped.
    let mut total = 0.0;
    for i in 0..table.len() {
        if in_batch[i].is_none() {
            continue;
        }
        for j in 0..table.len() {
            if j == i || (in_batch[j].is_some() && j < i) {
                continue;
            }
            let diff = &centres.row(i) - &centres.row(j);
            let d = diff.dot(&diff).sqrt();
            if d >= kappa {
                continue;
            }
            total += 2.0 * lambda * (kappa - d);
            if d < 1e-12 {
                continue;
            }
            // d/dc_i of 2 (kappa - |c_i - c_j|)
            let unit = diff / d;
            for (row, sign) in [(i, -1.0), (j, 1.0)] {
                if let Some(g) = in_batch[row] {
                    let members = &groups[g].1;
                    let w = sign * 2.0 * lambda / members.len() as f64;
                    for &k in members {
                        grad.row_mut(k).scaled_add(w, &unit);
                    }
                }
            }
        }
    }
    Ok((total, grad))
}

/// Refreshes centroids to the class means of `emb`.
pub fn update_centroids(table: &CentroidTable, emb: &Array2<f64>, labels: &[usize]) -> CentroidTable {
    let fresh = CentroidTable::from_embeddings(emb, labels);
    let mut out = table.clone();
    for (k, &class) in fresh.class_ids.iter().enumerate() {
        match out.row_of(class) {
            Some(r) => {
                out.centroids.row_mut(r).assign(&fresh.centroids.row(k));
                out.counts[r] = fresh.counts[k];
            }
            None => return merge_tables(&out, &fresh),
        }
    }
    out
}

fn merge_tables(old: &CentroidTable, fresh: &CentroidTable) -> CentroidTable {
    let mut rows: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    for (k, &c) in old.class_ids.iter().enumerate() {
        rows.insert(c, (old.centroids.row(k).to_vec(), old.counts[k]));
    }
    for (k, &c) in fresh.class_ids.iter().enumerate() {
        rows.insert(c, (fresh.centroids.row(k).to_vec(), fresh.counts[k]));
    }
    let dim = fresh.dim().max(old.dim());
    let mut centroids = Array2::zeros((rows.len(), dim));
    let mut counts = Vec::new();
    for (r, (v, n)) in rows.values().enumerate() {
        centroids.row_mut(r).assign(&ArrayView1::from(v.as_slice()));
        counts.push(*n);
    }
    CentroidTable { class_ids: rows.into_keys().collect(), centroids, counts }
}

fn ema_update(table: &mut CentroidTable, emb: &Array2<f64>, labels: &[usize], decay: f64) {
    for (class, members) in group_by_class(labels) {
        if let Some(r) = table.row_of(class) {
            let mut mean = ndarray::Array1::zeros(emb.ncols());
            for &i in &members {
                mean += &emb.row(i);
            }
            mean /= members.len() as f64;
            let mut c = table.centroids.row_mut(r);
            c *= decay;
            c.scaled_add(1.0 - decay, &mean);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub loss: f64,
    pub in_dist_acc: f64,
    pub out_dist_acc: f64,
}

pub fn write_log<W: Write>(log: &[LogRecord], mut out: W) -> Result<(), ContrastiveError> {
    for rec in log {
        serde_json::to_writer(&mut out, rec).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Encoder from the epoch with the best in-distribution accuracy.
    pub model: BraidEncoder,
    pub table: CentroidTable,
    pub log: Vec<LogRecord>,
    pub best_epoch: usize,
    pub best_in_dist_acc: f64,
    pub epochs_run: usize,
}

/// Class-balanced shuffled batches: each class's rows are cut into groups of
/// `k` and the groups are shuffled and packed into batches.
fn epoch_batches<R: Rng + ?Sized>(labels: &[usize], batch_size: usize, k: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut chunks: Vec<Vec<usize>> = Vec::new();
    for (_, mut members) in group_by_class(labels) {
        members.shuffle(rng);
        chunks.extend(members.chunks(k).map(<[usize]>::to_vec));
    }
    chunks.shuffle(rng);
    let mut batches = Vec::new();
    let mut current: Vec<usize> = Vec::new();
    for chunk in chunks {
        if !current.is_empty() && current.len() + chunk.len() > batch_size {
            batches.push(std::mem::take(&mut current));
        }
        current.extend(chunk);
    }
    if !current.is_empty() {
        batches.push(current);
    }
    batches
}

fn select_rows(x: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    x.select(Axis(0), rows)
}

/// Trains `model` in place of a copy and returns the best epoch's encoder.
/// In-distribution accuracy on `splits.in_dist_test` drives early stopping.
pub fn train_contrastive<R: Rng + ?Sized>(
    model: &BraidEncoder,
    splits: &DatasetSplits,
    cfg: &LossConfig,
    rng: &mut R,
) -> Result<TrainOutcome, ContrastiveError> {
    cfg.validate()?;
    if splits.train.is_empty() {
        return Err(ContrastiveError::EmptyDataset);
    }
    let encode = |s: &[Sample]| model.input.encode_batch(s.iter().map(|s| &s.word));
    let labels_of = |s: &[Sample]| s.iter().map(|s| s.class_id).collect::<Vec<_>>();
    let x_train = encode(&splits.train)?;
    let y_train = labels_of(&splits.train);
    let x_in = encode(&splits.in_dist_test)?;
    let y_in = labels_of(&splits.in_dist_test);
    let x_out = encode(&splits.out_dist_test)?;
    let y_out = labels_of(&splits.out_dist_test);

    let mut current = model.clone();
    let mut adam = AdamState::new(cfg.learning_rate);
    let mut table = CentroidTable::from_embeddings(&current.net.forward(&x_train)?, &y_train);

    let evaluate = |m: &BraidEncoder| -> Result<(CentroidTable, f64, f64), ContrastiveError> {
        let t = CentroidTable::from_embeddings(&m.net.forward(&x_train)?, &y_train);
        let acc_in = if y_in.is_empty() {
            nearest_centroid_accuracy(&m.net.forward(&x_train)?, &y_train, &t)
        } else {
            nearest_centroid_accuracy(&m.net.forward(&x_in)?, &y_in, &t)
        };
        let acc_out = leave_one_out_accuracy(&m.net.forward(&x_out)?, &y_out);
        Ok((t, acc_in, acc_out))
    };

    let (t0, acc0, _) = evaluate(&current)?;
    let mut best = (acc0, 0usize, current.clone(), t0);
    let mut log = Vec::new();
    let mut step = 0usize;
    let mut since_best = 0usize;
    let mut epochs_run = 0;

    for epoch in 1..=cfg.epochs {
        epochs_run = epoch;
        let mut loss_sum = 0.0;
        let mut loss_steps = 0usize;
        for batch in epoch_batches(&y_train, cfg.batch_size, cfg.reps_per_batch_class, rng) {
            let xb = select_rows(&x_train, &batch);
            let yb: Vec<usize> = batch.iter().map(|&i| y_train[i]).collect();
            let (out, cache) = current.net.forward_train(&xb)?;
            let (loss, dout) = match cfg.kind {
                LossKind::TripletSemiHard => {
                    let triples = match mine_semi_hard(&out, &yb, cfg.kappa, rng) {
                        Ok(t) => t,
                        Err(_) => mine_hardest(&out, &yb, cfg.kappa),
                    };
                    if triples.is_empty() {
                        continue;
                    }
                    triplet_batch_loss(&out, &triples, cfg.kappa)
                }
                LossKind::Centroid | LossKind::CentroidRepulsion => {
                    let (mut loss, mut grad) = centroid_attraction(&table, &out, &yb)?;
                    if cfg.kind == LossKind::CentroidRepulsion && cfg.lambda > 0.0 {
                        let (r, g) = batch_repulsion(&table, &out, &yb, cfg.kappa, cfg.lambda)?;
                        loss += r;
                        grad += &g;
                    }
                    (loss, grad)
                }
            };
            let grads = current.net.backward(&cache, &dout);
            adam.update(current.net.parameters_mut(), &grads)?;
            step += 1;
            loss_sum += loss;
            loss_steps += 1;

            if cfg.kind != LossKind::TripletSemiHard {
                match cfg.refresh {
                    CentroidRefresh::Ema => {
                        let fresh = current.net.forward(&xb)?;
                        ema_update(&mut table, &fresh, &yb, cfg.ema_decay);
                    }
                    CentroidRefresh::Full => {
                        table = CentroidTable::from_embeddings(&current.net.forward(&x_train)?, &y_train);
                    }
                }
            }
        }

        let (fresh, acc_in, acc_out) = evaluate(&current)?;
        table = fresh;
        log.push(LogRecord {
            step,
            loss: if loss_steps > 0 { loss_sum / loss_steps as f64 } else { 0.0 },
            in_dist_acc: acc_in,
            out_dist_acc: acc_out,
        });
        if acc_in > best.0 {
            best = (acc_in, epoch, current.clone(), table.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    let (best_in_dist_acc, best_epoch, model, table) = best;
    Ok(TrainOutcome { model, table, log, best_epoch, best_in_dist_acc, epochs_run })
}
