//! PCA, effective dimension and cluster statistics of embeddings.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contrastive::CentroidTable;
use crate::datagen::{DatasetSplits, Sample};
use crate::nn::{BraidEncoder, NnError};

pub const REPORT_FORMAT: &str = "bf-report-1";

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least two samples, got {0}")]
    DegenerateInput(usize),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// Orthonormal rows, by decreasing eigenvalue.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub explained_ratio: Vec<f64>,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Coordinates along the first `k` components.
    pub fn transform(&self, x: &Array2<f64>, k: usize) -> Array2<f64> {
        let k = k.min(self.components.len());
        let mean = Array1::from(self.mean.clone());
        let centered = x - &mean;
        let mut basis = Array2::zeros((k, self.dim()));
        for (r, comp) in self.components.iter().take(k).enumerate() {
            basis.row_mut(r).assign(&ArrayView1::from(comp.as_slice()));
        }
        centered.dot(&basis.t())
    }

    pub fn inverse_transform(&self, coords: &Array2<f64>) -> Array2<f64> {
        let k = coords.ncols();
        let mut basis = Array2::zeros((k, self.dim()));
        for (r, comp) in self.components.iter().take(k).enumerate() {
            basis.row_mut(r).assign(&ArrayView1::from(comp.as_slice()));
        }
        coords.dot(&basis) + &Array1::from(self.mean.clone())
    }
}

/// Eigendecomposition of the sample covariance. Each component is flipped so
/// that its largest-magnitude entry is positive.
pub fn fit_pca(x: &Array2<f64>) -> Result<PcaModel, AnalysisError> {
    let (n, d) = x.dim();
    if n < 2 {
        return Err(AnalysisError::DegenerateInput(n));
    }
    let mean = x.mean_axis(Axis(0)).expect("nonempty");
    let centered = x - &mean;
    let cov = centered.t().dot(&centered) / (n - 1) as f64;
    let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[[i, j]]));

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let components = order
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            let lead = v
                .iter()
                .copied()
                .fold(0.0f64, |m, e| if e.abs() > m.abs() + 1e-12 { e } else { m });
            if lead < 0.0 {
                v.iter_mut().for_each(|e| *e = -*e);
            }
            v
        })
        .collect();
    let total: f64 = eigenvalues.iter().sum();
    let explained_ratio = eigenvalues
        .iter()
        .map(|&l| if total > 0.0 { l / total } else { 0.0 })
        .collect();
    Ok(PcaModel { mean: mean.to_vec(), components, eigenvalues, explained_ratio })
}

/// Smallest `k` whose cumulative explained ratio reaches `threshold`.
pub fn effective_dim(model: &PcaModel, threshold: f64) -> usize {
    let mut cum = 0.0;
    for (k, r) in model.explained_ratio.iter().enumerate() {
        cum += r;
        if cum >= threshold - 1e-12 {
            return k + 1;
        }
    }
    model.explained_ratio.iter().filter(|&&r| r > 0.0).count().max(1)
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Class of the nearest centroid; ties go to the smallest class id.
pub fn nearest_centroid_classify(embedding: ArrayView1<f64>, table: &CentroidTable) -> usize {
    let mut best = (f64::INFINITY, usize::MAX);
    for (row, &class_id) in table.class_ids().iter().enumerate() {
        let d = sq_dist(embedding, table.centroids().row(row));
        if d < best.0 || (d == best.0 && class_id < best.1) {
            best = (d, class_id);
        }
    }
    best.1
}

pub fn nearest_centroid_accuracy(emb: &Array2<f64>, labels: &[usize], table: &CentroidTable) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = emb
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &l)| nearest_centroid_classify(*row, table) == l)
        .count();
    hits as f64 / labels.len() as f64
}

/// Nearest-centroid accuracy where each sample's own class centroid is
/// recomputed without it. Useful for classes the encoder never saw.
pub fn leave_one_out_accuracy(emb: &Array2<f64>, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let table = CentroidTable::from_embeddings(emb, labels);
    let mut hits = 0;
    for (r, &l) in labels.iter().enumerate() {
        let row = table.row_of(l).expect("label in table");
        let count = table.counts()[row];
        let x = emb.row(r);
        let mut best = (f64::INFINITY, usize::MAX);
        for (k, &c) in table.class_ids().iter().enumerate() {
            let centroid = if c == l {
                if count < 2 {
                    continue;
                }
                (&table.centroids().row(k) * count as f64 - &x) / (count - 1) as f64
            } else {
                table.centroids().row(k).to_owned()
            };
            let d = sq_dist(x, centroid.view());
            if d < best.0 || (d == best.0 && c < best.1) {
                best = (d, c);
            }
        }
        if best.1 == l {
            hits += 1;
        }
    }
    hits as f64 / labels.len() as f64
}

/// Spread and separation of labelled embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    /// Mean distance of a sample to its class centroid.
    pub intra_spread: f64,
    /// Mean distance between distinct class centroids.
    pub inter_distance: f64,
    /// `intra_spread / inter_distance`; small means tight, separated clusters.
    pub spread_ratio: f64,
    /// Per class, the distance from its centroid to the nearest other one.
    pub nearest_centroid_distance: Vec<(usize, f64)>,
}

pub fn cluster_stats(emb: &Array2<f64>, labels: &[usize]) -> ClusterStats {
    let table = CentroidTable::from_embeddings(emb, labels);
    let intra_spread = if labels.is_empty() {
        0.0
    } else {
        emb.rows()
            .into_iter()
            .zip(labels)
            .map(|(x, &l)| sq_dist(x, table.centroids().row(table.row_of(l).unwrap())).sqrt())
            .sum::<f64>()
            / labels.len() as f64
    };
    let m = table.len();
    let mut inter_sum = 0.0;
    let mut nearest = vec![f64::INFINITY; m];
    for i in 0..m {
        for j in i + 1..m {
            let d = sq_dist(table.centroids().row(i), table.centroids().row(j)).sqrt();
            inter_sum += d;
            nearest[i] = nearest[i].min(d);
            nearest[j] = nearest[j].min(d);
        }
    }
    let pairs = m * m.saturating_sub(1) / 2;
    let inter_distance = if pairs > 0 { inter_sum / pairs as f64 } else { 0.0 };
    ClusterStats {
        intra_spread,
        inter_distance,
        spread_ratio: if inter_distance > 0.0 { intra_spread / inter_distance } else { f64::INFINITY },
        nearest_centroid_distance: table
            .class_ids()
            .iter()
            .copied()
            .zip(nearest.into_iter().map(|d| if d.is_finite() { d } else { 0.0 }))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub train_accuracy: f64,
    pub in_dist_accuracy: f64,
    /// Leave-one-out accuracy among the held-out classes only.
    pub out_dist_loo_accuracy: f64,
    pub in_dist: ClusterStats,
    pub out_dist: ClusterStats,
    pub explained_ratio: Vec<f64>,
    pub variance_threshold: f64,
    pub effective_dim: usize,
}

/// One embedded sample projected on the first two principal components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub split: String,
    pub class_id: usize,
    pub rep_index: usize,
    pub pc1: f64,
    pub pc2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: ClusterReport,
    pub points: Vec<PlotPoint>,
    pub pca: PcaModel,
    pub table: CentroidTable,
}

pub fn embed_samples(model: &BraidEncoder, samples: &[Sample]) -> Result<(Array2<f64>, Vec<usize>), NnError> {
    let emb = model.embed(samples.iter().map(|s| &s.word))?;
    Ok((emb, samples.iter().map(|s| s.class_id).collect()))
}

/// Embeds every split; in-distribution accuracy is measured against the
/// training centroids, held-out classes get spread statistics and a
/// leave-one-out accuracy.
pub fn evaluate_splits(
    model: &BraidEncoder,
    splits: &DatasetSplits,
    variance_threshold: f64,
) -> Result<Evaluation, AnalysisError> {
    let (train, train_labels) = embed_samples(model, &splits.train)?;
    let (ind, ind_labels) = embed_samples(model, &splits.in_dist_test)?;
    let (out, out_labels) = embed_samples(model, &splits.out_dist_test)?;
    let table = CentroidTable::from_embeddings(&train, &train_labels);
    let pca = fit_pca(&train)?;

    let mut in_all = train.clone();
    in_all.append(Axis(0), ind.view()).expect("same width");
    let in_labels: Vec<usize> = train_labels.iter().chain(&ind_labels).copied().collect();

    let report = ClusterReport {
        train_accuracy: nearest_centroid_accuracy(&train, &train_labels, &table),
        in_dist_accuracy: nearest_centroid_accuracy(&ind, &ind_labels, &table),
        out_dist_loo_accuracy: leave_one_out_accuracy(&out, &out_labels),
        in_dist: cluster_stats(&in_all, &in_labels),
        out_dist: cluster_stats(&out, &out_labels),
        explained_ratio: pca.explained_ratio.clone(),
        variance_threshold,
        effective_dim: effective_dim(&pca, variance_threshold),
    };

    let mut points = Vec::new();
    for (name, samples, emb) in [
        ("train", &splits.train, &train),
        ("in-dist", &splits.in_dist_test, &ind),
        ("out-dist", &splits.out_dist_test, &out),
    ] {
        let pcs = pca.transform(emb, 2);
        for (s, row) in samples.iter().zip(pcs.rows()) {
            points.push(PlotPoint {
                split: name.to_string(),
                class_id: s.class_id,
                rep_index: s.rep_index,
                pc1: row[0],
                pc2: row.get(1).copied().unwrap_or(0.0),
            });
        }
    }
    Ok(Evaluation { report, points, pca, table })
}

#[derive(Serialize)]
struct ReportFile<'a> {
    format: &'a str,
    report: &'a ClusterReport,
    points: &'a [PlotPoint],
}

pub fn write_report<W: Write>(eval: &Evaluation, mut out: W) -> Result<(), AnalysisError> {
    let file = ReportFile { format: REPORT_FORMAT, report: &eval.report, points: &eval.points };
    serde_json::to_writer_pretty(&mut out, &file)?;
    out.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn single_axis_data() {
        let x = array![[1.0, 5.0, 0.0], [2.0, 5.0, 0.0], [4.0, 5.0, 0.0], [-3.0, 5.0, 0.0]];
        let pca = fit_pca(&x).unwrap();
        assert!((pca.explained_ratio[0] - 1.0).abs() < 1e-9);
        assert!(pca.explained_ratio[1..].iter().all(|r| r.abs() < 1e-9));
        assert_eq!(pca.components[0], vec![1.0, 0.0, 0.0]);
        assert_eq!(effective_dim(&pca, 0.95), 1);
    }

    #[test]
    fn effective_dim_is_cumulative() {
        let pca = PcaModel {
            mean: vec![0.0; 3],
            components: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            eigenvalues: vec![0.6, 0.3, 0.1],
            explained_ratio: vec![0.6, 0.3, 0.1],
        };
        assert_eq!(effective_dim(&pca, 0.85), 2);
        assert_eq!(effective_dim(&pca, 1.0), 3);
        assert_eq!(effective_dim(&pca, 0.5), 1);
    }

    #[test]
    fn degenerate_input() {
        assert!(matches!(fit_pca(&array![[1.0, 2.0]]), Err(AnalysisError::DegenerateInput(1))));
    }

    #[test]
    fn nearest_centroid_ties_go_low() {
        let emb = array![[1.0, 0.0], [-1.0, 0.0]];
        let table = CentroidTable::from_embeddings(&emb, &[7, 3]);
        assert_eq!(nearest_centroid_classify(array![0.0, 5.0].view(), &table), 3);
        assert_eq!(nearest_centroid_classify(array![1.0, 0.0].view(), &table), 7);
        let one = CentroidTable::from_embeddings(&array![[4.0, 4.0]], &[9]);
        assert_eq!(nearest_centroid_classify(array![-10.0, 0.0].view(), &one), 9);
    }

    #[test]
    fn leave_one_out_on_separated_clusters() {
        let emb = array![[0.0, 0.0], [0.1, 0.0], [5.0, 5.0], [5.1, 5.0], [9.0, 0.0]];
        let labels = [1, 1, 2, 2, 3];
        assert!((leave_one_out_accuracy(&emb, &labels) - 0.8).abs() < 1e-12);
        let stats = cluster_stats(&emb, &labels);
        assert!(stats.intra_spread < 0.05);
        assert!(stats.spread_ratio < 0.01);
    }
}
