//! Student networks that regress a teacher's embedding from known invariants.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{effective_dim, fit_pca, AnalysisError};
use crate::braid::BraidWord;
use crate::datagen::KnotClassDataset;
use crate::invariants::{
    alexander_polynomial, jones_polynomial_capped, knot_determinant, goeritz_matrix, InvariantError,
    KnotInvariants, PaddingSpec,
};
use crate::nn::{Activation, AdamState, Architecture, BraidEncoder, Encoder, NnError};

pub const PROBE_FORMAT: &str = "bf-probe-1";

/// Strand cap used when the probe computes Jones polynomials.
pub const PROBE_STRAND_CAP: usize = 12;

#[derive(Debug, Error)]
pub enum ProbeError {
    #[error("class {class_id}: {source}")]
    Invariant { class_id: usize, source: InvariantError },
    #[error("probe channel {0} is empty")]
    EmptyChannel(Channel),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    BraidWord,
    Jones,
    Alexander,
    Goeritz,
    Scalars,
}

impl Channel {
    pub const ALL: [Channel; 5] =
        [Channel::BraidWord, Channel::Jones, Channel::Alexander, Channel::Goeritz, Channel::Scalars];

    pub fn name(self) -> &'static str {
        match self {
            Channel::BraidWord => "braid-word",
            Channel::Jones => "jones",
            Channel::Alexander => "alexander",
            Channel::Goeritz => "goeritz",
            Channel::Scalars => "scalars",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct ProbeDataset {
    pub class_ids: Vec<usize>,
    pub inputs: BTreeMap<Channel, Array2<f64>>,
    /// Principal coordinates of each class's mean teacher embedding.
    pub targets: Array2<f64>,
    pub padding: PaddingSpec,
}

impl ProbeDataset {
    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    /// Mean per-coordinate variance of the targets.
    pub fn target_variance(&self) -> f64 {
        column_variance(&self.targets).mean().unwrap_or(0.0)
    }
}

fn column_variance(x: &Array2<f64>) -> Array1<f64> {
    if x.nrows() == 0 {
        return Array1::zeros(x.ncols());
    }
    x.var_axis(Axis(0), 0.0)
}

/// Invariants of a class computed on its simplified canonical word, which
/// sheds the padding stabilizations.
fn class_invariants(w: &BraidWord) -> Result<KnotInvariants, InvariantError> {
    let s = w.simplify();
    match KnotInvariants::compute(&s) {
        Err(InvariantError::StrandLimitExceeded { .. }) => {
            let jones = jones_polynomial_capped(&s, PROBE_STRAND_CAP)?
                .in_t()
                .expect("knots have integral Jones exponents");
            let goeritz = goeritz_matrix(&s)?.reduce();
            Ok(KnotInvariants {
                jones,
                alexander: alexander_polynomial(&s)?,
                goeritz,
                determinant: knot_determinant(&s)?,
                writhe: s.writhe(),
            })
        }
        other => other,
    }
}

/// One row per class: the canonical word featurized per channel, and the
/// first principal coordinates of the class's mean embedding as targets.
/// The target width is the smaller of `pc_count` and the number of
/// components needed to explain `variance_cap` of the variance.
pub fn build_probe_dataset(
    teacher: &BraidEncoder,
    ds: &KnotClassDataset,
    pc_count: usize,
    variance_cap: f64,
) -> Result<ProbeDataset, ProbeError> {
    let mut means = Array2::zeros((ds.classes.len(), teacher.net.embedding_dim()));
    for (r, class) in ds.classes.iter().enumerate() {
        let emb = teacher.embed(&class.representatives)?;
        means.row_mut(r).assign(&emb.mean_axis(Axis(0)).expect("classes are nonempty"));
    }
    let pca = fit_pca(&means)?;
    let width = pc_count.min(effective_dim(&pca, variance_cap)).min(pca.components.len()).max(1);
    let targets = pca.transform(&means, width);

    let invariants = ds
        .classes
        .iter()
        .map(|c| class_invariants(c.canonical()).map_err(|source| ProbeError::Invariant { class_id: c.class_id, source }))
        .collect::<Result<Vec<_>, _>>()?;
    let padding = PaddingSpec::fit(&invariants);
    let features = invariants
        .iter()
        .zip(&ds.classes)
        .map(|(k, c)| k.pad(&padding).map_err(|source| ProbeError::Invariant { class_id: c.class_id, source }))
        .collect::<Result<Vec<_>, _>>()?;

    let stack = |rows: Vec<Vec<f64>>| -> Array2<f64> {
        let width = rows.first().map_or(0, Vec::len);
        let n = rows.len();
        Array2::from_shape_vec((n, width), rows.into_iter().flatten().collect()).expect("equal widths")
    };
    let mut inputs = BTreeMap::new();
    inputs.insert(Channel::BraidWord, teacher.input.encode_batch(ds.classes.iter().map(|c| c.canonical()))?);
    inputs.insert(
        Channel::Jones,
        stack(features.iter().map(|f| f.jones.coeffs.iter().map(|&c| c as f64).collect()).collect()),
    );
    inputs.insert(
        Channel::Alexander,
        stack(features.iter().map(|f| f.alexander.coeffs.iter().map(|&c| c as f64).collect()).collect()),
    );
    inputs.insert(
        Channel::Goeritz,
        stack(features.iter().map(|f| f.goeritz_flat.iter().map(|&c| c as f64).collect()).collect()),
    );
    inputs.insert(Channel::Scalars, stack(features.iter().map(|f| f.scalars().to_vec()).collect()));

    Ok(ProbeDataset {
        class_ids: ds.classes.iter().map(|c| c.class_id).collect(),
        inputs,
        targets,
        padding,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StudentConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Drop the hidden layers and fit an affine map.
    pub linear: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub validation_fraction: f64,
}

impl Default for StudentConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            activation: Activation::Tanh,
            linear: false,
            epochs: 300,
            batch_size: 64,
            learning_rate: 1e-3,
            validation_fraction: 0.2,
        }
    }
}

impl StudentConfig {
    pub fn tag(&self) -> String {
        if self.linear {
            "linear".to_string()
        } else {
            let widths: Vec<String> = self.hidden.iter().map(usize::to_string).collect();
            format!("mlp-{}-{:?}", widths.join("x"), self.activation).to_lowercase()
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudentResult {
    pub net: Encoder,
    pub best_val_mse: f64,
    pub val_history: Vec<f64>,
    pub train_rows: Vec<usize>,
    pub val_rows: Vec<usize>,
}

/// Column standardization fitted on the training rows; constant columns map
/// to zero.
fn standardize(x: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    let train = x.select(Axis(0), rows);
    let mean = train.mean_axis(Axis(0)).unwrap_or_else(|| Array1::zeros(x.ncols()));
    let std = column_variance(&train).mapv(|v| if v > 1e-12 { v.sqrt() } else { f64::INFINITY });
    (x - &mean) / &std
}

fn mse(pred: &Array2<f64>, target: &Array2<f64>) -> f64 {
    if pred.is_empty() {
        return 0.0;
    }
    (pred - target).mapv(|v| v * v).mean().unwrap_or(0.0)
}

/// Holds out `fraction` of the rows (each row is one class).
pub fn split_rows<R: Rng + ?Sized>(n: usize, fraction: f64, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(rng);
    let n_val = ((n as f64) * fraction).round() as usize;
    let n_val = n_val.min(n.saturating_sub(1));
    let mut val = rows[..n_val].to_vec();
    let mut train = rows[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

/// Supervised MSE regression with Adam; returns the best validation MSE.
pub fn train_student<R: Rng + ?Sized>(
    inputs: &Array2<f64>,
    targets: &Array2<f64>,
    cfg: &StudentConfig,
    rng: &mut R,
) -> Result<StudentResult, NnError> {
    if inputs.nrows() != targets.nrows() {
        return Err(NnError::ShapeMismatch(format!("{} inputs for {} targets", inputs.nrows(), targets.nrows())));
    }
    let (train_rows, val_rows) = split_rows(inputs.nrows(), cfg.validation_fraction, rng);
    let x = standardize(inputs, &train_rows);
    let hidden = if cfg.linear { Vec::new() } else { cfg.hidden.clone() };
    let arch = Architecture::Mlp {
        input_dim: x.ncols(),
        hidden,
        activation: cfg.activation,
        embedding_dim: targets.ncols(),
    };
    let mut net = Encoder::new(&arch, rng);
    let mut adam = AdamState::new(cfg.learning_rate);
    let x_val = x.select(Axis(0), &val_rows);
    let y_val = targets.select(Axis(0), &val_rows);
    let eval_rows = if val_rows.is_empty() { &train_rows } else { &val_rows };
    let (x_eval, y_eval) = if val_rows.is_empty() {
        (x.select(Axis(0), eval_rows), targets.select(Axis(0), eval_rows))
    } else {
        (x_val, y_val)
    };

    let mut best = mse(&net.forward(&x_eval)?, &y_eval);
    let mut best_net = net.clone();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut order = train_rows.clone();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size.max(1)) {
            let xb = x.select(Axis(0), batch);
            let yb = targets.select(Axis(0), batch);
            let scale = 2.0 / yb.len() as f64;
            let (_, g) = net.gradients(&xb, |out| {
                let diff = out - &yb;
                (diff.mapv(|v| v * v).sum() / yb.len() as f64, diff * scale)
            })?;
            adam.update(net.parameters_mut(), &g)?;
        }
        let v = mse(&net.forward(&x_eval)?, &y_eval);
        history.push(v);
        if v < best {
            best = v;
            best_net = net.clone();
        }
    }
    Ok(StudentResult { net: best_net, best_val_mse: best, val_history: history, train_rows, val_rows })
}

/// Targets with rows permuted, destroying any input-target relation.
pub fn shuffled_targets<R: Rng + ?Sized>(targets: &Array2<f64>, rng: &mut R) -> Array2<f64> {
    let mut rows: Vec<usize> = (0..targets.nrows()).collect();
    rows.shuffle(rng);
    targets.select(Axis(0), &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelResult {
    pub channel: Channel,
    pub val_mse: f64,
    pub shuffled_val_mse: f64,
    /// `val_mse` divided by the target variance.
    pub relative_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub format: String,
    pub seed: u64,
    pub architecture: String,
    pub target_width: usize,
    pub target_variance: f64,
    /// Sorted by validation MSE, best first.
    pub channels: Vec<ChannelResult>,
}

impl ProbeReport {
    pub fn ranking(&self) -> Vec<Channel> {
        self.channels.iter().map(|c| c.channel).collect()
    }

    pub fn get(&self, channel: Channel) -> Option<&ChannelResult> {
        self.channels.iter().find(|c| c.channel == channel)
    }
}

/// Ranks channels by validation MSE; ties keep channel order.
pub fn compare_invariants(mut results: Vec<ChannelResult>, seed: u64, cfg: &StudentConfig, data: &ProbeDataset) -> ProbeReport {
    results.sort_by(|a, b| a.val_mse.total_cmp(&b.val_mse).then(a.channel.cmp(&b.channel)));
    ProbeReport {
        format: PROBE_FORMAT.to_string(),
        seed,
        architecture: cfg.tag(),
        target_width: data.targets.ncols(),
        target_variance: data.target_variance(),
        channels: results,
    }
}

/// Trains a student and its shuffled-label twin on every channel. Both use
/// the same seed-derived split and initialization stream.
pub fn run_probe(data: &ProbeDataset, cfg: &StudentConfig, seed: u64) -> Result<ProbeReport, ProbeError> {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    let variance = data.target_variance();
    let mut results = Vec::new();
    for (k, (&channel, inputs)) in data.inputs.iter().enumerate() {
        if inputs.nrows() == 0 {
            return Err(ProbeError::EmptyChannel(channel));
        }
        let stream = k as u64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2 * stream);
        let real = train_student(inputs, &data.targets, cfg, &mut rng)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2 * stream + 1);
        let shuffled = shuffled_targets(&data.targets, &mut rng);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2 * stream);
        let twin = train_student(inputs, &shuffled, cfg, &mut rng)?;
        results.push(ChannelResult {
            channel,
            val_mse: real.best_val_mse,
            shuffled_val_mse: twin.best_val_mse,
            relative_mse: if variance > 0.0 { real.best_val_mse / variance } else { 0.0 },
        });
    }
    Ok(compare_invariants(results, seed, cfg, data))
}

fn ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut r = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let (mut num, mut da, mut db) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        num += (x - mean) * (y - mean);
        da += (x - mean).powi(2);
        db += (y - mean).powi(2);
    }
    if da == 0.0 || db == 0.0 {
        return if da == db { 1.0 } else { 0.0 };
    }
    num / (da * db).sqrt()
}

/// Smallest pairwise Spearman correlation of channel MSEs across reports.
pub fn rank_stability(reports: &[ProbeReport]) -> f64 {
    let mses = |r: &ProbeReport| -> Vec<f64> {
        Channel::ALL.iter().filter_map(|&c| r.get(c).map(|x| x.val_mse)).collect()
    };
    let mut worst: f64 = 1.0;
    for i in 0..reports.len() {
        for j in i + 1..reports.len() {
            worst = worst.min(spearman(&mses(&reports[i]), &mses(&reports[j])));
        }
    }
    worst
}
