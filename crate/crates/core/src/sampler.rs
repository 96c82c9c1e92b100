//! Embedding-space exploration: noise, piecewise linear trajectories,
//! temperature sampling and a Jones-polynomial screen for candidates.

use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Normal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::nearest_centroid_classify;
use crate::braid::BraidWord;
use crate::contrastive::CentroidTable;
use crate::datagen::KnotClassDataset;
use crate::invariants::{alexander_polynomial, jones_polynomial_capped, knot_determinant, JonesPolynomial};
use crate::poly::PolyRecord;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("coordinate {index} out of range for dimension {dim}")]
    IndexOutOfRange { index: usize, dim: usize },
    #[error("trajectory endpoints have shapes {0:?} and {1:?}")]
    ShapeMismatch((usize, usize), (usize, usize)),
    #[error("invalid sampler parameter: {0}")]
    InvalidParameter(String),
    #[error("class {0} has no representative in the dataset")]
    UnknownClass(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Adds i.i.d. N(0, sigma^2) noise to every coordinate.
pub fn gaussian_perturb<R: Rng + ?Sized>(
    embedding: ArrayView1<f64>,
    sigma: f64,
    rng: &mut R,
) -> Result<Array1<f64>, SamplerError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(SamplerError::InvalidParameter(format!("sigma = {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(embedding.to_owned());
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| SamplerError::InvalidParameter(e.to_string()))?;
    Ok(embedding.mapv(|x| x + normal.sample(rng)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    /// Coordinate `a` first, then the rest.
    Gamma1,
    /// The rest first, then coordinate `a`.
    Gamma2,
    /// Coordinates `a` and `b` first, then the rest.
    Gamma3,
    /// The rest first, then `a` and `b`.
    Gamma4,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySpec {
    pub family: Family,
    pub a: usize,
    /// Second coordinate for the pair families.
    pub b: Option<usize>,
    pub points_first_leg: usize,
    pub points_second_leg: usize,
    /// Start collection; one embedding per row.
    pub v: Array2<f64>,
    pub w: Array2<f64>,
}

impl TrajectorySpec {
    pub fn new(family: Family, a: usize, b: Option<usize>, v: Array2<f64>, w: Array2<f64>) -> Self {
        Self { family, a, b, points_first_leg: 3, points_second_leg: 7, v, w }
    }

    fn selected(&self) -> Result<Vec<usize>, SamplerError> {
        let dim = self.v.ncols();
        let mut idx = vec![self.a];
        if matches!(self.family, Family::Gamma3 | Family::Gamma4) {
            let b = self.b.ok_or_else(|| SamplerError::InvalidParameter("pair family needs b".into()))?;
            if b == self.a {
                return Err(SamplerError::InvalidParameter("a and b coincide".into()));
            }
            idx.push(b);
        }
        for &i in &idx {
            if i >= dim {
                return Err(SamplerError::IndexOutOfRange { index: i, dim });
            }
        }
        Ok(idx)
    }
}

fn lerp(v: f64, w: f64, t: f64) -> f64 {
    if v == w {
        return v;
    }
    (1.0 - t) * v + t * w
}

/// Points along the two-leg path from `v` to `w`. The first leg contributes
/// `points_first_leg` points starting at `v` and ending at the corner; the
/// second leg contributes `points_second_leg` points ending at `w`.
pub fn trajectory_points(spec: &TrajectorySpec) -> Result<Vec<Array2<f64>>, SamplerError> {
    if spec.v.dim() != spec.w.dim() {
        return Err(SamplerError::ShapeMismatch(spec.v.dim(), spec.w.dim()));
    }
    if spec.points_first_leg < 2 || spec.points_second_leg < 1 {
        return Err(SamplerError::InvalidParameter("legs need at least 2 and 1 points".into()));
    }
    let selected = spec.selected()?;
    let dim = spec.v.ncols();
    let first_moves_selected = matches!(spec.family, Family::Gamma1 | Family::Gamma3);
    let in_first: Vec<bool> = (0..dim).map(|c| selected.contains(&c) == first_moves_selected).collect();

    let at = |t1: f64, t2: f64| -> Array2<f64> {
        let mut out = spec.v.clone();
        for ((r, c), x) in out.indexed_iter_mut() {
            let t = if in_first[c] { t1 } else { t2 };
            *x = lerp(spec.v[[r, c]], spec.w[[r, c]], t);
        }
        out
    };
    let mut points = Vec::with_capacity(spec.points_first_leg + spec.points_second_leg);
    let n1 = spec.points_first_leg - 1;
    for k in 0..=n1 {
        points.push(at(k as f64 / n1 as f64, 0.0));
    }
    let n2 = spec.points_second_leg;
    for k in 1..=n2 {
        points.push(at(1.0, k as f64 / n2 as f64));
    }
    Ok(points)
}

/// `softmax(logits / t)` with the maximum subtracted first.
pub fn temperature_softmax(logits: &[f64], t: f64) -> Result<Vec<f64>, SamplerError> {
    if !(t > 0.0) {
        return Err(SamplerError::InvalidParameter(format!("temperature = {t}")));
    }
    if logits.is_empty() {
        return Ok(Vec::new());
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| ((l - max) / t).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

pub fn sample_with_temperature<R: Rng + ?Sized>(logits: &[f64], t: f64, rng: &mut R) -> Result<usize, SamplerError> {
    let p = temperature_softmax(logits, t)?;
    let dist = WeightedIndex::new(&p).map_err(|e| SamplerError::InvalidParameter(e.to_string()))?;
    Ok(dist.sample(rng))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleConfig {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub temperature_min: f64,
    pub temperature_max: f64,
    pub samples_per_setting: usize,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            sigma_min: 0.1,
            sigma_max: 0.5,
            temperature_min: 0.5,
            temperature_max: 2.0,
            samples_per_setting: 100,
            seed: 0,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if !(self.sigma_min >= 0.0 && self.sigma_min <= self.sigma_max) {
            return Err(SamplerError::InvalidParameter("need 0 <= sigma_min <= sigma_max".into()));
        }
        if !(self.temperature_min > 0.0 && self.temperature_min <= self.temperature_max) {
            return Err(SamplerError::InvalidParameter("need 0 < temperature_min <= temperature_max".into()));
        }
        Ok(())
    }

    /// `n` evenly spaced noise levels covering the configured range.
    pub fn sigmas(&self, n: usize) -> Vec<f64> {
        spaced(self.sigma_min, self.sigma_max, n)
    }

    pub fn temperatures(&self, n: usize) -> Vec<f64> {
        spaced(self.temperature_min, self.temperature_max, n)
    }
}

fn spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lerp(lo, hi, k as f64 / (n - 1) as f64)).collect(),
    }
}

/// Class whose centroid is nearest to `embedding`.
pub fn decode_class(embedding: ArrayView1<f64>, table: &CentroidTable) -> usize {
    nearest_centroid_classify(embedding, table)
}

/// Canonical representative of the nearest-centroid class.
pub fn decode_to_class<'a>(
    embedding: ArrayView1<f64>,
    table: &CentroidTable,
    ds: &'a KnotClassDataset,
) -> Result<&'a BraidWord, SamplerError> {
    let id = decode_class(embedding, table);
    ds.classes
        .iter()
        .find(|c| c.class_id == id)
        .map(|c| c.canonical())
        .ok_or(SamplerError::UnknownClass(id))
}

/// Fraction of `draws` noisy copies of `embedding` that decode to `class_id`.
pub fn perturbation_hit_rate<R: Rng + ?Sized>(
    embedding: ArrayView1<f64>,
    class_id: usize,
    table: &CentroidTable,
    sigma: f64,
    draws: usize,
    rng: &mut R,
) -> Result<f64, SamplerError> {
    if draws == 0 {
        return Ok(0.0);
    }
    let mut hits = 0;
    for _ in 0..draws {
        let e = gaussian_perturb(embedding, sigma, rng)?;
        if decode_class(e.view(), table) == class_id {
            hits += 1;
        }
    }
    Ok(hits as f64 / draws as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreenedWord {
    pub index: usize,
    pub word: BraidWord,
    pub simplified: BraidWord,
    pub jones: JonesPolynomial,
    /// Span in powers of t.
    pub span: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterexampleCandidate {
    pub letters: Vec<i32>,
    pub strands: usize,
    pub jones: PolyRecord,
    pub determinant: u64,
    pub alexander: PolyRecord,
    pub seed: u64,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedWord {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScreenOutcome {
    pub kept: Vec<ScreenedWord>,
    pub candidates: Vec<CounterexampleCandidate>,
    pub skipped: Vec<SkippedWord>,
}

/// Strand cap for screening; larger closures are skipped.
pub const SCREEN_STRAND_CAP: usize = 12;

enum Screened {
    Kept(ScreenedWord, Option<CounterexampleCandidate>),
    Skipped(SkippedWord),
}

fn screen_one(index: usize, word: &BraidWord, span_cap: f64, seed: u64, provenance: &str) -> Option<Screened> {
    let skip = |reason: String| Some(Screened::Skipped(SkippedWord { index, reason }));
    let simplified = word.simplify();
    let jones = match jones_polynomial_capped(&simplified, SCREEN_STRAND_CAP) {
        Ok(j) => j,
        Err(e) => return skip(e.to_string()),
    };
    let span = jones.span().unwrap_or(0.0);
    if span > span_cap {
        return None;
    }
    let genuine_unknot = simplified.strands() == 1 && simplified.is_empty();
    let mut candidate = None;
    if jones.is_one() && !genuine_unknot && simplified.component_count() == 1 {
        let (det, alex) = match (knot_determinant(&simplified), alexander_polynomial(&simplified)) {
            (Ok(d), Ok(a)) => (d, a),
            (Err(e), _) | (_, Err(e)) => return skip(e.to_string()),
        };
        if det != 1 || !alex.is_one() {
            candidate = Some(CounterexampleCandidate {
                letters: simplified.letters().to_vec(),
                strands: simplified.strands(),
                jones: jones.in_half_t().to_record("t^1/2"),
                determinant: det,
                alexander: alex.to_record("t"),
                seed,
                provenance: provenance.to_string(),
            });
        }
    }
    Some(Screened::Kept(ScreenedWord { index, word: word.clone(), simplified, jones, span }, candidate))
}

/// Keeps words whose Jones span is at most `span_cap`, and flags knots with
/// trivial Jones polynomial but nontrivial determinant or Alexander
/// polynomial.
pub fn screen_simple_jones(words: &[BraidWord], span_cap: f64, seed: u64, provenance: &str) -> ScreenOutcome {
    let results: Vec<Option<Screened>> =
        words.par_iter().enumerate().map(|(i, w)| screen_one(i, w, span_cap, seed, provenance)).collect();
    let mut out = ScreenOutcome::default();
    for r in results.into_iter().flatten() {
        match r {
            Screened::Kept(k, c) => {
                out.kept.push(k);
                out.candidates.extend(c);
            }
            Screened::Skipped(s) => out.skipped.push(s),
        }
    }
    out
}

/// Appends one JSON line per candidate.
pub fn append_audit(path: &Path, candidates: &[CounterexampleCandidate]) -> Result<(), SamplerError> {
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut out = BufWriter::new(file);
    for c in candidates {
        serde_json::to_writer(&mut out, c)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}
