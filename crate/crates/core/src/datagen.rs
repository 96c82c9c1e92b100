//! Corpora of knot classes, each with several braid-word representatives.

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::braid::{BraidError, BraidWord, Sign};

pub const DATASET_FORMAT: &str = "bf-ds-1";

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("no knot of the requested length after {attempts} attempts")]
    GenerationExhausted { attempts: usize },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error(transparent)]
    Braid(#[from] BraidError),
    #[error("malformed dataset file at line {line}: {detail}")]
    Format { line: usize, detail: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenParams {
    pub n_letters: usize,
    pub n_strands: usize,
    pub n_scrambles: usize,
    pub n_classes: usize,
    pub reps_per_class: usize,
    pub seed: u64,
    /// Scrambles applied while building each seed word.
    pub seed_scrambles: usize,
    pub max_attempts: usize,
    /// Replace class 0 by an unknot written with exactly `n_letters` letters.
    pub include_unknot: bool,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            n_letters: 30,
            n_strands: 5,
            n_scrambles: 10,
            n_classes: 1000,
            reps_per_class: 20,
            seed: 0,
            seed_scrambles: 1,
            max_attempts: 1000,
            include_unknot: false,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<(), DatagenError> {
        let bad = |msg: &str| Err(DatagenError::InvalidParams(msg.to_string()));
        if self.n_strands < 2 {
            return bad("n_strands must be at least 2");
        }
        if self.n_letters < self.n_strands {
            return bad("n_letters must be at least n_strands");
        }
        if self.n_classes == 0 || self.reps_per_class == 0 {
            return bad("n_classes and reps_per_class must be positive");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnotClass {
    pub class_id: usize,
    pub representatives: Vec<BraidWord>,
    /// A representative of minimal length before padding.
    pub canonical_index: usize,
}

impl KnotClass {
    pub fn canonical(&self) -> &BraidWord {
        &self.representatives[self.canonical_index]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnotClassDataset {
    pub params: GenParams,
    pub classes: Vec<KnotClass>,
}

impl KnotClassDataset {
    pub fn num_samples(&self) -> usize {
        self.classes.iter().map(|c| c.representatives.len()).sum()
    }

    /// Largest strand count over all representatives.
    pub fn max_strands(&self) -> usize {
        self.classes
            .iter()
            .flat_map(|c| c.representatives.iter().map(BraidWord::strands))
            .max()
            .unwrap_or(1)
    }

    pub fn word_length(&self) -> usize {
        self.classes
            .iter()
            .flat_map(|c| c.representatives.iter().map(BraidWord::len))
            .max()
            .unwrap_or(0)
    }

    pub fn samples(&self) -> Vec<Sample> {
        self.classes
            .iter()
            .flat_map(|c| {
                c.representatives.iter().enumerate().map(move |(i, w)| Sample {
                    class_id: c.class_id,
                    rep_index: i,
                    word: w.clone(),
                })
            })
            .collect()
    }
}

/// One labelled representative.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub class_id: usize,
    pub rep_index: usize,
    pub word: BraidWord,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetSplits {
    pub train: Vec<Sample>,
    pub in_dist_test: Vec<Sample>,
    pub out_dist_test: Vec<Sample>,
}

fn random_letter<R: Rng + ?Sized>(n_strands: usize, rng: &mut R) -> i32 {
    let g = rng.random_range(1..n_strands as i32);
    if rng.random_bool(0.5) {
        g
    } else {
        -g
    }
}

/// Letters i.i.d. uniform over `±1, ..., ±(n_strands - 1)`.
pub fn random_braid<R: Rng + ?Sized>(
    n_letters: usize,
    n_strands: usize,
    rng: &mut R,
) -> Result<BraidWord, DatagenError> {
    if n_strands < 2 {
        return Err(DatagenError::InvalidParams("n_strands must be at least 2".into()));
    }
    let letters = (0..n_letters).map(|_| random_letter(n_strands, rng)).collect();
    Ok(BraidWord::new(letters, n_strands)?)
}

fn cycle_labels(perm: &[usize]) -> Vec<usize> {
    let mut label = vec![usize::MAX; perm.len()];
    for start in 0..perm.len() {
        let mut p = start;
        while label[p] == usize::MAX {
            label[p] = start;
            p = perm[p];
        }
    }
    label
}

/// Appends generators joining distinct permutation cycles until the closure
/// has a single component.
pub fn knotify<R: Rng + ?Sized>(w: &BraidWord, rng: &mut R) -> BraidWord {
    let mut letters = w.letters().to_vec();
    let strands = w.strands();
    loop {
        let probe = BraidWord::new(letters.clone(), strands).expect("letters stay in range");
        let label = cycle_labels(&probe.closure_permutation());
        let joins: Vec<usize> = (0..strands.saturating_sub(1))
            .filter(|&i| label[i] != label[i + 1])
            .collect();
        if joins.is_empty() {
            return probe;
        }
        let g = joins[rng.random_range(0..joins.len())] as i32 + 1;
        letters.push(if rng.random_bool(0.5) { g } else { -g });
    }
}

/// Random braid, knotified, lightly scrambled and simplified; retried until
/// the simplified word has exactly `n_letters` letters.
///
/// A knot closed on `n` strands has a letter count of parity `n - 1`, so for
/// some `(n_letters, n_strands)` pairs exact hits are vanishingly rare. A
/// simplified word one letter short is therefore completed by a single
/// stabilization of random sign.
pub fn random_knot<R: Rng + ?Sized>(params: &GenParams, rng: &mut R) -> Result<BraidWord, DatagenError> {
    params.validate()?;
    for _ in 0..params.max_attempts {
        let raw = random_braid(params.n_letters, params.n_strands, rng)?;
        let knot = knotify(&raw, rng).scramble(params.seed_scrambles, rng).simplify();
        if knot.len() == params.n_letters {
            return Ok(knot);
        }
        if knot.len() + 1 == params.n_letters {
            let sign = if rng.random_bool(0.5) { Sign::Plus } else { Sign::Minus };
            return Ok(knot.stabilize(sign));
        }
    }
    Err(DatagenError::GenerationExhausted { attempts: params.max_attempts })
}

/// An unknot with exactly `n_letters` letters: `u σ_1 ... σ_(k-1) u^-1` for a
/// random `u`, on `n_strands` or `n_strands + 1` strands so the parity works.
pub fn long_unknot<R: Rng + ?Sized>(
    n_letters: usize,
    n_strands: usize,
    rng: &mut R,
) -> Result<BraidWord, DatagenError> {
    let strands = if (n_letters + 1 - n_strands) % 2 == 0 { n_strands } else { n_strands + 1 };
    if strands < 2 || n_letters + 1 < strands {
        return Err(DatagenError::InvalidParams(format!(
            "no {n_letters}-letter unknot on {strands} strands"
        )));
    }
    let half = (n_letters + 1 - strands) / 2;
    let u: Vec<i32> = (0..half).map(|_| random_letter(strands, rng)).collect();
    let mut letters = u.clone();
    letters.extend((1..strands as i32).map(|g| if rng.random_bool(0.5) { g } else { -g }));
    letters.extend(u.iter().rev().map(|l| -l));
    Ok(BraidWord::new(letters, strands)?)
}

/// `reps` independently scrambled copies of `seed_word`.
pub fn generate_class<R: Rng + ?Sized>(
    seed_word: &BraidWord,
    reps: usize,
    n_scrambles: usize,
    rng: &mut R,
) -> Vec<BraidWord> {
    (0..reps).map(|_| seed_word.scramble(n_scrambles, rng)).collect()
}

/// RNG for one class, independent of how classes are scheduled.
pub fn class_rng(seed: u64, class_id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(class_id as u64);
    rng
}

pub fn generate_dataset(params: &GenParams) -> Result<KnotClassDataset, DatagenError> {
    params.validate()?;
    let mut classes = (0..params.n_classes)
        .into_par_iter()
        .map(|class_id| {
            let mut rng = class_rng(params.seed, class_id);
            let seed_word = if params.include_unknot && class_id == 0 {
                long_unknot(params.n_letters, params.n_strands, &mut rng)?
            } else {
                random_knot(params, &mut rng)?
            };
            let representatives =
                generate_class(&seed_word, params.reps_per_class, params.n_scrambles, &mut rng);
            let canonical_index = representatives
                .iter()
                .enumerate()
                .min_by_key(|(i, w)| (w.len(), *i))
                .map(|(i, _)| i)
                .unwrap_or(0);
            Ok(KnotClass { class_id, representatives, canonical_index })
        })
        .collect::<Result<Vec<_>, DatagenError>>()?;

    let target = classes
        .iter()
        .flat_map(|c| c.representatives.iter().map(BraidWord::len))
        .max()
        .unwrap_or(0);
    for class in &mut classes {
        for w in &mut class.representatives {
            *w = w.pad_to_length(target)?;
        }
    }
    Ok(KnotClassDataset { params: params.clone(), classes })
}

/// Holds out `reps_held_out` representatives of every training class and a
/// fraction of whole classes.
pub fn split_dataset<R: Rng + ?Sized>(
    ds: &KnotClassDataset,
    reps_held_out: usize,
    classes_held_out_fraction: f64,
    rng: &mut R,
) -> Result<DatasetSplits, DatagenError> {
    if !(0.0..1.0).contains(&classes_held_out_fraction) {
        return Err(DatagenError::InvalidSplit(format!(
            "class fraction {classes_held_out_fraction} outside [0, 1)"
        )));
    }
    if let Some(c) = ds.classes.iter().find(|c| reps_held_out >= c.representatives.len()) {
        return Err(DatagenError::InvalidSplit(format!(
            "holding out {reps_held_out} of {} representatives in class {}",
            c.representatives.len(),
            c.class_id
        )));
    }
    let mut order: Vec<usize> = (0..ds.classes.len()).collect();
    order.shuffle(rng);
    let n_out = (classes_held_out_fraction * ds.classes.len() as f64).round() as usize;
    let mut held_out_class = vec![false; ds.classes.len()];
    for &i in &order[..n_out] {
        held_out_class[i] = true;
    }

    let mut splits = DatasetSplits::default();
    for (ci, class) in ds.classes.iter().enumerate() {
        let sample = |i: usize| Sample {
            class_id: class.class_id,
            rep_index: i,
            word: class.representatives[i].clone(),
        };
        if held_out_class[ci] {
            splits.out_dist_test.extend((0..class.representatives.len()).map(sample));
            continue;
        }
        let mut reps: Vec<usize> = (0..class.representatives.len()).collect();
        reps.shuffle(rng);
        let (test, train) = reps.split_at(reps_held_out);
        let (mut test, mut train) = (test.to_vec(), train.to_vec());
        test.sort_unstable();
        train.sort_unstable();
        splits.in_dist_test.extend(test.into_iter().map(sample));
        splits.train.extend(train.into_iter().map(sample));
    }
    Ok(splits)
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    params: GenParams,
}

#[derive(Serialize, Deserialize)]
struct Record {
    class_id: usize,
    rep_index: usize,
    strands: usize,
    letters: Vec<i32>,
    is_canonical: bool,
}

pub fn write_dataset<W: Write>(ds: &KnotClassDataset, mut out: W) -> Result<(), DatagenError> {
    let header = Header { format: DATASET_FORMAT.to_string(), params: ds.params.clone() };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for class in &ds.classes {
        for (i, w) in class.representatives.iter().enumerate() {
            let rec = Record {
                class_id: class.class_id,
                rep_index: i,
                strands: w.strands(),
                letters: w.letters().to_vec(),
                is_canonical: i == class.canonical_index,
            };
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_dataset<R: BufRead>(input: R) -> Result<KnotClassDataset, DatagenError> {
    let mut lines = input.lines().enumerate().filter(|(_, l)| {
        l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true)
    });
    let (_, first) = lines
        .next()
        .ok_or(DatagenError::Format { line: 1, detail: "missing header".into() })?;
    let header: Header = serde_json::from_str(&first?)?;
    if header.format != DATASET_FORMAT {
        return Err(DatagenError::Format {
            line: 1,
            detail: format!("unsupported format {:?}", header.format),
        });
    }
    let mut classes: Vec<KnotClass> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let rec: Record = serde_json::from_str(&line?)?;
        let word = BraidWord::new(rec.letters, rec.strands)?;
        if classes.last().map(|c| c.class_id) != Some(rec.class_id) {
            if classes.iter().any(|c| c.class_id == rec.class_id) {
                return Err(DatagenError::Format {
                    line: line_no,
                    detail: format!("class {} is not contiguous", rec.class_id),
                });
            }
            classes.push(KnotClass {
                class_id: rec.class_id,
                representatives: Vec::new(),
                canonical_index: 0,
            });
        }
        let class = classes.last_mut().expect("pushed above");
        if rec.rep_index != class.representatives.len() {
            return Err(DatagenError::Format {
                line: line_no,
                detail: format!("expected rep_index {}", class.representatives.len()),
            });
        }
        if rec.is_canonical {
            class.canonical_index = rec.rep_index;
        }
        class.representatives.push(word);
    }
    Ok(KnotClassDataset { params: header.params, classes })
}
