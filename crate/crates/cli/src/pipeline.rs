use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use braidforge::analysis::{evaluate_splits, write_report, Evaluation};
use braidforge::braid::BraidWord;
use braidforge::contrastive::{train_contrastive, write_log, CentroidTable};
use braidforge::datagen::{generate_dataset, read_dataset, split_dataset, write_dataset, DatasetSplits, KnotClassDataset};
use braidforge::invariants::{KnotInvariants, InvariantError};
use braidforge::nn::{
    load_checkpoint, save_checkpoint, Architecture, BraidEncoder, Encoder, InputEncoding, Scheme, SignedScaler,
};
use braidforge::oracle::{endpoint_from_env, Endpoint, OracleClient, VolumeResult, DEFAULT_TIMEOUT};
use braidforge::poly::PolyRecord;
use braidforge::probe::{build_probe_dataset, rank_stability, run_probe, Channel, ProbeReport, StudentConfig};
use braidforge::sampler::{
    append_audit, decode_class, gaussian_perturb, sample_with_temperature, screen_simple_jones, trajectory_points,
    Family, TrajectorySpec,
};
use ndarray::{Array1, Array2};
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ModelKind, RunConfig, SampleMode};

pub const INVARIANTS_FORMAT: &str = "bf-inv-1";
pub const SAMPLES_FORMAT: &str = "bf-samples-1";

// Independent random streams derived from the run seed.
const SPLIT_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const TRAIN_STREAM: u64 = 3;
const SAMPLE_STREAM: u64 = 4;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Sizes the global rayon pool; later calls are no-ops.
pub fn configure_workers(workers: usize) {
    if workers > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(workers).build_global();
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

pub fn load_dataset(path: &Path) -> Result<KnotClassDataset> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_dataset(BufReader::new(f)).with_context(|| format!("reading {}", path.display()))
}

pub fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<KnotClassDataset> {
    let ds = generate_dataset(&cfg.data)?;
    let mut w = create(out)?;
    write_dataset(&ds, &mut w)?;
    w.flush()?;
    Ok(ds)
}

#[derive(Serialize)]
struct InvariantRow {
    class_id: usize,
    rep_index: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    jones: Option<PolyRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    alexander: Option<PolyRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    determinant: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    goeritz: Option<Vec<Vec<i64>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InvariantSummary {
    pub rows: usize,
    pub errors: usize,
}

/// Invariants of every representative, computed on its simplified form.
/// Failures are recorded per row.
pub fn cmd_invariants(dataset: &Path, out: &Path) -> Result<InvariantSummary> {
    let ds = load_dataset(dataset)?;
    let samples = ds.samples();
    let rows: Vec<InvariantRow> = samples
        .par_iter()
        .map(|s| {
            let res: Result<KnotInvariants, InvariantError> = KnotInvariants::compute(&s.word.simplify());
            match res {
                Ok(k) => InvariantRow {
                    class_id: s.class_id,
                    rep_index: s.rep_index,
                    jones: Some(k.jones.to_record("t")),
                    alexander: Some(k.alexander.to_record("t")),
                    determinant: Some(k.determinant),
                    goeritz: Some(k.goeritz.rows().map(<[i64]>::to_vec).collect()),
                    error: None,
                },
                Err(e) => InvariantRow {
                    class_id: s.class_id,
                    rep_index: s.rep_index,
                    jones: None,
                    alexander: None,
                    determinant: None,
                    goeritz: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let mut w = create(out)?;
    serde_json::to_writer(&mut w, &serde_json::json!({ "format": INVARIANTS_FORMAT }))?;
    w.write_all(b"\n")?;
    for r in &rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(InvariantSummary { rows: rows.len(), errors: rows.iter().filter(|r| r.error.is_some()).count() })
}

pub fn splits_for(cfg: &RunConfig, ds: &KnotClassDataset) -> Result<DatasetSplits> {
    let mut rng = stream_rng(cfg.seed, SPLIT_STREAM);
    Ok(split_dataset(ds, cfg.split.reps_held_out, cfg.split.out_dist_fraction, &mut rng)?)
}

/// Freshly initialized encoder sized for `ds`.
pub fn build_model(cfg: &RunConfig, ds: &KnotClassDataset, splits: &DatasetSplits) -> Result<BraidEncoder> {
    let len = ds.word_length();
    let input = match (cfg.model.kind, cfg.model.scheme) {
        (ModelKind::Conv, Scheme::OneHot) => bail!("the circular convolution encoder takes signed-integer input"),
        (_, Scheme::OneHot) => InputEncoding::one_hot(len, ds.max_strands()),
        (_, Scheme::SignedInteger) => {
            InputEncoding::signed(len, SignedScaler::fit(splits.train.iter().map(|s| &s.word), len))
        }
    };
    let arch = match cfg.model.kind {
        ModelKind::Mlp => Architecture::default_mlp(input.dim(), cfg.model.embedding_dim),
        ModelKind::Conv => Architecture::default_conv(input.dim(), cfg.model.embedding_dim),
    };
    let mut rng = stream_rng(cfg.seed, INIT_STREAM);
    Ok(BraidEncoder { net: Encoder::new(&arch, &mut rng), input })
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub checkpoint: PathBuf,
    pub log: PathBuf,
    pub best_epoch: usize,
    pub best_in_dist_acc: f64,
    pub epochs_run: usize,
}

pub fn cmd_train(cfg: &RunConfig, dataset: &Path) -> Result<TrainSummary> {
    let ds = load_dataset(dataset)?;
    let splits = splits_for(cfg, &ds)?;
    let model = build_model(cfg, &ds, &splits)?;
    let mut rng = stream_rng(cfg.seed, TRAIN_STREAM);
    let out = train_contrastive(&model, &splits, &cfg.loss, &mut rng)?;

    cfg.record(&cfg.out_dir)?;
    let checkpoint = cfg.out_dir.join("checkpoint.bfck");
    let extra = serde_json::json!({
        "seed": cfg.seed,
        "loss": cfg.loss,
        "best_epoch": out.best_epoch,
        "best_in_dist_acc": out.best_in_dist_acc,
    });
    save_checkpoint(&out.model, &extra, &checkpoint)?;
    let log = cfg.out_dir.join("train_log.ndjson");
    let mut w = create(&log)?;
    write_log(&out.log, &mut w)?;
    w.flush()?;
    Ok(TrainSummary {
        checkpoint,
        log,
        best_epoch: out.best_epoch,
        best_in_dist_acc: out.best_in_dist_acc,
        epochs_run: out.epochs_run,
    })
}

pub fn cmd_eval(cfg: &RunConfig, dataset: &Path, checkpoint: &Path) -> Result<Evaluation> {
    let ds = load_dataset(dataset)?;
    let splits = splits_for(cfg, &ds)?;
    let (model, _) = load_checkpoint(checkpoint)?;
    let eval = evaluate_splits(&model, &splits, cfg.eval.variance_threshold)?;
    let mut w = create(&cfg.out_dir.join("report.json"))?;
    write_report(&eval, &mut w)?;
    w.flush()?;
    Ok(eval)
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeSummary {
    pub format: &'static str,
    pub target_width: usize,
    pub reports: Vec<ProbeReport>,
    pub linear_reports: Vec<ProbeReport>,
    pub rank_stability: f64,
    /// Mean rank of the Goeritz channel among the invariant channels.
    pub goeritz_mean_rank: f64,
}

fn goeritz_mean_rank(reports: &[ProbeReport]) -> f64 {
    if reports.is_empty() {
        return 0.0;
    }
    let total: usize = reports
        .iter()
        .map(|r| {
            r.ranking()
                .iter()
                .filter(|&&c| c != Channel::BraidWord)
                .position(|&c| c == Channel::Goeritz)
                .map_or(0, |p| p + 1)
        })
        .sum();
    total as f64 / reports.len() as f64
}

pub fn run_probes(cfg: &RunConfig, teacher: &BraidEncoder, ds: &KnotClassDataset) -> Result<ProbeSummary> {
    let data = build_probe_dataset(teacher, ds, cfg.probe.pc_count, cfg.probe.variance_cap)?;
    let reports = cfg
        .probe
        .seeds
        .iter()
        .map(|&s| run_probe(&data, &cfg.probe.student, s))
        .collect::<Result<Vec<_>, _>>()?;
    let linear_reports = if cfg.probe.linear {
        let lin = StudentConfig { linear: true, ..cfg.probe.student.clone() };
        cfg.probe.seeds.iter().map(|&s| run_probe(&data, &lin, s)).collect::<Result<Vec<_>, _>>()?
    } else {
        Vec::new()
    };
    Ok(ProbeSummary {
        format: braidforge::probe::PROBE_FORMAT,
        target_width: data.targets.ncols(),
        rank_stability: rank_stability(&reports),
        goeritz_mean_rank: goeritz_mean_rank(&reports),
        reports,
        linear_reports,
    })
}

pub fn cmd_probe(cfg: &RunConfig, dataset: &Path, checkpoint: &Path) -> Result<ProbeSummary> {
    let ds = load_dataset(dataset)?;
    let (teacher, _) = load_checkpoint(checkpoint)?;
    let summary = run_probes(cfg, &teacher, &ds)?;
    let mut w = create(&cfg.out_dir.join("probe.json"))?;
    serde_json::to_writer_pretty(&mut w, &summary)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(summary)
}

/// Centroids of every class in the dataset.
pub fn full_table(teacher: &BraidEncoder, ds: &KnotClassDataset) -> Result<CentroidTable> {
    let samples = ds.samples();
    let emb = teacher.embed(samples.iter().map(|s| &s.word))?;
    let labels: Vec<usize> = samples.iter().map(|s| s.class_id).collect();
    Ok(CentroidTable::from_embeddings(&emb, &labels))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SampleRecord {
    setting: f64,
    draw: usize,
    class_id: usize,
    letters: Vec<i32>,
    strands: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleSummary {
    pub samples: PathBuf,
    pub audit: PathBuf,
    pub drawn: usize,
    /// Fraction of draws decoding back to the source class.
    pub source_rate: f64,
    pub kept: usize,
    pub candidates: usize,
    pub skipped: usize,
}

fn centroid_of(table: &CentroidTable, class_id: usize) -> Result<Array1<f64>> {
    match table.row_of(class_id) {
        Some(r) => Ok(table.centroids().row(r).to_owned()),
        None => bail!("class {class_id} is not in the dataset"),
    }
}

/// (setting, draw, decoded class) triples for the configured mode.
fn draw_classes(cfg: &RunConfig, table: &CentroidTable) -> Result<Vec<(f64, usize, usize)>> {
    let sc = &cfg.sample;
    sc.params.validate()?;
    let mut rng = stream_rng(sc.params.seed, SAMPLE_STREAM);
    let source = centroid_of(table, sc.source_class)?;
    let n = sc.params.samples_per_setting;
    let mut out = Vec::new();
    match sc.mode {
        SampleMode::Gaussian => {
            for sigma in sc.params.sigmas(sc.levels) {
                for d in 0..n {
                    let e = gaussian_perturb(source.view(), sigma, &mut rng)?;
                    out.push((sigma, d, decode_class(e.view(), table)));
                }
            }
        }
        SampleMode::Temperature => {
            let logits: Vec<f64> = table
                .centroids()
                .rows()
                .into_iter()
                .map(|c| -(&c - &source).mapv(|x| x * x).sum())
                .collect();
            for t in sc.params.temperatures(sc.levels) {
                for d in 0..n {
                    let row = sample_with_temperature(&logits, t, &mut rng)?;
                    out.push((t, d, table.class_ids()[row]));
                }
            }
        }
        SampleMode::Trajectory => {
            let target_id = match sc.target_class {
                Some(t) => t,
                None => *table
                    .class_ids()
                    .iter()
                    .find(|&&c| c > sc.source_class)
                    .or(table.class_ids().first())
                    .context("empty centroid table")?,
            };
            let v = source.insert_axis(ndarray::Axis(0));
            let w = centroid_of(table, target_id)?.insert_axis(ndarray::Axis(0));
            let dim = v.ncols();
            let mut specs = Vec::new();
            for a in 0..dim {
                specs.push(TrajectorySpec::new(Family::Gamma1, a, None, v.clone(), w.clone()));
                specs.push(TrajectorySpec::new(Family::Gamma2, a, None, v.clone(), w.clone()));
            }
            if dim >= 2 {
                for _ in 0..sc.pair_trajectories {
                    let pair = sample_indices(&mut rng, dim, 2);
                    let (a, b) = (pair.index(0), pair.index(1));
                    specs.push(TrajectorySpec::new(Family::Gamma3, a, Some(b), v.clone(), w.clone()));
                    specs.push(TrajectorySpec::new(Family::Gamma4, a, Some(b), v.clone(), w.clone()));
                }
            }
            for (k, spec) in specs.iter().enumerate() {
                let pts: Vec<Array2<f64>> = trajectory_points(spec)?;
                let last = (pts.len() - 1).max(1) as f64;
                for (i, p) in pts.iter().enumerate() {
                    out.push((i as f64 / last, k, decode_class(p.row(0), table)));
                }
            }
        }
    }
    Ok(out)
}

pub fn cmd_sample(cfg: &RunConfig, dataset: &Path, checkpoint: &Path) -> Result<SampleSummary> {
    let ds = load_dataset(dataset)?;
    let (teacher, _) = load_checkpoint(checkpoint)?;
    let table = full_table(&teacher, &ds)?;
    let draws = draw_classes(cfg, &table)?;

    let canonical = |id: usize| -> Result<&BraidWord> {
        ds.classes.iter().find(|c| c.class_id == id).map(|c| c.canonical()).context("decoded class missing")
    };
    let words = draws.iter().map(|&(_, _, c)| canonical(c).cloned()).collect::<Result<Vec<_>>>()?;

    let samples = cfg.out_dir.join("samples.ndjson");
    let mut w = create(&samples)?;
    serde_json::to_writer(&mut w, &serde_json::json!({ "format": SAMPLES_FORMAT, "mode": cfg.sample.mode }))?;
    w.write_all(b"\n")?;
    for (&(setting, draw, class_id), word) in draws.iter().zip(&words) {
        let rec = SampleRecord { setting, draw, class_id, letters: word.letters().to_vec(), strands: word.strands() };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;

    let provenance = format!("{:?}:class-{}", cfg.sample.mode, cfg.sample.source_class).to_lowercase();
    let screen = screen_simple_jones(&words, cfg.sample.span_cap, cfg.sample.params.seed, &provenance);
    let audit = cfg.out_dir.join("candidates.ndjson");
    // The audit file is append-only across runs; touch it so it always exists.
    append_audit(&audit, &screen.candidates)?;
    let hits = draws.iter().filter(|&&(_, _, c)| c == cfg.sample.source_class).count();
    Ok(SampleSummary {
        samples,
        audit,
        drawn: draws.len(),
        source_rate: if draws.is_empty() { 0.0 } else { hits as f64 / draws.len() as f64 },
        kept: screen.kept.len(),
        candidates: screen.candidates.len(),
        skipped: screen.skipped.len(),
    })
}

/// Reference knots queried by `oracle-check`.
pub fn reference_knots() -> Vec<(&'static str, BraidWord)> {
    let w = |l: &[i32], n| BraidWord::new(l.to_vec(), n).expect("valid reference word");
    vec![("unknot", w(&[1], 2)), ("trefoil", w(&[1, 1, 1], 2)), ("figure-eight", w(&[1, -2, 1, -2], 3))]
}

pub fn resolve_endpoint(cfg: &RunConfig, flag: Option<&str>) -> Result<Endpoint> {
    if let Some(e) = endpoint_from_env() {
        return Ok(e?);
    }
    match flag.or(cfg.oracle.as_deref()) {
        Some(s) => Ok(s.parse()?),
        None => bail!("no volume bridge configured; set BRAIDFORGE_ORACLE or pass --endpoint"),
    }
}

pub fn cmd_oracle_check(endpoint: &Endpoint) -> Result<Vec<(&'static str, VolumeResult)>> {
    let mut client = OracleClient::connect(endpoint, DEFAULT_TIMEOUT)?;
    reference_knots()
        .into_iter()
        .map(|(name, w)| Ok((name, client.query(&w)?)))
        .collect()
}
