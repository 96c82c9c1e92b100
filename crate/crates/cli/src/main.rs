use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use braidforge::nn::Scheme;
use braidforge_cli::config::{ModelKind, SampleMode};
use braidforge_cli::pipeline;
use braidforge_cli::RunConfig;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "braidforge", version, about = "Braid-word knot corpora, invariants and contrastive embeddings")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for data-parallel sections (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a knot-class dataset.
    Generate {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        data: DataFlags,
    },
    /// Tabulate invariants of every representative.
    Invariants {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a contrastive encoder.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Evaluate clustering of a trained encoder.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Fit student networks from invariants to the teacher embedding.
    Probe {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Sample the embedding space and screen the decoded knots.
    Sample {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        sample: SampleFlags,
    },
    /// Query the volume sidecar on reference knots.
    OracleCheck {
        #[arg(long)]
        endpoint: Option<String>,
    },
}

#[derive(Args)]
struct DataFlags {
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    letters: Option<usize>,
    #[arg(long)]
    strands: Option<usize>,
    #[arg(long)]
    scrambles: Option<usize>,
    #[arg(long)]
    max_attempts: Option<usize>,
    #[arg(long)]
    include_unknot: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Mlp,
    Conv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Signed,
    OneHot,
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    learning_rate: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Gaussian,
    Trajectory,
    Temperature,
}

#[derive(Args)]
struct SampleFlags {
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Noise range as lo:hi.
    #[arg(long)]
    sigma: Option<String>,
    /// Temperature range as lo:hi.
    #[arg(long)]
    temperature: Option<String>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    source_class: Option<usize>,
}

fn range(s: &str) -> Result<(f64, f64)> {
    let parse = |x: &str| x.trim().parse::<f64>().with_context(|| format!("bad number {x:?}"));
    match s.split_once(':') {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => {
            let v = parse(s)?;
            Ok((v, v))
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.data.seed = s;
        cfg.sample.params.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(d) = cli.out_dir {
        cfg.out_dir = d;
    }
    pipeline::configure_workers(cfg.workers);

    match cli.cmd {
        Cmd::Generate { out, data } => {
            let p = &mut cfg.data;
            p.n_classes = data.classes.unwrap_or(p.n_classes);
            p.reps_per_class = data.reps.unwrap_or(p.reps_per_class);
            p.n_letters = data.letters.unwrap_or(p.n_letters);
            p.n_strands = data.strands.unwrap_or(p.n_strands);
            p.n_scrambles = data.scrambles.unwrap_or(p.n_scrambles);
            p.max_attempts = data.max_attempts.unwrap_or(p.max_attempts);
            p.include_unknot |= data.include_unknot;
            let ds = pipeline::cmd_generate(&cfg, &out)?;
            eprintln!(
                "wrote {} classes, {} words (length {}, up to {} strands) to {}",
                ds.classes.len(),
                ds.num_samples(),
                ds.word_length(),
                ds.max_strands(),
                out.display()
            );
        }
        Cmd::Invariants { dataset, out } => {
            let s = pipeline::cmd_invariants(&dataset, &out)?;
            eprintln!("wrote {} rows ({} errors) to {}", s.rows, s.errors, out.display());
        }
        Cmd::Train { dataset, train } => {
            if let Some(k) = train.kind {
                cfg.model.kind = match k {
                    KindArg::Mlp => ModelKind::Mlp,
                    KindArg::Conv => ModelKind::Conv,
                };
            }
            if let Some(s) = train.scheme {
                cfg.model.scheme = match s {
                    SchemeArg::Signed => Scheme::SignedInteger,
                    SchemeArg::OneHot => Scheme::OneHot,
                };
            }
            cfg.loss.epochs = train.epochs.unwrap_or(cfg.loss.epochs);
            cfg.loss.lambda = train.lambda.unwrap_or(cfg.loss.lambda);
            cfg.loss.learning_rate = train.learning_rate.unwrap_or(cfg.loss.learning_rate);
            let s = pipeline::cmd_train(&cfg, &dataset)?;
            eprintln!(
                "best in-distribution accuracy {:.4} at epoch {} of {}; checkpoint {}",
                s.best_in_dist_acc,
                s.best_epoch,
                s.epochs_run,
                s.checkpoint.display()
            );
        }
        Cmd::Eval { dataset, checkpoint } => {
            let e = pipeline::cmd_eval(&cfg, &dataset, &checkpoint)?;
            let r = &e.report;
            println!("train accuracy        {:.4}", r.train_accuracy);
            println!("in-dist accuracy      {:.4}", r.in_dist_accuracy);
            println!("out-dist LOO accuracy {:.4}", r.out_dist_loo_accuracy);
            println!("effective dim @ {:.2}  {}", r.variance_threshold, r.effective_dim);
        }
        Cmd::Probe { dataset, checkpoint } => {
            let s = pipeline::cmd_probe(&cfg, &dataset, &checkpoint)?;
            for rep in &s.reports {
                println!("seed {} ({}):", rep.seed, rep.architecture);
                for c in &rep.channels {
                    println!(
                        "  {:<10} val {:.5}  shuffled {:.5}  relative {:.4}",
                        c.channel.name(),
                        c.val_mse,
                        c.shuffled_val_mse,
                        c.relative_mse
                    );
                }
            }
            println!("rank stability {:.3}", s.rank_stability);
        }
        Cmd::Sample { dataset, checkpoint, sample } => {
            let sc = &mut cfg.sample;
            if let Some(m) = sample.mode {
                sc.mode = match m {
                    ModeArg::Gaussian => SampleMode::Gaussian,
                    ModeArg::Trajectory => SampleMode::Trajectory,
                    ModeArg::Temperature => SampleMode::Temperature,
                };
            }
            if let Some(r) = &sample.sigma {
                (sc.params.sigma_min, sc.params.sigma_max) = range(r)?;
            }
            if let Some(r) = &sample.temperature {
                (sc.params.temperature_min, sc.params.temperature_max) = range(r)?;
            }
            sc.params.samples_per_setting = sample.samples.unwrap_or(sc.params.samples_per_setting);
            sc.source_class = sample.source_class.unwrap_or(sc.source_class);
            let s = pipeline::cmd_sample(&cfg, &dataset, &checkpoint)?;
            println!(
                "{} draws, {:.3} back to class {}; {} kept by the Jones screen, {} candidates, {} skipped",
                s.drawn, s.source_rate, cfg.sample.source_class, s.kept, s.candidates, s.skipped
            );
        }
        Cmd::OracleCheck { endpoint } => {
            let ep = pipeline::resolve_endpoint(&cfg, endpoint.as_deref())?;
            let results = pipeline::cmd_oracle_check(&ep)?;
            let mut failed = false;
            for (name, r) in &results {
                match r.volume {
                    Some(v) => println!("{name:<13} {} {v:.10}", r.status),
                    None => println!("{name:<13} {} {}", r.status, r.message),
                }
                failed |= r.status == braidforge::oracle::VolumeStatus::Error;
            }
            if failed {
                bail!("the sidecar reported errors");
            }
        }
    }
    Ok(())
}
