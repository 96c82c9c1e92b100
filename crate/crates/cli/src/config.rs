use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use braidforge::contrastive::LossConfig;
use braidforge::datagen::GenParams;
use braidforge::nn::Scheme;
use braidforge::probe::StudentConfig;
use braidforge::sampler::SampleConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub reps_held_out: usize,
    /// Fraction of classes kept out of training entirely.
    pub out_dist_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { reps_held_out: 5, out_dist_fraction: 0.2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Mlp,
    Conv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub scheme: Scheme,
    pub embedding_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { kind: ModelKind::Mlp, scheme: Scheme::OneHot, embedding_dim: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub variance_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { variance_threshold: 0.95 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeConfig {
    pub pc_count: usize,
    pub variance_cap: f64,
    pub seeds: Vec<u64>,
    pub student: StudentConfig,
    /// Also fit affine students.
    pub linear: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { pc_count: 200, variance_cap: 0.95, seeds: vec![0, 1, 2], student: StudentConfig::default(), linear: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMode {
    Gaussian,
    Trajectory,
    Temperature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerRunConfig {
    pub mode: SampleMode,
    pub params: SampleConfig,
    /// Number of noise levels or temperatures swept.
    pub levels: usize,
    /// Class whose centroid the samples start from.
    pub source_class: usize,
    /// Trajectory end class; defaults to the class with the next larger id.
    pub target_class: Option<usize>,
    /// Pair trajectories drawn per family.
    pub pair_trajectories: usize,
    pub span_cap: f64,
}

impl Default for SamplerRunConfig {
    fn default() -> Self {
        Self {
            mode: SampleMode::Gaussian,
            params: SampleConfig::default(),
            levels: 5,
            source_class: 0,
            target_class: None,
            pair_trajectories: 20,
            span_cap: 4.0,
        }
    }
}

/// Fully resolved settings for every subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses the available parallelism.
    pub workers: usize,
    pub out_dir: PathBuf,
    /// Volume sidecar endpoint, overridden by BRAIDFORGE_ORACLE.
    pub oracle: Option<String>,
    pub data: GenParams,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub eval: EvalConfig,
    pub probe: ProbeConfig,
    pub sample: SamplerRunConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 0,
            out_dir: PathBuf::from("out"),
            oracle: None,
            data: GenParams::default(),
            split: SplitConfig::default(),
            model: ModelConfig::default(),
            loss: LossConfig::default(),
            eval: EvalConfig::default(),
            probe: ProbeConfig::default(),
            sample: SamplerRunConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Writes the resolved config next to the outputs.
    pub fn record(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("run_config.toml");
        std::fs::write(&path, self.to_toml()?)?;
        Ok(path)
    }
}
