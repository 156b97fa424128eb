//! Run configuration: a TOML file with every tunable, overridable by flags.
//!
//! Unknown keys are rejected. Every command writes the fully resolved
//! configuration back into its output directory, and rerunning from that
//! echo reproduces the outputs byte for byte.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use tppmix::em::EmConfig;
use tppmix::sim::IntensitySpec;

/// Top-level configuration shared by all subcommands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every random stream derives from it.
    pub seed: u64,
    /// Output directory; flag > config > TPPMIX_OUT_DIR > "./tppmix-out".
    pub output_dir: Option<PathBuf>,
    /// Dataset path for commands that read one.
    pub dataset: Option<PathBuf>,
    pub generate: GenerateConfig,
    pub em: EmConfig,
    pub evaluate: EvaluateConfig,
    pub export: ExportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: None,
            dataset: None,
            generate: GenerateConfig::default(),
            em: EmConfig::default(),
            evaluate: EvaluateConfig::default(),
            export: ExportConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateConfig {
    pub per_cluster: usize,
    pub t_max: f64,
    /// One intensity spec per cluster.
    pub clusters: Vec<IntensitySpec>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            per_cluster: 200,
            t_max: 100.0,
            clusters: vec![IntensitySpec::Sine, IntensitySpec::NegativeSine],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Bin width for intensity-deviation metrics.
    pub bin_width: f64,
    /// Rollouts per policy when estimating its intensity.
    pub eid_sims: usize,
    /// Consistency trials; 0 disables the (expensive) consistency metric.
    pub cc_trials: usize,
    pub cc_split: f64,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self { bin_width: 5.0, eid_sims: 2000, cc_trials: 0, cc_split: 0.5 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    pub bin_width: f64,
    /// Rollouts per policy for the learned-intensity columns.
    pub sims: usize,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self { bin_width: 5.0, sims: 2000 }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                let cfg: RunConfig = toml::from_str(&text)
                    .with_context(|| format!("parsing config {}", p.display()))?;
                Ok(cfg)
            }
        }
    }

    /// Named cluster mixtures for quick dataset generation.
    pub fn apply_preset(&mut self, preset: &str) -> Result<()> {
        let t = self.generate.t_max;
        self.generate.clusters = match preset {
            "no-hawkes-k2" => vec![IntensitySpec::Sine, IntensitySpec::NegativeSine],
            "no-hawkes-k3" => {
                vec![IntensitySpec::Sine, IntensitySpec::NegativeSine, IntensitySpec::Constant]
            }
            "no-hawkes-k4" => vec![
                IntensitySpec::Sine,
                IntensitySpec::NegativeSine,
                IntensitySpec::Constant,
                IntensitySpec::Bimodal { t_max: t },
            ],
            "hawkes-k2" | "hawkes-k3" | "hawkes-k4" => {
                let k = (preset.as_bytes()[preset.len() - 1] - b'0') as usize;
                tppmix::sim::random_self_exciting_mixture(k, self.seed)
            }
            other => bail!("unknown preset {other:?}"),
        };
        self.em.n_clusters = self.generate.clusters.len();
        Ok(())
    }

    pub fn resolved_output_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = &self.output_dir {
            return p.clone();
        }
        if let Ok(p) = std::env::var("TPPMIX_OUT_DIR") {
            return PathBuf::from(p);
        }
        PathBuf::from("tppmix-out")
    }

    /// Serializes the fully resolved configuration.
    pub fn echo(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }
}
