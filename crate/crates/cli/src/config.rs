//! TOML run configuration. Unknown keys are rejected at every level.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use flowdiff_core::datagen::{DarcyDatasetConfig, NsDatasetConfig};
use flowdiff_core::diffusion::AnnealMode;
use flowdiff_core::eval::{AblationGrid, EvalOptions};
use flowdiff_core::model::ModelConfig;
use flowdiff_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Benchmark {
    #[default]
    Darcy,
    NavierStokes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatagenConfig {
    pub benchmark: Benchmark,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub darcy: DarcyDatasetConfig,
    pub navier_stokes: NsDatasetConfig,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        Self {
            benchmark: Benchmark::Darcy,
            n_train: 1000,
            n_test: 200,
            seed: 0,
            darcy: DarcyDatasetConfig::default(),
            navier_stokes: NsDatasetConfig::default(),
        }
    }
}

/// Dataset locations; relative paths resolve against the config file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataPaths {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridName {
    Noise,
    Loss,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub grids: Vec<GridName>,
    pub anneal_mode: AnnealMode,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self { grids: vec![GridName::Noise, GridName::Loss], anneal_mode: AnnealMode::default() }
    }
}

impl AblationConfig {
    pub fn grids(&self) -> Vec<(GridName, AblationGrid)> {
        self.grids
            .iter()
            .map(|&g| {
                let mut grid = match g {
                    GridName::Noise => AblationGrid::noise_grid(),
                    GridName::Loss => AblationGrid::loss_grid(),
                };
                grid.anneal_mode = self.anneal_mode;
                (g, grid)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub datagen: DatagenConfig,
    pub data: DataPaths,
    /// Channel counts are taken from the dataset.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalOptions,
    pub ablation: AblationConfig,
}

/// A parsed config together with its verbatim text.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub text: String,
    pub dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig = toml::from_str(&text).map_err(|e| {
            let line = e.span().map(|s| text[..s.start].lines().count().max(1));
            let at = line.map(|l| format!(" line {l}")).unwrap_or_default();
            anyhow!("parsing config {}{at}: {}", path.display(), e.message().trim())
        })?;
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, text, dir })
    }

    /// Defaults, used when a command runs without `--config`.
    pub fn defaults() -> Self {
        Self { config: RunConfig::default(), text: String::new(), dir: PathBuf::new() }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        if c.datagen.n_train == 0 || c.datagen.n_test == 0 {
            bail!("datagen.n_train and datagen.n_test must be at least 1");
        }
        if c.eval.ensemble == 0 {
            bail!("eval.ensemble must be at least 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let c = RunConfig::default();
        let text = toml::to_string(&c).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<RunConfig>("bogus = 1").is_err());
        assert!(toml::from_str::<RunConfig>("[train]\nlearning_rat = 1e-3").is_err());
        assert!(toml::from_str::<RunConfig>("[datagen.darcy]\nhi = 12.0\nfoo = 2").is_err());
        let ok: RunConfig =
            toml::from_str("[train]\nlearning_rate = 1e-3\n[datagen]\nbenchmark = \"navier-stokes\"").unwrap();
        assert_eq!(ok.train.learning_rate, 1e-3);
        assert_eq!(ok.datagen.benchmark, Benchmark::NavierStokes);
    }
}
