//! Experiment configuration files.
//!
//! Configs are TOML with a `version` key and a closed set of keys; unknown
//! keys are rejected. A canonical JSON rendering of everything except the
//! output settings is hashed with SHA-256 and stamped on every report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{NoiseKind, NoiseSpec};
use crate::error::{Error, Result};
use crate::model::TrainConfig;
use crate::schedule::{check_effect_rate, Strategy};
use crate::selection::SelectionConfig;

pub const CONFIG_VERSION: u32 = 1;

/// Environment variable that, when set, replaces the configured output directory.
pub const OUT_DIR_ENV: &str = "JUMPSEL_OUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Gaussian blobs generated from each run's seed.
    Blobs {
        classes: usize,
        dim: usize,
        n_per_class: usize,
        spread: f64,
    },
    /// Datasets stored in the CSV layout of [`crate::data`].
    Csv {
        train: PathBuf,
        test: PathBuf,
        classes: usize,
    },
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig::Blobs {
            classes: 10,
            dim: 32,
            n_per_class: 250,
            spread: 1.0,
        }
    }
}

impl DatasetConfig {
    pub fn classes(&self) -> usize {
        match self {
            DatasetConfig::Blobs { classes, .. } | DatasetConfig::Csv { classes, .. } => *classes,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    pub epsilon: f64,
    /// Asymmetric noise only: `class_map[y]` receives flipped labels of class `y`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_map: Option<Vec<usize>>,
}

impl NoiseConfig {
    /// The concrete noise model for one run; instance-noise weights are
    /// drawn from `seed`.
    pub fn spec(&self, dim: usize, classes: usize, seed: u64) -> NoiseSpec {
        match self.kind {
            NoiseKind::Instance => NoiseSpec::instance_from_seed(self.epsilon, dim, classes, seed),
            kind => NoiseSpec {
                kind,
                epsilon: self.epsilon,
                class_map: self.class_map.clone(),
                idn_weights: None,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Every listed strategy runs once per effect rate and seed.
    pub strategies: Vec<Strategy>,
    pub effect_rates: Vec<f64>,
    pub jump_step: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            strategies: vec![Strategy::JumpUpdate],
            effect_rates: vec![1.0],
            jump_step: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub dataset: DatasetConfig,
    #[serde(default)]
    pub noise: Option<NoiseConfig>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    #[serde(default)]
    pub schedule: SweepConfig,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Write per-sample identifier CSVs for every epoch.
    #[serde(default)]
    pub dump_selection: bool,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seeds: default_seeds(),
            dataset: DatasetConfig::default(),
            noise: None,
            train: TrainConfig::default(),
            selection: SelectionConfig::default(),
            schedule: SweepConfig::default(),
            out_dir: default_out_dir(),
            dump_selection: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(e.to_string()))
    }

    /// Checks every nested invariant; messages start with the offending key path.
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::config(format!(
                "version: expected {CONFIG_VERSION}, got {}",
                self.version
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds: need at least one seed"));
        }
        match &self.dataset {
            DatasetConfig::Blobs {
                classes,
                dim,
                n_per_class,
                spread,
            } => {
                if *classes < 2 || *dim < 2 {
                    return Err(Error::config("dataset.classes/dim: need at least 2 of each"));
                }
                if *n_per_class < 2 {
                    return Err(Error::config("dataset.n_per_class: need at least 2"));
                }
                if !(*spread >= 0.0 && spread.is_finite()) {
                    return Err(Error::config("dataset.spread: must be non-negative"));
                }
            }
            DatasetConfig::Csv { classes, .. } => {
                if *classes < 2 {
                    return Err(Error::config("dataset.classes: need at least 2"));
                }
            }
        }
        if let Some(noise) = &self.noise {
            if !(0.0..1.0).contains(&noise.epsilon) {
                return Err(Error::config(format!(
                    "noise.epsilon: need a value in [0, 1), got {}",
                    noise.epsilon
                )));
            }
            let classes = self.dataset.classes();
            match (&noise.kind, &noise.class_map) {
                (NoiseKind::Asymmetric, None) => {
                    return Err(Error::config("noise.class_map: required for asymmetric noise"))
                }
                (NoiseKind::Asymmetric, Some(map))
                    if map.len() != classes || map.iter().any(|&c| c >= classes) =>
                {
                    return Err(Error::config(format!(
                        "noise.class_map: need {classes} entries below {classes}"
                    )))
                }
                (NoiseKind::Asymmetric, Some(_)) => {}
                (_, Some(_)) => {
                    return Err(Error::config(
                        "noise.class_map: only used by asymmetric noise",
                    ))
                }
                _ => {}
            }
        }
        self.train.validate()?;
        self.selection.validate()?;
        if self.schedule.strategies.is_empty() {
            return Err(Error::config("schedule.strategies: need at least one strategy"));
        }
        if self.schedule.effect_rates.is_empty() {
            return Err(Error::config("schedule.effect_rates: need at least one rate"));
        }
        for &r in &self.schedule.effect_rates {
            check_effect_rate(r)?;
        }
        if let Some(s) = self.schedule.jump_step {
            if s < 2 {
                return Err(Error::config(format!(
                    "schedule.jump_step: must be at least 2, got {s}"
                )));
            }
        }
        self.keep_ratio()?;
        Ok(())
    }

    /// Small-loss keep ratio: explicit, or `1 − ε` of the configured noise.
    /// Strategies without small-loss ranking ignore it.
    pub fn keep_ratio(&self) -> Result<f64> {
        if let Some(r) = self.selection.small_loss_keep_ratio {
            return Ok(r);
        }
        if let Some(noise) = &self.noise {
            return Ok(1.0 - noise.epsilon);
        }
        let ranks = self
            .schedule
            .strategies
            .iter()
            .any(|s| matches!(s, Strategy::SelfUpdate | Strategy::CrossUpdate));
        if ranks {
            Err(Error::config(
                "selection.small_loss_keep_ratio: required for small-loss strategies when no noise section is given",
            ))
        } else {
            Ok(1.0)
        }
    }

    /// Canonical JSON of the semantically meaningful fields: all keys sorted,
    /// defaults and derived values (warm-up length, keep ratio) filled in,
    /// output settings left out.
    pub fn canonical_json(&self) -> Result<String> {
        let mut resolved = self.clone();
        resolved.train.warmup_epochs = Some(self.train.warmup());
        resolved.selection.small_loss_keep_ratio = Some(self.keep_ratio()?);
        let mut value =
            serde_json::to_value(&resolved).map_err(|e| Error::config(e.to_string()))?;
        if let Some(map) = value.as_object_mut() {
            map.remove("out_dir");
            map.remove("dump_selection");
        }
        serde_json::to_string(&value).map_err(|e| Error::config(e.to_string()))
    }

    /// Lower-case hex SHA-256 of [`Self::canonical_json`].
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.canonical_json()?.as_bytes())))
    }

    /// The output directory, unless [`OUT_DIR_ENV`] overrides it.
    pub fn resolved_out_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.out_dir.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "version = 1\n";

    const FULL: &str = r#"
version = 1
seeds = [0, 1]
out_dir = "out/a"

[dataset]
kind = "blobs"
classes = 4
dim = 8
n_per_class = 30
spread = 0.5

[noise]
kind = "symmetric"
epsilon = 0.4

[train]
epochs = 5
batch_size = 32

[selection]
tau = 0.001

[schedule]
strategies = ["standard", "jump_update"]
effect_rates = [1.0]
"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn full_config_parses() {
        let cfg = ExperimentConfig::from_toml(FULL).unwrap();
        assert_eq!(cfg.seeds, vec![0, 1]);
        assert_eq!(cfg.train.epochs, 5);
        assert_eq!(cfg.train.warmup(), 0);
        assert_eq!(cfg.keep_ratio().unwrap(), 0.6);
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        for bad in [
            "version = 1\nseed = 3\n",
            "version = 1\n[train]\nlearning_rate = 0.1\n",
            "version = 1\n[dataset]\nkind = \"blobs\"\nclasses = 3\ndim = 4\nn_per_class = 5\nspread = 1.0\nradius = 2.0\n",
        ] {
            assert!(matches!(ExperimentConfig::from_toml(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn errors_name_field_paths() {
        let cases = [
            ("version = 2\n", "version"),
            ("version = 1\nseeds = []\n", "seeds"),
            ("version = 1\n[noise]\nkind = \"symmetric\"\nepsilon = 1.0\n", "noise.epsilon"),
            ("version = 1\n[noise]\nkind = \"asymmetric\"\nepsilon = 0.2\n", "noise.class_map"),
            ("version = 1\n[train]\nbatch_size = 0\n", "train.batch_size"),
            ("version = 1\n[selection]\ntau = -1.0\n", "selection.tau"),
            ("version = 1\n[schedule]\neffect_rates = [0.0]\n", "schedule.effect_rate"),
            (
                "version = 1\n[schedule]\nstrategies = [\"self_update\"]\n",
                "selection.small_loss_keep_ratio",
            ),
        ];
        for (text, path) in cases {
            match ExperimentConfig::from_toml(text) {
                Err(Error::Config(m)) => assert!(m.starts_with(path), "{m} vs {path}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn hash_ignores_layout_and_output_settings() {
        let a = ExperimentConfig::from_toml(FULL).unwrap();
        let reordered = FULL.replace("seeds = [0, 1]\nout_dir = \"out/a\"", "out_dir = \"elsewhere\"\nseeds = [0, 1]\ndump_selection = true");
        let b = ExperimentConfig::from_toml(&reordered).unwrap();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());

        let explicit_default = FULL.replace("tau = 0.001", "tau = 0.001\nsmall_loss_keep_ratio = 0.6");
        let c = ExperimentConfig::from_toml(&explicit_default).unwrap();
        assert_eq!(a.hash().unwrap(), c.hash().unwrap());
        let e = ExperimentConfig::from_toml(&FULL.replace("tau = 0.001", "tau = 0.001\nsmall_loss_keep_ratio = 0.5")).unwrap();
        assert_ne!(a.hash().unwrap(), e.hash().unwrap());

        let d = ExperimentConfig::from_toml(&FULL.replace("spread = 0.5", "spread = 0.6")).unwrap();
        assert_ne!(a.hash().unwrap(), d.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
    }

    #[test]
    fn csv_dataset_section() {
        let text = "version = 1\n[dataset]\nkind = \"csv\"\ntrain = \"a.csv\"\ntest = \"b.csv\"\nclasses = 3\n";
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(cfg.dataset.classes(), 3);
    }
}
