//! Run configuration: one TOML (or JSON) document with a section per
//! subsystem and a mandatory seed.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::artifacts::ArtifactSpec;
use crate::curriculum::CurriculumConfig;
use crate::data::DataConfig;
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::tasks::TaskConfig;
use crate::trainers::TrainRunConfig;

/// Artifacts scored after training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub unseen: Vec<ArtifactSpec>,
    pub composite: Vec<ArtifactSpec>,
    /// Test-time adaptation steps; 0 scores the unadapted parameters.
    pub adapt_steps: usize,
    /// Images rendered into each qualitative panel set.
    pub panel_images: usize,
}

fn specs(ids: &[&str]) -> Vec<ArtifactSpec> {
    ids.iter().map(|s| s.parse().expect("built-in spec id")).collect()
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            unseen: specs(&[
                "none",
                "motion_s4",
                "motion_s6",
                "us_x03",
                "us_x05",
                "spike_n3_i0.2",
                "ghost_n4_a0_i0.6",
                "noise_s0.05",
                "gamma_g0.7",
                "gamma_g1.5",
            ]),
            composite: specs(&[
                "comp(noise_s0.05+spike_n3_i0.2)",
                "comp(sr_x2+noise_s0.05)",
                "comp(us_x03+spike_n3_i0.2)",
                "comp(ghost_n4_a0_i0.6+spike_n3_i0.2)",
                "comp(us_x03+noise_s0.05)",
            ]),
            adapt_steps: 0,
            panel_images: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub tasks: TaskConfig,
    #[serde(default)]
    pub curriculum: CurriculumConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainRunConfig,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Defaults everywhere except the seed.
    pub fn with_seed(seed: u64) -> Self {
        let mut config = Self {
            seed,
            workers: 0,
            data: DataConfig::default(),
            tasks: TaskConfig::default(),
            curriculum: CurriculumConfig::default(),
            model: ModelConfig::default(),
            train: TrainRunConfig::default(),
            eval: EvalConfig::default(),
        };
        config.train.seed = seed;
        config
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.train.seed = config.seed;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let mut config: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.train.seed = config.seed;
        config.validate()?;
        Ok(config)
    }

    /// Reads JSON when the extension is `.json`, TOML otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        };
        parsed.map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.train.seed = seed;
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        Model::new(self.model.clone())?;
        self.train.validate()?;
        let data = &self.data;
        if data.crop_size > data.phantom_size {
            return Err(Error::Config(format!(
                "data.crop_size {} exceeds data.phantom_size {}",
                data.crop_size, data.phantom_size
            )));
        }
        if data.train_per_task < 2 || data.eval_images == 0 {
            return Err(Error::Config(
                "data.train_per_task must be >= 2 and data.eval_images positive".into(),
            ));
        }
        for spec in self.tasks.train_specs() {
            spec.validate()?;
        }
        for spec in self.eval.unseen.iter().chain(&self.eval.composite) {
            spec.validate()
                .map_err(|e| Error::Config(format!("eval spec {spec}: {e}")))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_profiles_load() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let desk = RunConfig::load(&dir.join("desk.toml")).unwrap();
        assert_eq!((desk.data.train_per_task, desk.data.val_per_task), (64, 16));
        assert_eq!(desk.train.max_epochs, 20);
        let full = RunConfig::load(&dir.join("full.toml")).unwrap();
        assert_eq!((full.data.crop_size, full.model.hidden_channels), (128, 64));
        assert_eq!(full.train.max_epochs, 200);
    }

    #[test]
    fn seed_is_mandatory() {
        assert!(RunConfig::from_toml_str("").is_err());
        let c = RunConfig::from_toml_str("seed = 7").unwrap();
        assert_eq!(c, RunConfig::with_seed(7));
        assert_eq!(c.train.seed, 7);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml_str("seed = 1\ncolour = 2").is_err());
        assert!(RunConfig::from_toml_str("seed = 1\n[train]\nlearning_rate = 0.1").is_err());
        assert!(RunConfig::from_toml_str("seed = 1\n[dataa]\n").is_err());
    }

    #[test]
    fn echo_reproduces_the_config() {
        let text = "seed = 3\n[train]\nmethod = \"maml\"\nmax_epochs = 4\n[curriculum]\nstep_epochs = [1, 2, 3]\n[eval]\nunseen = [\"motion_s4\"]\n";
        let c = RunConfig::from_toml_str(text).unwrap();
        assert_eq!(c.train.max_epochs, 4);
        assert_eq!(c.eval.unseen, vec![ArtifactSpec::motion(4)]);
        let echoed = c.to_toml_string();
        assert_eq!(RunConfig::from_toml_str(&echoed).unwrap(), c);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json_str(&json).unwrap(), c);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in [
            "seed = 1\n[train]\nalpha = -1.0",
            "seed = 1\n[model]\nnum_layers = 1",
            "seed = 1\n[data]\ncrop_size = 64",
            "seed = 1\n[eval]\nunseen = [\"comp(motion_s1+motion_s2)\"]",
            "seed = 1\n[eval]\nunseen = [\"blur_x2\"]",
        ] {
            assert!(
                matches!(RunConfig::from_toml_str(text), Err(Error::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn default_eval_lists() {
        let e = EvalConfig::default();
        assert_eq!(e.unseen.len(), 10);
        assert_eq!(e.unseen[0], ArtifactSpec::None);
        assert_eq!(e.composite.len(), 5);
    }
}
