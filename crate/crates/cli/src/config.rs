//! Optional TOML run configuration. Every section is optional; flags given
//! on the command line take precedence.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use chanbal::datagen::SynthConfig;
use chanbal::eval::SplitSpec;
use chanbal::models::TrainConfig;
use chanbal::routing::SimConfig;

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub snapshot: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub encodings: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub paths: Paths,
    pub synth: SynthConfig,
    pub train: TrainConfig,
    pub split: SplitSpec,
    pub simulation: SimConfig,
    /// Estimators for `evaluate`.
    pub variants: Vec<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: RunConfig = toml::from_str(
            r#"
            seed = 9
            [train.forest]
            n_trees = 17
            [paths]
            snapshot = "g.json"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.train.forest.n_trees, 17);
        assert_eq!(cfg.train.forest.min_samples_leaf, 2);
        assert_eq!(cfg.synth.n_nodes, SynthConfig::default().n_nodes);
        assert_eq!(cfg.paths.snapshot, Some(PathBuf::from("g.json")));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("sed = 1").is_err());
        assert!(toml::from_str::<RunConfig>("[simulation]\nn_payment = 5").is_err());
        assert!(toml::from_str::<RunConfig>("[train.forest]\ntrees = 5").is_err());
    }
}
