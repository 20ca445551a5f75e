//! Experiment configuration file (TOML) and artifact locations.

use std::path::{Path, PathBuf};

use dualev_core::artifact::config_hash;
use dualev_core::edl::TrainConfig;
use dualev_core::openset::{CalibrationGrouping, DEFAULT_KNOWN_FRACTION};
use dualev_core::ProtocolConfig;
use serde::{Deserialize, Serialize};

use crate::exit::{CliError, ExitKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArtifactPaths {
    pub dataset: PathBuf,
    pub checkpoint: PathBuf,
    pub thresholds: PathBuf,
    pub report: PathBuf,
    pub sweep: PathBuf,
    pub simplex: PathBuf,
    pub run_log: PathBuf,
}

impl Default for ArtifactPaths {
    fn default() -> Self {
        Self {
            dataset: "dataset".into(),
            checkpoint: "model.ckpt".into(),
            thresholds: "thresholds.json".into(),
            report: "report.json".into(),
            sweep: "sweep.json".into(),
            simplex: "simplex.csv".into(),
            run_log: "run-log.jsonl".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Single source of randomness; copied into the protocol and training sections.
    pub seed: u64,
    pub known_fraction: f64,
    pub calibration_grouping: CalibrationGrouping,
    pub output_dir: PathBuf,
    pub protocol: ProtocolConfig,
    pub train: TrainConfig,
    /// Relative entries resolve against `output_dir`.
    pub paths: ArtifactPaths,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            known_fraction: DEFAULT_KNOWN_FRACTION,
            calibration_grouping: CalibrationGrouping::TrueLabel,
            output_dir: "dualev-out".into(),
            protocol: ProtocolConfig::default(),
            train: TrainConfig::default(),
            paths: ArtifactPaths::default(),
        }
    }
}

/// The part of the configuration that determines results; file locations are excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub seed: u64,
    pub known_fraction: f64,
    pub calibration_grouping: CalibrationGrouping,
    pub protocol: ProtocolConfig,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::new(
                ExitKind::Validation,
                anyhow::anyhow!("cannot read config {}: {e}", path.display()),
            )
        })?;
        toml::from_str(&text).map_err(|e| {
            CliError::new(
                ExitKind::Validation,
                anyhow::anyhow!("config {}: {e}", path.display()),
            )
        })
    }

    /// Applies overrides, pushes the seed down and validates every section.
    pub fn resolve(mut self, seed: Option<u64>, output_dir: Option<PathBuf>) -> Result<Self, CliError> {
        if self.protocol.seed != 0 || self.train.seed != 0 {
            return Err(CliError::validation(
                "set `seed` at the top level of the config, not inside [protocol] or [train]",
            ));
        }
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(dir) = output_dir {
            self.output_dir = dir;
        }
        self.protocol.seed = self.seed;
        self.train.seed = self.seed;
        self.protocol.validate()?;
        self.train.validate()?;
        if !(self.known_fraction > 0.0 && self.known_fraction < 1.0) {
            return Err(CliError::validation(format!(
                "known_fraction {} must lie strictly between 0 and 1",
                self.known_fraction
            )));
        }
        Ok(self)
    }

    pub fn settings(&self) -> Settings {
        Settings {
            seed: self.seed,
            known_fraction: self.known_fraction,
            calibration_grouping: self.calibration_grouping,
            protocol: self.protocol.clone(),
            train: self.train.clone(),
        }
    }

    /// Hash of [`Settings`]; recorded in every artifact and run log entry.
    pub fn config_hash(&self) -> Result<String, CliError> {
        Ok(config_hash(&self.settings())?)
    }

    /// Hash the dataset manifest is expected to carry.
    pub fn dataset_hash(&self) -> Result<String, CliError> {
        Ok(config_hash(&self.protocol)?)
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.output_dir.join(p)
        }
    }
}

/// `thresholds.json` becomes `thresholds-spatial-only.json` for a variant.
pub fn variant_path(base: &Path, variant: Option<&str>) -> PathBuf {
    let Some(v) = variant else {
        return base.to_path_buf();
    };
    let stem = base.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let name = match base.extension() {
        Some(ext) => format!("{stem}-{v}.{}", ext.to_string_lossy()),
        None => format!("{stem}-{v}"),
    };
    base.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg: ExperimentConfig = toml::from_str(
            "seed = 4\n[protocol]\ncategories = [\"BLEND\", \"GRID\", \"SHIFT\"]\nheld_out = [\"SHIFT\"]\n[train]\nepochs = 3\n",
        )
        .unwrap();
        let cfg = cfg.resolve(None, None).unwrap();
        assert_eq!(cfg.protocol.seed, 4);
        assert_eq!(cfg.train.seed, 4);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, 32);
        assert_eq!(cfg.protocol.class_count(), 3);
    }

    #[test]
    fn seed_override_changes_hash_but_paths_do_not() {
        let base = ExperimentConfig::default().resolve(None, None).unwrap();
        let moved = ExperimentConfig::default()
            .resolve(None, Some("/elsewhere".into()))
            .unwrap();
        let reseeded = ExperimentConfig::default().resolve(Some(1), None).unwrap();
        assert_eq!(base.config_hash().unwrap(), moved.config_hash().unwrap());
        assert_ne!(base.config_hash().unwrap(), reseeded.config_hash().unwrap());
        assert_ne!(base.dataset_hash().unwrap(), reseeded.dataset_hash().unwrap());
    }

    #[test]
    fn unknown_keys_and_nested_seeds_are_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("sede = 1").is_err());
        let nested: ExperimentConfig = toml::from_str("[train]\nseed = 5").unwrap();
        assert!(nested.resolve(None, None).is_err());
    }

    #[test]
    fn variant_paths() {
        assert_eq!(variant_path(Path::new("a/thresholds.json"), None), Path::new("a/thresholds.json"));
        assert_eq!(
            variant_path(Path::new("a/thresholds.json"), Some("maxlogit")),
            Path::new("a/thresholds-maxlogit.json")
        );
        assert_eq!(variant_path(Path::new("report"), Some("full")), Path::new("report-full"));
    }
}
