//! Subcommand implementations. Each reads its prerequisites, checks that they
//! were produced by the current configuration, writes one artifact and
//! appends an entry to the run log.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dualev_core::artifact::{
    decode_dataset, encode_dataset, sha256_hex, Checkpoint, DatasetManifest, MANIFEST_FILE,
    TEST_FILE, TRAIN_FILE,
};
use dualev_core::experiment::{train_single, CalibrationCache, SWEEP_FRACTIONS};
use dualev_core::features::Branch;
use dualev_core::openset::{
    calibrate_maxlogit, decide, evaluate_maxlogit, evaluate_with, export_simplex,
    maxlogit_baseline, score, simplex_to_csv, LogitThresholds, MetricsReport, Prediction,
    ThresholdSet,
};
use dualev_core::{build_protocol, DualBranchModel, Error as CoreError, ImageTensor, SynthDataset};
use serde::{Deserialize, Serialize};

use crate::args::{Command, InferArgs, SampleRef, Scorer, SimplexArgs};
use crate::config::{variant_path, ExperimentConfig, Settings};
use crate::exit::{CliError, ExitKind};
use crate::image_io::read_png;

pub const THRESHOLDS_FORMAT: &str = "dualev-thresholds";
pub const REPORT_FORMAT: &str = "dualev-report";
pub const SWEEP_FORMAT: &str = "dualev-sweep";
pub const ARTIFACT_VERSION: u32 = 1;
pub const NOVEL_NAME: &str = "NOVEL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Calibrated {
    Uncertainty(ThresholdSet),
    Maxlogit(LogitThresholds),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdFile {
    pub format: String,
    pub version: u32,
    pub config_hash: String,
    pub dataset_hash: String,
    pub checkpoint_sha256: String,
    pub thresholds: Calibrated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub format: String,
    pub version: u32,
    pub config: Settings,
    pub seed: u64,
    pub config_hash: String,
    pub dataset_hash: String,
    pub checkpoint_sha256: String,
    pub thresholds_sha256: String,
    pub scorer: String,
    pub known_fraction: f64,
    /// Closed-set classes followed by `NOVEL`; indexes the confusion matrix.
    pub class_names: Vec<String>,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub known_fraction: f64,
    pub tau: Vec<f64>,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFile {
    pub format: String,
    pub version: u32,
    pub config: Settings,
    pub seed: u64,
    pub config_hash: String,
    pub dataset_hash: String,
    pub checkpoint_sha256: String,
    pub scorer: String,
    pub class_names: Vec<String>,
    pub points: Vec<SweepEntry>,
}

#[derive(Debug, Serialize)]
struct LogEntry<'a> {
    command: &'a str,
    seed: u64,
    config_hash: &'a str,
    durations_ms: &'a BTreeMap<String, f64>,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    details: serde_json::Value,
}

struct Timer {
    start: Instant,
    phases: BTreeMap<String, f64>,
}

impl Timer {
    fn new() -> Self {
        Self {
            start: Instant::now(),
            phases: BTreeMap::new(),
        }
    }

    fn time<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.phases
            .insert(phase.to_string(), t.elapsed().as_secs_f64() * 1e3);
        out
    }

    fn finish(mut self) -> BTreeMap<String, f64> {
        self.phases
            .insert("total".into(), self.start.elapsed().as_secs_f64() * 1e3);
        self.phases
    }
}

fn read_artifact(path: &Path, what: &str, producer: &str) -> Result<Vec<u8>, CliError> {
    if !path.exists() {
        return Err(CliError::dependency(format!(
            "missing {what} at {}; run `dualev {producer}` first",
            path.display()
        )));
    }
    fs::read(path).map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))
}

fn write_artifact(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)
            .map_err(|e| CliError::io(format!("cannot create {}: {e}", parent.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::new(ExitKind::Internal, e))?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn from_json<T: for<'de> Deserialize<'de>>(bytes: &[u8], path: &Path) -> Result<T, CliError> {
    serde_json::from_slice(bytes).map_err(|e| {
        CliError::new(
            ExitKind::Artifact,
            anyhow::anyhow!("cannot parse {}: {e}", path.display()),
        )
    })
}

fn check_version(found: u32, what: &'static str) -> Result<(), CliError> {
    if found != ARTIFACT_VERSION {
        return Err(CoreError::VersionMismatch {
            what,
            found,
            supported: ARTIFACT_VERSION,
        }
        .into());
    }
    Ok(())
}

pub struct Runner {
    pub config: ExperimentConfig,
    pub allow_mismatch: bool,
}

struct Loaded {
    manifest: DatasetManifest,
    dataset: SynthDataset,
}

struct LoadedCheckpoint {
    checkpoint: Checkpoint,
    sha256: String,
}

impl Runner {
    pub fn new(config: ExperimentConfig, allow_mismatch: bool) -> Self {
        Self {
            config,
            allow_mismatch,
        }
    }

    pub fn run(&self, command: &Command) -> Result<(), CliError> {
        match command {
            Command::GenData => self.gen_data(),
            Command::Train => self.train(),
            Command::Calibrate(s) => self.calibrate((*s).into()),
            Command::Evaluate(s) => self.evaluate((*s).into()),
            Command::Infer(a) => self.infer(a),
            Command::ExportSimplex(a) => self.export_simplex(a),
            Command::SweepThreshold(s) => self.sweep((*s).into()),
        }
    }

    fn path(&self, p: &Path) -> PathBuf {
        self.config.path(p)
    }

    fn dataset_dir(&self) -> PathBuf {
        self.path(&self.config.paths.dataset)
    }

    fn check_hash(&self, what: &str, expected: &str, found: &str) -> Result<(), CliError> {
        if expected == found {
            return Ok(());
        }
        let msg = format!(
            "{what} was produced by a different configuration (expected {expected}, found {found})"
        );
        if self.allow_mismatch {
            eprintln!("warning: {msg}; continuing because --allow-mismatch was given");
            Ok(())
        } else {
            Err(CliError::dependency(format!(
                "{msg}; regenerate it or pass --allow-mismatch"
            )))
        }
    }

    fn log(
        &self,
        command: &str,
        durations: BTreeMap<String, f64>,
        outputs: &[&Path],
        details: serde_json::Value,
    ) -> Result<(), CliError> {
        let hash = self.config.config_hash()?;
        let entry = LogEntry {
            command,
            seed: self.config.seed,
            config_hash: &hash,
            durations_ms: &durations,
            outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
            details,
        };
        let path = self.path(&self.config.paths.run_log);
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::io(format!("cannot create {}: {e}", parent.display())))?;
        }
        let line = serde_json::to_string(&entry).map_err(|e| CliError::new(ExitKind::Internal, e))?;
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| CliError::io(format!("cannot open run log {}: {e}", path.display())))?;
        writeln!(f, "{line}").map_err(|e| CliError::io(format!("cannot append to run log: {e}")))?;
        Ok(())
    }

    fn load_manifest(&self) -> Result<DatasetManifest, CliError> {
        let path = self.dataset_dir().join(MANIFEST_FILE);
        let manifest: DatasetManifest =
            from_json(&read_artifact(&path, "dataset manifest", "gen-data")?, &path)?;
        self.check_hash("dataset", &self.config.dataset_hash()?, &manifest.config_hash)?;
        Ok(manifest)
    }

    fn load_dataset(&self) -> Result<Loaded, CliError> {
        let manifest = self.load_manifest()?;
        let dir = self.dataset_dir();
        let train = read_artifact(&dir.join(&manifest.train.file), "train tensor file", "gen-data")?;
        let test = read_artifact(&dir.join(&manifest.test.file), "test tensor file", "gen-data")?;
        let dataset = decode_dataset(&manifest, &train, &test)?;
        Ok(Loaded { manifest, dataset })
    }

    fn load_checkpoint(&self, manifest: &DatasetManifest) -> Result<LoadedCheckpoint, CliError> {
        let path = self.path(&self.config.paths.checkpoint);
        let bytes = read_artifact(&path, "checkpoint", "train")?;
        let checkpoint = Checkpoint::read_from(bytes.as_slice())?;
        self.check_hash("checkpoint's dataset", &manifest.config_hash, &checkpoint.dataset_hash)?;
        self.check_hash(
            "checkpoint's training configuration",
            &dualev_core::artifact::config_hash(&self.config.train)?,
            &dualev_core::artifact::config_hash(&checkpoint.train_config)?,
        )?;
        Ok(LoadedCheckpoint {
            checkpoint,
            sha256: sha256_hex(&bytes),
        })
    }

    fn load_thresholds(
        &self,
        scorer: Scorer,
        manifest: &DatasetManifest,
        ck: &LoadedCheckpoint,
    ) -> Result<(ThresholdFile, String), CliError> {
        let path = variant_path(&self.path(&self.config.paths.thresholds), scorer.variant());
        let bytes = read_artifact(
            &path,
            "calibration thresholds",
            &format!("calibrate{}", scorer.flags()),
        )?;
        let file: ThresholdFile = from_json(&bytes, &path)?;
        if file.format != THRESHOLDS_FORMAT {
            return Err(CoreError::Format(format!("{} is not a thresholds file", path.display())).into());
        }
        check_version(file.version, "thresholds file")?;
        let matches = match (&file.thresholds, scorer) {
            (Calibrated::Uncertainty(t), Scorer::Uncertainty(m)) => t.mode == m,
            (Calibrated::Maxlogit(_), Scorer::MaxLogit) => true,
            _ => false,
        };
        if !matches {
            return Err(CliError::validation(format!(
                "{} was calibrated for a different scorer than {}",
                path.display(),
                scorer.name()
            )));
        }
        self.check_hash("thresholds", &self.config.config_hash()?, &file.config_hash)?;
        self.check_hash("thresholds' dataset", &manifest.config_hash, &file.dataset_hash)?;
        self.check_hash("thresholds' checkpoint", &ck.sha256, &file.checkpoint_sha256)?;
        Ok((file, sha256_hex(&bytes)))
    }

    fn gen_data(&self) -> Result<(), CliError> {
        let mut timer = Timer::new();
        let dataset = timer.time("generate", || build_protocol(&self.config.protocol))?;
        let encoded = timer.time("encode", || encode_dataset(&dataset))?;
        let dir = self.dataset_dir();
        let train = dir.join(TRAIN_FILE);
        let test = dir.join(TEST_FILE);
        let manifest = dir.join(MANIFEST_FILE);
        write_artifact(&train, &encoded.train_bytes)?;
        write_artifact(&test, &encoded.test_bytes)?;
        write_artifact(&manifest, &to_json(&encoded.manifest)?)?;
        println!(
            "dataset: {} train / {} test samples, {} classes ({}), written to {}",
            dataset.train.len(),
            dataset.test.len(),
            dataset.class_count(),
            dataset.class_names().join(", "),
            dir.display()
        );
        self.log(
            "gen-data",
            timer.finish(),
            &[&manifest, &train, &test],
            serde_json::Value::Null,
        )
    }

    fn train(&self) -> Result<(), CliError> {
        let Loaded { manifest, dataset } = self.load_dataset()?;
        let mut timer = Timer::new();
        let spatial = timer.time("spatial", || train_single(&dataset, &self.config.train, Branch::Spatial))?;
        let frequency =
            timer.time("frequency", || train_single(&dataset, &self.config.train, Branch::Frequency))?;
        let final_losses = serde_json::json!({
            "spatial_final_loss": spatial.epoch_losses.last(),
            "frequency_final_loss": frequency.epoch_losses.last(),
        });
        let checkpoint = Checkpoint {
            model: DualBranchModel::new(spatial.model, frequency.model, self.config.train.evidence_fn)?,
            train_config: self.config.train.clone(),
            dataset_hash: manifest.config_hash.clone(),
        };
        let path = self.path(&self.config.paths.checkpoint);
        write_artifact(&path, &checkpoint.to_bytes()?)?;
        println!(
            "trained {} epochs per branch; checkpoint written to {}",
            self.config.train.epochs,
            path.display()
        );
        self.log("train", timer.finish(), &[&path], final_losses)
    }

    fn calibrate(&self, scorer: Scorer) -> Result<(), CliError> {
        let Loaded { manifest, dataset } = self.load_dataset()?;
        let ck = self.load_checkpoint(&manifest)?;
        let model = &ck.checkpoint.model;
        let f = self.config.known_fraction;
        let mut timer = Timer::new();
        let thresholds = timer.time("calibrate", || -> Result<Calibrated, CoreError> {
            Ok(match scorer {
                Scorer::Uncertainty(mode) => Calibrated::Uncertainty(
                    CalibrationCache::new(model, &dataset, mode)?
                        .thresholds(f, self.config.calibration_grouping)?,
                ),
                Scorer::MaxLogit => {
                    Calibrated::Maxlogit(calibrate_maxlogit(&model.spatial, &dataset.train, f)?)
                }
            })
        })?;
        let tau = match &thresholds {
            Calibrated::Uncertainty(t) => t.tau.clone(),
            Calibrated::Maxlogit(t) => t.tau.clone(),
        };
        let file = ThresholdFile {
            format: THRESHOLDS_FORMAT.into(),
            version: ARTIFACT_VERSION,
            config_hash: self.config.config_hash()?,
            dataset_hash: manifest.config_hash.clone(),
            checkpoint_sha256: ck.sha256.clone(),
            thresholds,
        };
        let path = variant_path(&self.path(&self.config.paths.thresholds), scorer.variant());
        write_artifact(&path, &to_json(&file)?)?;
        println!("scorer {} at known fraction {f}:", scorer.name());
        for (name, t) in manifest.class_names.iter().zip(&tau) {
            println!("  tau[{name}] = {t:.6}");
        }
        println!("thresholds written to {}", path.display());
        self.log("calibrate", timer.finish(), &[&path], serde_json::json!({ "scorer": scorer.name() }))
    }

    fn evaluate(&self, scorer: Scorer) -> Result<(), CliError> {
        let Loaded { manifest, dataset } = self.load_dataset()?;
        let ck = self.load_checkpoint(&manifest)?;
        let (thresholds, thresholds_sha256) = self.load_thresholds(scorer, &manifest, &ck)?;
        let model = &ck.checkpoint.model;
        let mut timer = Timer::new();
        let (metrics, known_fraction) = timer.time("evaluate", || -> Result<_, CoreError> {
            Ok(match &thresholds.thresholds {
                Calibrated::Uncertainty(t) => {
                    (evaluate_with(model, &dataset.test, t, t.mode)?, t.known_fraction)
                }
                Calibrated::Maxlogit(t) => {
                    (evaluate_maxlogit(&model.spatial, &dataset.test, t)?, t.known_fraction)
                }
            })
        })?;
        let report = ReportFile {
            format: REPORT_FORMAT.into(),
            version: ARTIFACT_VERSION,
            config: self.config.settings(),
            seed: self.config.seed,
            config_hash: self.config.config_hash()?,
            dataset_hash: manifest.config_hash.clone(),
            checkpoint_sha256: ck.sha256.clone(),
            thresholds_sha256,
            scorer: scorer.name().into(),
            known_fraction,
            class_names: with_novel(&manifest.class_names),
            metrics,
        };
        let path = variant_path(&self.path(&self.config.paths.report), scorer.variant());
        write_artifact(&path, &to_json(&report)?)?;
        print_metrics(scorer.name(), &report.metrics);
        println!("report written to {}", path.display());
        self.log("evaluate", timer.finish(), &[&path], serde_json::json!({ "scorer": scorer.name() }))
    }

    fn infer(&self, args: &InferArgs) -> Result<(), CliError> {
        let scorer: Scorer = args.scorer.into();
        let manifest = self.load_manifest()?;
        let ck = self.load_checkpoint(&manifest)?;
        let (thresholds, _) = self.load_thresholds(scorer, &manifest, &ck)?;
        let model = &ck.checkpoint.model;
        let mut timer = Timer::new();
        let (image, source) = match (&args.image, args.sample) {
            (Some(path), _) => (read_png(path)?, path.display().to_string()),
            (None, Some(r)) => (self.dataset_sample(r)?, format!("{}:{}", match r.split { dualev_core::synth::Split::Train => "train", dualev_core::synth::Split::Test => "test" }, r.index)),
            (None, None) => return Err(CliError::validation("give --image or --sample")),
        };
        let expected = model.spatial.network.input_dim();
        if image.pixels().len() != expected {
            return Err(CliError::validation(format!(
                "image is {}x{}, the model expects {expected} pixels",
                image.height(),
                image.width()
            )));
        }
        let prediction = timer.time("infer", || -> Result<Prediction, CoreError> {
            match &thresholds.thresholds {
                Calibrated::Uncertainty(t) => decide(&score(model, &image, t.mode)?, t),
                Calibrated::Maxlogit(t) => maxlogit_baseline(&model.spatial, &image, t),
            }
        })?;
        let names = with_novel(&manifest.class_names);
        println!("label: {}", names[prediction.label]);
        println!("closed_set_label: {}", names[prediction.closed_set_label]);
        match scorer {
            Scorer::Uncertainty(_) => println!("uncertainty: {:.6}", prediction.uncertainty),
            Scorer::MaxLogit => println!("max_logit: {:.6}", -prediction.uncertainty),
        }
        println!("threshold: {:.6}", prediction.threshold);
        let probs: Vec<String> = manifest
            .class_names
            .iter()
            .zip(&prediction.probabilities)
            .map(|(n, p)| format!("{n}={p:.6}"))
            .collect();
        println!("probabilities: {}", probs.join(" "));
        self.log(
            "infer",
            timer.finish(),
            &[],
            serde_json::json!({ "input": source, "scorer": scorer.name(), "label": names[prediction.label] }),
        )
    }

    fn dataset_sample(&self, r: SampleRef) -> Result<ImageTensor, CliError> {
        let Loaded { dataset, .. } = self.load_dataset()?;
        let samples = dataset.split(r.split);
        samples
            .get(r.index)
            .map(|s| s.image.clone())
            .ok_or_else(|| {
                CliError::validation(format!(
                    "sample index {} out of range ({} samples in split)",
                    r.index,
                    samples.len()
                ))
            })
    }

    fn export_simplex(&self, args: &SimplexArgs) -> Result<(), CliError> {
        let Loaded { manifest, dataset } = self.load_dataset()?;
        let ck = self.load_checkpoint(&manifest)?;
        let mut timer = Timer::new();
        let samples = dataset.split(args.split.into());
        let rows = timer.time("export", || export_simplex(&ck.checkpoint.model, samples))?;
        let path = self.path(&self.config.paths.simplex);
        write_artifact(&path, simplex_to_csv(&rows).as_bytes())?;
        println!("{} simplex rows written to {}", rows.len(), path.display());
        self.log("export-simplex", timer.finish(), &[&path], serde_json::Value::Null)
    }

    fn sweep(&self, scorer: Scorer) -> Result<(), CliError> {
        let Loaded { manifest, dataset } = self.load_dataset()?;
        let ck = self.load_checkpoint(&manifest)?;
        let model = &ck.checkpoint.model;
        let mut timer = Timer::new();
        let points = timer.time("sweep", || -> Result<Vec<SweepEntry>, CoreError> {
            match scorer {
                Scorer::Uncertainty(mode) => {
                    let cache = CalibrationCache::new(model, &dataset, mode)?;
                    SWEEP_FRACTIONS
                        .iter()
                        .map(|&f| {
                            let t = cache.thresholds(f, self.config.calibration_grouping)?;
                            Ok(SweepEntry {
                                known_fraction: f,
                                metrics: evaluate_with(model, &dataset.test, &t, mode)?,
                                tau: t.tau,
                            })
                        })
                        .collect()
                }
                Scorer::MaxLogit => SWEEP_FRACTIONS
                    .iter()
                    .map(|&f| {
                        let t = calibrate_maxlogit(&model.spatial, &dataset.train, f)?;
                        Ok(SweepEntry {
                            known_fraction: f,
                            metrics: evaluate_maxlogit(&model.spatial, &dataset.test, &t)?,
                            tau: t.tau,
                        })
                    })
                    .collect(),
            }
        })?;
        let file = SweepFile {
            format: SWEEP_FORMAT.into(),
            version: ARTIFACT_VERSION,
            config: self.config.settings(),
            seed: self.config.seed,
            config_hash: self.config.config_hash()?,
            dataset_hash: manifest.config_hash.clone(),
            checkpoint_sha256: ck.sha256.clone(),
            scorer: scorer.name().into(),
            class_names: with_novel(&manifest.class_names),
            points,
        };
        let path = variant_path(&self.path(&self.config.paths.sweep), scorer.variant());
        write_artifact(&path, &to_json(&file)?)?;
        println!("known_fraction  seen_accuracy  detection_rate");
        for p in &file.points {
            println!(
                "{:<14}  {:>13}  {:>14}",
                p.known_fraction,
                fmt_opt(p.metrics.seen_accuracy),
                fmt_opt(p.metrics.detection_rate)
            );
        }
        println!("sweep written to {}", path.display());
        self.log("sweep-threshold", timer.finish(), &[&path], serde_json::json!({ "scorer": scorer.name() }))
    }
}

fn with_novel(names: &[String]) -> Vec<String> {
    let mut out = names.to_vec();
    out.push(NOVEL_NAME.into());
    out
}

fn print_metrics(scorer: &str, m: &MetricsReport) {
    println!("scorer: {scorer}");
    println!("accuracy: {:.4}", m.accuracy);
    println!("detection_rate: {}", fmt_opt(m.detection_rate));
    println!("seen_accuracy: {}", fmt_opt(m.seen_accuracy));
    println!("closed_set_accuracy: {}", fmt_opt(m.closed_set_accuracy));
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |d| format!("{d:.4}"))
}
