//! Experiment configuration and the four batch commands behind the binary:
//! generate a pool, cut a trap split from it, train and evaluate a pipeline,
//! and summarize result tables.
//!
//! Default layout under the output root (`$LESION_DEBIAS_OUT`, else `runs`):
//!
//! ```text
//! <root>/<name>/pool/        dataset written by `generate`
//! <root>/<name>/trap/        split.json written by `trap`
//! <root>/<name>/<pipeline>/  results.csv, report.json, run<k>/ checkpoints and logs
//! ```

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{append_results, evaluate, read_results, summarize, EvalReport};
use crate::lntl::{init_network, pretrain, unlearn, validation_split, PhaseLog};
use crate::nncore::{Checkpoint, Network, TrainConfig};
use crate::rng;
use crate::synthgen::io::{manifest_checksum, read_dataset, write_dataset, DatasetHeader, TOOL_VERSION};
use crate::synthgen::{gen_dataset, ArtifactKind, GenConfig, Sample};
use crate::transforms::{normalize_background, occlude, pixel_average, OcclusionMode};
use crate::trapset::{sample_trap, verify_trap, SplitFile, TrapReport, TrapSpec};

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "LESION_DEBIAS_OUT";
pub const RESULTS_FILE: &str = "results.csv";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataPaths {
    /// Pool dataset; defaults to `<root>/<name>/pool`.
    pub pool: Option<PathBuf>,
    /// Directory holding `split.json`; defaults to `<root>/<name>/trap`.
    pub split: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    #[serde(default = "default_tta")]
    pub tta_samples: usize,
    #[serde(default)]
    pub occlusion: OcclusionMode,
    /// Normalize backgrounds for every pipeline, not only `normalized`.
    #[serde(default)]
    pub normalize_background: bool,
    /// Test share of the pool when no trap is configured.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    /// Output root; overrides the environment variable.
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub paths: DataPaths,
    pub generate: GenConfig,
    #[serde(default)]
    pub trap: Option<TrapSpec>,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_runs() -> usize {
    1
}
fn default_tta() -> usize {
    crate::eval::TTA_SAMPLES
}
fn default_test_fraction() -> f64 {
    0.25
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Self::from_toml_with(text, &[])
    }

    /// Parse, then apply `section.key=value` overrides before validation.
    /// Values are read as TOML and fall back to plain strings.
    pub fn from_toml_with(text: &str, overrides: &[String]) -> Result<Self> {
        let mut tree: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.message().to_string()))?;
        for o in overrides {
            apply_override(&mut tree, o)?;
        }
        let cfg: Self = tree
            .try_into()
            .map_err(|e: toml::de::Error| Error::InvalidConfig(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_with(&text, overrides).map_err(|e| match e {
            Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad("name must be a non-empty path component");
        }
        if self.n_runs == 0 {
            return bad("n_runs must be positive");
        }
        if self.tta_samples == 0 {
            return bad("tta_samples must be positive");
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("test_fraction must be in (0, 1)");
        }
        self.generate.validate()?;
        if let Some(t) = &self.trap {
            t.validate()?;
        }
        self.train.validate()
    }

    pub fn to_json(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }

    /// Output root: the config's `output`, else the environment, else `runs`.
    pub fn root(&self) -> PathBuf {
        self.output
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"))
            .join(&self.name)
    }

    pub fn pool_dir(&self) -> PathBuf {
        self.paths.pool.clone().unwrap_or_else(|| self.root().join("pool"))
    }

    pub fn split_dir(&self) -> PathBuf {
        self.paths.split.clone().unwrap_or_else(|| self.root().join("trap"))
    }

    /// The artifact the trap is planted on, or the default one.
    pub fn trapped_artifact(&self) -> ArtifactKind {
        self.trap.as_ref().map_or(ArtifactKind::DarkCorner, |t| t.artifact)
    }
}

fn apply_override(tree: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::InvalidConfig(format!("override {spec:?} is not key=value")))?;
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields at least one part");
    let mut node = tree;
    for p in path {
        node = node
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()))
            .as_table_mut()
            .ok_or_else(|| Error::InvalidConfig(format!("override {key}: {p} is not a table")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Plain training on the data as given.
    Unchanged,
    /// Training and testing on background-normalized images.
    Normalized,
    /// Pretraining followed by bias unlearning.
    Lntl,
}

impl Pipeline {
    pub const ALL: [Pipeline; 3] = [Pipeline::Unchanged, Pipeline::Normalized, Pipeline::Lntl];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Unchanged => "unchanged",
            Pipeline::Normalized => "normalized",
            Pipeline::Lntl => "lntl",
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pipeline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Pipeline::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown pipeline {s:?}")))
    }
}

fn ensure_fresh(dir: &Path, force: bool) -> Result<()> {
    let occupied = dir.is_dir() && fs::read_dir(dir)?.next().is_some();
    if occupied && !force {
        return Err(Error::OutputExists(dir.to_path_buf()));
    }
    Ok(())
}

/// Generate the pool into `out`. An existing non-empty directory is refused
/// unless `force`, in which case only the dataset files are replaced.
pub fn cmd_generate(config: &ExperimentConfig, out: &Path, force: bool) -> Result<usize> {
    config.validate()?;
    ensure_fresh(out, force)?;
    for sub in ["images", "masks"] {
        if out.join(sub).is_dir() {
            fs::remove_dir_all(out.join(sub))?;
        }
    }
    let samples = gen_dataset(&config.generate)?;
    let header = DatasetHeader::new(OcclusionMode::Traditional.name(), config.to_json()?);
    write_dataset(out, &samples, &header)?;
    Ok(samples.len())
}

/// Cut the configured trap split from the pool at `pool` and write it to `out`.
pub fn cmd_trap(config: &ExperimentConfig, pool: &Path, out: &Path) -> Result<TrapReport> {
    config.validate()?;
    let spec = config
        .trap
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("config has no [trap] section".into()))?;
    let (_, samples) = read_dataset(pool)?;
    let split = sample_trap(&samples, spec)?;
    let report = verify_trap(&split, &samples)?;
    SplitFile::new(split, manifest_checksum(pool)?, config.to_json()?).write(out)?;
    Ok(report)
}

/// Deterministic run id: a version-8 UUID over the resolved config and the
/// run's coordinates.
pub fn run_id(config_json: &serde_json::Value, pipeline: Pipeline, dataset: &str, run: usize) -> String {
    let mut h = Sha256::new();
    h.update(config_json.to_string().as_bytes());
    h.update([0]);
    h.update(pipeline.name().as_bytes());
    h.update([0]);
    h.update(dataset.as_bytes());
    h.update((run as u64).to_le_bytes());
    let digest = h.finalize();
    let mut bytes = [0u8; 16];
    bytes.copy_from_slice(&digest[..16]);
    uuid::Uuid::new_v8(bytes).to_string()
}

/// Train-time and evaluation sets after the configured image transform.
struct Data {
    train: Vec<Sample>,
    /// `(dataset tag, samples)`.
    evals: Vec<(&'static str, Vec<Sample>)>,
    transform: String,
}

fn load_data(config: &ExperimentConfig, pipeline: Pipeline) -> Result<Data> {
    let pool_dir = config.pool_dir();
    let (_, pool) = read_dataset(&pool_dir)?;
    let (train, evals) = match &config.trap {
        Some(_) => {
            let split_dir = config.split_dir();
            let file = SplitFile::read(&split_dir)?;
            let found = manifest_checksum(&pool_dir)?;
            if file.pool_checksum != found {
                return Err(Error::ChecksumMismatch {
                    expected: file.pool_checksum,
                    found,
                });
            }
            let by_id: HashMap<u64, &Sample> = pool.iter().map(|s| (s.id, s)).collect();
            let pick = |ids: &[u64]| {
                ids.iter()
                    .map(|id| by_id.get(id).map(|s| (*s).clone()).ok_or(Error::UnknownId(*id)))
                    .collect::<Result<Vec<_>>>()
            };
            let train = pick(&file.split.train)?;
            let test = pick(&file.split.test)?;
            let used: std::collections::HashSet<u64> =
                file.split.train.iter().chain(&file.split.test).copied().collect();
            let rest: Vec<Sample> = pool.iter().filter(|s| !used.contains(&s.id)).cloned().collect();
            let mut evals = vec![("trap_test", test)];
            let both = rest.iter().any(|s| s.diagnosis.is_malignant()) && rest.iter().any(|s| !s.diagnosis.is_malignant());
            if both {
                evals.push(("held_out", rest));
            }
            (train, evals)
        }
        None => {
            let seed = rng::derive(config.seed, rng::tag("test split"));
            let (train, test) = validation_split(&pool, config.test_fraction, config.trapped_artifact(), seed);
            (train, vec![("test", test)])
        }
    };

    let mode = config.occlusion;
    let occ = |v: Vec<Sample>| -> Vec<Sample> {
        if mode == OcclusionMode::Traditional {
            v
        } else {
            v.iter().map(|s| occlude(s, mode)).collect()
        }
    };
    let mut train = occ(train);
    let mut evals: Vec<(&'static str, Vec<Sample>)> = evals.into_iter().map(|(t, v)| (t, occ(v))).collect();
    let mut transform = mode.name().to_string();
    if pipeline == Pipeline::Normalized || config.normalize_background {
        let mean = pixel_average(&train)?;
        let norm = |v: &[Sample]| v.iter().map(|s| normalize_background(s, &mean)).collect::<Result<Vec<_>>>();
        train = norm(&train)?;
        for (_, v) in &mut evals {
            *v = norm(v)?;
        }
        transform = format!("normalized+{transform}");
    }
    Ok(Data { train, evals, transform })
}

/// Everything `cmd_run` writes to `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub pipeline: Pipeline,
    pub config: serde_json::Value,
    pub reports: Vec<EvalReport>,
    /// One list of run ids per report.
    pub run_ids: Vec<Vec<String>>,
}

fn save_phase(dir: &Path, phase: &str, net: &Network, config: &TrainConfig, log: &PhaseLog) -> Result<()> {
    Checkpoint {
        net: net.clone(),
        config: config.clone(),
        phase: phase.to_string(),
        epoch: log.records.len(),
        velocity: None,
    }
    .save(&dir.join(format!("{phase}.ckpt")))?;
    log.write(&dir.join(format!("{phase}.jsonl")))
}

/// Train `n_runs` networks with the given pipeline, evaluate each with
/// test-time augmentation, and write checkpoints, phase logs, `report.json`
/// and rows appended to `results.csv` under `out`.
pub fn cmd_run(config: &ExperimentConfig, pipeline: Pipeline, out: &Path) -> Result<RunReport> {
    config.validate()?;
    let data = load_data(config, pipeline)?;
    let trapped = config.trapped_artifact();
    fs::create_dir_all(out)?;

    let mut nets = Vec::with_capacity(config.n_runs);
    for run in 0..config.n_runs {
        let train_cfg = TrainConfig {
            seed: rng::derive(config.seed, run as u64),
            ..config.train.clone()
        };
        let (tr, val) = validation_split(&data.train, train_cfg.val_fraction, trapped, train_cfg.seed);
        let dir = out.join(format!("run{run}"));
        fs::create_dir_all(&dir)?;
        let (mut net, log) = pretrain(init_network(&tr, &train_cfg)?, &tr, &val, &train_cfg)?;
        save_phase(&dir, "pretrain", &net, &train_cfg, &log)?;
        if pipeline == Pipeline::Lntl {
            let (unlearned, log) = unlearn(net, &tr, &val, &train_cfg)?;
            save_phase(&dir, "unlearn", &unlearned, &train_cfg, &log)?;
            net = unlearned;
        }
        nets.push(net);
    }

    let config_json = config.to_json()?;
    let tta_seed = rng::derive(config.seed, rng::tag("tta"));
    let results = out.join(RESULTS_FILE);
    let mut reports = Vec::new();
    let mut run_ids = Vec::new();
    for (tag, samples) in &data.evals {
        let mut r = evaluate(&nets, samples, config.tta_samples, &config.train.policy, tta_seed)?;
        r.experiment = pipeline.name().to_string();
        r.dataset = tag.to_string();
        r.transform = data.transform.clone();
        let ids: Vec<String> = (0..config.n_runs).map(|k| run_id(&config_json, pipeline, tag, k)).collect();
        append_results(&results, &r, &ids)?;
        reports.push(r);
        run_ids.push(ids);
    }
    let report = RunReport {
        version: TOOL_VERSION.to_string(),
        pipeline,
        config: config_json,
        reports,
        run_ids,
    };
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    fs::write(out.join(REPORT_FILE), text)?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl FromStr for ReportFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            _ => Err(Error::InvalidConfig(format!("unknown report format {s:?}"))),
        }
    }
}

/// Results tables under `dir`: its own `results.csv`, or else those of its
/// immediate subdirectories in name order.
pub fn find_results(dir: &Path) -> Result<Vec<PathBuf>> {
    let own = dir.join(RESULTS_FILE);
    if own.is_file() {
        return Ok(vec![own]);
    }
    let mut found = Vec::new();
    for entry in fs::read_dir(dir)? {
        let p = entry?.path().join(RESULTS_FILE);
        if p.is_file() {
            found.push(p);
        }
    }
    found.sort();
    if found.is_empty() {
        return Err(Error::Empty("no results.csv found"));
    }
    Ok(found)
}

/// Mean and spread per (experiment, dataset, transform) over every results
/// table found under `dir`.
pub fn cmd_report(dir: &Path, format: ReportFormat) -> Result<String> {
    let mut rows = Vec::new();
    for p in find_results(dir)? {
        rows.extend(read_results(&p)?);
    }
    let summary = summarize(&rows);
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(&summary)?;
            s.push('\n');
            Ok(s)
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["experiment", "dataset", "transform", "n_runs", "mean_auc", "std_auc"])?;
            for r in &summary {
                w.write_record([
                    r.experiment.as_str(),
                    &r.dataset,
                    &r.transform,
                    &r.n_runs.to_string(),
                    &format!("{:.4}", r.mean),
                    &format!("{:.4}", r.std),
                ])?;
            }
            let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
[generate]
n_samples = 10
base_seed = 1
artifact_prevalence = [0.5, 0, 0, 0, 0, 0, 0]
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.n_runs, 1);
        assert_eq!(c.tta_samples, 50);
        assert_eq!(c.train, TrainConfig::default());
        assert!(c.trap.is_none());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = format!("{MINIMAL}\n[train]\nlearning_rate = 0.1\n");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(Error::InvalidConfig(_))));
        let top = format!("colour = 1\n{MINIMAL}");
        assert!(ExperimentConfig::from_toml(&top).is_err());
    }

    #[test]
    fn nested_validation_runs() {
        let zero = MINIMAL.replace("n_samples = 10", "n_samples = 0");
        assert!(matches!(ExperimentConfig::from_toml(&zero), Err(Error::InvalidConfig(_))));
        let e = ExperimentConfig::from_toml_with(MINIMAL, &["train.lr0=-1".into()]).unwrap_err();
        assert!(e.is_config_error());
    }

    #[test]
    fn overrides_reach_nested_tables() {
        let o = ["n_runs=3".to_string(), "train.lr0=0.5".into(), "occlusion=bbox90".into()];
        let c = ExperimentConfig::from_toml_with(MINIMAL, &o).unwrap();
        assert_eq!((c.n_runs, c.train.lr0, c.occlusion), (3, 0.5, OcclusionMode::Bbox90));
        assert!(ExperimentConfig::from_toml_with(MINIMAL, &["nokey".into()]).is_err());
    }

    #[test]
    fn run_ids_are_stable_and_distinct() {
        let j = serde_json::json!({"a": 1});
        let a = run_id(&j, Pipeline::Lntl, "trap_test", 0);
        assert_eq!(a, run_id(&j, Pipeline::Lntl, "trap_test", 0));
        assert_ne!(a, run_id(&j, Pipeline::Lntl, "trap_test", 1));
        assert_ne!(a, run_id(&j, Pipeline::Unchanged, "trap_test", 0));
        let u = uuid::Uuid::parse_str(&a).unwrap();
        assert_eq!(u.get_version_num(), 8);
    }

    #[test]
    fn pipeline_names_round_trip() {
        for p in Pipeline::ALL {
            assert_eq!(p.name().parse::<Pipeline>().unwrap(), p);
        }
        assert!("baseline".parse::<Pipeline>().is_err());
    }
}
