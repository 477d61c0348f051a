//! End-to-end pipeline: simulate, build the dataset, train both input modes,
//! evaluate, and score handoff. Every stage writes into a directory named by
//! the hash of everything that determines its output.

use crate::config::ScenarioConfig;
use crate::dataset::{build_dataset, read_dataset, read_trace, write_dataset, write_trace, BuildOptions, BuiltDataset, Sample};
use crate::embedding::BeamEmbeddingTable;
use crate::error::{Error, Result};
use crate::evalkit::{mean_average_precision, report, report_csv, GroundTruthBox, MapReport, MetricReport, ScoredBox};
use crate::handoff::{evaluate_predictions, handoff_csv, HandoffReport};
use crate::scene::{basestations, detect, simulate, DetectorNoiseModel, World};
use crate::seqnet::{
    load_checkpoint, predict_all, save_checkpoint, train, Checkpoint, EpochMetrics, Mode, Prediction, TrainConfig,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelScope {
    /// One model per mode, trained on both basestations' sequences and
    /// deployed as both copies.
    Shared,
    /// One model per mode and basestation.
    PerBasestation,
    /// One model per mode and camera.
    PerCamera,
}

/// The sequences a model is trained on and applied to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subset {
    pub basestation: Option<u8>,
    pub camera: Option<u32>,
}

impl Subset {
    pub const ALL: Subset = Subset {
        basestation: None,
        camera: None,
    };

    pub fn matches(&self, s: &Sample) -> bool {
        self.basestation.is_none_or(|b| b == s.observed.basestation) && self.camera.is_none_or(|c| c == s.observed.camera)
    }

    pub fn tag(&self) -> String {
        match (self.basestation, self.camera) {
            (_, Some(c)) => format!("-cam{c}"),
            (Some(b), None) => format!("-bs{b}"),
            (None, None) => String::new(),
        }
    }
}

impl ModelScope {
    pub fn subsets(self, scenario: &ScenarioConfig) -> Vec<Subset> {
        let bss = basestations(scenario);
        match self {
            ModelScope::Shared => vec![Subset::ALL],
            ModelScope::PerBasestation => bss
                .iter()
                .map(|b| Subset {
                    basestation: Some(b.id),
                    camera: None,
                })
                .collect(),
            ModelScope::PerCamera => bss
                .iter()
                .flat_map(|b| {
                    b.cameras.iter().map(|c| Subset {
                        basestation: Some(b.id),
                        camera: Some(c.id),
                    })
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOptions {
    pub iou_threshold: f64,
    /// Frames (from the start of the trace) scored for detection mAP.
    pub detection_frames: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            detection_frames: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Scenario TOML, relative to the experiment file; built-in defaults when absent.
    pub scenario: Option<PathBuf>,
    pub frames: usize,
    pub output_dir: PathBuf,
    pub embedding_seed: u64,
    pub model_scope: ModelScope,
    pub dataset: BuildOptions,
    pub bimodal: TrainConfig,
    pub beam_only: TrainConfig,
    pub eval: EvalOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: None,
            frames: 1500,
            output_dir: PathBuf::from("runs/desk"),
            embedding_seed: 3,
            model_scope: ModelScope::Shared,
            dataset: BuildOptions::default(),
            bimodal: TrainConfig::default(),
            beam_only: TrainConfig::default(),
            eval: EvalOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(s) = &cfg.scenario {
            if s.is_relative() {
                cfg.scenario = Some(base.join(s));
            }
        }
        Ok(cfg)
    }

    pub fn scenario_config(&self) -> Result<ScenarioConfig> {
        match &self.scenario {
            Some(p) if !p.exists() => Err(Error::Config(format!("scenario file {} does not exist", p.display()))),
            Some(p) => ScenarioConfig::load(p),
            None => Ok(ScenarioConfig::default()),
        }
    }

    pub fn train_config(&self, mode: Mode) -> &TrainConfig {
        match mode {
            Mode::Bimodal => &self.bimodal,
            Mode::BeamOnly => &self.beam_only,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::Config("frames must be positive".into()));
        }
        self.bimodal.validate()?;
        self.beam_only.validate()?;
        if !(self.eval.iou_threshold > 0.0 && self.eval.iou_threshold < 1.0) {
            return Err(Error::Config("iou_threshold must lie in (0,1)".into()));
        }
        Ok(())
    }
}

/// Hex SHA-256 of the JSON encoding of `parts`.
pub fn config_hash<T: Serialize>(parts: &T) -> Result<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(parts)?)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub hash: String,
    pub dir: String,
    pub seeds: BTreeMap<String, u64>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub version: String,
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub scenario: ScenarioConfig,
    pub stages: Vec<StageRecord>,
}

/// Runs `body` in `root/<name>-<hash prefix>` unless a completed run of the
/// same hash is already there.
fn stage_dir<F>(root: &Path, name: &'static str, hash: &str, body: F) -> Result<PathBuf>
where
    F: FnOnce(&Path) -> Result<()>,
{
    let dir = root.join(format!("{name}-{}", &hash[..12]));
    let stamp = dir.join(".complete");
    if stamp.exists() && std::fs::read_to_string(&stamp)? == hash {
        log::info!("stage {name}: reusing {}", dir.display());
        return Ok(dir);
    }
    if dir.exists() {
        std::fs::remove_dir_all(&dir)?;
    }
    std::fs::create_dir_all(&dir)?;
    body(&dir).map_err(|e| e.in_stage(name))?;
    std::fs::write(&stamp, hash)?;
    Ok(dir)
}

fn stage_err<T>(stage: &'static str) -> impl FnOnce(Error) -> Result<T> {
    move |e| Err(e.in_stage(stage))
}

fn restrict(samples: &[Sample], subset: Subset) -> Vec<Sample> {
    samples.iter().filter(|s| subset.matches(s)).cloned().collect()
}

/// Trains one model and packages it as a checkpoint.
pub fn train_model(
    ds: &BuiltDataset,
    mode: Mode,
    cfg: &TrainConfig,
    subset: Subset,
    beams: usize,
    embedding_seed: u64,
) -> Result<(Checkpoint, Vec<EpochMetrics>)> {
    let train_set = restrict(&ds.train, subset);
    let val_set = restrict(&ds.val, subset);
    let table = BeamEmbeddingTable::new(beams, cfg.embed_dim, embedding_seed);
    let outcome = train(mode, &train_set, &val_set, &table, ds.manifest.observed, cfg)?;
    log::info!(
        "{}{} model: {} train / {} val sequences, best validation epoch {}",
        mode.name(),
        subset.tag(),
        train_set.len(),
        val_set.len(),
        outcome.best_epoch
    );
    Ok((
        Checkpoint {
            net: outcome.best,
            table_beams: beams,
            table_seed: embedding_seed,
            config: cfg.clone(),
            basestation: subset.basestation,
            camera: subset.camera,
        },
        outcome.history,
    ))
}

/// Eval-mode report of a checkpoint on the samples it covers.
pub fn evaluate_checkpoint(ckpt: &Checkpoint, samples: &[Sample]) -> Result<(MetricReport, Vec<u8>)> {
    let subset: Vec<Sample> = samples.iter().filter(|s| ckpt.covers(s)).cloned().collect();
    let preds = predict_all(&ckpt.net, &ckpt.table(), &subset)?;
    Ok((report(&preds, &subset)?, preds.iter().map(|p| p.status()).collect()))
}

/// Predicts every sample with the first checkpoint that covers it.
pub fn route_predictions(ckpts: &[Checkpoint], samples: &[Sample]) -> Result<Vec<Prediction>> {
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); ckpts.len()];
    for (i, s) in samples.iter().enumerate() {
        let k = ckpts.iter().position(|c| c.covers(s)).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "no model covers basestation {} camera {}",
                s.observed.basestation, s.observed.camera
            ))
        })?;
        groups[k].push(i);
    }
    let mut out = vec![None; samples.len()];
    for (ck, idx) in ckpts.iter().zip(&groups) {
        let subset: Vec<Sample> = idx.iter().map(|&i| samples[i].clone()).collect();
        for (&i, p) in idx.iter().zip(predict_all(&ck.net, &ck.table(), &subset)?) {
            out[i] = Some(p);
        }
    }
    Ok(out.into_iter().map(|p| p.expect("every sample routed")).collect())
}

pub fn history_csv(history: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,val_top1\n");
    for h in history {
        let _ = writeln!(out, "{},{:.6},{:.6},{:.6}", h.epoch, h.train_loss, h.val_loss, h.val_top1);
    }
    out
}

/// Scores the configured detector against the noiseless one on the first
/// `frames` frames of every camera.
pub fn detection_map(trace: &[World], cfg: &ScenarioConfig, frames: usize, iou_threshold: f64) -> Result<MapReport> {
    let mut dets = Vec::new();
    let mut truth = Vec::new();
    let clean = DetectorNoiseModel::noiseless();
    for world in trace.iter().take(frames) {
        for bs in basestations(cfg) {
            for cam in &bs.cameras {
                let image = world.frame * 16 + cam.id as u64;
                truth.extend(detect(cam, world, &clean, &cfg.occlusion).into_iter().map(|d| GroundTruthBox {
                    image,
                    class: d.class,
                    bbox: d.bbox,
                }));
                dets.extend(detect(cam, world, &cfg.detector, &cfg.occlusion).into_iter().map(|d| ScoredBox {
                    image,
                    class: d.class,
                    bbox: d.bbox,
                    confidence: d.confidence,
                }));
            }
        }
    }
    mean_average_precision(&dets, &truth, iou_threshold)
}

fn map_csv(m: &MapReport) -> String {
    let f = |v: Option<f64>| v.map_or_else(|| "n/a".into(), |x| format!("{x:.6}"));
    let mut out = String::from("class,ap\n");
    for (c, ap) in &m.per_class {
        let _ = writeln!(out, "{c:?},{}", f(*ap));
    }
    let _ = writeln!(out, "mAP,{}", f(m.map));
    out
}

/// Outcome of [`run_experiment`], for callers that want the numbers directly.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub dir: PathBuf,
    pub reports: BTreeMap<Mode, MetricReport>,
    pub handoff: BTreeMap<Mode, HandoffReport>,
    pub detection: MapReport,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let scenario = cfg.scenario_config()?;
    scenario.validate()?;
    let root = &cfg.output_dir;
    std::fs::create_dir_all(root)?;
    let mut stages = Vec::new();

    let trace_hash = config_hash(&("trace", &scenario, cfg.frames))?;
    let trace_dir = stage_dir(root, "trace", &trace_hash, |dir| {
        let frames = simulate(&scenario, cfg.frames)?;
        write_trace(dir, &scenario, &frames)
    })?;
    stages.push(StageRecord {
        name: "simulate".into(),
        hash: trace_hash.clone(),
        dir: rel(root, &trace_dir),
        seeds: BTreeMap::from([
            ("scenario".into(), scenario.seed),
            ("detector".into(), scenario.detector.rng_seed),
        ]),
        outputs: vec!["scenario.toml".into(), "frames.ndrec".into()],
    });
    let (_, trace) = read_trace(&trace_dir).or_else(stage_err("simulate"))?;

    let ds_hash = config_hash(&("dataset", &trace_hash, &cfg.dataset))?;
    let ds_dir = stage_dir(root, "dataset", &ds_hash, |dir| {
        write_dataset(dir, &build_dataset(&trace, &scenario, &cfg.dataset)?)
    })?;
    stages.push(StageRecord {
        name: "build-dataset".into(),
        hash: ds_hash.clone(),
        dir: rel(root, &ds_dir),
        seeds: BTreeMap::from([("dataset".into(), cfg.dataset.seed)]),
        outputs: ["train.ndrec", "val.ndrec", "pairs.ndrec", "manifest.json"].map(String::from).to_vec(),
    });
    let ds = read_dataset(&ds_dir).or_else(stage_err("build-dataset"))?;

    let subsets = cfg.model_scope.subsets(&scenario);
    let mut result = ExperimentResult {
        dir: root.clone(),
        reports: BTreeMap::new(),
        handoff: BTreeMap::new(),
        detection: MapReport {
            per_class: BTreeMap::new(),
            map: None,
        },
    };
    let mut handoff_rows = Vec::new();
    for mode in [Mode::Bimodal, Mode::BeamOnly] {
        let tcfg = cfg.train_config(mode);
        let mut ckpts = Vec::new();
        for &subset in &subsets {
            let tag = format!("{}{}", mode.name(), subset.tag());
            let h = config_hash(&("train", &ds_hash, mode, tcfg, subset, cfg.embedding_seed, scenario.phy.beams))?;
            let dir = stage_dir(root, "train", &h, |dir| {
                let (ckpt, history) = train_model(&ds, mode, tcfg, subset, scenario.phy.beams, cfg.embedding_seed)?;
                save_checkpoint(&dir.join("model.ckpt"), &ckpt)?;
                std::fs::write(dir.join("history.csv"), history_csv(&history))?;
                Ok(())
            })?;
            stages.push(StageRecord {
                name: format!("train:{tag}"),
                hash: h,
                dir: rel(root, &dir),
                seeds: BTreeMap::from([("train".into(), tcfg.seed), ("embedding".into(), cfg.embedding_seed)]),
                outputs: vec!["model.ckpt".into(), "history.csv".into()],
            });
            ckpts.push(load_checkpoint(&dir.join("model.ckpt")).or_else(stage_err("train"))?);
        }

        let preds = route_predictions(&ckpts, &ds.val).or_else(stage_err("eval"))?;
        let rep = report(&preds, &ds.val).or_else(stage_err("eval"))?;
        std::fs::write(root.join(format!("metrics-{}.csv", mode.name())), report_csv(&rep))?;
        result.reports.insert(mode, rep);

        let side1: Vec<Sample> = ds.pairs.iter().map(|p| p.bs1.clone()).collect();
        let side2: Vec<Sample> = ds.pairs.iter().map(|p| p.bs2.clone()).collect();
        let status = |v: Vec<Prediction>| v.iter().map(Prediction::status).collect::<Vec<u8>>();
        let p1 = status(route_predictions(&ckpts, &side1).or_else(stage_err("handoff-eval"))?);
        let p2 = status(route_predictions(&ckpts, &side2).or_else(stage_err("handoff-eval"))?);
        let ho = evaluate_predictions(&ds.pairs, &p1, &p2).or_else(stage_err("handoff-eval"))?;
        result.handoff.insert(mode, ho);
    }
    for mode in [Mode::BeamOnly, Mode::Bimodal] {
        handoff_rows.push((mode.name(), &result.handoff[&mode]));
    }
    std::fs::write(root.join("handoff.csv"), handoff_csv(&handoff_rows))?;

    result.detection = detection_map(&trace, &scenario, cfg.eval.detection_frames, cfg.eval.iou_threshold)
        .or_else(stage_err("eval"))?;
    std::fs::write(root.join("detection.csv"), map_csv(&result.detection))?;

    let manifest = ExperimentManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(&(cfg, &scenario))?,
        config: cfg.clone(),
        scenario,
        stages,
    };
    std::fs::write(root.join("manifest.json"), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(result)
}

fn rel(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).display().to_string()
}
