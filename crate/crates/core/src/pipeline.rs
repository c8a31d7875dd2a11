//! Dataset layout on disk and the stage functions behind the CLI.
//!
//! A dataset split lives in `<data_dir>/<split>/`:
//!
//! ```text
//! videos/<id>.ftln          feature timelines
//! ground_truth/<id>.json    annotated instances
//! histories/*.json          search histories (simulated or exported by the UI)
//! manifest.json             every generated file with its sha256
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{uniform_prior_proposals, uniform_proposals};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{self, GroundTruthIndex, RecallCurve};
use crate::inference::{detect, Detection, DetectionConfig};
use crate::net::{checkpoint, SearchModelParams};
use crate::seed;
use crate::temporal::{build_duration_priors, DurationPriors, Interval};
use crate::train::{fit, preprocess_histories, TrainConfig, TrainLog};
use crate::world::io::{encode_timeline, read_json, read_timeline};
use crate::world::{
    history_observed_fraction, simulate_annotator, train_classifier, ActionInstance, AnnotatorConfig,
    ClassifierConfig, FeatureTimeline, GroundTruth, SearchHistory, SegmentClassifier, World, WorldConfig,
};

pub const MANIFEST: &str = "manifest.json";
pub const SPLITS: [&str; 3] = ["train", "val", "test"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub split: String,
    pub seed: u64,
    pub videos: usize,
    pub instances: usize,
    pub history_count: usize,
    pub mean_steps: f64,
    pub mean_observed_fraction: f64,
    pub successful_fraction: f64,
    pub files: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub videos: Vec<FeatureTimeline>,
    pub ground_truth: Vec<GroundTruth>,
    pub histories: Vec<SearchHistory>,
}

impl Dataset {
    pub fn ground_truth_index(&self) -> GroundTruthIndex {
        eval::index_ground_truth(&self.ground_truth)
    }

    fn video(&self, id: &str) -> Option<&FeatureTimeline> {
        self.videos.iter().find(|v| v.video_id == id)
    }
}

pub fn split_dir(data_dir: &Path, split: &str) -> PathBuf {
    data_dir.join(split)
}

fn split_tag(split: &str) -> u64 {
    seed::tag_str(split)
}

/// Generate `videos` videos with their ground truth and simulated histories.
pub fn generate_dataset(
    world: &WorldConfig,
    annotator: &AnnotatorConfig,
    split: &str,
    videos: usize,
    run_seed: u64,
) -> Result<Dataset> {
    annotator.validate()?;
    let world = World::new(world.clone())?;
    let tag = split_tag(split);
    let per_video: Vec<(FeatureTimeline, GroundTruth, Vec<SearchHistory>)> = (0..videos)
        .into_par_iter()
        .map(|k| {
            let id = format!("{split}_{k:05}");
            let (tl, instances) = world.generate_video(&id, seed::derive(run_seed, &[tag, k as u64, 0]))?;
            let mut rng = seed::rng_for(run_seed, &[tag, k as u64, 1]);
            let whole = annotator.histories_per_video.floor();
            let extra = rng.random_bool((annotator.histories_per_video - whole).clamp(0.0, 1.0));
            let count = whole as usize + usize::from(extra);
            let histories = (0..count)
                .map(|j| {
                    let target = &instances[rng.random_range(0..instances.len())];
                    simulate_annotator(&tl, target, annotator, seed::derive(run_seed, &[tag, k as u64, 2, j as u64]))
                })
                .collect::<Result<Vec<_>>>()?;
            let gt = GroundTruth {
                video_id: id,
                duration: tl.duration(),
                instances,
            };
            Ok((tl, gt, histories))
        })
        .collect::<Result<_>>()?;
    let mut ds = Dataset {
        videos: Vec::with_capacity(videos),
        ground_truth: Vec::with_capacity(videos),
        histories: Vec::new(),
    };
    for (tl, gt, hs) in per_video {
        ds.videos.push(tl);
        ds.ground_truth.push(gt);
        ds.histories.extend(hs);
    }
    Ok(ds)
}

fn history_file(h: &SearchHistory, j: usize) -> String {
    format!("histories/{}_{j:03}.json", h.video_id)
}

fn json_bytes<T: Serialize>(value: &T, path: &Path) -> Result<Vec<u8>> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    Ok(text.into_bytes())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Summary statistics of a set of histories over their videos.
pub fn history_stats(ds: &Dataset) -> (f64, f64, f64) {
    if ds.histories.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let n = ds.histories.len() as f64;
    let steps = ds.histories.iter().map(|h| h.steps.len() as f64).sum::<f64>() / n;
    let observed = ds
        .histories
        .iter()
        .filter_map(|h| ds.video(&h.video_id).map(|v| history_observed_fraction(h, v, v.observation_window())))
        .sum::<f64>()
        / n;
    let ok = ds.histories.iter().filter(|h| h.successful).count() as f64 / n;
    (steps, observed, ok)
}

/// Write `ds` under `dir`, replacing the files of an earlier manifest there.
pub fn write_dataset(dir: &Path, ds: &Dataset, split: &str, run_seed: u64) -> Result<Manifest> {
    let manifest_path = dir.join(MANIFEST);
    if manifest_path.exists() {
        let old: Manifest = read_json(&manifest_path)?;
        for f in old.files {
            let p = dir.join(&f.path);
            if p.exists() {
                fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
            }
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut files = Vec::new();
    let mut emit = |rel: String, bytes: Vec<u8>| -> Result<()> {
        write_file(&dir.join(&rel), &bytes)?;
        files.push(ManifestEntry {
            path: rel,
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    };
    for tl in &ds.videos {
        emit(format!("videos/{}.ftln", tl.video_id), encode_timeline(tl))?;
    }
    for gt in &ds.ground_truth {
        let rel = format!("ground_truth/{}.json", gt.video_id);
        let bytes = json_bytes(gt, &dir.join(&rel))?;
        emit(rel, bytes)?;
    }
    let mut per_video: HashMap<&str, usize> = HashMap::new();
    for h in &ds.histories {
        let j = per_video.entry(h.video_id.as_str()).or_default();
        let rel = history_file(h, *j);
        *j += 1;
        let bytes = json_bytes(h, &dir.join(&rel))?;
        emit(rel, bytes)?;
    }
    files.sort_by(|a, b| a.path.cmp(&b.path));

    let (mean_steps, mean_observed_fraction, successful_fraction) = history_stats(ds);
    let manifest = Manifest {
        split: split.to_string(),
        seed: run_seed,
        videos: ds.videos.len(),
        instances: ds.ground_truth.iter().map(|g| g.instances.len()).sum(),
        history_count: ds.histories.len(),
        mean_steps,
        mean_observed_fraction,
        successful_fraction,
        files,
    };
    let bytes = json_bytes(&manifest, &manifest_path)?;
    write_file(&manifest_path, &bytes)?;
    Ok(manifest)
}

/// Load a split. Videos and ground truth come from the manifest and are
/// checked against their hashes; every `histories/*.json` file is read, so
/// histories exported by the annotation UI can be dropped in alongside.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST);
    if !manifest_path.exists() {
        return Err(Error::MissingData(format!("no dataset at {}", dir.display())));
    }
    let manifest: Manifest = read_json(&manifest_path)?;
    let mut videos = Vec::new();
    let mut ground_truth = Vec::new();
    for f in &manifest.files {
        let path = dir.join(&f.path);
        if f.path.starts_with("histories/") {
            continue;
        }
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if sha256_hex(&bytes) != f.sha256 {
            return Err(Error::format(&path, "content does not match the manifest hash"));
        }
        if f.path.starts_with("videos/") {
            videos.push(read_timeline(&path)?);
        } else if f.path.starts_with("ground_truth/") {
            ground_truth.push(serde_json::from_slice::<GroundTruth>(&bytes).map_err(|e| Error::json(&path, e))?);
        }
    }

    let mut histories = Vec::new();
    let hdir = dir.join("histories");
    if hdir.is_dir() {
        let mut paths: Vec<PathBuf> = fs::read_dir(&hdir)
            .map_err(|e| Error::io(&hdir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        for p in paths {
            histories.push(read_json::<SearchHistory>(&p)?);
        }
    }
    let durations: HashMap<&str, f64> = videos.iter().map(|v| (v.video_id.as_str(), v.duration())).collect();
    for h in &histories {
        let d = durations
            .get(h.video_id.as_str())
            .ok_or_else(|| Error::MissingData(format!("history refers to unknown video {}", h.video_id)))?;
        h.validate(*d)?;
    }
    Ok(Dataset {
        videos,
        ground_truth,
        histories,
    })
}

pub fn load_split(cfg: &RunConfig, split: &str) -> Result<Dataset> {
    load_dataset(&split_dir(&cfg.paths.data_dir, split))
}

/// Classifier, priors and search models, as stored in the checkpoints dir.
#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub classifier: SegmentClassifier,
    pub priors: DurationPriors,
    pub search: BTreeMap<u32, SearchModelParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSidecar {
    pub class_id: u32,
    pub input_dim: usize,
    pub histories: usize,
    pub final_loss: Option<f64>,
    pub norm_mean: f64,
    pub norm_std: f64,
    pub train: TrainConfig,
}

pub fn classifier_path(dir: &Path) -> PathBuf {
    dir.join("classifier.json")
}

pub fn priors_path(dir: &Path) -> PathBuf {
    dir.join("priors.json")
}

pub fn model_path(dir: &Path, class_id: u32) -> PathBuf {
    dir.join(format!("class_{class_id:03}.asmd"))
}

fn instances_by_class(gt: &[GroundTruth]) -> BTreeMap<u32, Vec<Interval>> {
    let mut m: BTreeMap<u32, Vec<Interval>> = BTreeMap::new();
    for g in gt {
        for i in &g.instances {
            m.entry(i.class_id).or_default().push(i.interval);
        }
    }
    m
}

pub fn train_classifier_on(ds: &Dataset, num_classes: usize, cfg: &ClassifierConfig) -> Result<SegmentClassifier> {
    let by_id: HashMap<&str, &GroundTruth> = ds.ground_truth.iter().map(|g| (g.video_id.as_str(), g)).collect();
    let pairs: Vec<(&FeatureTimeline, &[ActionInstance])> = ds
        .videos
        .iter()
        .map(|v| {
            let gt = by_id
                .get(v.video_id.as_str())
                .ok_or_else(|| Error::MissingData(format!("no ground truth for {}", v.video_id)))?;
            Ok((v, gt.instances.as_slice()))
        })
        .collect::<Result<_>>()?;
    train_classifier(&pairs, num_classes, cfg)
}

pub struct TrainedClass {
    pub params: SearchModelParams,
    pub log: TrainLog,
    pub histories: usize,
}

/// Filter histories and fit the search model of each class in `classes`.
pub fn train_search_models(
    ds: &Dataset,
    classes: &[u32],
    train: &TrainConfig,
    seed: u64,
) -> Result<BTreeMap<u32, TrainedClass>> {
    let gt: HashMap<String, Vec<ActionInstance>> = ds
        .ground_truth
        .iter()
        .map(|g| (g.video_id.clone(), g.instances.clone()))
        .collect();
    let kept = preprocess_histories(&ds.histories, &gt, train.min_steps, train.min_tiou);
    let videos: HashMap<&str, &FeatureTimeline> = ds.videos.iter().map(|v| (v.video_id.as_str(), v)).collect();
    let examples: Vec<(&SearchHistory, &FeatureTimeline)> = kept
        .iter()
        .map(|h| Ok((h, *videos.get(h.video_id.as_str()).ok_or_else(|| Error::MissingData(h.video_id.clone()))?)))
        .collect::<Result<_>>()?;
    let cfg = TrainConfig { seed, ..train.clone() };
    let fitted: Vec<(u32, TrainedClass)> = classes
        .par_iter()
        .map(|&c| {
            let out = fit(c, &examples, &cfg)?;
            let n = examples.iter().filter(|(h, _)| h.class_id == c).count();
            Ok((
                c,
                TrainedClass {
                    params: out.params,
                    log: out.log,
                    histories: n,
                },
            ))
        })
        .collect::<Result<_>>()?;
    Ok(fitted.into_iter().collect())
}

/// Train everything on the train split and write it to the checkpoints dir.
/// With `classes == None` every configured class gets a search model.
/// Returns the written paths.
pub fn run_train(cfg: &RunConfig, classes: Option<&[u32]>) -> Result<Vec<PathBuf>> {
    let ds = load_split(cfg, "train")?;
    let all: Vec<u32> = (0..cfg.world.num_classes).collect();
    let classes = classes.unwrap_or(&all);
    if let Some(c) = classes.iter().find(|c| **c >= cfg.world.num_classes) {
        return Err(Error::Config(format!("class {c} is not configured")));
    }
    let dir = &cfg.paths.checkpoints_dir;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let clf_cfg = ClassifierConfig {
        seed: cfg.classifier_seed(),
        ..cfg.classifier.clone()
    };
    let classifier = train_classifier_on(&ds, cfg.world.num_classes as usize, &clf_cfg)?;
    let priors = build_duration_priors(&instances_by_class(&ds.ground_truth), cfg.priors.per_class)?;
    let trained = train_search_models(&ds, classes, &cfg.train, cfg.train_seed())?;

    let mut written = vec![classifier_path(dir), priors_path(dir)];
    crate::world::io::write_json(&written[0], &classifier)?;
    crate::world::io::write_json(&written[1], &priors)?;
    for (c, t) in &trained {
        let m = model_path(dir, *c);
        checkpoint::save(&m, &t.params)?;
        let side = m.with_extension("json");
        crate::world::io::write_json(
            &side,
            &CheckpointSidecar {
                class_id: *c,
                input_dim: t.params.input_dim,
                histories: t.histories,
                final_loss: t.log.final_loss(),
                norm_mean: t.params.norm.mean,
                norm_std: t.params.norm.std,
                train: TrainConfig {
                    seed: cfg.train_seed(),
                    ..cfg.train.clone()
                },
            },
        )?;
        let log = dir.join(format!("loss_class_{c:03}.csv"));
        write_file(&log, t.log.to_csv().as_bytes())?;
        written.extend([m, side, log]);
    }
    Ok(written)
}

pub fn load_models(dir: &Path, num_classes: u32) -> Result<Models> {
    let classifier: SegmentClassifier = read_json(&classifier_path(dir))?;
    let priors: DurationPriors = read_json(&priors_path(dir))?;
    let mut search = BTreeMap::new();
    for c in 0..num_classes {
        let p = model_path(dir, c);
        if p.exists() {
            search.insert(c, checkpoint::load(&p)?);
        }
    }
    Ok(Models {
        classifier,
        priors,
        search,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSummary {
    pub searches: usize,
    pub mean_observed_fraction: f64,
    pub max_observed_fraction: f64,
    pub mean_steps: f64,
    pub mean_proposals_before_nms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectRun {
    pub detections: Vec<Detection>,
    pub summary: SearchSummary,
}

/// Run detection over every video of `ds`; detections are grouped by video
/// in dataset order.
pub fn detect_dataset(ds: &Dataset, models: &Models, dcfg: &DetectionConfig, run_seed: u64) -> Result<DetectRun> {
    let outs = ds
        .videos
        .par_iter()
        .map(|v| detect(v, &models.search, &models.priors, &models.classifier, dcfg, run_seed).map(|o| (v, o)))
        .collect::<Result<Vec<_>>>()?;
    let mut detections = Vec::new();
    let mut fractions = Vec::new();
    let mut steps = 0usize;
    let mut proposals = 0usize;
    for (v, o) in outs {
        detections.extend(o.detections);
        proposals += o.proposals_before_nms;
        for s in &o.searches {
            steps += s.positions.len();
            fractions.push(s.observed_fraction(v));
        }
    }
    let n = fractions.len().max(1) as f64;
    Ok(DetectRun {
        detections,
        summary: SearchSummary {
            searches: fractions.len(),
            mean_observed_fraction: fractions.iter().sum::<f64>() / n,
            max_observed_fraction: fractions.iter().copied().fold(0.0, f64::max),
            mean_steps: steps as f64 / n,
            mean_proposals_before_nms: proposals as f64 / ds.videos.len().max(1) as f64,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Uniform,
    UniformPrior,
}

impl BaselineKind {
    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::Uniform => "uniform",
            BaselineKind::UniformPrior => "uniform_prior",
        }
    }
}

/// Baseline proposals: `budget` intervals per video for each class present
/// in its ground truth. UNIFORM reuses one set of intervals for every class.
pub fn baseline_detections(
    kind: BaselineKind,
    ds: &Dataset,
    priors: &DurationPriors,
    budget: usize,
    run_seed: u64,
) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for g in &ds.ground_truth {
        let classes: BTreeSet<u32> = g.instances.iter().map(|i| i.class_id).collect();
        let s = seed::derive(run_seed, &[0xBA5E, seed::tag_str(&g.video_id)]);
        for c in classes {
            let intervals = match kind {
                BaselineKind::Uniform => uniform_proposals(g.duration, budget, s)?,
                BaselineKind::UniformPrior => uniform_prior_proposals(g.duration, budget, c, priors, s)?,
            };
            out.extend(intervals.into_iter().map(|interval| Detection {
                video_id: g.video_id.clone(),
                class_id: c,
                interval,
                score: 1.0,
            }));
        }
    }
    Ok(out)
}

/// One point of a sweep: the parameter value and its recall curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub curve: RecallCurve,
    /// Recall with every detection kept.
    pub recall: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    TopK,
    NmsThreshold,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::TopK => "top_k",
            SweepParam::NmsThreshold => "nms_threshold",
        }
    }

    pub fn apply(self, base: &DetectionConfig, value: f64) -> Result<DetectionConfig> {
        let mut c = base.clone();
        match self {
            SweepParam::TopK => {
                if value.fract() != 0.0 || value < 1.0 {
                    return Err(Error::Config(format!("top_k must be a positive integer, got {value}")));
                }
                c.top_k = value as usize;
            }
            SweepParam::NmsThreshold => c.nms_threshold = value,
        }
        Ok(c)
    }
}

/// Detect over `ds` once per value with shared seeds, recording recall
/// against the per-video proposal budget.
pub fn sweep(
    ds: &Dataset,
    models: &Models,
    base: &DetectionConfig,
    param: SweepParam,
    values: &[f64],
    budgets: &[usize],
    run_seed: u64,
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let configs = values
        .iter()
        .map(|&v| {
            let c = param.apply(base, v)?;
            c.validate(models.classifier.num_classes)?;
            Ok(c)
        })
        .collect::<Result<Vec<_>>>()?;
    let gt = ds.ground_truth_index();
    values
        .iter()
        .zip(configs)
        .map(|(&v, c)| {
            let run = detect_dataset(ds, models, &c, run_seed)?;
            let label = format!("{}={v}", param.name());
            Ok(SweepPoint {
                value: v,
                curve: eval::recall_curve(label, &run.detections, &gt, eval::RECALL_TIOU, budgets)?,
                recall: eval::recall_at_tiou(&run.detections, &gt, eval::RECALL_TIOU, None)?.overall,
            })
        })
        .collect()
}

/// Headline comparison at one proposal budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub budget: usize,
    pub action_search: f64,
    pub uniform: f64,
    pub uniform_prior: f64,
    pub mean_observed_fraction: f64,
    pub max_observed_fraction: f64,
}

pub fn compare_at_budget(
    ds: &Dataset,
    models: &Models,
    dcfg: &DetectionConfig,
    budget: usize,
    run_seed: u64,
) -> Result<Comparison> {
    let gt = ds.ground_truth_index();
    let run = detect_dataset(ds, models, dcfg, run_seed)?;
    let recall = |d: &[Detection]| eval::recall_at_tiou(d, &gt, eval::RECALL_TIOU, Some(budget)).map(|r| r.overall);
    let u = baseline_detections(BaselineKind::Uniform, ds, &models.priors, budget, run_seed)?;
    let up = baseline_detections(BaselineKind::UniformPrior, ds, &models.priors, budget, run_seed)?;
    Ok(Comparison {
        budget,
        action_search: recall(&run.detections)?,
        uniform: recall(&u)?,
        uniform_prior: recall(&up)?,
        mean_observed_fraction: run.summary.mean_observed_fraction,
        max_observed_fraction: run.summary.max_observed_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_world() -> WorldConfig {
        WorldConfig {
            num_classes: 2,
            feature_dim: 4,
            duration_min: 120.0,
            duration_max: 150.0,
            action_duration_min: 10.0,
            action_duration_max: 20.0,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn dataset_roundtrip_and_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let ds = generate_dataset(&small_world(), &AnnotatorConfig::default(), "train", 3, 11).unwrap();
        let m = write_dataset(tmp.path(), &ds, "train", 11).unwrap();
        assert_eq!(m.videos, 3);
        assert_eq!(m.history_count, ds.histories.len());
        assert_eq!(m.files.len(), 6 + ds.histories.len());
        assert!(m.files.windows(2).all(|w| w[0].path < w[1].path));
        let back = load_dataset(tmp.path()).unwrap();
        assert_eq!(back.videos, ds.videos);
        assert_eq!(back.ground_truth, ds.ground_truth);
        assert_eq!(back.histories.len(), ds.histories.len());

        let again = write_dataset(tmp.path(), &ds, "train", 11).unwrap();
        assert_eq!(again, m);

        fs::write(tmp.path().join(&m.files[0].path), b"tampered").unwrap();
        assert!(load_dataset(tmp.path()).is_err());
    }

    #[test]
    fn empty_dataset_has_empty_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let ds = generate_dataset(&small_world(), &AnnotatorConfig::default(), "train", 0, 1).unwrap();
        let m = write_dataset(tmp.path(), &ds, "train", 1).unwrap();
        assert!(m.files.is_empty());
        assert_eq!(m.history_count, 0);
    }

    #[test]
    fn ui_history_with_session_field_loads() {
        let tmp = tempfile::tempdir().unwrap();
        let ds = generate_dataset(&small_world(), &AnnotatorConfig::default(), "train", 1, 3).unwrap();
        write_dataset(tmp.path(), &ds, "train", 3).unwrap();
        let id = &ds.videos[0].video_id;
        let ui = format!(
            r#"{{"video_id":"{id}","class_id":0,"steps":[1.0,5.0],"final":[4.0,9.0],"source":"human","session":{{"elapsed_ms":1200}}}}"#
        );
        fs::write(tmp.path().join("histories/ui_0001.json"), ui).unwrap();
        let back = load_dataset(tmp.path()).unwrap();
        assert_eq!(back.histories.len(), ds.histories.len() + 1);
    }

    #[test]
    fn baselines_cover_each_ground_truth_class() {
        let ds = generate_dataset(&small_world(), &AnnotatorConfig::default(), "test", 4, 5).unwrap();
        let priors = DurationPriors::new((0..2).map(|c| (c, vec![5.0, 10.0])).collect()).unwrap();
        for kind in [BaselineKind::Uniform, BaselineKind::UniformPrior] {
            let d = baseline_detections(kind, &ds, &priors, 7, 9).unwrap();
            let expected: usize = ds
                .ground_truth
                .iter()
                .map(|g| 7 * g.instances.iter().map(|i| i.class_id).collect::<BTreeSet<_>>().len())
                .sum();
            assert_eq!(d.len(), expected);
            assert!(d.iter().all(|x| x.score == 1.0));
            assert_eq!(d, baseline_detections(kind, &ds, &priors, 7, 9).unwrap());
        }
    }
}
