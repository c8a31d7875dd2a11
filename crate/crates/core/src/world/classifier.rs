//! One-vs-rest logistic segment classifier over interval-mean features.
//!
//! Stands in for a learned action classifier. The last score slot is the
//! background class.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::temporal::{tiou, Interval};
use crate::train::adam::{AdamConfig, AdamState};
use crate::world::video::{ActionInstance, FeatureTimeline};

/// Independent per-class probabilities; index `num_classes` is background.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierScores(pub Vec<f64>);

impl ClassifierScores {
    pub fn class(&self, class_id: u32) -> f64 {
        self.0.get(class_id as usize).copied().unwrap_or(0.0)
    }

    pub fn background(&self) -> f64 {
        *self.0.last().expect("scores are never empty")
    }

    pub fn num_classes(&self) -> usize {
        self.0.len() - 1
    }

    /// Index of the highest score, background included.
    pub fn argmax(&self) -> usize {
        self.0
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentClassifier {
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Row-major `(num_classes + 1) x (feature_dim + 1)`, bias last.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub iterations: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub jitter_per_instance: usize,
    pub windows_per_instance: usize,
    pub background_per_video: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            iterations: 300,
            learning_rate: 0.05,
            l2: 1e-4,
            jitter_per_instance: 3,
            windows_per_instance: 3,
            background_per_video: 8,
            seed: 17,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

impl SegmentClassifier {
    pub fn scores_for_feature(&self, x: &[f64]) -> ClassifierScores {
        let stride = self.feature_dim + 1;
        ClassifierScores(
            self.weights
                .chunks_exact(stride)
                .map(|w| {
                    let z = w[..self.feature_dim]
                        .iter()
                        .zip(x)
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        + w[self.feature_dim];
                    sigmoid(z)
                })
                .collect(),
        )
    }

    /// Fit on labelled mean features; labels index into `0..=num_classes`.
    pub fn fit(
        samples: &[(Vec<f64>, usize)],
        num_classes: usize,
        feature_dim: usize,
        cfg: &ClassifierConfig,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::MissingData("no classifier training samples".into()));
        }
        let rows = num_classes + 1;
        let stride = feature_dim + 1;
        let mut model = SegmentClassifier {
            num_classes,
            feature_dim,
            weights: vec![0.0; rows * stride],
        };
        let adam = AdamConfig {
            learning_rate: cfg.learning_rate,
            decay_rate: 1.0,
            ..AdamConfig::default()
        };
        let mut state = AdamState::new(model.weights.len());
        let n = samples.len() as f64;
        let mut grad = vec![0.0; model.weights.len()];
        for _ in 0..cfg.iterations {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for (x, label) in samples {
                let scores = model.scores_for_feature(x);
                for (c, p) in scores.0.iter().enumerate() {
                    let err = (p - if c == *label { 1.0 } else { 0.0 }) / n;
                    let g = &mut grad[c * stride..(c + 1) * stride];
                    for (gj, xj) in g.iter_mut().zip(x) {
                        *gj += err * xj;
                    }
                    g[feature_dim] += err;
                }
            }
            for (g, w) in grad.iter_mut().zip(&model.weights) {
                *g += cfg.l2 * w;
            }
            state.step(model.weights.iter_mut(), grad.iter().copied(), &adam);
        }
        if model.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numeric("classifier weights diverged".into()));
        }
        Ok(model)
    }
}

/// Score the frames of `interval` in `video`.
pub fn classify_segment(
    video: &FeatureTimeline,
    interval: &Interval,
    model: &SegmentClassifier,
) -> Result<ClassifierScores> {
    if video.feature_dim() != model.feature_dim {
        return Err(Error::Shape(format!(
            "classifier expects {} features, video has {}",
            model.feature_dim,
            video.feature_dim()
        )));
    }
    let x = video.interval_mean(interval)?;
    Ok(model.scores_for_feature(&x))
}

/// Labelled training segments drawn from annotated videos: each instance,
/// jittered copies of it, short windows inside it, and background spans that
/// barely touch any instance.
pub fn training_samples(
    videos: &[(&FeatureTimeline, &[ActionInstance])],
    num_classes: usize,
    cfg: &ClassifierConfig,
) -> Result<Vec<(Vec<f64>, usize)>> {
    let mut out = Vec::new();
    for (vi, (video, instances)) in videos.iter().enumerate() {
        let mut rng = seed::rng_for(cfg.seed, &[vi as u64, seed::tag_str(&video.video_id)]);
        let duration = video.duration();
        let window = video.observation_window().min(duration);
        for inst in instances.iter() {
            let label = inst.class_id as usize;
            if label >= num_classes {
                return Err(Error::Config(format!("instance class {label} out of range")));
            }
            let iv = inst.interval;
            out.push((video.interval_mean(&iv)?, label));
            for _ in 0..cfg.jitter_per_instance {
                let len = iv.length() * rng.random_range(0.85..1.15);
                let start = (iv.start() + iv.length() * rng.random_range(-0.1..0.1)).max(0.0);
                let end = (start + len).min(duration);
                if let Ok(j) = Interval::new(start, end) {
                    out.push((video.interval_mean(&j)?, label));
                }
            }
            if iv.length() > window {
                for _ in 0..cfg.windows_per_instance {
                    let s = rng.random_range(iv.start()..iv.end() - window);
                    out.push((video.mean_feature(s, s + window)?, label));
                }
            }
        }
        let max_len = instances
            .iter()
            .map(|i| i.interval.length())
            .fold(window, f64::max)
            .min(duration);
        let mut drawn = 0;
        let mut attempts = 0;
        while drawn < cfg.background_per_video && attempts < 50 * cfg.background_per_video {
            attempts += 1;
            let len = rng.random_range(window..=max_len.max(window));
            let start = rng.random_range(0.0..=(duration - len).max(0.0));
            let Ok(span) = Interval::new(start, (start + len).min(duration)) else {
                continue;
            };
            if instances.iter().all(|i| tiou(&i.interval, &span) < 0.1) {
                out.push((video.interval_mean(&span)?, num_classes));
                drawn += 1;
            }
        }
    }
    Ok(out)
}

/// Build samples from `videos` and fit a classifier in one go.
pub fn train_classifier(
    videos: &[(&FeatureTimeline, &[ActionInstance])],
    num_classes: usize,
    cfg: &ClassifierConfig,
) -> Result<SegmentClassifier> {
    let feature_dim = videos
        .first()
        .map(|(v, _)| v.feature_dim())
        .ok_or_else(|| Error::MissingData("no videos to train the classifier".into()))?;
    let samples = training_samples(videos, num_classes, cfg)?;
    SegmentClassifier::fit(&samples, num_classes, feature_dim, cfg)
}
