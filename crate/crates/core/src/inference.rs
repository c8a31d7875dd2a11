//! Segment sampling, class selection, search rollouts and detection.

use std::collections::BTreeMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{forward_step, RecurrentState, SearchModelParams};
use crate::seed;
use crate::temporal::{generate_proposals, nms, DurationPriors, Interval, Proposal, DEFAULT_MIN_PROPOSAL_LENGTH};
use crate::world::{classify_segment, observed_fraction, ClassifierScores, FeatureTimeline, SegmentClassifier};

/// Moves shorter than this (seconds) count towards the early stop.
pub const EARLY_STOP_EPSILON: f64 = 0.5;
/// Consecutive short moves that end a search.
pub const EARLY_STOP_PATIENCE: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub num_segments: usize,
    /// Seconds; unset means the observation window of the video (16 frames).
    pub segment_length: Option<f64>,
    pub top_k: usize,
    pub search_steps: usize,
    pub num_restarts: usize,
    pub nms_threshold: f64,
    /// Unset keeps every detection surviving NMS.
    pub max_detections: Option<usize>,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        DetectionConfig {
            num_segments: 24,
            segment_length: None,
            top_k: 5,
            search_steps: 31,
            num_restarts: 3,
            nms_threshold: 0.6,
            max_detections: None,
        }
    }
}

impl DetectionConfig {
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("detect: {m}")));
        if self.num_segments == 0 {
            return bad("num_segments must be >= 1".into());
        }
        if self.top_k == 0 || self.top_k > num_classes {
            return bad(format!("top_k must be in [1, {num_classes}], got {}", self.top_k));
        }
        if self.search_steps == 0 || self.num_restarts == 0 {
            return bad("search_steps and num_restarts must be >= 1".into());
        }
        if !(self.nms_threshold > 0.0 && self.nms_threshold <= 1.0) {
            return bad(format!("nms_threshold must be in (0, 1], got {}", self.nms_threshold));
        }
        if self.max_detections == Some(0) {
            return bad("max_detections must be >= 1".into());
        }
        if let Some(l) = self.segment_length {
            if !(l > 0.0 && l.is_finite()) {
                return bad("segment_length must be > 0".into());
            }
        }
        Ok(())
    }
}

/// A scored, labelled interval of one video; serialized as one JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub video_id: String,
    pub class_id: u32,
    #[serde(flatten)]
    pub interval: Interval,
    pub score: f64,
}

impl Detection {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("detections serialize")
    }
}

pub fn write_detections(mut out: impl std::io::Write, detections: &[Detection]) -> std::io::Result<()> {
    for d in detections {
        writeln!(out, "{}", d.to_json_line())?;
    }
    Ok(())
}

pub fn parse_detections(text: &str, origin: &std::path::Path) -> Result<Vec<Detection>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            let d: Detection =
                serde_json::from_str(l).map_err(|e| Error::format(origin, format!("line {}: {e}", n + 1)))?;
            if !(0.0..=1.0).contains(&d.score) {
                return Err(Error::format(origin, format!("line {}: score outside [0, 1]", n + 1)));
            }
            Ok(d)
        })
        .collect()
}

/// `count` intervals of exactly `length` seconds with starts uniform on
/// `[0, duration - length]`.
pub fn sample_segments(video: &FeatureTimeline, count: usize, length: f64, seed: u64) -> Result<Vec<Interval>> {
    let duration = video.duration();
    if !(length > 0.0 && length <= duration) {
        return Err(Error::InvalidInterval { start: 0.0, end: length });
    }
    let mut rng = seed::rng_for(seed, &[0x5E6, seed::tag_str(&video.video_id)]);
    let span = duration - length;
    (0..count)
        .map(|_| {
            let s = rng.random::<f64>() * span;
            Interval::new(s, s + length)
        })
        .collect()
}

/// Classes ranked by their best score over all segments, background
/// excluded; ties go to the lower class id.
pub fn top_k_classes(segment_scores: &[ClassifierScores], k: usize) -> Vec<u32> {
    let Some(first) = segment_scores.first() else {
        return Vec::new();
    };
    let mut best: Vec<(u32, f64)> = (0..first.num_classes() as u32)
        .map(|c| {
            let m = segment_scores
                .iter()
                .map(|s| s.class(c))
                .fold(f64::NEG_INFINITY, f64::max);
            (c, m)
        })
        .collect();
    best.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    best.into_iter().take(k).map(|(c, _)| c).collect()
}

/// Free-running search from `initial_position`; returns the emitted
/// positions (seconds, clamped to the video). Stops early once
/// [`EARLY_STOP_PATIENCE`] consecutive moves are shorter than
/// [`EARLY_STOP_EPSILON`].
pub fn run_search(
    model: &SearchModelParams,
    video: &FeatureTimeline,
    initial_position: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    model.check_shapes()?;
    let duration = video.duration();
    let mut pos = initial_position.clamp(0.0, duration);
    let mut state = RecurrentState::zeros(model);
    let mut out = Vec::with_capacity(steps);
    let mut still = 0;
    for _ in 0..steps {
        let feature = video.observe(pos);
        let z_prev = model.norm.normalize(pos, duration);
        let (next_state, z) = forward_step(model, &state, &feature, z_prev, None)?;
        if !z.is_finite() {
            return Err(Error::Numeric(format!("class {}: search produced {z}", model.class_id)));
        }
        state = next_state;
        let next = model.norm.denormalize(z, duration).clamp(0.0, duration);
        still = if (next - pos).abs() < EARLY_STOP_EPSILON { still + 1 } else { 0 };
        out.push(next);
        pos = next;
        if still >= EARLY_STOP_PATIENCE {
            break;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchTrace {
    pub class_id: u32,
    pub restart: usize,
    pub initial: f64,
    pub positions: Vec<f64>,
}

impl SearchTrace {
    /// Fraction of the video seen by this search: one observation volume at
    /// the start point and at every emitted position.
    pub fn observed_fraction(&self, video: &FeatureTimeline) -> f64 {
        let mut seen = Vec::with_capacity(self.positions.len() + 1);
        seen.push(self.initial);
        seen.extend(&self.positions);
        observed_fraction(&seen, video.duration(), video.observation_window())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectOutput {
    pub detections: Vec<Detection>,
    pub selected_classes: Vec<u32>,
    pub searches: Vec<SearchTrace>,
    pub proposals_before_nms: usize,
}

/// The full prediction pipeline for one video.
///
/// Random streams are keyed by (seed, video, class, restart), so the searches
/// for a class do not depend on which other classes were selected.
pub fn detect(
    video: &FeatureTimeline,
    models: &BTreeMap<u32, SearchModelParams>,
    priors: &DurationPriors,
    classifier: &SegmentClassifier,
    cfg: &DetectionConfig,
    seed: u64,
) -> Result<DetectOutput> {
    cfg.validate(classifier.num_classes)?;
    let duration = video.duration();
    let length = cfg.segment_length.unwrap_or(video.observation_window()).min(duration);
    let segments = sample_segments(video, cfg.num_segments, length, seed)?;
    let scores = segments
        .iter()
        .map(|s| classify_segment(video, s, classifier))
        .collect::<Result<Vec<_>>>()?;
    let selected = top_k_classes(&scores, cfg.top_k);
    for &c in &selected {
        if !models.contains_key(&c) {
            return Err(Error::MissingData(format!("no search model for class {c}")));
        }
        priors.get(c)?;
    }

    let vtag = seed::tag_str(&video.video_id);
    let per_class: Vec<(Vec<SearchTrace>, Vec<Proposal>)> = selected
        .par_iter()
        .map(|&c| {
            let model = &models[&c];
            let mut traces = Vec::with_capacity(cfg.num_restarts);
            let mut pooled = Vec::new();
            for r in 0..cfg.num_restarts {
                let mut rng = seed::rng_for(seed, &[0x5EA, vtag, u64::from(c), r as u64]);
                let initial = rng.random::<f64>() * duration;
                let positions = run_search(model, video, initial, cfg.search_steps)?;
                pooled.extend_from_slice(&positions);
                traces.push(SearchTrace {
                    class_id: c,
                    restart: r,
                    initial,
                    positions,
                });
            }
            let mut proposals = generate_proposals(&pooled, c, priors, duration, DEFAULT_MIN_PROPOSAL_LENGTH)?;
            for p in &mut proposals {
                p.score = classify_segment(video, &p.interval, classifier)?.class(c);
            }
            Ok((traces, proposals))
        })
        .collect::<Result<_>>()?;

    let mut searches = Vec::new();
    let mut proposals = Vec::new();
    for (t, p) in per_class {
        searches.extend(t);
        proposals.extend(p);
    }
    let proposals_before_nms = proposals.len();
    let mut kept = nms(&proposals, cfg.nms_threshold);
    if let Some(m) = cfg.max_detections {
        kept.truncate(m);
    }
    let detections = kept
        .into_iter()
        .map(|p| Detection {
            video_id: video.video_id.clone(),
            class_id: p.class_id,
            interval: p.interval,
            score: p.score,
        })
        .collect();
    Ok(DetectOutput {
        detections,
        selected_classes: selected,
        searches,
        proposals_before_nms,
    })
}
