//! Recall and interpolated average precision over temporal detections.
//!
//! Detections are matched one-to-one to ground truth of the same video and
//! class in descending score order, ties broken by (video_id, start, end).
//! A match needs tIoU >= alpha. Each detection takes the unmatched instance
//! it overlaps most.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::Detection;
use crate::temporal::{tiou, Interval};
use crate::world::{ActionInstance, GroundTruth};

pub const DEFAULT_THRESHOLDS: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];
pub const RECALL_TIOU: f64 = 0.5;

/// Ground-truth instances by video id.
pub type GroundTruthIndex = BTreeMap<String, Vec<ActionInstance>>;

pub fn index_ground_truth(gt: &[GroundTruth]) -> GroundTruthIndex {
    gt.iter()
        .map(|g| (g.video_id.clone(), g.instances.clone()))
        .collect()
}

fn detection_order(a: &Detection, b: &Detection) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.video_id.cmp(&b.video_id))
        .then(a.interval.canonical_cmp(&b.interval))
        .then(a.class_id.cmp(&b.class_id))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Config(format!("tIoU threshold must be in (0, 1], got {alpha}")));
    }
    Ok(())
}

/// Greedy one-to-one matching of `detections` (already in rank order) against
/// `instances`. Returns, per detection, whether it is a true positive.
fn match_sorted<'a>(detections: impl Iterator<Item = &'a Interval>, instances: &[Interval], alpha: f64) -> Vec<bool> {
    let mut used = vec![false; instances.len()];
    detections
        .map(|d| {
            let best = instances
                .iter()
                .enumerate()
                .filter(|(k, _)| !used[*k])
                .map(|(k, g)| (k, tiou(d, g)))
                .filter(|&(_, o)| o >= alpha)
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
            match best {
                Some((k, _)) => {
                    used[k] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

/// Keep at most `budget` detections per video, best first.
pub fn apply_budget(detections: &[Detection], budget: Option<usize>) -> Vec<Detection> {
    let mut sorted = detections.to_vec();
    sorted.sort_by(detection_order);
    let Some(b) = budget else {
        return sorted;
    };
    let mut taken: BTreeMap<&str, usize> = BTreeMap::new();
    let mut keep = vec![false; sorted.len()];
    for (k, d) in sorted.iter().enumerate() {
        let n = taken.entry(d.video_id.as_str()).or_default();
        if *n < b {
            *n += 1;
            keep[k] = true;
        }
    }
    sorted
        .into_iter()
        .zip(keep)
        .filter_map(|(d, k)| k.then_some(d))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub alpha: f64,
    pub per_class: BTreeMap<u32, f64>,
    pub recalled: usize,
    pub total: usize,
    /// Instance-weighted recall over all classes.
    pub overall: f64,
    /// Unweighted mean of the per-class recalls.
    pub mean_class: f64,
}

pub fn recall_at_tiou(
    detections: &[Detection],
    ground_truth: &GroundTruthIndex,
    alpha: f64,
    budget: Option<usize>,
) -> Result<RecallReport> {
    check_alpha(alpha)?;
    let kept = apply_budget(detections, budget);
    let mut by_key: BTreeMap<(&str, u32), Vec<&Interval>> = BTreeMap::new();
    for d in &kept {
        by_key.entry((d.video_id.as_str(), d.class_id)).or_default().push(&d.interval);
    }
    let mut hits: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for (video, instances) in ground_truth {
        let mut per_class: BTreeMap<u32, Vec<Interval>> = BTreeMap::new();
        for i in instances {
            per_class.entry(i.class_id).or_default().push(i.interval);
        }
        for (c, gts) in per_class {
            let dets = by_key.get(&(video.as_str(), c)).map(Vec::as_slice).unwrap_or(&[]);
            let tp = match_sorted(dets.iter().copied(), &gts, alpha).into_iter().filter(|&t| t).count();
            let e = hits.entry(c).or_default();
            e.0 += tp;
            e.1 += gts.len();
        }
    }
    let per_class: BTreeMap<u32, f64> = hits.iter().map(|(&c, &(r, t))| (c, r as f64 / t as f64)).collect();
    let recalled = hits.values().map(|h| h.0).sum();
    let total = hits.values().map(|h| h.1).sum();
    Ok(RecallReport {
        alpha,
        overall: if total == 0 { 0.0 } else { recalled as f64 / total as f64 },
        mean_class: if per_class.is_empty() {
            0.0
        } else {
            per_class.values().sum::<f64>() / per_class.len() as f64
        },
        per_class,
        recalled,
        total,
    })
}

/// All-point interpolated AP of one class. Detections of other classes and
/// instances of other classes are ignored; with no instances AP is 0.
pub fn average_precision(
    detections: &[Detection],
    ground_truth: &GroundTruthIndex,
    class_id: u32,
    alpha: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    let mut dets: Vec<&Detection> = detections.iter().filter(|d| d.class_id == class_id).collect();
    dets.sort_by(|a, b| detection_order(a, b));
    let gts: BTreeMap<&str, Vec<Interval>> = ground_truth
        .iter()
        .map(|(v, is)| {
            let own = is.iter().filter(|i| i.class_id == class_id).map(|i| i.interval).collect();
            (v.as_str(), own)
        })
        .collect();
    let n_gt: usize = gts.values().map(Vec::len).sum();
    if n_gt == 0 {
        return Ok(0.0);
    }

    let mut used: BTreeMap<&str, Vec<bool>> = gts.iter().map(|(v, g)| (*v, vec![false; g.len()])).collect();
    let mut is_tp = Vec::with_capacity(dets.len());
    for d in &dets {
        let hit = match (gts.get(d.video_id.as_str()), used.get_mut(d.video_id.as_str())) {
            (Some(g), Some(u)) => {
                let best = g
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| !u[*k])
                    .map(|(k, gi)| (k, tiou(&d.interval, gi)))
                    .filter(|&(_, o)| o >= alpha)
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
                best.map(|(k, _)| u[k] = true).is_some()
            }
            _ => false,
        };
        is_tp.push(hit);
    }

    let mut precision = Vec::with_capacity(is_tp.len());
    let mut tp = 0usize;
    for (rank, &t) in is_tp.iter().enumerate() {
        tp += usize::from(t);
        precision.push(tp as f64 / (rank + 1) as f64);
    }
    for k in (0..precision.len().saturating_sub(1)).rev() {
        precision[k] = precision[k].max(precision[k + 1]);
    }
    let sum: f64 = is_tp
        .iter()
        .zip(&precision)
        .filter(|(t, _)| **t)
        .map(|(_, p)| p)
        .sum();
    Ok(sum / n_gt as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalStats {
    pub videos: usize,
    pub mean: f64,
    pub min: usize,
    pub max: usize,
}

impl ProposalStats {
    pub fn of(detections: &[Detection], ground_truth: &GroundTruthIndex) -> Self {
        let mut counts: BTreeMap<&str, usize> = ground_truth.keys().map(|v| (v.as_str(), 0)).collect();
        for d in detections {
            *counts.entry(d.video_id.as_str()).or_default() += 1;
        }
        let videos = counts.len();
        ProposalStats {
            videos,
            mean: if videos == 0 {
                0.0
            } else {
                counts.values().sum::<usize>() as f64 / videos as f64
            },
            min: counts.values().copied().min().unwrap_or(0),
            max: counts.values().copied().max().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub thresholds: Vec<f64>,
    /// Class id to AP at each threshold.
    pub per_class_ap: BTreeMap<u32, Vec<f64>>,
    /// Mean AP over classes with ground truth, at each threshold.
    pub map: Vec<f64>,
    pub recall: RecallReport,
    /// Recall with each video capped at a proposal budget, when requested.
    pub recall_at_budget: Option<RecallReport>,
    /// Mean fraction of frames observed per search, when known.
    pub observed_fraction: Option<f64>,
    pub proposals_per_video: ProposalStats,
    pub notes: Vec<String>,
}

pub fn map_report(detections: &[Detection], ground_truth: &GroundTruthIndex, thresholds: &[f64]) -> Result<EvalReport> {
    if thresholds.is_empty() {
        return Err(Error::Config("at least one tIoU threshold is required".into()));
    }
    for &t in thresholds {
        check_alpha(t)?;
    }
    let classes: std::collections::BTreeSet<u32> = ground_truth.values().flatten().map(|i| i.class_id).collect();
    let rows: Vec<(u32, Vec<f64>)> = classes
        .par_iter()
        .map(|&c| {
            let aps = thresholds
                .iter()
                .map(|&t| average_precision(detections, ground_truth, c, t))
                .collect::<Result<Vec<_>>>()?;
            Ok((c, aps))
        })
        .collect::<Result<_>>()?;
    let per_class_ap: BTreeMap<u32, Vec<f64>> = rows.into_iter().collect();
    let map = (0..thresholds.len())
        .map(|k| {
            if per_class_ap.is_empty() {
                0.0
            } else {
                per_class_ap.values().map(|a| a[k]).sum::<f64>() / per_class_ap.len() as f64
            }
        })
        .collect();
    Ok(EvalReport {
        thresholds: thresholds.to_vec(),
        per_class_ap,
        map,
        recall: recall_at_tiou(detections, ground_truth, RECALL_TIOU, None)?,
        recall_at_budget: None,
        observed_fraction: None,
        proposals_per_video: ProposalStats::of(detections, ground_truth),
        notes: vec!["equal scores are ranked by video_id, then start, then end".into()],
    })
}

/// Recall as a function of the per-video proposal budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallCurve {
    pub label: String,
    /// `(average proposals per video, recall)` per budget.
    pub points: Vec<(f64, f64)>,
}

impl RecallCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("proposals_per_video,recall\n");
        for (p, r) in &self.points {
            s.push_str(&format!("{p},{r}\n"));
        }
        s
    }
}

pub fn recall_curve(
    label: impl Into<String>,
    detections: &[Detection],
    ground_truth: &GroundTruthIndex,
    alpha: f64,
    budgets: &[usize],
) -> Result<RecallCurve> {
    let points = budgets
        .iter()
        .map(|&b| {
            let kept = apply_budget(detections, Some(b));
            let ppv = ProposalStats::of(&kept, ground_truth).mean;
            Ok((ppv, recall_at_tiou(&kept, ground_truth, alpha, None)?.overall))
        })
        .collect::<Result<_>>()?;
    Ok(RecallCurve {
        label: label.into(),
        points,
    })
}
