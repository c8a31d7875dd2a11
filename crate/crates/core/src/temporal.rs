//! Temporal intervals, search-anchored proposal expansion and class-wise NMS.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Proposals shorter than this after clipping to the video end are dropped.
pub const DEFAULT_MIN_PROPOSAL_LENGTH: f64 = 0.1;

/// A half-open span of video time in seconds. Always finite, non-negative and
/// of positive length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInterval")]
pub struct Interval {
    start: f64,
    end: f64,
}

#[derive(Deserialize)]
struct RawInterval {
    start: f64,
    end: f64,
}

impl TryFrom<RawInterval> for Interval {
    type Error = Error;

    fn try_from(raw: RawInterval) -> Result<Self> {
        Interval::new(raw.start, raw.end)
    }
}

impl Interval {
    pub fn new(start: f64, end: f64) -> Result<Self> {
        if start.is_finite() && end.is_finite() && start >= 0.0 && start < end {
            Ok(Interval { start, end })
        } else {
            Err(Error::InvalidInterval { start, end })
        }
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.start + self.end)
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }

    pub fn intersection(&self, other: &Interval) -> f64 {
        (self.end.min(other.end) - self.start.max(other.start)).max(0.0)
    }

    /// Canonical ordering: earlier start, then shorter.
    pub fn canonical_cmp(&self, other: &Interval) -> Ordering {
        self.start
            .total_cmp(&other.start)
            .then(self.end.total_cmp(&other.end))
    }
}

/// Temporal intersection-over-union.
pub fn tiou(a: &Interval, b: &Interval) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = a.intersection(b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.length() + b.length() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// A candidate interval for one class, anchored at the search position that
/// produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProposalRecord", into = "ProposalRecord")]
pub struct Proposal {
    pub interval: Interval,
    pub class_id: u32,
    pub anchor: f64,
    pub score: f64,
}

/// Flat JSON layout: `{"start", "end", "class_id", "score", "anchor"}`.
#[derive(Serialize, Deserialize)]
struct ProposalRecord {
    start: f64,
    end: f64,
    class_id: u32,
    score: f64,
    anchor: f64,
}

impl TryFrom<ProposalRecord> for Proposal {
    type Error = Error;

    fn try_from(r: ProposalRecord) -> Result<Self> {
        if !(0.0..=1.0).contains(&r.score) {
            return Err(Error::Config(format!("proposal score {} outside [0,1]", r.score)));
        }
        Ok(Proposal {
            interval: Interval::new(r.start, r.end)?,
            class_id: r.class_id,
            anchor: r.anchor,
            score: r.score,
        })
    }
}

impl From<Proposal> for ProposalRecord {
    fn from(p: Proposal) -> Self {
        ProposalRecord {
            start: p.interval.start(),
            end: p.interval.end(),
            class_id: p.class_id,
            score: p.score,
            anchor: p.anchor,
        }
    }
}

/// Descending score, then earlier start, then shorter duration.
pub fn ranking_cmp(a: &Proposal, b: &Proposal) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.interval.start().total_cmp(&b.interval.start()))
        .then(a.interval.length().total_cmp(&b.interval.length()))
        .then(a.class_id.cmp(&b.class_id))
}

/// Class-specific sets of typical action durations, strictly increasing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DurationPriors {
    classes: BTreeMap<u32, Vec<f64>>,
}

impl DurationPriors {
    pub fn new(classes: BTreeMap<u32, Vec<f64>>) -> Result<Self> {
        for (class, durations) in &classes {
            if durations.is_empty() {
                return Err(Error::MissingPrior(*class));
            }
            if durations.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
                return Err(Error::Config(format!("class {class}: durations must be positive")));
            }
            if durations.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!(
                    "class {class}: durations must be strictly increasing"
                )));
            }
        }
        Ok(DurationPriors { classes })
    }

    pub fn get(&self, class_id: u32) -> Result<&[f64]> {
        self.classes
            .get(&class_id)
            .map(Vec::as_slice)
            .ok_or(Error::MissingPrior(class_id))
    }

    pub fn classes(&self) -> impl Iterator<Item = u32> + '_ {
        self.classes.keys().copied()
    }

    pub fn max_len(&self) -> usize {
        self.classes.values().map(Vec::len).max().unwrap_or(0)
    }
}

/// Expand every search position by every duration prior of the class.
///
/// Ends past the video are clipped to `video_duration`; clipped proposals
/// shorter than `min_length` are dropped and identical intervals collapse to
/// one. Output is in canonical interval order.
pub fn generate_proposals(
    positions: &[f64],
    class_id: u32,
    priors: &DurationPriors,
    video_duration: f64,
    min_length: f64,
) -> Result<Vec<Proposal>> {
    let durations = priors.get(class_id)?;
    let mut out = Vec::with_capacity(positions.len() * durations.len());
    for &p in positions {
        if !(p.is_finite() && (0.0..=video_duration).contains(&p)) {
            return Err(Error::InvalidInterval {
                start: p,
                end: video_duration,
            });
        }
        for &d in durations {
            let end = (p + d).min(video_duration);
            if end - p < min_length {
                continue;
            }
            out.push(Proposal {
                interval: Interval::new(p, end)?,
                class_id,
                anchor: p,
                score: 0.0,
            });
        }
    }
    out.sort_by(|a, b| a.interval.canonical_cmp(&b.interval));
    out.dedup_by(|a, b| a.interval == b.interval);
    Ok(out)
}

/// Greedy class-wise non-maximum suppression.
///
/// Repeatedly keeps the best remaining proposal and drops every remaining
/// proposal of the same class whose tIoU with it exceeds `threshold`.
/// Output is sorted by [`ranking_cmp`].
pub fn nms(proposals: &[Proposal], threshold: f64) -> Vec<Proposal> {
    let mut sorted: Vec<&Proposal> = proposals.iter().collect();
    sorted.sort_by(|a, b| ranking_cmp(a, b));

    let mut kept: Vec<Proposal> = Vec::new();
    let mut kept_by_class: BTreeMap<u32, Vec<Interval>> = BTreeMap::new();
    for p in sorted {
        let survivors = kept_by_class.entry(p.class_id).or_default();
        if survivors.iter().all(|k| tiou(k, &p.interval) <= threshold) {
            survivors.push(p.interval);
            kept.push(p.clone());
        }
    }
    kept
}

/// Per-class duration quantiles at levels `i / (count + 1)`.
///
/// Quantiles use the `(n + 1) p` plotting position with linear interpolation,
/// so `count == n` on distinct values reproduces the sorted sample.
pub fn build_duration_priors(
    ground_truth: &BTreeMap<u32, Vec<Interval>>,
    priors_per_class: usize,
) -> Result<DurationPriors> {
    if priors_per_class == 0 {
        return Err(Error::Config("priors_per_class must be >= 1".into()));
    }
    let mut classes = BTreeMap::new();
    for (&class, instances) in ground_truth {
        if instances.is_empty() {
            return Err(Error::MissingData(format!("class {class} has no instances")));
        }
        let mut durations: Vec<f64> = instances.iter().map(Interval::length).collect();
        durations.sort_by(f64::total_cmp);
        let mut levels: Vec<f64> = (1..=priors_per_class)
            .map(|i| quantile_sorted(&durations, i as f64 / (priors_per_class + 1) as f64))
            .collect();
        levels.dedup();
        classes.insert(class, levels);
    }
    DurationPriors::new(classes)
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = ((n + 1) as f64 * p).clamp(1.0, n as f64);
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo >= n {
        return sorted[n - 1];
    }
    sorted[lo - 1] + frac * (sorted[lo] - sorted[lo - 1])
}
