//! Simulated annotator producing human-like search histories.
//!
//! A search has two phases. The coarse phase jumps around the video (uniform
//! restarts mixed with directional jumps of decaying size) until a position
//! lands inside the target. The refinement phase then brackets and bisects
//! the start boundary, followed by the end boundary.

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::temporal::Interval;
use crate::world::video::{ActionInstance, FeatureTimeline};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HistorySource {
    Human,
    Simulated,
    Model,
}

/// Ordered positions visited while searching for one action, plus the final
/// interval the searcher settled on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "HistoryRecord", into = "HistoryRecord")]
pub struct SearchHistory {
    pub video_id: String,
    pub class_id: u32,
    pub steps: Vec<f64>,
    pub final_interval: Interval,
    pub source: HistorySource,
    /// False when the step budget ran out before the target was bracketed.
    pub successful: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HistoryRecord {
    video_id: String,
    class_id: u32,
    steps: Vec<f64>,
    #[serde(rename = "final")]
    final_interval: [f64; 2],
    source: HistorySource,
    #[serde(default = "default_true")]
    successful: bool,
    /// Session metadata written by the annotation UI; ignored here.
    #[serde(default, skip_serializing)]
    #[allow(dead_code)]
    session: Option<serde_json::Value>,
}

fn default_true() -> bool {
    true
}

impl TryFrom<HistoryRecord> for SearchHistory {
    type Error = Error;

    fn try_from(r: HistoryRecord) -> Result<Self> {
        if r.steps.is_empty() {
            return Err(Error::MissingData("search history has no steps".into()));
        }
        if r.steps.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::Config("search history steps must be finite and >= 0".into()));
        }
        Ok(SearchHistory {
            video_id: r.video_id,
            class_id: r.class_id,
            steps: r.steps,
            final_interval: Interval::new(r.final_interval[0], r.final_interval[1])?,
            source: r.source,
            successful: r.successful,
        })
    }
}

impl From<SearchHistory> for HistoryRecord {
    fn from(h: SearchHistory) -> Self {
        HistoryRecord {
            video_id: h.video_id,
            class_id: h.class_id,
            steps: h.steps,
            final_interval: [h.final_interval.start(), h.final_interval.end()],
            source: h.source,
            successful: h.successful,
            session: None,
        }
    }
}

impl SearchHistory {
    /// Check the steps and final interval against a video of `duration` seconds.
    pub fn validate(&self, duration: f64) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::MissingData("search history has no steps".into()));
        }
        if let Some(s) = self.steps.iter().find(|s| !(0.0..=duration).contains(*s)) {
            return Err(Error::Config(format!(
                "{}: step {s} outside [0, {duration}]",
                self.video_id
            )));
        }
        if self.final_interval.end() > duration + 1e-9 {
            return Err(Error::Config(format!("{}: final interval past video end", self.video_id)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnotatorConfig {
    pub max_steps: usize,
    /// Probability that a coarse jump is a uniform restart.
    pub restart_prob: f64,
    /// Probability that a directional jump heads towards the target.
    pub direction_accuracy: f64,
    /// First directional jump as a fraction of the video duration.
    pub initial_jump_fraction: f64,
    pub jump_decay: f64,
    /// Smallest directional jump in seconds.
    pub min_jump: f64,
    /// Relative jitter on each directional jump length.
    pub jump_jitter: f64,
    /// First probe distance (seconds) when bracketing a boundary.
    pub bracket_initial: f64,
    /// Bisection stops once the bracket is narrower than this (seconds).
    pub boundary_precision: f64,
    /// Std of the click position inside the bracket, as a fraction of its width.
    pub overshoot_noise: f64,
    /// Expected number of histories collected per video.
    pub histories_per_video: f64,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        AnnotatorConfig {
            max_steps: 200,
            restart_prob: 0.1,
            direction_accuracy: 0.85,
            initial_jump_fraction: 0.25,
            jump_decay: 0.6,
            min_jump: 4.0,
            jump_jitter: 0.25,
            bracket_initial: 8.0,
            boundary_precision: 0.25,
            overshoot_noise: 0.12,
            histories_per_video: 8.805,
        }
    }
}

impl AnnotatorConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_steps >= 1
            && (0.0..=1.0).contains(&self.restart_prob)
            && (0.0..=1.0).contains(&self.direction_accuracy)
            && self.initial_jump_fraction > 0.0
            && self.jump_decay > 0.0
            && self.jump_decay <= 1.0
            && self.min_jump > 0.0
            && (0.0..1.0).contains(&self.jump_jitter)
            && self.bracket_initial > 0.0
            && self.boundary_precision > 0.0
            && self.overshoot_noise >= 0.0
            && self.histories_per_video >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config("annotator: parameter out of range".into()))
        }
    }
}

struct Searcher<'a> {
    cfg: &'a AnnotatorConfig,
    target: Interval,
    duration: f64,
    steps: Vec<f64>,
    rng: seed::Rng,
    exhausted: bool,
}

impl Searcher<'_> {
    fn budget_left(&mut self) -> bool {
        let left = self.steps.len() < self.cfg.max_steps;
        self.exhausted |= !left;
        left
    }

    fn visit(&mut self, t: f64) -> bool {
        let t = t.clamp(0.0, self.duration);
        self.steps.push(t);
        self.inside(t)
    }

    fn inside(&self, t: f64) -> bool {
        // a target reaching the video end also contains t == duration
        t >= self.target.start()
            && (t < self.target.end() || (t == self.duration && self.target.end() >= self.duration))
    }

    /// Coarse phase; returns the first inside position.
    fn find(&mut self) -> Option<f64> {
        let full_jump = self.cfg.initial_jump_fraction * self.duration;
        let mut pos = self.rng.random_range(0.0..=self.duration);
        if self.visit(pos) {
            return Some(pos);
        }
        let mut jump = full_jump;
        while self.budget_left() {
            if self.rng.random::<f64>() < self.cfg.restart_prob {
                pos = self.rng.random_range(0.0..=self.duration);
                jump = full_jump;
            } else {
                let towards = if self.target.center() >= pos { 1.0 } else { -1.0 };
                let dir = if self.rng.random::<f64>() < self.cfg.direction_accuracy {
                    towards
                } else {
                    -towards
                };
                let j = self.cfg.jump_jitter;
                let len = jump * self.rng.random_range((1.0 - j)..=(1.0 + j));
                pos = (pos + dir * len).clamp(0.0, self.duration);
                jump = (jump * self.cfg.jump_decay).max(self.cfg.min_jump);
            }
            if self.visit(pos) {
                return Some(pos);
            }
        }
        None
    }

    /// Bracket and bisect one boundary. `inside` is a known inside position;
    /// `dir` is -1 to search the start, +1 to search the end.
    fn refine(&mut self, inside: f64, dir: f64) -> f64 {
        let edge = if dir < 0.0 { 0.0 } else { self.duration };
        let mut inner = inside;
        let mut reach = self.cfg.bracket_initial;
        // expand until a probe lands outside the target or the video edge is reached
        let mut outer = loop {
            if !self.budget_left() {
                return inner;
            }
            let probe = (inner + dir * reach).clamp(0.0, self.duration);
            if self.visit(probe) {
                inner = probe;
                if probe == edge {
                    return edge;
                }
                reach *= 2.0;
            } else {
                break probe;
            }
        };
        while (outer - inner).abs() > self.cfg.boundary_precision && self.budget_left() {
            let frac: f64 = 0.5 + self.cfg.overshoot_noise * self.rng.sample::<f64, _>(StandardNormal);
            let probe = inner + frac.clamp(0.1, 0.9) * (outer - inner);
            if self.visit(probe) {
                inner = probe;
            } else {
                outer = probe;
            }
        }
        0.5 * (inner + outer)
    }
}

/// Simulate one annotator searching `video` for `target`. Deterministic in `seed`.
pub fn simulate_annotator(
    video: &FeatureTimeline,
    target: &ActionInstance,
    behavior: &AnnotatorConfig,
    seed: u64,
) -> Result<SearchHistory> {
    behavior.validate()?;
    let duration = video.duration();
    if target.interval.end() > duration + 1e-9 {
        return Err(Error::Config(format!(
            "target {:?} does not belong to video {}",
            target.interval, video.video_id
        )));
    }
    let mut s = Searcher {
        cfg: behavior,
        target: target.interval,
        duration,
        steps: Vec::new(),
        rng: seed::rng_for(seed, &[0xA770]),
        exhausted: false,
    };

    let (final_interval, successful) = match s.find() {
        Some(hit) => {
            let start = s.refine(hit, -1.0);
            let last_inside = s
                .steps
                .iter()
                .copied()
                .filter(|&t| s.inside(t))
                .fold(hit, f64::max);
            let end = s.refine(last_inside, 1.0);
            match Interval::new(start, end) {
                Ok(iv) => (iv, !s.exhausted),
                Err(_) => (best_guess(hit, duration)?, false),
            }
        }
        None => {
            let last = *s.steps.last().expect("at least one step");
            (best_guess(last, duration)?, false)
        }
    };

    Ok(SearchHistory {
        video_id: video.video_id.clone(),
        class_id: target.class_id,
        steps: s.steps,
        final_interval,
        source: HistorySource::Simulated,
        successful,
    })
}

fn best_guess(pos: f64, duration: f64) -> Result<Interval> {
    let start = (pos - 1.0).max(0.0);
    let end = (pos + 1.0).min(duration);
    Interval::new(start, end)
}

/// Fraction of the video covered by the union of observation windows of
/// width `window` centred on each step.
pub fn observed_fraction(steps: &[f64], duration: f64, window: f64) -> f64 {
    if !(duration > 0.0) || !(window > 0.0) || steps.is_empty() {
        return 0.0;
    }
    let half = 0.5 * window;
    let mut spans: Vec<(f64, f64)> = steps
        .iter()
        .map(|&s| ((s - half).max(0.0), (s + half).min(duration)))
        .filter(|(a, b)| b > a)
        .collect();
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut covered = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (a, b) in spans {
        cur = match cur {
            Some((ca, cb)) if a <= cb => Some((ca, cb.max(b))),
            Some((ca, cb)) => {
                covered += cb - ca;
                Some((a, b))
            }
            None => Some((a, b)),
        };
    }
    if let Some((ca, cb)) = cur {
        covered += cb - ca;
    }
    (covered / duration).clamp(0.0, 1.0)
}

/// [`observed_fraction`] of a history over its video.
pub fn history_observed_fraction(history: &SearchHistory, video: &FeatureTimeline, window: f64) -> f64 {
    observed_fraction(&history.steps, video.duration(), window)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::temporal::tiou;
    use crate::world::video::{World, WorldConfig};
    use proptest::prelude::*;

    fn flat_video(duration: f64) -> FeatureTimeline {
        let n = (duration * 8.0) as usize;
        FeatureTimeline::new("v".into(), 8.0, 1, vec![0.0; n]).unwrap()
    }

    #[test]
    fn full_video_target_found_at_first_step() {
        let v = flat_video(100.0);
        let target = ActionInstance {
            class_id: 0,
            interval: Interval::new(0.0, 100.0).unwrap(),
        };
        let h = simulate_annotator(&v, &target, &AnnotatorConfig::default(), 1).unwrap();
        assert!(target.interval.contains(h.steps[0]) || h.steps[0] == 100.0);
        assert!(h.successful);
        assert!(tiou(&h.final_interval, &target.interval) > 0.99);
    }

    #[test]
    fn observed_fraction_examples() {
        assert_eq!(observed_fraction(&[5.0], 10.0, 20.0), 1.0);
        assert!((observed_fraction(&[10.0, 50.0], 100.0, 2.0) - 0.04).abs() < 1e-12);
        assert_eq!(
            observed_fraction(&[10.0, 50.0, 10.0, 50.0], 100.0, 2.0),
            observed_fraction(&[10.0, 50.0], 100.0, 2.0)
        );
        assert!((observed_fraction(&[10.0, 10.5], 100.0, 2.0) - 0.025).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_world_refines_accurately() {
        let world = World::new(WorldConfig {
            noise_std: 0.0,
            feature_dim: 2,
            ..WorldConfig::default()
        })
        .unwrap();
        let generous = AnnotatorConfig {
            max_steps: 10_000,
            ..AnnotatorConfig::default()
        };
        let mut good = 0;
        let runs = 500;
        for s in 0..runs {
            let (v, inst) = world.generate_video("v", s).unwrap();
            let target = &inst[(s as usize) % inst.len()];
            let h = simulate_annotator(&v, target, &generous, s + 1000).unwrap();
            if tiou(&h.final_interval, &target.interval) >= 0.9 {
                good += 1;
            }
        }
        assert!(good as f64 >= 0.99 * runs as f64, "{good}/{runs}");
    }

    #[test]
    fn json_schema() {
        let h = SearchHistory {
            video_id: "v1".into(),
            class_id: 2,
            steps: vec![1.0, 2.5],
            final_interval: Interval::new(2.0, 3.0).unwrap(),
            source: HistorySource::Human,
            successful: true,
        };
        let v = serde_json::to_value(&h).unwrap();
        assert_eq!(v["final"], serde_json::json!([2.0, 3.0]));
        assert_eq!(v["source"], "human");
        let parsed: SearchHistory = serde_json::from_str(
            r#"{"video_id":"v1","class_id":2,"steps":[1.0,2.5],"final":[2.0,3.0],"source":"human","session":{"elapsed_ms":1200}}"#,
        )
        .unwrap();
        assert_eq!(parsed, h);
        assert!(serde_json::from_str::<SearchHistory>(
            r#"{"video_id":"v1","class_id":2,"steps":[],"final":[2.0,3.0],"source":"human"}"#
        )
        .is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn observed_fraction_monotone(
            steps in prop::collection::vec(0.0f64..100.0, 1..20),
            extra in 0.0f64..100.0,
            w in 0.1f64..10.0,
            dw in 0.0f64..5.0,
        ) {
            let base = observed_fraction(&steps, 100.0, w);
            prop_assert!(observed_fraction(&steps, 100.0, w + dw) >= base - 1e-12);
            let mut more = steps.clone();
            more.push(extra);
            prop_assert!(observed_fraction(&more, 100.0, w) >= base - 1e-12);
        }
    }
}
