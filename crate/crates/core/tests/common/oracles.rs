//! Slow reference implementations checked against the library.

use action_search::eval::GroundTruthIndex;
use action_search::inference::Detection;
use action_search::seed;
use action_search::temporal::{tiou, DurationPriors, Interval, Proposal};
use action_search::world::ActionInstance;
use rand::Rng;

pub fn det(v: &str, c: u32, s: f64, e: f64, score: f64) -> Detection {
    Detection {
        video_id: v.into(),
        class_id: c,
        interval: Interval::new(s, e).unwrap(),
        score,
    }
}

/// At most 5 instances and 8 detections over two videos and two classes,
/// with coarse scores so ties are common.
pub fn random_ap_case(s: u64) -> (Vec<Detection>, GroundTruthIndex) {
    let mut rng = seed::rng(s);
    let videos = ["a", "b"];
    let mut g = GroundTruthIndex::new();
    for _ in 0..rng.random_range(1..=5) {
        let v = videos[rng.random_range(0..2)];
        let start = rng.random_range(0..20) as f64;
        let len = rng.random_range(1..8) as f64;
        g.entry(v.to_string()).or_default().push(ActionInstance {
            class_id: rng.random_range(0..2),
            interval: Interval::new(start, start + len).unwrap(),
        });
    }
    let dets = (0..rng.random_range(0..=8))
        .map(|_| {
            let start = rng.random_range(0..20) as f64;
            let len = rng.random_range(1..8) as f64;
            let v = videos[rng.random_range(0..2)];
            det(v, rng.random_range(0..2), start, start + len, rng.random_range(0..5) as f64 / 4.0)
        })
        .collect();
    (dets, g)
}

/// AP from the PR curve enumerated point by point: at every cut-off rank the
/// matching is redone from scratch, then each recall step is weighted by the
/// best precision reached at that recall or beyond.
pub fn brute_force_ap(dets: &[Detection], g: &GroundTruthIndex, class_id: u32, alpha: f64) -> f64 {
    let mut ds: Vec<Detection> = dets.iter().filter(|d| d.class_id == class_id).cloned().collect();
    ds.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap()
            .then(a.video_id.cmp(&b.video_id))
            .then(a.interval.start().partial_cmp(&b.interval.start()).unwrap())
            .then(a.interval.end().partial_cmp(&b.interval.end()).unwrap())
    });
    let mut instances: Vec<(String, Interval)> = Vec::new();
    for (v, is) in g {
        for i in is {
            if i.class_id == class_id {
                instances.push((v.clone(), i.interval));
            }
        }
    }
    let n = instances.len();
    if n == 0 {
        return 0.0;
    }
    let mut curve = Vec::new();
    for k in 1..=ds.len() {
        let mut matched = vec![false; n];
        let mut tp = 0;
        for d in &ds[..k] {
            let mut best: Option<(usize, f64)> = None;
            for (j, (v, gi)) in instances.iter().enumerate() {
                if matched[j] || *v != d.video_id {
                    continue;
                }
                let o = tiou(&d.interval, gi);
                if o >= alpha && best.map_or(true, |(_, bo)| o > bo) {
                    best = Some((j, o));
                }
            }
            if let Some((j, _)) = best {
                matched[j] = true;
                tp += 1;
            }
        }
        curve.push((tp as f64 / n as f64, tp as f64 / k as f64));
    }
    let mut ap = 0.0;
    let mut prev = 0.0;
    for &(r, _) in &curve {
        if r > prev {
            let p = curve
                .iter()
                .filter(|(rr, _)| *rr >= r)
                .map(|(_, p)| *p)
                .fold(0.0, f64::max);
            ap += (r - prev) * p;
            prev = r;
        }
    }
    ap
}

/// Every (position, duration) pair, clipped, filtered and deduplicated.
pub fn cross_product_proposals(
    positions: &[f64],
    class_id: u32,
    priors: &DurationPriors,
    duration: f64,
    min_length: f64,
) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for &p in positions {
        for &d in priors.get(class_id).unwrap() {
            let e = if p + d > duration { duration } else { p + d };
            if e - p >= min_length && !out.contains(&(p, e)) {
                out.push((p, e));
            }
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out
}

pub fn random_proposals(s: u64) -> Vec<Proposal> {
    let mut rng = seed::rng(s);
    (0..rng.random_range(0..30))
        .map(|_| {
            let start = rng.random_range(0.0..90.0);
            let len = rng.random_range(0.5..20.0);
            Proposal {
                interval: Interval::new(start, start + len).unwrap(),
                class_id: rng.random_range(0..3),
                anchor: start,
                score: (rng.random_range(0..20) as f64) / 19.0,
            }
        })
        .collect()
}

/// NMS postconditions: output is a subset, sorted by score, with every
/// same-class pair at or under the threshold, and running again changes
/// nothing.
pub fn nms_postconditions(input: &[Proposal], output: &[Proposal], again: &[Proposal], threshold: f64) -> Result<(), String> {
    if again != output {
        return Err("not idempotent".into());
    }
    if output.iter().any(|p| !input.contains(p)) {
        return Err("output is not a subset".into());
    }
    if output.windows(2).any(|w| w[0].score < w[1].score) {
        return Err("output not sorted by score".into());
    }
    for (i, a) in output.iter().enumerate() {
        for b in &output[i + 1..] {
            if a.class_id == b.class_id && tiou(&a.interval, &b.interval) > threshold {
                return Err(format!("pair above threshold: {a:?} {b:?}"));
            }
        }
    }
    Ok(())
}
