use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{self, Feed, SearchModelParams, Weights};
use crate::seed;
use crate::train::adam::{AdamConfig, AdamState};
use crate::train::loss::sequence_loss;
use crate::train::preprocess::{compute_norm_stats, normalize_targets};
use crate::world::{FeatureTimeline, SearchHistory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Huber threshold in normalized target space.
    pub delta: f64,
    pub learning_rate: f64,
    pub decay_rate: f64,
    /// Optimizer steps per decay of `decay_rate`.
    pub decay_every: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub unroll_length: usize,
    pub epochs: usize,
    /// Extra epochs fed with the model's own outputs after teacher forcing.
    pub free_running_epochs: usize,
    pub batch_size: usize,
    pub keep_probability: f64,
    /// Global gradient-norm cap per batch; 0 disables.
    pub clip_norm: f64,
    pub layers: usize,
    pub hidden_size: usize,
    pub min_steps: usize,
    pub min_tiou: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            delta: 1.0,
            learning_rate: 1e-3,
            decay_rate: 0.96,
            decay_every: 500.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            unroll_length: 16,
            epochs: 30,
            free_running_epochs: 0,
            batch_size: 32,
            keep_probability: 0.5,
            clip_norm: 5.0,
            layers: 2,
            hidden_size: 128,
            min_steps: 8,
            min_tiou: 0.5,
            seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("train: {m}")));
        if !(self.delta > 0.0) {
            return bad("delta must be > 0");
        }
        if !(self.keep_probability > 0.0 && self.keep_probability <= 1.0) {
            return bad("keep_probability must be in (0, 1]");
        }
        if !(self.decay_rate > 0.0 && self.decay_rate <= 1.0) {
            return bad("decay_rate must be in (0, 1]");
        }
        if !(self.decay_every > 0.0 && self.learning_rate > 0.0) {
            return bad("learning_rate and decay_every must be > 0");
        }
        if self.unroll_length == 0 || self.batch_size == 0 || self.layers == 0 || self.hidden_size == 0 {
            return bad("unroll_length, batch_size, layers and hidden_size must be >= 1");
        }
        if !(0.0..=1.0).contains(&self.min_tiou) || self.min_steps == 0 {
            return bad("min_steps must be >= 1 and min_tiou in [0, 1]");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
            decay_rate: self.decay_rate,
            decay_every: self.decay_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn write_csv(&self, mut out: impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "epoch,loss,lr")?;
        for r in &self.epochs {
            writeln!(out, "{},{:.10e},{:.10e}", r.epoch, r.loss, r.lr)?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("ascii")
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|r| r.loss)
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub params: SearchModelParams,
    pub log: TrainLog,
}

/// One teacher-forcing window: inputs observed at consecutive true positions
/// and the normalized position that followed each.
#[derive(Debug, Clone)]
struct Window {
    features: Vec<Vec<f64>>,
    initial: f64,
    targets: Vec<f64>,
}

/// Pair indices `[start, start + len)` of overlapping windows over `pairs`
/// transitions, stride `len / 2`, with a final window flush to the end.
fn window_starts(pairs: usize, len: usize) -> Vec<usize> {
    if pairs <= len {
        return vec![0];
    }
    let stride = (len / 2).max(1);
    let mut starts: Vec<usize> = (0..).map(|k| k * stride).take_while(|s| s + len <= pairs).collect();
    if starts.last().map_or(true, |&s| s + len < pairs) {
        starts.push(pairs - len);
    }
    starts
}

fn build_windows(
    examples: &[(&SearchHistory, &FeatureTimeline)],
    params: &SearchModelParams,
    unroll: usize,
) -> Result<Vec<Window>> {
    let mut out = Vec::new();
    for (h, video) in examples {
        if h.steps.len() < 2 {
            continue;
        }
        let z = normalize_targets(h, video.duration(), &params.norm)?;
        let observed: Vec<Vec<f64>> = h.steps.iter().map(|&s| video.observe(s)).collect();
        let pairs = h.steps.len() - 1;
        for start in window_starts(pairs, unroll) {
            let end = (start + unroll).min(pairs);
            out.push(Window {
                features: observed[start..end].to_vec(),
                initial: z[start],
                targets: z[start + 1..=end].to_vec(),
            });
        }
    }
    Ok(out)
}

fn canonical_order(a: &SearchHistory, b: &SearchHistory) -> std::cmp::Ordering {
    a.video_id
        .cmp(&b.video_id)
        .then(a.steps.len().cmp(&b.steps.len()))
        .then_with(|| {
            a.steps
                .iter()
                .zip(&b.steps)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .then(a.final_interval.canonical_cmp(&b.final_interval))
}

/// Train the search model of one class on its (already filtered) histories.
///
/// Histories of other classes are ignored. Training is a pure function of the
/// set of examples and the config: input order does not matter.
pub fn fit(
    class_id: u32,
    examples: &[(&SearchHistory, &FeatureTimeline)],
    cfg: &TrainConfig,
) -> Result<FitOutcome> {
    cfg.validate()?;
    let mut mine: Vec<(&SearchHistory, &FeatureTimeline)> = examples
        .iter()
        .copied()
        .filter(|(h, _)| h.class_id == class_id)
        .collect();
    if mine.is_empty() {
        return Err(Error::MissingData(format!("no training histories for class {class_id}")));
    }
    mine.sort_by(|a, b| canonical_order(a.0, b.0));
    let input_dim = mine[0].1.feature_dim();
    if mine.iter().any(|(_, v)| v.feature_dim() != input_dim) {
        return Err(Error::Shape("videos disagree on feature_dim".into()));
    }

    let mut params = net::init_params(class_id, cfg.layers, cfg.hidden_size, input_dim, cfg.seed)?;
    params.norm = compute_norm_stats(mine.iter().map(|(h, v)| (*h, v.duration())))?;
    let windows = build_windows(&mine, &params, cfg.unroll_length)?;
    if windows.is_empty() {
        return Err(Error::MissingData(format!(
            "class {class_id}: histories need at least two steps"
        )));
    }

    let adam = cfg.adam();
    let mut opt = AdamState::new(params.weights.len());
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let total_epochs = cfg.epochs + cfg.free_running_epochs;
    for epoch in 0..total_epochs {
        let free = epoch >= cfg.epochs;
        let mut rng = seed::rng_for(cfg.seed, &[0xE90C, u64::from(class_id), epoch as u64]);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Result<(f64, Weights)>> = batch
                .par_iter()
                .map(|&wi| {
                    let w = &windows[wi];
                    let mut mrng = seed::rng_for(
                        cfg.seed,
                        &[0xD50F, u64::from(class_id), epoch as u64, wi as u64],
                    );
                    let masks = (cfg.keep_probability < 1.0).then(|| {
                        net::sample_masks(&params, w.features.len(), cfg.keep_probability, &mut mrng)
                    });
                    let feed = if free { Feed::FreeRunning } else { Feed::TeacherForced(&w.targets) };
                    let u = net::unroll(&params, &w.features, w.initial, feed, masks.as_deref())?;
                    let (loss, lg) = sequence_loss(&w.targets, &u.outputs, cfg.delta)?;
                    Ok((loss, net::backward(&params, &u.cache, &lg)?))
                })
                .collect();
            let mut grad = params.weights.zeros_like();
            for r in results {
                let (loss, g) = r?;
                epoch_loss += loss;
                grad.add_assign(&g);
            }
            grad.scale(1.0 / batch.len() as f64);
            if cfg.clip_norm > 0.0 {
                let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                if norm > cfg.clip_norm {
                    grad.scale(cfg.clip_norm / norm);
                }
            }
            if !grad.is_finite() {
                return Err(Error::Numeric(format!(
                    "class {class_id}: non-finite gradient in epoch {epoch}"
                )));
            }
            opt.step(params.weights.iter_mut(), grad.iter(), &adam);
        }
        let loss = epoch_loss / windows.len() as f64;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("class {class_id}: loss is {loss} in epoch {epoch}")));
        }
        log.epochs.push(EpochRecord {
            epoch,
            loss,
            lr: adam.learning_rate_at(opt.step),
        });
    }
    Ok(FitOutcome { params, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::temporal::Interval;
    use crate::world::HistorySource;

    #[test]
    fn window_layout() {
        assert_eq!(window_starts(5, 16), vec![0]);
        assert_eq!(window_starts(16, 16), vec![0]);
        assert_eq!(window_starts(32, 16), vec![0, 8, 16]);
        assert_eq!(window_starts(30, 16), vec![0, 8, 14]);
    }

    fn video(dim: usize) -> FeatureTimeline {
        let n = 800;
        let feats = (0..n * dim).map(|k| ((k / dim) as f32 / n as f32).sin()).collect();
        FeatureTimeline::new("v0".into(), 8.0, dim, feats).unwrap()
    }

    fn history(steps: Vec<f64>) -> SearchHistory {
        SearchHistory {
            video_id: "v0".into(),
            class_id: 0,
            steps,
            final_interval: Interval::new(10.0, 20.0).unwrap(),
            source: HistorySource::Simulated,
            successful: true,
        }
    }

    fn small() -> TrainConfig {
        TrainConfig {
            hidden_size: 8,
            learning_rate: 1e-2,
            keep_probability: 1.0,
            epochs: 200,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn memorizes_a_constant_history() {
        let v = video(3);
        let h = history(vec![30.0; 20]);
        let out = fit(0, &[(&h, &v)], &small()).unwrap();
        assert!(out.log.final_loss().unwrap() < 1e-3, "{:?}", out.log.final_loss());
        assert!(out.log.epochs.iter().all(|r| r.loss.is_finite()));
    }

    #[test]
    fn no_data_is_an_error() {
        let v = video(3);
        let h = history(vec![30.0; 20]);
        assert!(matches!(fit(1, &[(&h, &v)], &small()), Err(Error::MissingData(_))));
    }

    #[test]
    fn order_invariant_and_deterministic() {
        let v = video(2);
        let a = history((0..20).map(|k| 5.0 + k as f64).collect());
        let b = history((0..12).map(|k| 60.0 - 2.0 * k as f64).collect());
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 100,
            keep_probability: 0.5,
            ..small()
        };
        let x = fit(0, &[(&a, &v), (&b, &v)], &cfg).unwrap();
        let y = fit(0, &[(&b, &v), (&a, &v)], &cfg).unwrap();
        assert_eq!(x.params, y.params);
        assert_eq!(x.log, y.log);
    }

    #[test]
    fn csv_log() {
        let log = TrainLog {
            epochs: vec![EpochRecord { epoch: 0, loss: 0.5, lr: 1e-3 }],
        };
        assert_eq!(log.to_csv(), "epoch,loss,lr\n0,5.0000000000e-1,1.0000000000e-3\n");
    }
}
