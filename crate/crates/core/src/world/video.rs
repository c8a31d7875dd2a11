use std::sync::OnceLock;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::temporal::Interval;

/// Parameters of the synthetic world. Class signatures and class duration
/// means are a property of the world (fixed by `signature_seed`), so videos
/// drawn with different seeds share them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub num_classes: u32,
    pub feature_dim: usize,
    pub fps: f64,
    /// Video duration range in seconds.
    pub duration_min: f64,
    pub duration_max: f64,
    /// Instances per video are `1 + Poisson(mean - 1)`.
    pub instances_per_video_mean: f64,
    pub classes_per_video: usize,
    /// Per-class mean action duration is drawn from this range.
    pub action_duration_min: f64,
    pub action_duration_max: f64,
    /// Relative spread of instance durations around the class mean.
    pub duration_jitter: f64,
    pub noise_std: f64,
    /// Amplitude of the signed start-to-end ramp inside an instance.
    pub envelope_strength: f64,
    /// Amplitude of the directional context cue in the background.
    pub context_strength: f64,
    /// Decay length (seconds) of the context cue away from an instance.
    pub context_scale: f64,
    pub signature_seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        WorldConfig {
            num_classes: 6,
            feature_dim: 32,
            fps: 8.0,
            duration_min: 480.0,
            duration_max: 720.0,
            instances_per_video_mean: 2.0,
            classes_per_video: 1,
            action_duration_min: 15.0,
            action_duration_max: 45.0,
            duration_jitter: 0.3,
            noise_std: 0.3,
            envelope_strength: 0.6,
            context_strength: 0.6,
            context_scale: 90.0,
            signature_seed: 0x5EED,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("world: {m}")));
        if self.num_classes == 0 {
            return bad("num_classes must be >= 1");
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be >= 1");
        }
        if !(self.fps > 0.0) {
            return bad("fps must be > 0");
        }
        if !(self.duration_min > 0.0 && self.duration_min <= self.duration_max) {
            return bad("need 0 < duration_min <= duration_max");
        }
        if !(self.instances_per_video_mean >= 1.0) {
            return bad("instances_per_video_mean must be >= 1");
        }
        if self.classes_per_video == 0 || self.classes_per_video > self.num_classes as usize {
            return bad("classes_per_video must be in 1..=num_classes");
        }
        if !(self.action_duration_min > 0.0 && self.action_duration_min <= self.action_duration_max)
        {
            return bad("need 0 < action_duration_min <= action_duration_max");
        }
        if !(0.0..1.0).contains(&self.duration_jitter) {
            return bad("duration_jitter must be in [0,1)");
        }
        if !(self.noise_std >= 0.0 && self.context_scale > 0.0) {
            return bad("noise_std must be >= 0 and context_scale > 0");
        }
        Ok(())
    }
}

/// Per-frame feature vectors of one video, row-major `num_frames x feature_dim`.
#[derive(Debug)]
pub struct FeatureTimeline {
    pub video_id: String,
    fps: f64,
    num_frames: usize,
    feature_dim: usize,
    features: Vec<f32>,
    prefix: OnceLock<Vec<f64>>,
}

impl Clone for FeatureTimeline {
    fn clone(&self) -> Self {
        FeatureTimeline::new(
            self.video_id.clone(),
            self.fps,
            self.feature_dim,
            self.features.clone(),
        )
        .expect("already validated")
    }
}

impl PartialEq for FeatureTimeline {
    fn eq(&self, other: &Self) -> bool {
        self.video_id == other.video_id
            && self.fps.to_bits() == other.fps.to_bits()
            && self.feature_dim == other.feature_dim
            && self.features == other.features
    }
}

impl FeatureTimeline {
    pub fn new(video_id: String, fps: f64, feature_dim: usize, features: Vec<f32>) -> Result<Self> {
        if !(fps > 0.0 && fps.is_finite()) || feature_dim == 0 {
            return Err(Error::Shape(format!(
                "timeline needs fps > 0 and feature_dim >= 1 (fps {fps}, dim {feature_dim})"
            )));
        }
        if features.is_empty() || features.len() % feature_dim != 0 {
            return Err(Error::Shape(format!(
                "{} feature values do not form rows of {feature_dim}",
                features.len()
            )));
        }
        Ok(FeatureTimeline {
            video_id,
            fps,
            num_frames: features.len() / feature_dim,
            feature_dim,
            features,
            prefix: OnceLock::new(),
        })
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn num_frames(&self) -> usize {
        self.num_frames
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn duration(&self) -> f64 {
        self.num_frames as f64 / self.fps
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn frame(&self, k: usize) -> &[f32] {
        &self.features[k * self.feature_dim..(k + 1) * self.feature_dim]
    }

    /// Length in seconds of the default observation volume (16 frames).
    pub fn observation_window(&self) -> f64 {
        16.0 / self.fps
    }

    fn prefix(&self) -> &[f64] {
        self.prefix.get_or_init(|| {
            let d = self.feature_dim;
            let mut acc = vec![0.0f64; (self.num_frames + 1) * d];
            for k in 0..self.num_frames {
                for j in 0..d {
                    acc[(k + 1) * d + j] = acc[k * d + j] + f64::from(self.features[k * d + j]);
                }
            }
            acc
        })
    }

    /// Frames whose span intersects `[start, end)`, clipped to the video.
    pub fn frame_range(&self, start: f64, end: f64) -> (usize, usize) {
        let lo = (start * self.fps).floor().max(0.0) as usize;
        let hi = ((end * self.fps).ceil().max(0.0) as usize).min(self.num_frames);
        (lo.min(self.num_frames), hi)
    }

    /// Mean feature vector over the frames covering `[start, end)`.
    pub fn mean_feature(&self, start: f64, end: f64) -> Result<Vec<f64>> {
        let (lo, hi) = self.frame_range(start, end);
        if !(end > start) || lo >= hi {
            return Err(Error::InvalidInterval { start, end });
        }
        let d = self.feature_dim;
        let prefix = self.prefix();
        let n = (hi - lo) as f64;
        Ok((0..d)
            .map(|j| (prefix[hi * d + j] - prefix[lo * d + j]) / n)
            .collect())
    }

    pub fn interval_mean(&self, interval: &Interval) -> Result<Vec<f64>> {
        self.mean_feature(interval.start(), interval.end())
    }

    /// Mean feature of the observation volume centred on `position`.
    pub fn observe(&self, position: f64) -> Vec<f64> {
        let half = 0.5 * self.observation_window();
        let p = position.clamp(0.0, self.duration());
        let (lo, hi) = self.frame_range(p - half, p + half);
        let (lo, hi) = if lo < hi {
            (lo, hi)
        } else {
            (self.num_frames - 1, self.num_frames)
        };
        let d = self.feature_dim;
        let prefix = self.prefix();
        let n = (hi - lo) as f64;
        (0..d)
            .map(|j| (prefix[hi * d + j] - prefix[lo * d + j]) / n)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionInstance {
    pub class_id: u32,
    #[serde(flatten)]
    pub interval: Interval,
}

/// Fixed per-world vectors: a background mean plus, for every class, a
/// signature, an envelope direction and a context direction.
#[derive(Debug, Clone)]
pub struct Signatures {
    pub background: Vec<f64>,
    pub class_means: Vec<Vec<f64>>,
    pub envelope_dirs: Vec<Vec<f64>>,
    pub context_dirs: Vec<Vec<f64>>,
    pub class_durations: Vec<f64>,
}

fn unit_vectors(count: usize, dim: usize, rng: &mut seed::Rng) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(count);
    while out.len() < count {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        // Gram-Schmidt while an orthogonal complement exists
        if out.len() < dim {
            for u in &out {
                let dot: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            out.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    out
}

impl Signatures {
    pub fn new(config: &WorldConfig) -> Self {
        let c = config.num_classes as usize;
        let mut rng = seed::rng_for(config.signature_seed, &[0x5167]);
        let mut vs = unit_vectors(1 + 3 * c, config.feature_dim, &mut rng).into_iter();
        let background = vs.next().unwrap();
        let class_means: Vec<_> = vs.by_ref().take(c).collect();
        let envelope_dirs: Vec<_> = vs.by_ref().take(c).collect();
        let context_dirs: Vec<_> = vs.take(c).collect();
        let class_durations = (0..c)
            .map(|_| rng.random_range(config.action_duration_min..=config.action_duration_max))
            .collect();
        Signatures {
            background,
            class_means,
            envelope_dirs,
            context_dirs,
            class_durations,
        }
    }
}

/// A world instance: config plus its derived signatures.
#[derive(Debug, Clone)]
pub struct World {
    pub config: WorldConfig,
    pub signatures: Signatures,
}

impl World {
    pub fn new(config: WorldConfig) -> Result<Self> {
        config.validate()?;
        let signatures = Signatures::new(&config);
        Ok(World { config, signatures })
    }

    /// Draw one video and its planted instances. Deterministic in `seed`.
    pub fn generate_video(
        &self,
        video_id: &str,
        seed: u64,
    ) -> Result<(FeatureTimeline, Vec<ActionInstance>)> {
        let cfg = &self.config;
        let mut rng = seed::rng_for(seed, &[0x7669]);

        let raw_duration = rng.random_range(cfg.duration_min..=cfg.duration_max);
        let num_frames = ((raw_duration * cfg.fps).round() as usize).max(1);
        let duration = num_frames as f64 / cfg.fps;

        let extra = if cfg.instances_per_video_mean > 1.0 {
            Poisson::new(cfg.instances_per_video_mean - 1.0)
                .map_err(|e| Error::Config(e.to_string()))?
                .sample(&mut rng) as usize
        } else {
            0
        };
        let count = 1 + extra;

        let classes: Vec<u32> =
            index::sample(&mut rng, cfg.num_classes as usize, cfg.classes_per_video)
                .into_iter()
                .map(|c| c as u32)
                .collect();
        let mut planned = Vec::with_capacity(count);
        for _ in 0..count {
            let class_id = classes[rng.random_range(0..classes.len())];
            let mean = self.signatures.class_durations[class_id as usize];
            let j = cfg.duration_jitter;
            let len = mean * rng.random_range((1.0 - j)..=(1.0 + j));
            planned.push((class_id, len));
        }

        let total: f64 = planned.iter().map(|(_, l)| l).sum();
        let free = duration - total;
        if free < 0.0 {
            return Err(Error::InfeasiblePacking {
                instances: count,
                total,
                duration,
            });
        }
        let mut cuts: Vec<f64> = (0..count).map(|_| rng.random_range(0.0..=free)).collect();
        cuts.sort_by(f64::total_cmp);
        let mut instances = Vec::with_capacity(count);
        let mut used = 0.0;
        for ((class_id, len), cut) in planned.into_iter().zip(cuts) {
            let start = cut + used;
            let end = (start + len).min(duration);
            used += len;
            instances.push(ActionInstance {
                class_id,
                interval: Interval::new(start, end)?,
            });
        }

        let features = self.render(&instances, num_frames, &mut rng)?;
        let timeline = FeatureTimeline::new(video_id.to_string(), cfg.fps, cfg.feature_dim, features)?;
        Ok((timeline, instances))
    }

    fn render(
        &self,
        instances: &[ActionInstance],
        num_frames: usize,
        rng: &mut seed::Rng,
    ) -> Result<Vec<f32>> {
        let cfg = &self.config;
        let sig = &self.signatures;
        let d = cfg.feature_dim;
        let noise = (cfg.noise_std > 0.0)
            .then(|| Normal::new(0.0, cfg.noise_std).map_err(|e| Error::Config(e.to_string())))
            .transpose()?;
        let mut out = Vec::with_capacity(num_frames * d);
        let mut row = vec![0.0f64; d];
        for k in 0..num_frames {
            let t = (k as f64 + 0.5) / cfg.fps;
            if let Some(inst) = instances.iter().find(|i| i.interval.contains(t)) {
                let c = inst.class_id as usize;
                let u = (t - inst.interval.start()) / inst.interval.length();
                let ramp = cfg.envelope_strength * (2.0 * u - 1.0);
                for j in 0..d {
                    row[j] = sig.class_means[c][j] + ramp * sig.envelope_dirs[c][j];
                }
            } else {
                row.copy_from_slice(&sig.background);
                // signed cue towards the nearest instance
                let nearest = instances
                    .iter()
                    .map(|i| {
                        let (dist, dir) = if t < i.interval.start() {
                            (i.interval.start() - t, 1.0)
                        } else {
                            (t - i.interval.end(), -1.0)
                        };
                        (dist.max(0.0), dir, i.class_id as usize)
                    })
                    .min_by(|a, b| a.0.total_cmp(&b.0));
                if let Some((dist, dir, c)) = nearest {
                    let amp = cfg.context_strength * (-dist / cfg.context_scale).exp() * dir;
                    for j in 0..d {
                        row[j] += amp * sig.context_dirs[c][j];
                    }
                }
            }
            for &v in row.iter() {
                let n = noise.as_ref().map_or(0.0, |n| n.sample(rng));
                out.push((v + n) as f32);
            }
        }
        Ok(out)
    }
}

/// Convenience wrapper building the world from `config` on every call.
pub fn generate_video(
    config: &WorldConfig,
    video_id: &str,
    seed: u64,
) -> Result<(FeatureTimeline, Vec<ActionInstance>)> {
    World::new(config.clone())?.generate_video(video_id, seed)
}
