use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::net::params::NormStats;
use crate::temporal::tiou;
use crate::world::{ActionInstance, SearchHistory};

pub const DEFAULT_MIN_STEPS: usize = 8;
pub const DEFAULT_MIN_TIOU: f64 = 0.5;

/// Drop histories with fewer than `min_steps` steps, and histories whose final
/// interval overlaps no same-class ground-truth instance of their video with
/// tIoU of at least `min_tiou`. Order is preserved.
pub fn preprocess_histories(
    histories: &[SearchHistory],
    ground_truth: &HashMap<String, Vec<ActionInstance>>,
    min_steps: usize,
    min_tiou: f64,
) -> Vec<SearchHistory> {
    histories
        .iter()
        .filter(|h| h.steps.len() >= min_steps)
        .filter(|h| {
            let best = ground_truth
                .get(&h.video_id)
                .into_iter()
                .flatten()
                .filter(|i| i.class_id == h.class_id)
                .map(|i| tiou(&i.interval, &h.final_interval))
                .fold(0.0, f64::max);
            best >= min_tiou
        })
        .cloned()
        .collect()
}

/// Mean and standard deviation of every step, as a fraction of its video's
/// duration. The std is floored at [`NormStats::MIN_STD`].
pub fn compute_norm_stats<'a>(
    histories: impl IntoIterator<Item = (&'a SearchHistory, f64)>,
) -> Result<NormStats> {
    let mut fractions = Vec::new();
    for (h, duration) in histories {
        if !(duration > 0.0) {
            return Err(Error::MissingData(format!("{}: zero duration", h.video_id)));
        }
        fractions.extend(h.steps.iter().map(|s| s / duration));
    }
    if fractions.is_empty() {
        return Err(Error::MissingData("no steps to compute normalization from".into()));
    }
    let n = fractions.len() as f64;
    let mean = fractions.iter().sum::<f64>() / n;
    let var = fractions.iter().map(|f| (f - mean) * (f - mean)).sum::<f64>() / n;
    NormStats::new(mean, var.sqrt().max(NormStats::MIN_STD))
}

pub fn normalize_targets(history: &SearchHistory, video_duration: f64, stats: &NormStats) -> Result<Vec<f64>> {
    if !(video_duration > 0.0) {
        return Err(Error::MissingData(format!("{}: zero duration", history.video_id)));
    }
    Ok(history
        .steps
        .iter()
        .map(|&s| stats.normalize(s, video_duration))
        .collect())
}

pub fn denormalize_targets(z: &[f64], video_duration: f64, stats: &NormStats) -> Vec<f64> {
    z.iter().map(|&v| stats.denormalize(v, video_duration)).collect()
}
