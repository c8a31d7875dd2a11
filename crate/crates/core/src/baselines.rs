//! Uninformed proposal generators used as recall baselines.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::seed;
use crate::temporal::{DurationPriors, Interval};

fn check_duration(video_duration: f64) -> Result<()> {
    if !(video_duration > 0.0 && video_duration.is_finite()) {
        return Err(Error::InvalidInterval {
            start: 0.0,
            end: video_duration,
        });
    }
    Ok(())
}

/// UNIFORM: `s ~ U[0, d]`, `t ~ U[s, d]`, redrawing when `t == s`.
pub fn uniform_proposals(video_duration: f64, count: usize, seed: u64) -> Result<Vec<Interval>> {
    check_duration(video_duration)?;
    let mut rng = seed::rng_for(seed, &[0xB0]);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let s = rng.random::<f64>() * video_duration;
        let t = s + rng.random::<f64>() * (video_duration - s);
        if t > s {
            out.push(Interval::new(s, t)?);
        }
    }
    Ok(out)
}

/// UNIFORM-PRIOR: `s ~ U[0, d]`, `p` uniform over the class priors,
/// `t = min(s + p, d)`. Starts at the very end of the video are redrawn.
pub fn uniform_prior_proposals(
    video_duration: f64,
    count: usize,
    class_id: u32,
    priors: &DurationPriors,
    seed: u64,
) -> Result<Vec<Interval>> {
    let durations = priors.get(class_id)?;
    check_duration(video_duration)?;
    let mut rng = seed::rng_for(seed, &[0xB1, u64::from(class_id)]);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let s = rng.random::<f64>() * video_duration;
        let p = durations[rng.random_range(0..durations.len())];
        let t = (s + p).min(video_duration);
        if t > s {
            out.push(Interval::new(s, t)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn uniform_moments() {
        let d = 300.0;
        let n = 100_000;
        let v = uniform_proposals(d, n, 3).unwrap();
        assert_eq!(v.len(), n);
        assert!(v.iter().all(|i| 0.0 <= i.start() && i.start() < i.end() && i.end() <= d));
        let mean_s = v.iter().map(Interval::start).sum::<f64>() / n as f64;
        let mean_len = v.iter().map(Interval::length).sum::<f64>() / n as f64;
        assert!((mean_s / (d / 2.0) - 1.0).abs() < 0.01, "{mean_s}");
        assert!((mean_len / (d / 4.0) - 1.0).abs() < 0.02, "{mean_len}");
        assert_eq!(uniform_proposals(d, 10, 3).unwrap(), v[..10].to_vec());
    }

    fn priors(d: Vec<f64>) -> DurationPriors {
        DurationPriors::new(BTreeMap::from([(1, d)])).unwrap()
    }

    #[test]
    fn singleton_prior_fixes_length() {
        let v = uniform_prior_proposals(100.0, 1000, 1, &priors(vec![5.0]), 9).unwrap();
        for i in &v {
            assert!(i.end() <= 100.0);
            if i.end() < 100.0 {
                assert!((i.length() - 5.0).abs() < 1e-9);
            }
        }
        assert!(matches!(
            uniform_prior_proposals(100.0, 1, 2, &priors(vec![5.0]), 9),
            Err(Error::MissingPrior(2))
        ));
    }

    #[test]
    fn prior_draws_are_uniform() {
        let d = vec![2.0, 4.0, 6.0, 8.0, 10.0];
        let n = 100_000;
        // Long video so clipping almost never hides which prior was drawn.
        let v = uniform_prior_proposals(1e6, n, 1, &priors(d.clone()), 4).unwrap();
        let mut counts = [0usize; 5];
        for i in &v {
            let k = d.iter().position(|p| (i.length() - p).abs() < 1e-6);
            if let Some(k) = k {
                counts[k] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        assert!(total >= n - 5);
        // Chi-square with 4 degrees of freedom, 1% critical value 13.28.
        let e = total as f64 / 5.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        assert!(chi2 < 13.28, "{counts:?} chi2 {chi2}");
    }
}
