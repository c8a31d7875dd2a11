//! Central finite differences against the analytic BPTT gradients.

use action_search::net::{self, Feed, SearchModelParams, StepMasks};
use action_search::seed;
use action_search::train::loss::sequence_loss;
use rand::Rng;

pub struct Case {
    params: SearchModelParams,
    features: Vec<Vec<f64>>,
    targets: Vec<f64>,
    masks: Option<Vec<StepMasks>>,
    initial: f64,
}

pub fn case(s: u64, layers: usize, hidden: usize, steps: usize, dropout: bool) -> Case {
    let mut rng = seed::rng(s);
    let input_dim = rng.random_range(1..4);
    let mut params = net::init_params(0, layers, hidden, input_dim, s).unwrap();
    // move biases away from their init so every term is exercised
    params.weights.iter_mut().for_each(|w| *w += rng.random_range(-0.3..0.3));
    let features = (0..steps)
        .map(|_| (0..input_dim).map(|_| rng.random_range(-1.5..1.5)).collect())
        .collect();
    let targets = (0..steps).map(|_| rng.random_range(-2.0..2.0)).collect();
    let masks = dropout.then(|| net::sample_masks(&params, steps, 0.7, &mut rng));
    Case {
        params,
        features,
        targets,
        masks,
        initial: rng.random_range(-1.0..1.0),
    }
}

fn loss(c: &Case, p: &SearchModelParams, free: bool) -> f64 {
    let feed = if free { Feed::FreeRunning } else { Feed::TeacherForced(&c.targets) };
    let u = net::unroll(p, &c.features, c.initial, feed, c.masks.as_deref()).unwrap();
    sequence_loss(&c.targets, &u.outputs, 1.0).unwrap().0
}

/// Worst `|analytic - fd| / max(1, |fd|)` over every parameter.
pub fn worst_error(c: &Case, free: bool) -> f64 {
    let feed = if free { Feed::FreeRunning } else { Feed::TeacherForced(&c.targets) };
    let u = net::unroll(&c.params, &c.features, c.initial, feed, c.masks.as_deref()).unwrap();
    let (_, lg) = sequence_loss(&c.targets, &u.outputs, 1.0).unwrap();
    let analytic: Vec<f64> = net::backward(&c.params, &u.cache, &lg).unwrap().iter().collect();

    let h = 1e-6;
    let mut worst = 0.0f64;
    let n = c.params.weights.len();
    for k in 0..n {
        let mut up = c.params.clone();
        *up.weights.iter_mut().nth(k).unwrap() += h;
        let mut dn = c.params.clone();
        *dn.weights.iter_mut().nth(k).unwrap() -= h;
        let fd = (loss(c, &up, free) - loss(c, &dn, free)) / (2.0 * h);
        worst = worst.max((analytic[k] - fd).abs() / fd.abs().max(1.0));
    }
    worst
}
