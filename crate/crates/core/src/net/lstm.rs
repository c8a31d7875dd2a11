//! Stacked recurrent cell: forward step, cached unroll and backpropagation
//! through time.
//!
//! Per layer, with `x` the (dropout-masked) layer input and `[x; h]` their
//! concatenation:
//!
//! ```text
//! z = W [x; h_prev] + b          (blocks: input, forget, output, candidate)
//! c = σ(z_f) ⊙ c_prev + σ(z_i) ⊙ tanh(z_g)
//! h = σ(z_o) ⊙ tanh(c)
//! ```
//!
//! The head maps the (masked) top hidden state to one normalized position.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::net::params::{SearchModelParams, Weights};
use crate::seed;

/// Hidden and cell vectors of every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentState {
    pub hidden: Vec<Vec<f64>>,
    pub cell: Vec<Vec<f64>>,
}

impl RecurrentState {
    pub fn zeros(params: &SearchModelParams) -> Self {
        RecurrentState {
            hidden: vec![vec![0.0; params.hidden_size]; params.layers],
            cell: vec![vec![0.0; params.hidden_size]; params.layers],
        }
    }

    fn check(&self, params: &SearchModelParams) -> Result<()> {
        let ok = self.hidden.len() == params.layers
            && self.cell.len() == params.layers
            && self
                .hidden
                .iter()
                .chain(&self.cell)
                .all(|v| v.len() == params.hidden_size);
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("recurrent state does not match the network".into()))
        }
    }
}

/// Inverted-dropout multipliers for the non-recurrent connections of one step:
/// the input of every layer and the head input.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMasks {
    pub inputs: Vec<Vec<f64>>,
    pub head: Vec<f64>,
}

impl StepMasks {
    /// Each entry is `1/keep` with probability `keep`, else 0.
    pub fn sample(params: &SearchModelParams, keep: f64, rng: &mut seed::Rng) -> Self {
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    if keep >= 1.0 || rng.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
                .collect()
        };
        let inputs = (0..params.layers)
            .map(|l| draw(params.layer_input_size(l)))
            .collect();
        let head = draw(params.hidden_size);
        StepMasks { inputs, head }
    }

    fn check(&self, params: &SearchModelParams) -> Result<()> {
        let ok = self.inputs.len() == params.layers
            && self
                .inputs
                .iter()
                .enumerate()
                .all(|(l, m)| m.len() == params.layer_input_size(l))
            && self.head.len() == params.hidden_size;
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("dropout masks do not match the network".into()))
        }
    }
}

/// Sample independent masks for `steps` time steps.
pub fn sample_masks(params: &SearchModelParams, steps: usize, keep: f64, rng: &mut seed::Rng) -> Vec<StepMasks> {
    (0..steps).map(|_| StepMasks::sample(params, keep, rng)).collect()
}

#[derive(Debug, Clone)]
struct LayerCache {
    /// Masked layer input.
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    /// Gate activations after their nonlinearity: i, f, o, g.
    gates: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Debug, Clone)]
struct StepCache {
    layers: Vec<LayerCache>,
    head_in: Vec<f64>,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn step_inner(
    params: &SearchModelParams,
    state: &RecurrentState,
    feature: &[f64],
    prev_position: f64,
    masks: Option<&StepMasks>,
    mut cache: Option<&mut StepCache>,
) -> (RecurrentState, f64) {
    let hsz = params.hidden_size;
    let mut next = RecurrentState {
        hidden: Vec::with_capacity(params.layers),
        cell: Vec::with_capacity(params.layers),
    };
    let mut input: Vec<f64> = feature.iter().copied().chain([prev_position]).collect();
    for (l, lw) in params.weights.layers.iter().enumerate() {
        if let Some(m) = masks {
            input.iter_mut().zip(&m.inputs[l]).for_each(|(x, k)| *x *= k);
        }
        let h_prev = &state.hidden[l];
        let c_prev = &state.cell[l];
        let cols = input.len() + hsz;
        let mut gates = lw.b.clone();
        for (r, z) in gates.iter_mut().enumerate() {
            let row = &lw.w[r * cols..(r + 1) * cols];
            let (wx, wh) = row.split_at(input.len());
            *z += wx.iter().zip(&input).map(|(a, b)| a * b).sum::<f64>()
                + wh.iter().zip(h_prev).map(|(a, b)| a * b).sum::<f64>();
        }
        for (r, z) in gates.iter_mut().enumerate() {
            *z = if r < 3 * hsz { sigmoid(*z) } else { z.tanh() };
        }
        let (i, rest) = gates.split_at(hsz);
        let (f, rest) = rest.split_at(hsz);
        let (o, g) = rest.split_at(hsz);
        let c: Vec<f64> = (0..hsz).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        let h: Vec<f64> = (0..hsz).map(|k| o[k] * tanh_c[k]).collect();
        if let Some(cache) = cache.as_deref_mut() {
            cache.layers.push(LayerCache {
                x: input.clone(),
                h_prev: h_prev.clone(),
                c_prev: c_prev.clone(),
                gates: gates.clone(),
                tanh_c,
            });
        }
        input = h.clone();
        next.hidden.push(h);
        next.cell.push(c);
    }
    let mut head_in = input;
    if let Some(m) = masks {
        head_in.iter_mut().zip(&m.head).for_each(|(x, k)| *x *= k);
    }
    let out = params
        .weights
        .head_w
        .iter()
        .zip(&head_in)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        + params.weights.head_b;
    if let Some(cache) = cache {
        cache.head_in = head_in;
    }
    (next, out)
}

/// One recurrent transition. Returns the new state and the next normalized
/// position (unclamped).
pub fn forward_step(
    params: &SearchModelParams,
    state: &RecurrentState,
    feature: &[f64],
    prev_position: f64,
    masks: Option<&StepMasks>,
) -> Result<(RecurrentState, f64)> {
    if feature.len() != params.input_dim {
        return Err(Error::Shape(format!(
            "feature has {} values, network expects {}",
            feature.len(),
            params.input_dim
        )));
    }
    state.check(params)?;
    if let Some(m) = masks {
        m.check(params)?;
    }
    Ok(step_inner(params, state, feature, prev_position, masks, None))
}

/// How the previous-position input is fed during an unroll.
#[derive(Debug, Clone, Copy)]
pub enum Feed<'a> {
    /// Each emitted position is the next step's input.
    FreeRunning,
    /// Step `t > 0` receives `targets[t - 1]`.
    TeacherForced(&'a [f64]),
}

/// Intermediates of an unroll, consumed by [`backward`].
#[derive(Debug, Clone)]
pub struct UnrollCache {
    steps: Vec<StepCache>,
    masks: Option<Vec<StepMasks>>,
    free_running: bool,
    fingerprint: u64,
    shape: (usize, usize, usize),
}

impl UnrollCache {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Unrolled {
    pub outputs: Vec<f64>,
    pub state: RecurrentState,
    pub cache: UnrollCache,
}

/// Run the network over `features` from a zero state.
pub fn unroll(
    params: &SearchModelParams,
    features: &[Vec<f64>],
    initial_position: f64,
    feed: Feed<'_>,
    masks: Option<&[StepMasks]>,
) -> Result<Unrolled> {
    if features.is_empty() {
        return Err(Error::MissingData("unroll over an empty sequence".into()));
    }
    if let Feed::TeacherForced(targets) = feed {
        if targets.len() != features.len() {
            return Err(Error::LengthMismatch {
                expected: features.len(),
                actual: targets.len(),
            });
        }
    }
    if let Some(m) = masks {
        if m.len() != features.len() {
            return Err(Error::LengthMismatch {
                expected: features.len(),
                actual: m.len(),
            });
        }
        for s in m {
            s.check(params)?;
        }
    }
    if let Some(f) = features.iter().find(|f| f.len() != params.input_dim) {
        return Err(Error::Shape(format!(
            "feature has {} values, network expects {}",
            f.len(),
            params.input_dim
        )));
    }

    let mut state = RecurrentState::zeros(params);
    let mut outputs = Vec::with_capacity(features.len());
    let mut steps = Vec::with_capacity(features.len());
    let mut prev = initial_position;
    for (t, feature) in features.iter().enumerate() {
        let mut cache = StepCache {
            layers: Vec::with_capacity(params.layers),
            head_in: Vec::new(),
        };
        let m = masks.map(|m| &m[t]);
        let (next, out) = step_inner(params, &state, feature, prev, m, Some(&mut cache));
        state = next;
        outputs.push(out);
        steps.push(cache);
        prev = match feed {
            Feed::FreeRunning => out,
            Feed::TeacherForced(targets) => targets[t],
        };
    }
    Ok(Unrolled {
        outputs,
        state,
        cache: UnrollCache {
            steps,
            masks: masks.map(<[StepMasks]>::to_vec),
            free_running: matches!(feed, Feed::FreeRunning),
            fingerprint: params.weights.fingerprint(),
            shape: (params.layers, params.hidden_size, params.input_dim),
        },
    })
}

/// Exact gradients of `Σ_t loss_grads[t] · output[t]` with respect to every
/// parameter, through time. In free-running mode the gradient also flows
/// through the fed-back positions.
pub fn backward(params: &SearchModelParams, cache: &UnrollCache, loss_grads: &[f64]) -> Result<Weights> {
    if cache.shape != (params.layers, params.hidden_size, params.input_dim)
        || cache.fingerprint != params.weights.fingerprint()
    {
        return Err(Error::Shape("unroll cache is stale or from another network".into()));
    }
    if loss_grads.len() != cache.steps.len() {
        return Err(Error::LengthMismatch {
            expected: cache.steps.len(),
            actual: loss_grads.len(),
        });
    }
    let hsz = params.hidden_size;
    let nl = params.layers;
    let pos_index = params.input_dim;
    let mut grads = params.weights.zeros_like();
    let mut dh_next = vec![vec![0.0; hsz]; nl];
    let mut dc_next = vec![vec![0.0; hsz]; nl];
    let mut d_fed_back = 0.0;

    for t in (0..cache.steps.len()).rev() {
        let step = &cache.steps[t];
        let masks = cache.masks.as_ref().map(|m| &m[t]);
        let d_out = loss_grads[t] + if cache.free_running { d_fed_back } else { 0.0 };

        for (g, x) in grads.head_w.iter_mut().zip(&step.head_in) {
            *g += d_out * x;
        }
        grads.head_b += d_out;
        let mut d_above: Vec<f64> = params.weights.head_w.iter().map(|w| d_out * w).collect();
        if let Some(m) = masks {
            d_above.iter_mut().zip(&m.head).for_each(|(d, k)| *d *= k);
        }

        for l in (0..nl).rev() {
            let lc = &step.layers[l];
            let lw = &params.weights.layers[l];
            let lg = &mut grads.layers[l];
            let n_in = lc.x.len();
            let cols = n_in + hsz;
            let (i, rest) = lc.gates.split_at(hsz);
            let (f, rest) = rest.split_at(hsz);
            let (o, g) = rest.split_at(hsz);

            let mut dz = vec![0.0; 4 * hsz];
            for k in 0..hsz {
                let dh = d_above[k] + dh_next[l][k];
                let dc = dc_next[l][k] + dh * o[k] * (1.0 - lc.tanh_c[k] * lc.tanh_c[k]);
                dz[k] = dc * g[k] * i[k] * (1.0 - i[k]);
                dz[hsz + k] = dc * lc.c_prev[k] * f[k] * (1.0 - f[k]);
                dz[2 * hsz + k] = dh * lc.tanh_c[k] * o[k] * (1.0 - o[k]);
                dz[3 * hsz + k] = dc * i[k] * (1.0 - g[k] * g[k]);
                dc_next[l][k] = dc * f[k];
            }

            let mut d_in = vec![0.0; cols];
            for (r, &dzr) in dz.iter().enumerate() {
                if dzr == 0.0 {
                    continue;
                }
                lg.b[r] += dzr;
                let row = &lw.w[r * cols..(r + 1) * cols];
                let grow = &mut lg.w[r * cols..(r + 1) * cols];
                for (c, x) in lc.x.iter().chain(&lc.h_prev).enumerate() {
                    grow[c] += dzr * x;
                    d_in[c] += dzr * row[c];
                }
            }
            let (dx, dh_prev) = d_in.split_at(n_in);
            dh_next[l].copy_from_slice(dh_prev);
            let mut dx = dx.to_vec();
            if let Some(m) = masks {
                dx.iter_mut().zip(&m.inputs[l]).for_each(|(d, k)| *d *= k);
            }
            if l == 0 {
                d_fed_back = dx[pos_index];
            }
            d_above = dx;
        }
    }
    Ok(grads)
}
