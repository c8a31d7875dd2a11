use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Per-class statistics of the normalized target positions (fractions of the
/// video duration).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: f64,
    pub std: f64,
}

impl Default for NormStats {
    fn default() -> Self {
        NormStats { mean: 0.5, std: 0.25 }
    }
}

impl NormStats {
    /// Lower bound applied to `std` so degenerate histories stay invertible.
    pub const MIN_STD: f64 = 1e-2;

    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(mean.is_finite() && std.is_finite() && std > 0.0) {
            return Err(Error::Numeric(format!("invalid norm stats ({mean}, {std})")));
        }
        Ok(NormStats { mean, std })
    }

    /// Seconds to z-scored fraction of the video.
    pub fn normalize(&self, seconds: f64, duration: f64) -> f64 {
        (seconds / duration - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64, duration: f64) -> f64 {
        (z * self.std + self.mean) * duration
    }
}

/// Gate weights of one recurrent layer. Rows are the four gate blocks
/// (input, forget, output, candidate), each `hidden` rows; columns are the
/// layer input followed by the previous hidden state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// All trainable tensors; also used as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub layers: Vec<LayerWeights>,
    pub head_w: Vec<f64>,
    pub head_b: f64,
}

impl Weights {
    pub fn zeros(layers: usize, hidden: usize, input_dim: usize) -> Self {
        Weights {
            layers: (0..layers)
                .map(|l| {
                    let cols = layer_input_size(l, hidden, input_dim) + hidden;
                    LayerWeights {
                        w: vec![0.0; 4 * hidden * cols],
                        b: vec![0.0; 4 * hidden],
                    }
                })
                .collect(),
            head_w: vec![0.0; hidden],
            head_b: 0.0,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Weights {
            layers: self
                .layers
                .iter()
                .map(|l| LayerWeights {
                    w: vec![0.0; l.w.len()],
                    b: vec![0.0; l.b.len()],
                })
                .collect(),
            head_w: vec![0.0; self.head_w.len()],
            head_b: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum::<usize>() + self.head_w.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat view in checkpoint order: per layer `w` then `b`, then head.
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers
            .iter()
            .flat_map(|l| l.w.iter().chain(&l.b))
            .chain(&self.head_w)
            .chain(std::iter::once(&self.head_b))
            .copied()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.layers
            .iter_mut()
            .flat_map(|l| l.w.iter_mut().chain(l.b.iter_mut()))
            .chain(self.head_w.iter_mut())
            .chain(std::iter::once(&mut self.head_b))
    }

    pub fn add_assign(&mut self, other: &Weights) {
        for (a, b) in self.iter_mut().zip(other.iter()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.iter_mut().for_each(|a| *a *= k);
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }

    pub(crate) fn fingerprint(&self) -> u64 {
        self.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, v| {
            (h ^ v.to_bits()).wrapping_mul(0x0100_0000_01b3)
        })
    }
}

pub(crate) fn layer_input_size(layer: usize, hidden: usize, input_dim: usize) -> usize {
    if layer == 0 {
        input_dim + 1
    } else {
        hidden
    }
}

/// A per-class stacked recurrent search network with a scalar head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchModelParams {
    pub class_id: u32,
    pub layers: usize,
    pub hidden_size: usize,
    /// Visual feature length; the network input is this plus one position scalar.
    pub input_dim: usize,
    pub weights: Weights,
    pub norm: NormStats,
}

impl SearchModelParams {
    /// Input width of `layer` (the previous-position scalar counts for layer 0).
    pub fn layer_input_size(&self, layer: usize) -> usize {
        layer_input_size(layer, self.hidden_size, self.input_dim)
    }

    pub fn check_shapes(&self) -> Result<()> {
        let expect = Weights::zeros(self.layers, self.hidden_size, self.input_dim);
        let ok = self.layers >= 1
            && self.hidden_size >= 1
            && self.weights.layers.len() == self.layers
            && self
                .weights
                .layers
                .iter()
                .zip(&expect.layers)
                .all(|(a, b)| a.w.len() == b.w.len() && a.b.len() == b.b.len())
            && self.weights.head_w.len() == self.hidden_size;
        if !ok {
            return Err(Error::Shape(format!(
                "weights inconsistent with layers={} hidden={} input_dim={}",
                self.layers, self.hidden_size, self.input_dim
            )));
        }
        if !(self.norm.std > 0.0) {
            return Err(Error::Shape("norm std must be > 0".into()));
        }
        Ok(())
    }
}

/// Gate weights uniform in `±1/sqrt(hidden)`, forget-gate bias 1, head bias 0.
pub fn init_params(
    class_id: u32,
    layers: usize,
    hidden_size: usize,
    input_dim: usize,
    seed: u64,
) -> Result<SearchModelParams> {
    if layers == 0 || hidden_size == 0 {
        return Err(Error::Config("search net needs layers >= 1 and hidden_size >= 1".into()));
    }
    let mut rng = seed::rng_for(seed, &[0x1A17, u64::from(class_id)]);
    let bound = 1.0 / (hidden_size as f64).sqrt();
    let mut weights = Weights::zeros(layers, hidden_size, input_dim);
    for layer in &mut weights.layers {
        layer.w.iter_mut().for_each(|w| *w = rng.random_range(-bound..=bound));
        layer.b[hidden_size..2 * hidden_size].fill(1.0);
    }
    weights
        .head_w
        .iter_mut()
        .for_each(|w| *w = rng.random_range(-bound..=bound));
    Ok(SearchModelParams {
        class_id,
        layers,
        hidden_size,
        input_dim,
        weights,
        norm: NormStats::default(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_params(3, 2, 8, 5, 9).unwrap();
        let b = init_params(3, 2, 8, 5, 9).unwrap();
        assert_eq!(a, b);
        a.check_shapes().unwrap();
        let bound = 1.0 / 8f64.sqrt();
        for l in &a.weights.layers {
            assert!(l.w.iter().all(|w| w.abs() <= bound));
            assert!(l.b[8..16].iter().all(|&b| b == 1.0));
            assert!(l.b[..8].iter().chain(&l.b[16..]).all(|&b| b == 0.0));
        }
        assert_eq!(a.weights.head_b, 0.0);
        assert_eq!(a.weights.layers[0].w.len(), 4 * 8 * (6 + 8));
        assert_eq!(a.weights.layers[1].w.len(), 4 * 8 * 16);
        assert!(init_params(0, 0, 8, 5, 1).is_err());
    }

    #[test]
    fn norm_roundtrip() {
        let n = NormStats::new(0.4, 0.3).unwrap();
        for &s in &[0.0, 12.5, 99.9] {
            let z = n.normalize(s, 100.0);
            assert!((n.denormalize(z, 100.0) - s).abs() < 1e-12);
        }
        assert_eq!(n.normalize(40.0, 100.0), 0.0);
    }
}
