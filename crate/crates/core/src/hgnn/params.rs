//! Trainable tensors of the network.
//!
//! Flat parameter order (used by checkpoints and the optimiser): layers 1..4,
//! each as `bilstm.forward.{w_in,w_rec,bias}`, `bilstm.backward.{...}`,
//! `conv.{weight,bias}`, then for layers 1..3 `gate.context.{weight,bias}`,
//! `gate.local.{weight,bias}`; finally `head.{weight,bias}`. Matrices are
//! row-major with one row per output unit. LSTM gate blocks are stacked
//! forget, input, candidate, output.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::config::HgnnConfig;
use crate::error::{Error, Result};
use crate::synth::seeded_rng;

fn uniform(rng: &mut ChaCha8Rng, len: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
}

/// Fully connected map `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub out_dim: usize,
    pub in_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Self {
            out_dim,
            in_dim,
            weight: vec![0.0; out_dim * in_dim],
            bias: vec![0.0; out_dim],
        }
    }

    fn init(out_dim: usize, in_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            out_dim,
            in_dim,
            weight: uniform(rng, out_dim * in_dim, in_dim),
            bias: uniform(rng, out_dim, in_dim),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.weight
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect()
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub(crate) fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Linear) -> Vec<f64> {
        let mut dx = vec![0.0; self.in_dim];
        for (o, &g) in dy.iter().enumerate() {
            grad.bias[o] += g;
            let row = &self.weight[o * self.in_dim..(o + 1) * self.in_dim];
            let grow = &mut grad.weight[o * self.in_dim..(o + 1) * self.in_dim];
            for i in 0..self.in_dim {
                grow[i] += g * x[i];
                dx[i] += g * row[i];
            }
        }
        dx
    }

    fn tensors(&self) -> [&[f64]; 2] {
        [&self.weight, &self.bias]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

/// Single-direction LSTM with separate input and recurrent matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Lstm {
    pub input_dim: usize,
    pub hidden: usize,
    /// `4h x input_dim`.
    pub w_in: Vec<f64>,
    /// `4h x h`.
    pub w_rec: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Lstm {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input_dim,
            hidden,
            w_in: vec![0.0; 4 * hidden * input_dim],
            w_rec: vec![0.0; 4 * hidden * hidden],
            bias: vec![0.0; 4 * hidden],
        }
    }

    pub fn init(input_dim: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = input_dim + hidden;
        Self {
            input_dim,
            hidden,
            w_in: uniform(rng, 4 * hidden * input_dim, fan_in),
            w_rec: uniform(rng, 4 * hidden * hidden, fan_in),
            bias: uniform(rng, 4 * hidden, fan_in),
        }
    }

    fn tensors(&self) -> [&[f64]; 3] {
        [&self.w_in, &self.w_rec, &self.bias]
    }

    fn tensors_mut(&mut self) -> [&mut [f64]; 3] {
        [&mut self.w_in, &mut self.w_rec, &mut self.bias]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiLstm {
    pub forward: Lstm,
    pub backward: Lstm,
}

/// One-channel convolution with `filters` kernels of width `kernel`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv1d {
    pub filters: usize,
    pub kernel: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv1d {
    pub fn zeros(filters: usize, kernel: usize) -> Self {
        Self {
            filters,
            kernel,
            weight: vec![0.0; filters * kernel],
            bias: vec![0.0; filters],
        }
    }

    fn init(filters: usize, kernel: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            filters,
            kernel,
            weight: uniform(rng, filters * kernel, kernel),
            bias: uniform(rng, filters, kernel),
        }
    }
}

/// Screening-coefficient projections for the context and local features.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub context: Linear,
    pub local: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub bilstm: BiLstm,
    pub conv: Conv1d,
    /// Absent on the last layer, which concatenates instead of gating.
    pub gate: Option<Gate>,
}

pub const NUM_LAYERS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct HgnnParams {
    pub config: HgnnConfig,
    pub layers: Vec<Layer>,
    pub head: Linear,
}

impl HgnnParams {
    /// Uniform `+-1/sqrt(fan_in)` initialisation from `config.seed`.
    pub fn init(config: &HgnnConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded_rng(config.seed);
        Ok(Self::build(config, |shape| shape.init(&mut rng)))
    }

    pub fn zeros(config: &HgnnConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self::build(config, Shape::zeros))
    }

    pub fn zeros_like(&self) -> Self {
        Self::build(&self.config, Shape::zeros)
    }

    fn build(config: &HgnnConfig, mut make: impl FnMut(Shape) -> Block) -> Self {
        let df = config.fusion_dim;
        let h = config.lstm_hidden();
        let mut layers = Vec::with_capacity(NUM_LAYERS);
        for k in 0..NUM_LAYERS {
            let forward = make(Shape::Lstm(1, h)).lstm();
            let backward = make(Shape::Lstm(1, h)).lstm();
            let conv = make(Shape::Conv(config.conv_filters(), config.kernel_size)).conv();
            let gate = (k + 1 < NUM_LAYERS).then(|| Gate {
                context: make(Shape::Linear(df, df)).linear(),
                local: make(Shape::Linear(df, df)).linear(),
            });
            layers.push(Layer {
                bilstm: BiLstm { forward, backward },
                conv,
                gate,
            });
        }
        let head = make(Shape::Linear(config.num_classes, 2 * df)).linear();
        Self {
            config: config.clone(),
            layers,
            head,
        }
    }

    /// Every tensor with its dotted name, in flat order.
    pub fn named_tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (k, layer) in self.layers.iter().enumerate() {
            let p = format!("layer{}", k + 1);
            for (dir, lstm) in [
                ("forward", &layer.bilstm.forward),
                ("backward", &layer.bilstm.backward),
            ] {
                for (name, t) in ["w_in", "w_rec", "bias"].iter().zip(lstm.tensors()) {
                    out.push((format!("{p}.bilstm.{dir}.{name}"), t));
                }
            }
            out.push((format!("{p}.conv.weight"), layer.conv.weight.as_slice()));
            out.push((format!("{p}.conv.bias"), layer.conv.bias.as_slice()));
            if let Some(g) = &layer.gate {
                for (which, lin) in [("context", &g.context), ("local", &g.local)] {
                    for (name, t) in ["weight", "bias"].iter().zip(lin.tensors()) {
                        out.push((format!("{p}.gate.{which}.{name}"), t));
                    }
                }
            }
        }
        for (name, t) in ["weight", "bias"].iter().zip(self.head.tensors()) {
            out.push((format!("head.{name}"), t));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in self.layers.iter_mut() {
            out.extend(layer.bilstm.forward.tensors_mut());
            out.extend(layer.bilstm.backward.tensors_mut());
            out.push(&mut layer.conv.weight);
            out.push(&mut layer.conv.bias);
            if let Some(g) = layer.gate.as_mut() {
                out.extend(g.context.tensors_mut());
                out.extend(g.local.tensors_mut());
            }
        }
        out.extend(self.head.tensors_mut());
        out
    }

    pub fn param_count(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (_, t) in self.named_tensors() {
            out.extend_from_slice(t);
        }
        out
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<()> {
        let expected = self.param_count();
        if flat.len() != expected {
            return Err(Error::invalid(format!(
                "flat parameter vector has {} values, expected {expected}",
                flat.len()
            )));
        }
        if flat.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "parameter vector contains a non-finite value",
            ));
        }
        let mut offset = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    /// `self += other`, tensor by tensor.
    pub fn add_assign(&mut self, other: &HgnnParams) {
        let theirs = other.named_tensors();
        for (mine, (_, t)) in self.tensors_mut().into_iter().zip(theirs) {
            for (a, b) in mine.iter_mut().zip(t) {
                *a += b;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            for v in t.iter_mut() {
                *v *= factor;
            }
        }
    }
}

enum Shape {
    Lstm(usize, usize),
    Conv(usize, usize),
    Linear(usize, usize),
}

enum Block {
    Lstm(Lstm),
    Conv(Conv1d),
    Linear(Linear),
}

impl Shape {
    fn zeros(self) -> Block {
        match self {
            Shape::Lstm(i, h) => Block::Lstm(Lstm::zeros(i, h)),
            Shape::Conv(f, k) => Block::Conv(Conv1d::zeros(f, k)),
            Shape::Linear(o, i) => Block::Linear(Linear::zeros(o, i)),
        }
    }

    fn init(self, rng: &mut ChaCha8Rng) -> Block {
        match self {
            Shape::Lstm(i, h) => Block::Lstm(Lstm::init(i, h, rng)),
            Shape::Conv(f, k) => Block::Conv(Conv1d::init(f, k, rng)),
            Shape::Linear(o, i) => Block::Linear(Linear::init(o, i, rng)),
        }
    }
}

impl Block {
    fn lstm(self) -> Lstm {
        match self {
            Block::Lstm(l) => l,
            _ => unreachable!("shape/block mismatch"),
        }
    }

    fn conv(self) -> Conv1d {
        match self {
            Block::Conv(c) => c,
            _ => unreachable!("shape/block mismatch"),
        }
    }

    fn linear(self) -> Linear {
        match self {
            Block::Linear(l) => l,
            _ => unreachable!("shape/block mismatch"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_is_a_function_of_the_config() {
        let cfg = HgnnConfig {
            fusion_dim: 8,
            kernel_size: 3,
            num_classes: 3,
            ..Default::default()
        };
        let h = 4;
        let input = 1;
        let lstm = 4 * h * input + 4 * h * h + 4 * h;
        let conv = 8 * 3 + 8;
        let gate = 2 * (8 * 8 + 8);
        let head = 3 * 16 + 3;
        let expected = 4 * (2 * lstm + conv) + 3 * gate + head;
        let a = HgnnParams::init(&cfg).unwrap();
        let b = HgnnParams::init(&HgnnConfig {
            seed: 99,
            ..cfg.clone()
        })
        .unwrap();
        assert_eq!(a.param_count(), expected);
        assert_eq!(b.param_count(), expected);
        assert_ne!(a.flatten(), b.flatten());
    }

    #[test]
    fn init_is_bounded_and_deterministic() {
        let cfg = HgnnConfig::default();
        let p = HgnnParams::init(&cfg).unwrap();
        assert_eq!(p, HgnnParams::init(&cfg).unwrap());
        let bound = 1.0 / (p.layers[0].conv.kernel as f64).sqrt();
        assert!(p.layers[0].conv.weight.iter().all(|w| w.abs() <= bound));
        assert!(p.layers[3].gate.is_none() && p.layers[2].gate.is_some());
    }

    #[test]
    fn flat_round_trip() {
        let cfg = HgnnConfig {
            fusion_dim: 6,
            ..Default::default()
        };
        let p = HgnnParams::init(&cfg).unwrap();
        let mut q = p.zeros_like();
        q.load_flat(&p.flatten()).unwrap();
        assert_eq!(p, q);
        assert!(q.load_flat(&[0.0; 3]).is_err());
        let names: Vec<String> = p.named_tensors().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names[0], "layer1.bilstm.forward.w_in");
        assert_eq!(names.last().unwrap(), "head.bias");
    }

    #[test]
    fn rejects_bad_configs() {
        for df in [0, 3, 7] {
            let cfg = HgnnConfig {
                fusion_dim: df,
                ..Default::default()
            };
            assert!(HgnnParams::init(&cfg).is_err());
        }
        let cfg = HgnnConfig {
            fusion_dim: 4,
            kernel_size: 5,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert!(HgnnConfig::default().validate_input(2).is_err());
    }
}
