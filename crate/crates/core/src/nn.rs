//! Dense feedforward network with ReLU hidden layers and a sigmoid output,
//! trained on binary cross-entropy with hand-written backpropagation and
//! Adam.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datagen::{InputScaling, INPUT_DIM};
use crate::expr::{Token, TokenSeq, Vocab};
use crate::rng;

/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` inside the loss.
pub const BCE_CLAMP: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("non-finite activation in layer {layer}")]
    NonFiniteActivation { layer: usize },
    #[error("non-finite gradient in layer {layer}")]
    NonFiniteGradient { layer: usize },
    #[error("expected input width {expected}, got {found}")]
    InputWidth { expected: usize, found: usize },
    #[error("architecture needs positive layer widths: {0:?}")]
    BadArch(Arch),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Arch {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub output_dim: usize,
}

impl Arch {
    /// Ten hidden layers of 200 units over the table encoding.
    pub fn standard(output_dim: usize) -> Self {
        Arch {
            input_dim: INPUT_DIM,
            hidden: vec![200; 10],
            output_dim,
        }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim];
        w.extend_from_slice(&self.hidden);
        w.push(self.output_dim);
        w
    }

    pub fn param_count(&self) -> usize {
        self.widths().windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn validate(&self) -> Result<(), NnError> {
        if self.widths().contains(&0) {
            Err(NnError::BadArch(self.clone()))
        } else {
            Ok(())
        }
    }
}

/// Weights are stored `fan_in x fan_out` so a batch forward is `X W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Layer {
            weights: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn zeros_like(&self) -> Self {
        Layer::zeros(self.weights.nrows(), self.weights.ncols())
    }

    fn all_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub arch: Arch,
    pub layers: Vec<Layer>,
}

/// Gradient of the loss, shaped like the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl MlpModel {
    /// He-normal hidden weights, Glorot-uniform output weights, zero biases.
    pub fn init(arch: &Arch, seed: u64) -> Result<Self, NnError> {
        arch.validate()?;
        let widths = arch.widths();
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let mut r = rng::stream(seed, i as u64);
                let weights = if i < last {
                    let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
                    Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(&mut r))
                } else {
                    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    let dist = Uniform::new_inclusive(-a, a).expect("valid bounds");
                    Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(&mut r))
                };
                Layer {
                    weights,
                    bias: Array1::zeros(fan_out),
                }
            })
            .collect();
        Ok(MlpModel {
            arch: arch.clone(),
            layers,
        })
    }

    pub fn zeros(arch: &Arch) -> Result<Self, NnError> {
        arch.validate()?;
        let layers = arch
            .widths()
            .windows(2)
            .map(|w| Layer::zeros(w[0], w[1]))
            .collect();
        Ok(MlpModel {
            arch: arch.clone(),
            layers,
        })
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Single-sample forward pass; runs the batch path on a one-row batch.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("contiguous row");
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Forward pass over a `batch x input_dim` matrix, returning
    /// `batch x output_dim` probabilities strictly inside (0, 1).
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        Ok(self.activations(x)?.pop().expect("at least one layer"))
    }

    /// Every layer's post-activation output, input excluded.
    fn activations(&self, x: ArrayView2<f64>) -> Result<Vec<Array2<f64>>, NnError> {
        if x.ncols() != self.arch.input_dim {
            return Err(NnError::InputWidth {
                expected: self.arch.input_dim,
                found: x.ncols(),
            });
        }
        let last = self.layers.len() - 1;
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let prev = acts.last().map_or(x, |a| a.view());
            let mut z = prev.dot(&layer.weights);
            z += &layer.bias;
            if z.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFiniteActivation { layer: i });
            }
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            } else {
                z.mapv_inplace(output_sigmoid);
            }
            acts.push(z);
        }
        Ok(acts)
    }

    /// Mean batch BCE and its exact gradient with respect to every weight
    /// and bias. The ReLU derivative at 0 is taken as 0.
    pub fn backward(
        &self,
        x: ArrayView2<f64>,
        targets: ArrayView2<f64>,
    ) -> Result<(Gradients, f64), NnError> {
        let acts = self.activations(x)?;
        let out = acts.last().expect("at least one layer");
        let loss = bce_loss(
            out.as_slice().expect("standard layout"),
            targets.as_standard_layout().as_slice().expect("standard layout"),
        );
        let scale = 1.0 / out.len() as f64;
        // Sigmoid + BCE: dL/dz = (o - t) / (bits in batch).
        let mut delta = (out - &targets) * scale;
        let mut grads: Vec<Layer> = self.layers.iter().map(Layer::zeros_like).collect();
        for i in (0..self.layers.len()).rev() {
            let input = if i == 0 { x } else { acts[i - 1].view() };
            let g = &mut grads[i];
            g.weights = input.t().dot(&delta);
            g.bias = delta.sum_axis(Axis(0));
            if !g.all_finite() {
                return Err(NnError::NonFiniteGradient { layer: i });
            }
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].weights.t());
                Zip::from(&mut back)
                    .and(&acts[i - 1])
                    .for_each(|d, &a| if a <= 0.0 { *d = 0.0 });
                delta = back;
            }
        }
        Ok((Gradients { layers: grads }, loss))
    }
}

fn output_sigmoid(z: f64) -> f64 {
    // Keeps outputs strictly inside (0, 1) even where f64 saturates.
    crate::expr::sigmoid(z).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0)
}

/// Mean binary cross-entropy over all bits.
pub fn bce_loss(output: &[f64], target: &[f64]) -> f64 {
    assert_eq!(output.len(), target.len(), "output/target length mismatch");
    let sum: f64 = output
        .iter()
        .zip(target)
        .map(|(&o, &t)| {
            let o = o.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            -(t * o.ln() + (1.0 - t) * (1.0 - o).ln())
        })
        .sum();
    sum / output.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moment estimates and step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimState {
    pub config: AdamConfig,
    pub step: u64,
    m: Vec<Layer>,
    v: Vec<Layer>,
}

impl OptimState {
    pub fn new(model: &MlpModel, config: AdamConfig) -> Self {
        let zeros: Vec<Layer> = model.layers.iter().map(Layer::zeros_like).collect();
        OptimState {
            config,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One bias-corrected Adam update.
    pub fn step(&mut self, model: &mut MlpModel, grads: &Gradients) {
        assert_eq!(model.layers.len(), grads.layers.len(), "gradient shape");
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let update = |w: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        };
        for (((layer, g), m), v) in model
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            Zip::from(&mut layer.weights)
                .and(&mut m.weights)
                .and(&mut v.weights)
                .and(&g.weights)
                .for_each(|w, m, v, &g| update(w, m, v, g));
            Zip::from(&mut layer.bias)
                .and(&mut m.bias)
                .and(&mut v.bias)
                .and(&g.bias)
                .for_each(|w, m, v, &g| update(w, m, v, g));
        }
    }
}

/// Per-block argmax decoding (ties go to the lowest index), truncated after
/// the first EOS. Without an EOS all `seq_len` tokens are returned.
pub fn decode_output(output: &[f64], seq_len: usize, vocab: &Vocab) -> TokenSeq {
    let v = vocab.size();
    assert_eq!(output.len(), seq_len * v, "output width");
    let mut toks = Vec::with_capacity(seq_len);
    for block in output.chunks_exact(v) {
        let mut best = 0;
        for (i, &a) in block.iter().enumerate().skip(1) {
            if a > block[best] {
                best = i;
            }
        }
        let tok = vocab.token(best).expect("index inside vocabulary");
        toks.push(tok);
        if tok == Token::Eos {
            break;
        }
    }
    TokenSeq(toks)
}

/// Strict decoding: every block up to EOS must have exactly one activation
/// above 0.5, otherwise `None`.
pub fn decode_output_strict(output: &[f64], seq_len: usize, vocab: &Vocab) -> Option<TokenSeq> {
    let v = vocab.size();
    assert_eq!(output.len(), seq_len * v, "output width");
    let mut toks = Vec::with_capacity(seq_len);
    for block in output.chunks_exact(v) {
        let mut hot = block.iter().enumerate().filter(|(_, &a)| a > 0.5);
        let (i, _) = hot.next()?;
        if hot.next().is_some() {
            return None;
        }
        let tok = vocab.token(i)?;
        toks.push(tok);
        if tok == Token::Eos {
            break;
        }
    }
    Some(TokenSeq(toks))
}

pub const CHECKPOINT_FORMAT: &str = "symreg-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LayerData {
    /// Row-major `fan_in x fan_out`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// A trained model with everything needed to decode its output.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: MlpModel,
    pub seq_len: usize,
    pub vocab: Vocab,
    pub scaling: InputScaling,
    pub adam: AdamConfig,
    pub step: u64,
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    arch: Arch,
    seq_len: usize,
    vocab: Vocab,
    scaling: InputScaling,
    adam: AdamConfig,
    step: u64,
    layers: Vec<LayerData>,
}

impl Checkpoint {
    /// Writes JSON; floats use shortest round-trip formatting, so reading
    /// the file back restores every weight exactly.
    pub fn write<W: Write>(&self, w: W) -> Result<(), NnError> {
        let file = CheckpointFile {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            arch: self.model.arch.clone(),
            seq_len: self.seq_len,
            vocab: self.vocab,
            scaling: self.scaling,
            adam: self.adam,
            step: self.step,
            layers: self
                .model
                .layers
                .iter()
                .map(|l| LayerData {
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        };
        serde_json::to_writer(w, &file).map_err(|e| NnError::Checkpoint(e.to_string()))
    }

    pub fn read<R: Read>(r: R) -> Result<Self, NnError> {
        let bad = |m: String| NnError::Checkpoint(m);
        let file: CheckpointFile = serde_json::from_reader(r).map_err(|e| bad(e.to_string()))?;
        if file.format != CHECKPOINT_FORMAT || file.version != CHECKPOINT_VERSION {
            return Err(bad(format!(
                "unsupported format {} v{}",
                file.format, file.version
            )));
        }
        file.arch.validate()?;
        let widths = file.arch.widths();
        if file.layers.len() != widths.len() - 1 {
            return Err(bad("layer count does not match architecture".into()));
        }
        if file.seq_len * file.vocab.size() != file.arch.output_dim {
            return Err(bad("output width is not seq_len x vocabulary size".into()));
        }
        let layers = file
            .layers
            .into_iter()
            .zip(widths.windows(2))
            .map(|(l, w)| {
                let weights = Array2::from_shape_vec((w[0], w[1]), l.weights)
                    .map_err(|e| bad(e.to_string()))?;
                if l.bias.len() != w[1] {
                    return Err(bad("bias length".into()));
                }
                Ok(Layer {
                    weights,
                    bias: Array1::from(l.bias),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        if !layers.iter().all(Layer::all_finite) {
            return Err(bad("non-finite weight".into()));
        }
        Ok(Checkpoint {
            model: MlpModel {
                arch: file.arch,
                layers,
            },
            seq_len: file.seq_len,
            vocab: file.vocab,
            scaling: file.scaling,
            adam: file.adam,
            step: file.step,
        })
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), NnError> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write(f)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, NnError> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read(f)
    }
}
