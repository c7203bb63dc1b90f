//! Minimal fully-connected network: ReLU hidden layers, affine output,
//! hand-derived backpropagation, Adam, and a flat-text checkpoint format.
//!
//! Everything is `f64`; the finite-difference oracles in the tests need the
//! headroom. Batches are `ndarray` matrices with one sample per row.

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::data::fmt_f64;
use crate::error::{Error, Result};

/// Network parameters. `weights[l]` has shape (fan-out, fan-in) and acts on
/// row-vector batches as `x W^T + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    widths: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Pre-activations and layer inputs kept from a forward pass for the
/// backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Array2<f64>,
    pre_activations: Vec<Array2<f64>>,
}

/// Parameter gradients, shaped like the parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpParams {
    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    /// Mutable access for tests and hand-built networks; shapes are fixed.
    pub fn weights_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [Array1<f64>] {
        &mut self.biases
    }

    pub fn zeros(widths: &[usize]) -> Result<Self> {
        check_widths(widths)?;
        let weights = widths
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        let biases = widths[1..].iter().map(|&n| Array1::zeros(n)).collect();
        Ok(MlpParams {
            widths: widths.to_vec(),
            weights,
            biases,
        })
    }
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::invalid(
            "network needs at least an input and an output width",
        ));
    }
    if widths.iter().any(|&w| w == 0) {
        return Err(Error::invalid("layer widths must be positive"));
    }
    Ok(())
}

/// He-initialized parameters: weights ~ N(0, 2/fan_in), biases zero.
/// Deterministic in `seed`; draws go layer by layer, row-major.
pub fn mlp_init(widths: &[usize], seed: u64) -> Result<MlpParams> {
    check_widths(widths)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::with_capacity(widths.len() - 1);
    let mut biases = Vec::with_capacity(widths.len() - 1);
    for w in widths.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let std = (2.0 / fan_in as f64).sqrt();
        let mut m = Array2::zeros((fan_out, fan_in));
        for v in m.iter_mut() {
            *v = std * rng.sample::<f64, _>(StandardNormal);
        }
        weights.push(m);
        biases.push(Array1::zeros(fan_out));
    }
    Ok(MlpParams {
        widths: widths.to_vec(),
        weights,
        biases,
    })
}

fn relu(z: &Array2<f64>) -> Array2<f64> {
    z.mapv(|v| v.max(0.0))
}

/// Forward pass: ReLU after every layer except the last, which stays
/// affine. Returns the output batch and the cache for `mlp_backward`.
pub fn mlp_forward(params: &MlpParams, x: &Array2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
    if x.ncols() != params.input_dim() {
        return Err(Error::DimensionMismatch(x.ncols(), params.input_dim()));
    }
    let mut pre_activations = Vec::with_capacity(params.n_layers());
    let mut activation = x.clone();
    for (l, (w, b)) in params.weights.iter().zip(&params.biases).enumerate() {
        let z = activation.dot(&w.t()) + b;
        pre_activations.push(z.clone());
        activation = if l + 1 < params.n_layers() { relu(&z) } else { z };
    }
    Ok((
        activation,
        ForwardCache {
            input: x.clone(),
            pre_activations,
        },
    ))
}

/// Backward pass. `grad_output` is the derivative of some scalar with
/// respect to the forward output; returns that scalar's gradients for all
/// parameters and for the input batch. The ReLU subgradient at zero is
/// taken as zero.
pub fn mlp_backward(
    params: &MlpParams,
    cache: &ForwardCache,
    grad_output: &Array2<f64>,
) -> Result<(Gradients, Array2<f64>)> {
    let layers = params.n_layers();
    let batch = cache.input.nrows();
    let consistent = cache.pre_activations.len() == layers
        && cache.input.ncols() == params.input_dim()
        && cache
            .pre_activations
            .iter()
            .zip(&params.widths[1..])
            .all(|(z, &w)| z.dim() == (batch, w))
        && grad_output.dim() == (batch, params.output_dim());
    if !consistent {
        return Err(Error::invalid(
            "cache does not match this network and gradient shape",
        ));
    }

    let mut d_weights = Vec::with_capacity(layers);
    let mut d_biases = Vec::with_capacity(layers);
    let mut delta = grad_output.clone();
    let mut input_grad = None;
    for l in (0..layers).rev() {
        let a_prev = if l == 0 {
            cache.input.clone()
        } else {
            relu(&cache.pre_activations[l - 1])
        };
        d_weights.push(delta.t().dot(&a_prev));
        d_biases.push(delta.sum_axis(Axis(0)));
        let da_prev = delta.dot(&params.weights[l]);
        if l == 0 {
            input_grad = Some(da_prev);
        } else {
            let gate = cache.pre_activations[l - 1].mapv(|z| if z > 0.0 { 1.0 } else { 0.0 });
            delta = da_prev * &gate;
        }
    }
    d_weights.reverse();
    d_biases.reverse();
    Ok((
        Gradients {
            weights: d_weights,
            biases: d_biases,
        },
        input_grad.unwrap(),
    ))
}

/// Adam hyperparameters; defaults are the canonical ones.
#[derive(Debug, Clone, Copy)]
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

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }
}

/// First/second moment accumulators, shaped like the parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &MlpParams) -> Self {
        AdamState {
            m_w: params.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            v_w: params.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            m_b: params.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
            v_b: params.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One Adam update with bias correction, in place.
pub fn adam_step(
    params: &mut MlpParams,
    grads: &Gradients,
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.weights.len() != params.weights.len() {
        return Err(Error::DimensionMismatch(
            grads.weights.len(),
            params.weights.len(),
        ));
    }
    for (g, w) in grads.weights.iter().zip(&params.weights) {
        if g.dim() != w.dim() {
            return Err(Error::invalid("weight gradient shape mismatch"));
        }
    }
    for (g, b) in grads.biases.iter().zip(&params.biases) {
        if g.len() != b.len() {
            return Err(Error::invalid("bias gradient shape mismatch"));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let m_corr = 1.0 - cfg.beta1.powi(t);
    let v_corr = 1.0 - cfg.beta2.powi(t);
    let update = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
        let m_hat = *m / m_corr;
        let v_hat = *v / v_corr;
        *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    };
    for l in 0..params.weights.len() {
        for ((p, &g), (m, v)) in params.weights[l]
            .iter_mut()
            .zip(grads.weights[l].iter())
            .zip(state.m_w[l].iter_mut().zip(state.v_w[l].iter_mut()))
        {
            update(p, g, m, v);
        }
        for ((p, &g), (m, v)) in params.biases[l]
            .iter_mut()
            .zip(grads.biases[l].iter())
            .zip(state.m_b[l].iter_mut().zip(state.v_b[l].iter_mut()))
        {
            update(p, g, m, v);
        }
    }
    Ok(())
}

const CKPT_HEADER: &str = "cae-ckpt v1";

/// Write a checkpoint: the header line, the widths, then row-major weight
/// entries followed by bias entries per layer, one value per line with 17
/// significant digits. Round-trips bit-exactly.
pub fn write_checkpoint(params: &MlpParams, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{CKPT_HEADER}")?;
    let widths: Vec<String> = params.widths.iter().map(|x| x.to_string()).collect();
    writeln!(w, "{}", widths.join(" "))?;
    for l in 0..params.n_layers() {
        for v in params.weights[l].iter() {
            writeln!(w, "{}", fmt_f64(*v))?;
        }
        for v in params.biases[l].iter() {
            writeln!(w, "{}", fmt_f64(*v))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<MlpParams> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let mut next_line = || {
        lines.next().ok_or(Error::Parse {
            line: 0,
            message: "unexpected end of checkpoint".into(),
        })
    };

    let (_, header) = next_line()?;
    if header.trim() != CKPT_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected `{CKPT_HEADER}`, found `{header}`"),
        });
    }
    let (_, widths_line) = next_line()?;
    let widths: Vec<usize> = widths_line
        .split_whitespace()
        .map(|t| {
            t.parse().map_err(|_| Error::Parse {
                line: 2,
                message: format!("bad width `{t}`"),
            })
        })
        .collect::<Result<_>>()?;
    check_widths(&widths)?;

    let mut params = MlpParams::zeros(&widths)?;
    for l in 0..params.n_layers() {
        for slot in params.weights[l]
            .iter_mut()
            .chain(params.biases[l].iter_mut())
        {
            let (idx, line) = next_line()?;
            *slot = line.trim().parse().map_err(|_| Error::Parse {
                line: idx + 1,
                message: format!("bad value `{}`", line.trim()),
            })?;
        }
    }
    Ok(params)
}
