//! Autoencoder training: reconstruction error plus a weighted MMD between
//! the encoded batch and fresh prior draws.
//!
//! The MMD term's parameter gradient flows only through the encoded points;
//! the prior batch is a constant. Per iteration: sample a data minibatch
//! (with replacement) and a fresh prior batch, evaluate the loss, backprop
//! through decoder and encoder (the MMD gradient entering at the encoder
//! output), and take one Adam step on each network. Everything is driven by
//! one seeded stream, so runs are bit-reproducible.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use crate::data::{fmt_f64, prior_from_rng};
use crate::error::{Error, Result};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::mmd::{mmd_grad_q, mmd_unbiased, SampleSet};
use crate::net::{
    adam_step, mlp_backward, mlp_forward, mlp_init, AdamConfig, AdamState, Gradients, MlpParams,
};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub h: usize,
    pub lambda: f64,
    pub kernel: KernelSpec,
    pub enc_widths: Vec<usize>,
    pub dec_widths: Vec<usize>,
    pub lr: f64,
    pub iters: usize,
    pub batch: usize,
    pub seed: u64,
    /// Scales the hidden widths (capacity ablation); 1.0 leaves them as
    /// written.
    pub width_factor: f64,
}

impl Default for TrainConfig {
    /// Grid-experiment defaults at desk scale.
    fn default() -> Self {
        TrainConfig {
            h: 2,
            lambda: 100.0,
            kernel: KernelSpec::coulomb(2, crate::kernel::DEFAULT_EPSILON),
            enc_widths: vec![2, 128, 128, 2],
            dec_widths: vec![2, 128, 128, 2],
            lr: 1e-3,
            iters: 20_000,
            batch: 128,
            seed: 0,
            width_factor: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        if self.enc_widths.last() != Some(&self.h) {
            return Err(Error::invalid("enc_widths must end with h"));
        }
        if self.dec_widths.first() != Some(&self.h) {
            return Err(Error::invalid("dec_widths must start with h"));
        }
        if self.batch < 2 || self.batch <= self.h {
            return Err(Error::invalid("batch must be >= 2 and exceed h"));
        }
        if !(self.lr > 0.0) || !(self.lambda >= 0.0) || !(self.width_factor > 0.0) {
            return Err(Error::invalid(
                "lr and width_factor must be positive, lambda nonnegative",
            ));
        }
        if self.iters == 0 {
            return Err(Error::invalid("iters must be >= 1"));
        }
        Ok(())
    }

    /// Hidden widths scaled by `width_factor` (at least one unit each);
    /// input and output widths are untouched.
    pub fn effective_widths(widths: &[usize], factor: f64) -> Vec<usize> {
        widths
            .iter()
            .enumerate()
            .map(|(i, &w)| {
                if i == 0 || i + 1 == widths.len() {
                    w
                } else {
                    (((w as f64) * factor).round() as usize).max(1)
                }
            })
            .collect()
    }

    pub fn enc_effective(&self) -> Vec<usize> {
        Self::effective_widths(&self.enc_widths, self.width_factor)
    }

    pub fn dec_effective(&self) -> Vec<usize> {
        Self::effective_widths(&self.dec_widths, self.width_factor)
    }

    /// Serialize as `key=value` lines (the config-file format).
    pub fn to_key_values(&self) -> String {
        let widths = |w: &[usize]| {
            w.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut s = String::new();
        s.push_str(&format!("h={}\n", self.h));
        s.push_str(&format!("lambda={}\n", fmt_f64(self.lambda)));
        s.push_str(&format!("kernel={}\n", self.kernel.family));
        s.push_str(&format!("epsilon={}\n", fmt_f64(self.kernel.epsilon)));
        s.push_str(&format!("sigma={}\n", fmt_f64(self.kernel.sigma)));
        s.push_str(&format!("imq_c={}\n", fmt_f64(self.kernel.c)));
        s.push_str(&format!("enc_widths={}\n", widths(&self.enc_widths)));
        s.push_str(&format!("dec_widths={}\n", widths(&self.dec_widths)));
        s.push_str(&format!("lr={}\n", fmt_f64(self.lr)));
        s.push_str(&format!("iters={}\n", self.iters));
        s.push_str(&format!("batch={}\n", self.batch));
        s.push_str(&format!("seed={}\n", self.seed));
        s.push_str(&format!("width_factor={}\n", fmt_f64(self.width_factor)));
        s
    }

    /// Parse `key=value` lines; unset keys keep their defaults, unknown
    /// keys are rejected. `#` starts a comment.
    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut cfg = TrainConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let lineno = idx + 1;
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(Error::Parse {
                line: lineno,
                message: format!("expected key=value, found `{line}`"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| Error::Parse {
                line: lineno,
                message: format!("bad {what}: `{value}`"),
            };
            match key {
                "h" => cfg.h = value.parse().map_err(|_| bad("h"))?,
                "lambda" => cfg.lambda = value.parse().map_err(|_| bad("lambda"))?,
                "kernel" => cfg.kernel.family = value.parse()?,
                "epsilon" => cfg.kernel.epsilon = value.parse().map_err(|_| bad("epsilon"))?,
                "sigma" => cfg.kernel.sigma = value.parse().map_err(|_| bad("sigma"))?,
                "imq_c" => cfg.kernel.c = value.parse().map_err(|_| bad("imq_c"))?,
                "enc_widths" => cfg.enc_widths = parse_widths(value, lineno)?,
                "dec_widths" => cfg.dec_widths = parse_widths(value, lineno)?,
                "lr" => cfg.lr = value.parse().map_err(|_| bad("lr"))?,
                "iters" => cfg.iters = value.parse().map_err(|_| bad("iters"))?,
                "batch" => cfg.batch = value.parse().map_err(|_| bad("batch"))?,
                "seed" => cfg.seed = value.parse().map_err(|_| bad("seed"))?,
                "width_factor" => {
                    cfg.width_factor = value.parse().map_err(|_| bad("width_factor"))?
                }
                other => {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("unknown config key `{other}`"),
                    })
                }
            }
        }
        cfg.kernel.h = cfg.h;
        Ok(cfg)
    }
}

fn parse_widths(value: &str, lineno: usize) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|t| {
            t.trim().parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad width `{}`", t.trim()),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub total: f64,
    pub recon: f64,
    pub mmd: f64,
}

/// Loss on one batch: mean squared reconstruction error plus
/// `lambda * mmd_unbiased(z, enc(x))`.
pub fn loss_eval(
    enc: &MlpParams,
    dec: &MlpParams,
    x: &Array2<f64>,
    z: &SampleSet,
    kernel: &KernelSpec,
    lambda: f64,
) -> Result<LossParts> {
    let (parts, ..) = loss_gradients(enc, dec, x, z, kernel, lambda)?;
    Ok(parts)
}

/// Loss plus its gradients with respect to every encoder and decoder
/// parameter. One shared assembly serves the training loop, the standalone
/// loss evaluation, and the finite-difference checks.
pub fn loss_gradients(
    enc: &MlpParams,
    dec: &MlpParams,
    x: &Array2<f64>,
    z: &SampleSet,
    kernel: &KernelSpec,
    lambda: f64,
) -> Result<(LossParts, Gradients, Gradients)> {
    let n = x.nrows();
    if z.len() != n {
        return Err(Error::DimensionMismatch(z.len(), n));
    }
    if z.dim() != enc.output_dim() {
        return Err(Error::DimensionMismatch(z.dim(), enc.output_dim()));
    }

    let (f, enc_cache) = mlp_forward(enc, x)?;
    let (y, dec_cache) = mlp_forward(dec, &f)?;

    let diff = &y - x;
    let recon = diff.iter().map(|d| d * d).sum::<f64>() / n as f64;
    let d_y = diff.mapv(|d| 2.0 * d / n as f64);
    let (dec_grads, d_f_recon) = mlp_backward(dec, &dec_cache, &d_y)?;

    let f_set = SampleSet::from_matrix(&f)?;
    let mmd = mmd_unbiased(kernel, z, &f_set)?;
    let mmd_grads = mmd_grad_q(kernel, z, &f_set)?;

    let mut d_f = d_f_recon;
    for (i, g) in mmd_grads.iter().enumerate() {
        for (j, &gj) in g.iter().enumerate() {
            d_f[[i, j]] += lambda * gj;
        }
    }
    let (enc_grads, _) = mlp_backward(enc, &enc_cache, &d_f)?;

    let parts = LossParts {
        total: recon + lambda * mmd,
        recon,
        mmd,
    };
    Ok((parts, enc_grads, dec_grads))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub iter: usize,
    pub total: f64,
    pub recon: f64,
    pub mmd: f64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub enc: MlpParams,
    pub dec: MlpParams,
    pub history: Vec<HistoryRow>,
}

const HISTORY_EVERY: usize = 100;

/// Train encoder and decoder on `dataset`. Deterministic in `config.seed`.
pub fn train(config: &TrainConfig, dataset: &SampleSet) -> Result<TrainResult> {
    config.validate()?;
    if dataset.dim() != config.enc_widths[0] {
        return Err(Error::DimensionMismatch(dataset.dim(), config.enc_widths[0]));
    }
    if dataset.len() < config.batch {
        return Err(Error::invalid("dataset smaller than one batch"));
    }
    if config.kernel.family == KernelFamily::Coulomb && config.kernel.epsilon == 0.0 {
        return Err(Error::invalid(
            "training needs a smoothed coulomb kernel (epsilon > 0)",
        ));
    }

    let mut enc = mlp_init(&config.enc_effective(), config.seed)?;
    let mut dec = mlp_init(&config.dec_effective(), config.seed.wrapping_add(1))?;
    let mut enc_state = AdamState::new(&enc);
    let mut dec_state = AdamState::new(&dec);
    let adam = AdamConfig::with_lr(config.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));

    let mut history = Vec::with_capacity(config.iters / HISTORY_EVERY + 1);
    let mut x = Array2::zeros((config.batch, dataset.dim()));
    for it in 1..=config.iters {
        for row in 0..config.batch {
            let pick = rng.random_range(0..dataset.len());
            for (col, &v) in dataset.points()[pick].iter().enumerate() {
                x[[row, col]] = v;
            }
        }
        let z = prior_from_rng(&mut rng, config.batch, config.h);

        let (parts, enc_grads, dec_grads) =
            loss_gradients(&enc, &dec, &x, &z, &config.kernel, config.lambda)?;
        if !parts.total.is_finite() {
            return Err(Error::NonFiniteLoss {
                iter: it,
                total: parts.total,
                recon: parts.recon,
                mmd: parts.mmd,
            });
        }
        adam_step(&mut enc, &enc_grads, &mut enc_state, &adam)?;
        adam_step(&mut dec, &dec_grads, &mut dec_state, &adam)?;

        if it % HISTORY_EVERY == 0 {
            history.push(HistoryRow {
                iter: it,
                total: parts.total,
                recon: parts.recon,
                mmd: parts.mmd,
            });
        }
    }

    Ok(TrainResult { enc, dec, history })
}

/// Decode `n` fresh prior draws.
pub fn generate(dec: &MlpParams, n: usize, seed: u64) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::invalid("generate needs n >= 1"));
    }
    let z = crate::data::gaussian_prior_sample(n, dec.input_dim(), seed)?;
    let (y, _) = mlp_forward(dec, &z.to_matrix())?;
    SampleSet::from_matrix(&y)
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub outputs: SampleSet,
    pub sq_errors: Vec<f64>,
    pub max_err: f64,
    pub mean_err: f64,
}

/// Round-trip `x` through the autoencoder and report per-sample squared
/// errors with their max and mean.
pub fn reconstruct(enc: &MlpParams, dec: &MlpParams, x: &SampleSet) -> Result<Reconstruction> {
    if x.is_empty() {
        return Err(Error::invalid("reconstruct needs at least one sample"));
    }
    let xm = x.to_matrix();
    let (f, _) = mlp_forward(enc, &xm)?;
    let (y, _) = mlp_forward(dec, &f)?;
    let sq_errors: Vec<f64> = (&y - &xm)
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|d| d * d).sum())
        .collect();
    let max_err = sq_errors.iter().cloned().fold(0.0, f64::max);
    let mean_err = sq_errors.iter().sum::<f64>() / sq_errors.len() as f64;
    Ok(Reconstruction {
        outputs: SampleSet::from_matrix(&y)?,
        sq_errors,
        max_err,
        mean_err,
    })
}

/// History CSV: `iter,total,recon,mmd` per row.
pub fn write_history(path: impl AsRef<Path>, history: &[HistoryRow]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    for row in history {
        writeln!(
            w,
            "{},{},{},{}",
            row.iter,
            fmt_f64(row.total),
            fmt_f64(row.recon),
            fmt_f64(row.mmd)
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_history(path: impl AsRef<Path>) -> Result<Vec<HistoryRow>> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::Parse {
                line: lineno,
                message: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let parse = |s: &str| -> Result<f64> {
            s.trim().parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad number `{s}`"),
            })
        };
        rows.push(HistoryRow {
            iter: fields[0].trim().parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad iteration `{}`", fields[0]),
            })?,
            total: parse(fields[1])?,
            recon: parse(fields[2])?,
            mmd: parse(fields[3])?,
        });
    }
    Ok(rows)
}
