//! Mini-batch training with Adam, learning-rate halving on validation
//! plateaus and early stopping.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::adam::Adam;
use crate::nn::network::{Network, Signal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub batch_size: usize,
    pub lr0: f64,
    /// Epochs without validation improvement before the learning rate halves.
    pub plateau_patience: usize,
    /// Epochs without validation improvement before training stops.
    pub stop_patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Train on random `(height, width)` crops instead of whole images.
    pub crop: Option<(usize, usize)>,
    /// Worker threads for per-sample gradients; 1 forces serial execution.
    /// Results do not depend on this value.
    pub threads: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            lr0: 1e-4,
            plateau_patience: 10,
            stop_patience: 20,
            max_epochs: 1000,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            crop: None,
            threads: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.plateau_patience < 1 {
            return bad("plateau_patience must be at least 1");
        }
        if self.stop_patience < self.plateau_patience {
            return bad("stop_patience must be at least plateau_patience");
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.max_epochs == 0 {
            return bad("max_epochs must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.eps <= 0.0
        {
            return bad("Adam betas must lie in [0, 1) and eps must be positive");
        }
        if matches!(self.crop, Some((h, w)) if h == 0 || w == 0) {
            return bad("crop extent must be positive");
        }
        Ok(())
    }
}

/// One input/target pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Signal,
    pub target: Signal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub history: Vec<EpochRecord>,
    /// Epoch whose weights were kept (lowest validation loss).
    pub best_epoch: usize,
    pub best_val_loss: f64,
    /// True if training ended by early stopping rather than the epoch cap.
    pub early_stopped: bool,
}

/// Per-sample loss `Σ (ŷ − y)²` over all real scalars.
pub fn sample_loss(net: &Network, s: &Sample) -> Result<f64> {
    let y = net.forward(&s.input)?;
    check_target(&y, &s.target)?;
    Ok(sq_dist(y.values(), s.target.values()))
}

/// Mean per-sample loss over a set.
pub fn evaluate(net: &Network, set: &[Sample], threads: usize) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Config("empty evaluation set".into()));
    }
    with_pool(threads, || mean_loss(net, set))
}

fn mean_loss(net: &Network, set: &[Sample]) -> Result<f64> {
    let losses = set
        .par_iter()
        .map(|s| sample_loss(net, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(losses.iter().sum::<f64>() / set.len() as f64)
}

fn check_target(y: &Signal, t: &Signal) -> Result<()> {
    if y.shape() != t.shape() || y.domain() != t.domain() {
        return Err(Error::Dimension(format!(
            "network output {} does not match target {}",
            y.shape(),
            t.shape()
        )));
    }
    Ok(())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Loss and parameter gradient of one sample scaled by `scale`.
fn sample_gradient(net: &Network, s: &Sample, scale: f64) -> Result<(f64, Vec<f64>)> {
    let tape = net.forward_recorded(&s.input)?;
    check_target(&tape.output, &s.target)?;
    let (y, t) = (tape.output.values(), s.target.values());
    let loss = sq_dist(y, t);
    let dout: Vec<f64> = y
        .iter()
        .zip(t)
        .map(|(p, q)| 2.0 * scale * (p - q))
        .collect();
    let dout = tape.output.with_values(tape.output.shape(), dout)?;
    let mut grad = vec![0.0; net.param_count()];
    net.backward(&tape, &dout, &mut grad)?;
    Ok((loss, grad))
}

/// Batch loss `(1/n) Σ_i loss_i` and its gradient, summed in sample order.
pub fn batch_gradient(net: &Network, batch: &[Sample]) -> Result<(f64, Vec<f64>)> {
    let n = batch.len() as f64;
    let parts: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|s| sample_gradient(net, s, 1.0 / n))
        .collect::<Result<_>>()?;
    let mut grad = vec![0.0; net.param_count()];
    let mut loss = 0.0;
    for (l, g) in &parts {
        loss += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    Ok((loss / n, grad))
}

fn random_crop(s: &Sample, crop: (usize, usize), rng: &mut ChaCha8Rng) -> Sample {
    let shape = s.input.shape();
    let h = crop.0.min(shape.height);
    let w = crop.1.min(shape.width);
    let top = rng.gen_range(0..=shape.height - h);
    let left = rng.gen_range(0..=shape.width - w);
    Sample {
        input: s.input.crop(top, left, h, w),
        target: s.target.crop(top, left, h, w),
    }
}

/// Train `net` in place. On return the network holds the weights of the
/// epoch with the lowest validation loss.
pub fn train(
    net: &mut Network,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainerConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Config(
            "training and validation sets must be non-empty".into(),
        ));
    }
    with_pool(cfg.threads, || run(net, train_set, val_set, cfg))
}

fn run(
    net: &mut Network,
    train_set: &[Sample],
    val_set: &[Sample],
    cfg: &TrainerConfig,
) -> Result<TrainReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = net.params_flat();
    let mut adam = Adam::new(params.len(), cfg.beta1, cfg.beta2, cfg.eps);
    let mut lr = cfg.lr0;
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut history = Vec::new();
    let mut best = (0, f64::INFINITY, params.clone());
    let mut since_best = 0;
    let mut since_halving = 0;
    let mut early_stopped = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut train_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<Sample> = chunk
                .iter()
                .map(|&i| match cfg.crop {
                    Some(c) => random_crop(&train_set[i], c, &mut rng),
                    None => train_set[i].clone(),
                })
                .collect();
            let (loss, grad) = batch_gradient(net, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Degenerate(format!(
                    "training loss diverged at epoch {epoch}"
                )));
            }
            train_sum += loss * chunk.len() as f64;
            adam.step(&mut params, &grad, lr);
            net.set_params_flat(&params)?;
        }
        let train_loss = train_sum / train_set.len() as f64;
        let val_loss = mean_loss(net, val_set)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
        log::info!("epoch {epoch}: train {train_loss:.6e} val {val_loss:.6e} lr {lr:.3e}");

        if val_loss < best.1 {
            best = (epoch, val_loss, params.clone());
            since_best = 0;
            since_halving = 0;
        } else {
            since_best += 1;
            since_halving += 1;
            if since_best >= cfg.stop_patience {
                early_stopped = true;
                break;
            }
            if since_halving >= cfg.plateau_patience {
                lr *= 0.5;
                since_halving = 0;
            }
        }
    }

    net.set_params_flat(&best.2)?;
    Ok(TrainReport {
        history,
        best_epoch: best.0,
        best_val_loss: best.1,
        early_stopped,
    })
}
