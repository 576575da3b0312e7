//! Minibatch training of the autoencoder.
//!
//! Each batch runs the training-mode forward pass and the analytic backward
//! pass per document, averages the gradients, and takes one optimizer step.
//! Per-document gradients are summed in fixed chunks of [`REDUCTION_CHUNK`]
//! rows and the chunk sums are added in order, so the result is bit-identical
//! whether chunks run on one thread or many.

mod gradcheck;
mod optimizer;

pub use gradcheck::{grad_check, CheckMode};
pub use optimizer::{optimizer_step, OptimizerConfig, OptimizerKind, OptimizerState};

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::DocMatrix;
use crate::nn::{self, cross_entropy, forward, Gradients, ModelParams, Mode, NnError, Scalar};

pub const REDUCTION_CHUNK: usize = 16;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("optimizer produced non-finite parameters at step {step}")]
    NonFiniteUpdate { step: i32 },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub shuffle: bool,
    pub early_stop_patience: Option<usize>,
    /// Share of the rows held out for validation loss and early stopping.
    pub validation_fraction: f64,
    /// Run per-document work on the calling thread only.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            batch_size: 100,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            shuffle: true,
            early_stop_patience: Some(5),
            validation_fraction: 0.1,
            deterministic: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs < 1 {
            return Err(TrainError::Config("epochs must be >= 1".into()));
        }
        if self.batch_size < 1 {
            return Err(TrainError::Config("batch_size must be >= 1".into()));
        }
        let lr = self.optimizer.learning_rate;
        if !(lr.is_finite() && lr > 0.0) {
            return Err(TrainError::Config(format!("learning_rate must be > 0, got {lr}")));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(TrainError::Config(format!(
                "validation_fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

impl EpochLog {
    /// `epoch \t train_loss \t val_loss` (`-` when there is no validation set).
    pub fn tsv(&self) -> String {
        match self.val_loss {
            Some(v) => format!("{}\t{:.6}\t{:.6}", self.epoch, self.train_loss, v),
            None => format!("{}\t{:.6}\t-", self.epoch, self.train_loss),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean per-document loss over the training rows before the first update.
    pub initial_loss: f64,
    /// Mean per-document loss over the training rows after training.
    pub final_loss: f64,
    /// Running mean per-document loss of each epoch.
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<Option<f64>>,
    pub epochs_run: usize,
    /// Epoch whose parameters were returned (1-based; 0 if none improved).
    pub best_epoch: usize,
    pub wall_time: Duration,
    pub checksum: u64,
}

/// Number of competing units for a given hidden width: `⌈topics / 2⌉`.
pub fn default_k(num_topics: usize) -> Result<usize, TrainError> {
    if num_topics < 2 {
        return Err(TrainError::Config(format!("default_k needs at least 2 topics, got {num_topics}")));
    }
    Ok(num_topics.div_ceil(2))
}

/// FNV-1a over the little-endian bytes of `W`, `b`, `c`.
pub fn params_checksum(params: &ModelParams<f32>) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for section in params.sections() {
        for v in section {
            for byte in v.to_le_bytes() {
                hash ^= byte as u64;
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    hash
}

/// Mean per-document training-mode loss over `rows`.
pub fn mean_loss<T: Scalar>(data: &DocMatrix, rows: &[usize], params: &ModelParams<T>) -> Result<f64, NnError> {
    if rows.is_empty() {
        return Ok(0.0);
    }
    let losses: Vec<f64> = rows
        .par_iter()
        .map(|&r| {
            let x = &data.rows[r];
            forward(x, params, Mode::Train).map(|t| cross_entropy(x, &t.x_hat).to_f64_lossy())
        })
        .collect::<Result<_, _>>()?;
    Ok(losses.iter().sum::<f64>() / rows.len() as f64)
}

fn chunk_gradient<T: Scalar>(
    data: &DocMatrix,
    rows: &[usize],
    params: &ModelParams<T>,
) -> Result<Gradients<T>, NnError> {
    let mut grads = Gradients::zeros(params.hidden(), params.vocab());
    for &r in rows {
        let trace = forward(&data.rows[r], params, Mode::Train)?;
        nn::accumulate_backward(&trace, params, &mut grads)?;
    }
    Ok(grads)
}

/// Mean gradient over `rows`, with `loss` holding the summed loss.
pub fn batch_gradient<T: Scalar>(
    data: &DocMatrix,
    rows: &[usize],
    params: &ModelParams<T>,
    parallel: bool,
) -> Result<Gradients<T>, NnError> {
    let chunks: Vec<Gradients<T>> = if parallel {
        rows.par_chunks(REDUCTION_CHUNK)
            .map(|c| chunk_gradient(data, c, params))
            .collect::<Result<_, _>>()?
    } else {
        rows.chunks(REDUCTION_CHUNK)
            .map(|c| chunk_gradient(data, c, params))
            .collect::<Result<_, _>>()?
    };
    let mut total = Gradients::zeros(params.hidden(), params.vocab());
    for g in &chunks {
        total.add_assign(g);
    }
    let loss = total.loss;
    total.scale(T::one() / T::of_f64(rows.len() as f64));
    total.loss = loss;
    Ok(total)
}

/// Trains on every row of `data`. See [`fit_with_log`].
pub fn fit(
    data: &DocMatrix,
    params: ModelParams<f32>,
    cfg: &TrainConfig,
) -> Result<(ModelParams<f32>, TrainReport), TrainError> {
    fit_with_log(data, params, cfg, |_| {})
}

/// Trains the autoencoder, calling `on_epoch` after every epoch.
///
/// A seeded shuffle holds out `validation_fraction` of the rows. With a
/// validation set and `early_stop_patience`, training stops once the
/// validation loss has not improved for that many epochs and the best
/// parameters seen are returned.
pub fn fit_with_log<F: FnMut(&EpochLog)>(
    data: &DocMatrix,
    mut params: ModelParams<f32>,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<(ModelParams<f32>, TrainReport), TrainError> {
    cfg.validate()?;
    params.validate()?;
    if data.cols != params.vocab() {
        return Err(TrainError::Shape(format!(
            "corpus has {} columns, model vocabulary is {}",
            data.cols,
            params.vocab()
        )));
    }
    if data.is_empty() {
        return Err(TrainError::Config("no training rows".into()));
    }
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let n_val = if cfg.validation_fraction > 0.0 && data.len() > 1 {
        ((data.len() as f64 * cfg.validation_fraction).round() as usize).clamp(1, data.len() - 1)
    } else {
        0
    };
    let (val_rows, train_rows) = order.split_at(n_val);
    let val_rows = val_rows.to_vec();
    let mut train_rows = train_rows.to_vec();
    train_rows.sort_unstable();

    let initial_loss = mean_loss(data, &train_rows, &params)?;
    let mut state = OptimizerState::new(&params);
    let mut report = TrainReport {
        initial_loss,
        final_loss: initial_loss,
        train_loss: Vec::with_capacity(cfg.epochs),
        val_loss: Vec::with_capacity(cfg.epochs),
        epochs_run: 0,
        best_epoch: 0,
        wall_time: Duration::ZERO,
        checksum: 0,
    };
    let mut best: Option<(f64, ModelParams<f32>)> = None;
    let mut stale = 0;

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            train_rows.shuffle(&mut rng);
        }
        let mut epoch_loss = 0.0f64;
        for (batch, rows) in train_rows.chunks(cfg.batch_size).enumerate() {
            let grads = batch_gradient(data, rows, &params, !cfg.deterministic)?;
            if !grads.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch });
            }
            epoch_loss += grads.loss as f64;
            optimizer_step(&mut params, &grads, &mut state, &cfg.optimizer)?;
        }
        let train_loss = epoch_loss / train_rows.len() as f64;
        let val_loss = if val_rows.is_empty() {
            None
        } else {
            Some(mean_loss(data, &val_rows, &params)?)
        };
        report.train_loss.push(train_loss);
        report.val_loss.push(val_loss);
        report.epochs_run = epoch;
        on_epoch(&EpochLog {
            epoch,
            train_loss,
            val_loss,
        });

        if let Some(v) = val_loss {
            if !v.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch: 0 });
            }
            if best.as_ref().is_none_or(|(b, _)| v < *b) {
                best = Some((v, params.clone()));
                report.best_epoch = epoch;
                stale = 0;
            } else {
                stale += 1;
                if cfg.early_stop_patience.is_some_and(|p| stale >= p) {
                    break;
                }
            }
        } else {
            report.best_epoch = epoch;
        }
    }

    if cfg.early_stop_patience.is_some() {
        if let Some((_, best_params)) = best {
            params = best_params;
        }
    }
    report.final_loss = mean_loss(data, &train_rows, &params)?;
    report.wall_time = started.elapsed();
    report.checksum = params_checksum(&params);
    Ok((params, report))
}
