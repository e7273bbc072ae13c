use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::model::{ConvLstmModel, TARGET_CHANNEL};
use crate::nn::{mae_loss, Adam, LrSchedule, NnError, NormMode, Tensor};
use crate::preprocess::SampleTensor;

pub const DEFAULT_EPOCHS: usize = 100;
pub const DEFAULT_BATCH: usize = 8;
/// Training stops when validation MAE exceeds this multiple of its initial value.
pub const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrain,
    #[error("sample shape {got:?} does not fit the model ({expected} input channels, at least 2 frames)")]
    Shape { got: [usize; 4], expected: usize },
    #[error("fire {0} appears in both the training and validation sets")]
    Leak(String),
    #[error("diverged at epoch {epoch}: validation MAE {val_mae} vs initial {initial}")]
    Diverged { epoch: usize, val_mae: f64, initial: f64 },
    #[error(transparent)]
    Nn(#[from] NnError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub schedule: LrSchedule,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: DEFAULT_EPOCHS, batch_size: DEFAULT_BATCH, schedule: LrSchedule::default(), seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// Mean of the per-batch training losses.
    pub train_mae: f64,
    /// `None` when the validation set is empty.
    pub val_mae: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation MAE (training
    /// MAE when there is no validation set).
    pub best: ConvLstmModel<f32>,
    pub best_epoch: usize,
    pub initial_val_mae: Option<f64>,
    pub log: Vec<EpochLog>,
}

/// `(inputs [B,T,H,W,C], targets [B,T-1,H,W,1])` for the given sample indices.
pub fn make_batch(samples: &SampleTensor, indices: &[usize]) -> Result<(Tensor<f32>, Tensor<f32>), NnError> {
    let (t, h, w, c) = (samples.t_len, samples.height, samples.width, samples.channels);
    let frame = h * w;
    let mut x = Vec::with_capacity(indices.len() * samples.sample_len());
    let mut y = Vec::with_capacity(indices.len() * (t - 1) * frame);
    for &i in indices {
        let s = samples.sample(i);
        x.extend_from_slice(s);
        y.extend(s[frame * c..].iter().skip(TARGET_CHANNEL).step_by(c).copied());
    }
    let b = indices.len();
    Ok((Tensor::from_vec(&[b, t, h, w, c], x)?, Tensor::from_vec(&[b, t - 1, h, w, 1], y)?))
}

/// One-step-ahead MAE over a whole set with batch norm in inference mode.
pub fn evaluate(model: &mut ConvLstmModel<f32>, samples: &SampleTensor, batch_size: usize) -> Result<f64, NnError> {
    let mut total = 0.0;
    let mut count = 0usize;
    let order: Vec<usize> = (0..samples.len()).collect();
    for chunk in order.chunks(batch_size.max(1)) {
        let (x, y) = make_batch(samples, chunk)?;
        let (pred, _) = model.forward_sequence(&x, NormMode::Infer)?;
        total += pred.data().iter().zip(y.data()).map(|(p, t)| (p - t).abs() as f64).sum::<f64>();
        count += y.len();
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}

fn check(model: &ConvLstmModel<f32>, s: &SampleTensor) -> Result<(), TrainError> {
    let expected = model.config().in_channels;
    if s.channels != expected || s.t_len < 2 {
        return Err(TrainError::Shape { got: [s.t_len, s.height, s.width, s.channels], expected });
    }
    Ok(())
}

/// Teacher-forced training with Adam and a step-decay learning rate.
/// `on_epoch` sees every log row as soon as it is produced.
pub fn train(
    mut model: ConvLstmModel<f32>,
    train_set: &SampleTensor,
    val_set: &SampleTensor,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, TrainError> {
    if train_set.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    check(&model, train_set)?;
    if !val_set.is_empty() {
        check(&model, val_set)?;
    }
    if let Some(p) = val_set.provenance.iter().find(|v| train_set.provenance.iter().any(|t| t.fire_id == v.fire_id)) {
        return Err(TrainError::Leak(p.fire_id.clone()));
    }

    let batch = config.batch_size.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = Adam::default();
    let initial_val_mae = if val_set.is_empty() { None } else { Some(evaluate(&mut model, val_set, batch)?) };
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_score = f64::INFINITY;
    let mut log = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 0..config.epochs {
        let lr = config.schedule.rate(epoch);
        order.shuffle(&mut rng);
        let mut losses = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(batch) {
            let (x, y) = make_batch(train_set, chunk)?;
            model.zero_grad();
            let (pred, mut cache) = model.forward_sequence(&x, NormMode::Train)?;
            let loss = mae_loss(&pred, &y, None)?;
            model.backward(&mut cache, &loss.grad)?;
            adam.step(model.params_mut(), lr);
            losses += loss.value as f64;
            batches += 1;
        }
        let train_mae = losses / batches as f64;
        let val_mae = if val_set.is_empty() { None } else { Some(evaluate(&mut model, val_set, batch)?) };
        let row = EpochLog { epoch, lr, train_mae, val_mae };
        on_epoch(&row);
        log.push(row);

        if let (Some(v), Some(initial)) = (val_mae, initial_val_mae) {
            if !v.is_finite() || v > DIVERGENCE_FACTOR * initial {
                return Err(TrainError::Diverged { epoch, val_mae: v, initial });
            }
        }
        let score = val_mae.unwrap_or(train_mae);
        if !score.is_finite() {
            return Err(TrainError::Diverged { epoch, val_mae: score, initial: initial_val_mae.unwrap_or(f64::NAN) });
        }
        if score < best_score {
            best_score = score;
            best_epoch = epoch;
            best = model.clone();
        }
    }
    Ok(TrainOutcome { best, best_epoch, initial_val_mae, log })
}

pub const LOG_HEADER: &str = "epoch,lr,train_mae,val_mae";

/// Renders the training log as CSV; an empty validation set leaves `val_mae` blank.
pub fn log_csv(log: &[EpochLog]) -> String {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for r in log {
        let val = r.val_mae.map(|v| format!("{v:.8}")).unwrap_or_default();
        let _ = writeln!(out, "{},{:e},{:.8},{}", r.epoch, r.lr, r.train_mae, val);
    }
    out
}
