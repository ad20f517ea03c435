use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;

use super::{adam_step, final_step, mse_loss, AdamState, EpochRecord, TrainConfig, TrainingHistory};
use crate::checkpoint::Checkpoint;
use crate::data::{PreparedData, WindowedDataset};
use crate::error::{Error, Result};
use crate::forecaster::{Forecaster, ModelConfig};
use crate::tensor::{ForwardCtx, ModelParameters, Tape, Var};
use crate::JobRng;

/// Shuffle and dropout draw from stream 1 of the seed; initialization uses
/// the seed directly.
const TRAIN_STREAM: u64 = 1;

pub fn training_rng(seed: u64) -> JobRng {
    let mut rng = JobRng::seed_from_u64(seed);
    rng.set_stream(TRAIN_STREAM);
    rng
}

fn batch_loss(
    tape: &mut Tape,
    model: &Forecaster,
    pred: Var,
    target: Vec<f64>,
    batch: usize,
    final_only: bool,
) -> Result<Var> {
    let m = model.horizon();
    let target = tape.constant(&[batch, m, 1], target)?;
    if final_only {
        let (p, t) = (final_step(tape, pred)?, final_step(tape, target)?);
        mse_loss(tape, p, t)
    } else {
        mse_loss(tape, pred, target)
    }
}

/// One pass over `data` in shuffled batches. Returns the epoch's mean
/// squared error (unhalved, weighted by batch size).
pub fn train_epoch(
    model: &Forecaster,
    params: &mut ModelParameters,
    data: &WindowedDataset,
    state: &mut AdamState,
    cfg: &TrainConfig,
    rng: &mut JobRng,
    epoch: usize,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::data("training set has no windows"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(rng);
    let l = model.seq_len();
    let mut total = 0.0;
    for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
        let (x, y) = data.gather(idx);
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let x = tape.constant(&[idx.len(), l, 1], x)?;
        let pred = model.forward(&mut tape, &bound, x, &mut ForwardCtx::train(rng))?;
        let loss = batch_loss(&mut tape, model, pred, y, idx.len(), cfg.final_step_only)?;
        let value = tape.scalar(loss)?;
        if !value.is_finite() {
            return Err(Error::Divergence {
                epoch,
                batch: b + 1,
                loss: value,
            });
        }
        let vars = bound.into_vars();
        let grads = tape.backward(loss)?;
        params.zero_grad();
        params.accumulate_grads(&vars, &grads)?;
        adam_step(params, state, cfg)?;
        total += 2.0 * value * idx.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Evaluation-mode MSE over the same targets the loss is trained on.
pub fn dataset_mse(
    model: &Forecaster,
    params: &ModelParameters,
    data: &WindowedDataset,
    final_only: bool,
) -> Result<f64> {
    let preds = model.predict(params, &data.inputs())?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, s) in preds.iter().zip(data.samples()) {
        let pairs = p.iter().zip(&s.y);
        let skip = if final_only { s.y.len() - 1 } else { 0 };
        for (a, b) in pairs.skip(skip) {
            sum += (a - b) * (a - b);
            n += 1;
        }
    }
    Ok(sum / n.max(1) as f64)
}

/// Trains from `params` for `cfg.epochs` epochs, recording test MSE after
/// every epoch when a test set is given. The test loss is only recorded,
/// never used to pick parameters.
pub fn train_loop(
    model: &Forecaster,
    mut params: ModelParameters,
    train: &WindowedDataset,
    test: Option<&WindowedDataset>,
    cfg: &TrainConfig,
) -> Result<(ModelParameters, TrainingHistory)> {
    cfg.validate()?;
    let mut state = AdamState::new(&params);
    let mut rng = training_rng(cfg.seed);
    let mut history = TrainingHistory::default();
    let start = Instant::now();
    for epoch in 1..=cfg.epochs {
        let train_mse = train_epoch(model, &mut params, train, &mut state, cfg, &mut rng, epoch)?;
        let test_mse = test
            .map(|t| dataset_mse(model, &params, t, cfg.final_step_only))
            .transpose()?;
        log::debug!(
            "{} epoch {epoch}: train {train_mse:.6e} test {test_mse:?}",
            model.kind()
        );
        history.epochs.push(EpochRecord {
            epoch,
            train_mse,
            test_mse,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    params.clear_grads();
    Ok((params, history))
}

pub struct FitOutput {
    pub model: Forecaster,
    pub params: ModelParameters,
    pub history: TrainingHistory,
}

/// Builds the model, initializes it from `cfg.seed`, trains, and writes a
/// checkpoint (with the data's scaler) when `checkpoint` is given.
pub fn fit(
    model_cfg: &ModelConfig,
    data: &PreparedData,
    cfg: &TrainConfig,
    checkpoint: Option<&Path>,
) -> Result<FitOutput> {
    if model_cfg.seq_len() != data.train.seq_len() || model_cfg.horizon() != data.train.horizon() {
        return Err(Error::config(format!(
            "model expects (seq_len {}, horizon {}) but data windows are ({}, {})",
            model_cfg.seq_len(),
            model_cfg.horizon(),
            data.train.seq_len(),
            data.train.horizon()
        )));
    }
    let model = Forecaster::new(model_cfg)?;
    let params = model.init_parameters(cfg.seed)?;
    let (params, history) = train_loop(&model, params, &data.train, Some(&data.test), cfg)?;
    if let Some(path) = checkpoint {
        Checkpoint {
            model: model_cfg.clone(),
            scaler: Some(data.scaler),
            params: params.clone(),
        }
        .save(path)?;
    }
    Ok(FitOutput { model, params, history })
}
