use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::config::HgnnConfig;
use super::network::{hgnn_forward, loss_and_gradient};
use super::params::HgnnParams;
use crate::error::{Error, Result};
use crate::metrics::{macro_report, ConfusionMatrix};
use crate::mfdfa::fmt_f64;
use crate::synth::seeded_rng;

/// Per-sample gradients are summed within fixed-size chunks and the chunk
/// sums are added in order, so the result does not depend on thread count.
const REDUCE_CHUNK: usize = 8;

/// A fractal series with its 0-based class index.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub hfs: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSchedule {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainSchedule {
    fn default() -> Self {
        Self {
            learning_rate: 1e-5,
            epochs: 50,
            batch_size: 128,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "invalid learning rate {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch size must be positive".into(),
            ));
        }
        let moments_ok = (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2);
        if !moments_ok || self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(Error::Config(
                "Adam moments must lie in [0, 1) and epsilon must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_macro_f1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best epoch, see [`train`].
    pub params: HgnnParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

fn check_samples(samples: &[Sample], config: &HgnnConfig, input_len: usize) -> Result<()> {
    for (i, s) in samples.iter().enumerate() {
        if s.hfs.len() != input_len {
            return Err(Error::invalid(format!(
                "sample {i} has {} values, expected {input_len}",
                s.hfs.len()
            )));
        }
        if s.label >= config.num_classes {
            return Err(Error::invalid(format!(
                "sample {i} has label {} outside 0..{}",
                s.label, config.num_classes
            )));
        }
    }
    Ok(())
}

/// Confusion matrix of the model's predictions on `samples`.
pub fn evaluate(params: &HgnnParams, samples: &[Sample]) -> Result<ConfusionMatrix> {
    let preds: Vec<usize> = samples
        .par_iter()
        .map(|s| hgnn_forward(&s.hfs, params).map(|t| t.predicted()))
        .collect::<Result<_>>()?;
    let mut m = ConfusionMatrix::new(params.config.num_classes);
    for (s, p) in samples.iter().zip(preds) {
        m.record(s.label, p)?;
    }
    Ok(m)
}

/// Summed loss and gradient over `batch`.
fn batch_gradient(params: &HgnnParams, batch: &[&Sample]) -> Result<(f64, HgnnParams)> {
    let partial: Vec<(f64, HgnnParams)> = batch
        .par_chunks(REDUCE_CHUNK)
        .map(|chunk| {
            let mut acc = params.zeros_like();
            let mut loss = 0.0;
            for s in chunk {
                let (l, g) = loss_and_gradient(&s.hfs, s.label, params)?;
                loss += l;
                acc.add_assign(&g);
            }
            Ok((loss, acc))
        })
        .collect::<Result<_>>()?;
    let mut iter = partial.into_iter();
    let (mut loss, mut grad) = iter.next().expect("batch is non-empty");
    for (l, g) in iter {
        loss += l;
        grad.add_assign(&g);
    }
    Ok((loss, grad))
}

/// Higher validation macro-F1 wins; a small validation split often ties, so
/// equal scores go to the lower training loss, then to the earlier epoch.
fn better(a: &EpochRecord, b: &EpochRecord) -> bool {
    a.val_macro_f1 > b.val_macro_f1
        || (a.val_macro_f1 == b.val_macro_f1 && a.train_loss < b.train_loss)
}

/// Minibatch Adam on softmax cross-entropy. Validation macro-F1 is measured
/// after every epoch; with an empty validation set the training set is used.
pub fn train(
    train_set: &[Sample],
    validation: &[Sample],
    config: &HgnnConfig,
    schedule: &TrainSchedule,
) -> Result<TrainOutcome> {
    schedule.validate()?;
    let first = train_set
        .first()
        .ok_or_else(|| Error::invalid("training set is empty"))?;
    let input_len = first.hfs.len();
    config.validate_input(input_len)?;
    check_samples(train_set, config, input_len)?;
    check_samples(validation, config, input_len)?;
    let selection = if validation.is_empty() {
        train_set
    } else {
        validation
    };

    let mut params = HgnnParams::init(config)?;
    let mut opt = Adam::new(
        params.param_count(),
        schedule.learning_rate,
        schedule.beta1,
        schedule.beta2,
        schedule.epsilon,
    );
    let mut rng = seeded_rng(config.seed ^ 0x5851_f42d_4c95_7f2d);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(schedule.epochs);
    let mut best: Option<(EpochRecord, HgnnParams)> = None;

    for epoch in 1..=schedule.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for idx in order.chunks(schedule.batch_size) {
            let batch: Vec<&Sample> = idx.iter().map(|&i| &train_set[i]).collect();
            let (loss, mut grad) = batch_gradient(&params, &batch)?;
            if !loss.is_finite() {
                return Err(Error::TrainingDiverged { epoch });
            }
            total += loss;
            grad.scale(1.0 / batch.len() as f64);
            opt.step(&mut params, &grad);
        }
        if params.flatten().iter().any(|v| !v.is_finite()) {
            return Err(Error::TrainingDiverged { epoch });
        }
        let f1 = macro_report(&evaluate(&params, selection)?).macro_avg.f1;
        let record = EpochRecord {
            epoch,
            train_loss: total / train_set.len() as f64,
            val_macro_f1: f1,
        };
        history.push(record);
        if best.as_ref().is_none_or(|(b, _)| better(&record, b)) {
            best = Some((record, params.clone()));
        }
    }
    let (record, params) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        params,
        history,
        best_epoch: record.epoch,
    })
}

pub const HISTORY_CSV_HEADER: &str = "epoch,train_loss,val_macro_f1";

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from(HISTORY_CSV_HEADER);
    out.push('\n');
    for r in history {
        out.push_str(&format!(
            "{},{},{}\n",
            r.epoch,
            fmt_f64(r.train_loss),
            fmt_f64(r.val_macro_f1)
        ));
    }
    out
}
