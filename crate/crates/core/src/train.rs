//! SGD-with-momentum training loop: seeded shuffling, optional on-the-fly
//! augmentation, per-epoch validation, best-checkpoint tracking, divergence
//! guard, and a deterministic history log. All randomness is derived from
//! (seed, purpose, epoch/step/record indices), so runs replay identically
//! for any worker count and across checkpoint resumes.

use crate::checkpoint::OptState;
use crate::data::augment::{augment, AugmentConfig};
use crate::data::DatasetRecord;
use crate::error::{Error, Result};
use crate::metrics::{confusion_matrix, metrics_from_confusion, EvalReport};
use crate::model::{argmax, Batch, Gradients, Model};
use crate::parallel::{for_each_chunk, Exec};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LrSchedule {
    Constant,
    /// Multiply the rate by `factor` every `every` epochs.
    Step { factor: f64, every: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub lr_schedule: LrSchedule,
    pub seed: u64,
    pub workers: usize,
    /// Augmentation for the training split; records are used as-is when None.
    pub augment: Option<AugmentConfig>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            learning_rate: 0.008,
            batch_size: 32,
            momentum: 0.9,
            lr_schedule: LrSchedule::Constant,
            seed: 0,
            workers: 1,
            augment: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // zero is allowed (null update); negative rates are rejected
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidConfig(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.learning_rate,
            LrSchedule::Step { factor, every } => {
                let drops = (epoch.saturating_sub(1)) / every.max(1);
                self.learning_rate * factor.powi(drops as i32)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

impl EpochRecord {
    pub fn log_line(&self) -> String {
        format!(
            "epoch={} lr={:.6} train_loss={:.6} train_acc={:.6} val_loss={:.6} val_acc={:.6}",
            self.epoch, self.lr, self.train_loss, self.train_acc, self.val_loss, self.val_acc
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    /// Line-delimited log, one record per epoch, byte-deterministic.
    pub fn log_bytes(&self) -> Vec<u8> {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&r.log_line());
            out.push('\n');
        }
        out.into_bytes()
    }

    pub fn best_val_acc(&self) -> f64 {
        self.records.iter().map(|r| r.val_acc).fold(0.0, f64::max)
    }

    pub fn best_train_acc(&self) -> f64 {
        self.records.iter().map(|r| r.train_acc).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: History,
    /// Snapshot at the best validation accuracy.
    pub best_model: Model<f32>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    /// Optimizer state after the final epoch (for exact resume).
    pub final_opt: OptState<f32>,
}

/// v <- momentum * v - lr * g; p <- p + v, elementwise on one tensor.
pub fn sgd_update<S: Scalar>(
    param: &mut Tensor<S>,
    grad: &Tensor<S>,
    velocity: &mut Tensor<S>,
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if grad.shape() != param.shape() || velocity.shape() != param.shape() {
        return Err(Error::ShapeMismatch(format!(
            "sgd_update: param {:?}, grad {:?}, velocity {:?}",
            param.shape(),
            grad.shape(),
            velocity.shape()
        )));
    }
    let lr = S::from_f64(lr);
    let m = S::from_f64(momentum);
    for ((pv, &gv), vv) in param
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(velocity.data_mut())
    {
        *vv = m * *vv - lr * gv;
        *pv += *vv;
    }
    Ok(())
}

/// Applies `sgd_update` to every trainable tensor of the model, in canonical
/// parameter order.
pub fn sgd_step<S: Scalar>(
    model: &mut Model<S>,
    grads: &Gradients<S>,
    velocity: &mut [Tensor<S>],
    lr: f64,
    momentum: f64,
) -> Result<()> {
    let mut ix = 0usize;
    let mut status = Ok(());
    model.visit_params_mut(&mut |name, param, trainable| {
        if !trainable || status.is_err() {
            return;
        }
        let (Some(g), Some(v)) = (grads.slots.get(ix), velocity.get_mut(ix)) else {
            status = Err(Error::ShapeMismatch(format!(
                "no gradient slot for parameter {name}"
            )));
            return;
        };
        if let Err(e) = sgd_update(param, g, v, lr, momentum) {
            status = Err(Error::ShapeMismatch(format!("{name}: {e}")));
            return;
        }
        ix += 1;
    });
    status?;
    if ix != grads.slots.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} gradient slots for {ix} trainable tensors",
            grads.slots.len()
        )));
    }
    Ok(())
}

pub fn zero_velocity<S: Scalar>(model: &Model<S>) -> Vec<Tensor<S>> {
    model
        .trainable_shapes()
        .into_iter()
        .map(|(_, shape)| Tensor::zeros(shape))
        .collect()
}

/// Stacks records (augmented when configured) into one batch tensor. Each
/// sample's augmentation stream is derived from (seed, epoch, record index),
/// never from the worker that happens to process it.
pub fn assemble_batch(
    records: &[DatasetRecord],
    indices: &[usize],
    input: (usize, usize, usize),
    augment_cfg: Option<(&AugmentConfig, u64)>,
    epoch: usize,
    exec: Exec,
) -> Result<Batch<f32>> {
    let (c, h, w) = input;
    let plane = c * h * w;
    let mut images = Tensor::zeros(vec![indices.len(), c, h, w]);
    let failure: std::sync::Mutex<Option<Error>> = std::sync::Mutex::new(None);
    for_each_chunk(exec, images.data_mut(), plane, |slot, out| {
        let rec = &records[indices[slot]];
        let pixels = match augment_cfg {
            Some((aug, seed)) => {
                let mut rng = Rng::derive(seed, "augment", &[epoch as u64, indices[slot] as u64]);
                match augment(rec, &mut rng, aug) {
                    Ok((augmented, _)) => {
                        out.copy_from_slice(augmented.image.data());
                        return;
                    }
                    Err(e) => {
                        *failure.lock().unwrap() = Some(e);
                        return;
                    }
                }
            }
            None => rec.image.data(),
        };
        if pixels.len() != plane {
            *failure.lock().unwrap() = Some(Error::ShapeMismatch(format!(
                "record {} has shape {:?}, model expects ({c}, {h}, {w})",
                rec.source_id,
                rec.image.shape()
            )));
            return;
        }
        out.copy_from_slice(pixels);
    });
    if let Some(e) = failure.lock().unwrap().take() {
        return Err(e);
    }
    let labels = indices.iter().map(|&ix| records[ix].label).collect();
    Ok(Batch { images, labels })
}

/// Inference-mode evaluation: mean loss plus the full metric report.
pub fn evaluate(
    model: &Model<f32>,
    records: &[DatasetRecord],
    batch_size: usize,
    exec: Exec,
) -> Result<(f64, EvalReport)> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let k = model.config.num_classes;
    let (h, w) = model.config.input_size;
    let input = (model.config.in_channels, h, w);
    let mut truths = Vec::with_capacity(records.len());
    let mut preds = Vec::with_capacity(records.len());
    let mut loss_sum = 0.0;
    let indices: Vec<usize> = (0..records.len()).collect();
    for chunk in indices.chunks(batch_size.max(1)) {
        let batch = assemble_batch(records, chunk, input, None, 0, exec)?;
        let probs = model.predict(&batch.images, exec)?;
        loss_sum += crate::layers::act::cross_entropy(&probs, &batch.labels)? * chunk.len() as f64;
        for (row, &label) in probs.data().chunks(k).zip(&batch.labels) {
            truths.push(label);
            preds.push(argmax(row));
        }
    }
    let matrix = confusion_matrix(&truths, &preds, k)?;
    Ok((loss_sum / records.len() as f64, metrics_from_confusion(&matrix)?))
}

/// Runs the optimization loop. `resume` continues from a checkpointed
/// optimizer state; `sink` observes each epoch (record, current model,
/// optimizer state) for logging and periodic checkpointing. On divergence
/// the model is restored to the last finite epoch and
/// `DivergenceDetected` is returned.
pub fn train(
    model: &mut Model<f32>,
    train_set: &[DatasetRecord],
    val_set: &[DatasetRecord],
    cfg: &TrainConfig,
    resume: Option<OptState<f32>>,
    sink: &mut dyn FnMut(&EpochRecord, &Model<f32>, &OptState<f32>),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let k = model.config.num_classes;
    for rec in train_set.iter().chain(val_set) {
        if rec.label >= k {
            return Err(Error::InvalidLabel {
                label: rec.label,
                classes: k,
            });
        }
    }
    let exec = Exec::new(cfg.workers);
    let input = (
        model.config.in_channels,
        model.config.input_size.0,
        model.config.input_size.1,
    );

    let (start_epoch, mut velocity, mut best_val_acc) = match resume {
        Some(state) => (state.epoch, state.velocity, state.best_val),
        None => (0, zero_velocity(model), 0.0),
    };
    let mut history = History::default();
    let mut best_model = model.clone();
    let mut best_epoch = start_epoch;
    let mut last_good = model.clone();

    for epoch in start_epoch + 1..=cfg.epochs {
        let lr = cfg.lr_at(epoch);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        Rng::derive(cfg.seed, "shuffle", &[epoch as u64]).shuffle(&mut order);

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        let mut seen = 0usize;
        for (step, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = assemble_batch(
                train_set,
                chunk,
                input,
                cfg.augment.as_ref().map(|a| (a, cfg.seed)),
                epoch,
                exec,
            )?;
            let mut drop_rng = Rng::derive(cfg.seed, "dropout", &[epoch as u64, step as u64]);
            let out = model.loss_and_grads(&batch, &mut drop_rng, exec)?;
            if !out.loss.is_finite() {
                *model = last_good;
                return Err(Error::DivergenceDetected { epoch });
            }
            sgd_step(model, &out.grads, &mut velocity, lr, cfg.momentum)?;
            model.apply_bn_updates(&out.bn_updates);
            loss_sum += out.loss * chunk.len() as f64;
            correct += out.correct;
            seen += chunk.len();
        }
        let train_loss = loss_sum / seen as f64;
        let train_acc = correct as f64 / seen as f64;
        let (val_loss, val_acc) = if val_set.is_empty() {
            (f64::NAN, 0.0)
        } else {
            let (loss, report) = evaluate(model, val_set, cfg.batch_size, exec)?;
            (loss, report.accuracy)
        };
        let record = EpochRecord {
            epoch,
            lr,
            train_loss,
            train_acc,
            val_loss,
            val_acc,
        };
        if val_acc > best_val_acc || history.records.is_empty() && best_epoch == start_epoch {
            best_val_acc = best_val_acc.max(val_acc);
            best_model = model.clone();
            best_epoch = epoch;
        }
        let state = OptState {
            epoch,
            best_val: best_val_acc,
            velocity: velocity.clone(),
        };
        sink(&record, model, &state);
        history.records.push(record);
        last_good = model.clone();
    }
    let final_opt = OptState {
        epoch: cfg.epochs,
        best_val: best_val_acc,
        velocity,
    };
    Ok(TrainOutcome {
        history,
        best_model,
        best_epoch,
        best_val_acc,
        final_opt,
    })
}
