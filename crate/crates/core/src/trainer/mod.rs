//! Adam training with plateau learning-rate decay, early stopping and
//! best-epoch model selection on validation Dice.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attunet::{predict_batch, AttentionUNet};
use crate::datapipe::{Mask, SliceImage};
use crate::error::{Error, Result};
use crate::evalstats::dice;
use crate::nnkit::{dice_loss, dice_loss_backward, AdamState, Tensor};

/// Training hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Multiplicative learning-rate drop on a validation plateau.
    pub drop_factor: f64,
    /// Epochs without improvement before the learning rate drops.
    pub lr_patience: usize,
    /// Epochs without improvement before training stops.
    pub stop_patience: usize,
    pub max_epochs: usize,
    /// Minimum validation-Dice increase that counts as an improvement.
    pub min_delta: f64,
    /// Dice-loss smoothing constant.
    pub smooth: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 32,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            drop_factor: 0.5,
            lr_patience: 5,
            stop_patience: 15,
            max_epochs: 150,
            min_delta: 1e-6,
            smooth: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return bad("Adam epsilon must be positive");
        }
        if !(self.drop_factor > 0.0 && self.drop_factor < 1.0) {
            return bad("drop factor must lie in (0, 1)");
        }
        if self.lr_patience == 0 || self.stop_patience == 0 {
            return bad("patience values must be positive");
        }
        if self.max_epochs == 0 {
            return bad("max epochs must be positive");
        }
        if !(self.min_delta >= 0.0) || !(self.smooth >= 0.0) {
            return bad("min delta and smoothing must be non-negative");
        }
        Ok(())
    }
}

/// What the schedule decided after one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ScheduleEvent {
    pub improved: bool,
    /// The learning rate was multiplied by the drop factor for later epochs.
    pub lr_dropped: bool,
    pub stop: bool,
}

/// Plateau logic on the validation-Dice signal. The first observation sets
/// the baseline; later ones improve only when they exceed the best value by
/// more than `min_delta`. The lr-drop and stop counters run independently
/// and the lr counter restarts after each drop.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauSchedule {
    lr: f64,
    drop_factor: f64,
    lr_patience: usize,
    stop_patience: usize,
    min_delta: f64,
    best: Option<f64>,
    since_lr: usize,
    since_best: usize,
}

impl PlateauSchedule {
    pub fn new(cfg: &TrainConfig) -> Self {
        PlateauSchedule {
            lr: cfg.lr,
            drop_factor: cfg.drop_factor,
            lr_patience: cfg.lr_patience,
            stop_patience: cfg.stop_patience,
            min_delta: cfg.min_delta,
            best: None,
            since_lr: 0,
            since_best: 0,
        }
    }

    /// Learning rate for the next epoch.
    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn observe(&mut self, val_dice: f64) -> ScheduleEvent {
        let improved = match self.best {
            None => true,
            Some(b) => val_dice > b + self.min_delta,
        };
        let mut ev = ScheduleEvent {
            improved,
            ..ScheduleEvent::default()
        };
        if improved {
            self.best = Some(val_dice);
            self.since_lr = 0;
            self.since_best = 0;
            return ev;
        }
        self.since_lr += 1;
        self.since_best += 1;
        if self.since_lr >= self.lr_patience {
            self.lr *= self.drop_factor;
            self.since_lr = 0;
            ev.lr_dropped = true;
        }
        ev.stop = self.since_best >= self.stop_patience;
        ev
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 0-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_dice: f64,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    /// Epoch with the highest validation Dice (first on ties).
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainLog {
    pub fn best_val_dice(&self) -> Option<f64> {
        self.epochs.get(self.best_epoch).map(|e| e.val_dice)
    }

    /// CSV with columns epoch, train_loss, val_dice, lr, seconds.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["epoch", "train_loss", "val_dice", "lr", "seconds"])
            .expect("in-memory csv");
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.train_loss.to_string(),
                e.val_dice.to_string(),
                e.lr.to_string(),
                format!("{:.3}", e.seconds),
            ])
            .expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)
            .and_then(|mut f| f.write_all(self.to_csv().as_bytes()))
            .map_err(|e| Error::io(path, e))
    }
}

/// Mean Dice of binarized predictions against labels; a slice where both
/// are empty contributes 1.
pub fn evaluate_epoch(net: &AttentionUNet<f32>, val: &[(SliceImage, Mask)], threshold: f64) -> Result<f64> {
    if val.is_empty() {
        return Err(Error::input("empty validation set"));
    }
    let mut total = 0.0;
    for (img, label) in val {
        let (prob, _) = predict_batch(net, std::slice::from_ref(img))?.remove(0);
        total += dice(&prob.binarize(threshold), label)?;
    }
    Ok(total / val.len() as f64)
}

fn batch_tensors(items: &[&(SliceImage, Mask)], size: usize) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let mut x = Vec::with_capacity(items.len() * size * size);
    let mut y = Vec::with_capacity(items.len() * size * size);
    for (img, mask) in items {
        if (img.width, img.height) != (size, size) || (mask.width(), mask.height()) != (size, size) {
            return Err(Error::dim(format!(
                "training pair {}x{} / {}x{}, network expects {size}x{size}",
                img.width,
                img.height,
                mask.width(),
                mask.height()
            )));
        }
        x.extend_from_slice(&img.data);
        y.extend(mask.to_f32());
    }
    let shape = [items.len(), 1, size, size];
    Ok((Tensor::from_vec(&shape, x)?, Tensor::from_vec(&shape, y)?))
}

/// Trains `net` and returns the weights of the best validation epoch.
pub fn train(
    net: AttentionUNet<f32>,
    train_set: &[(SliceImage, Mask)],
    val_set: &[(SliceImage, Mask)],
    cfg: &TrainConfig,
) -> Result<(AttentionUNet<f32>, TrainLog)> {
    train_with_progress(net, train_set, val_set, cfg, &mut |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with_progress(
    mut net: AttentionUNet<f32>,
    train_set: &[(SliceImage, Mask)],
    val_set: &[(SliceImage, Mask)],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<(AttentionUNet<f32>, TrainLog)> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::input("training and validation sets must be non-empty"));
    }
    let size = net.config().input_size;
    let threshold = net.config().threshold;
    let lens: Vec<usize> = net.params().iter().map(|(_, t)| t.len()).collect();
    let mut adam = AdamState::<f32>::new(&lens, cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut schedule = PlateauSchedule::new(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = TrainLog::default();
    let mut best_net = net.clone();
    let smooth = cfg.smooth as f32;

    for epoch in 0..cfg.max_epochs {
        let start = Instant::now();
        let lr = schedule.lr();
        adam.lr = lr;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let items: Vec<&(SliceImage, Mask)> = chunk.iter().map(|&i| &train_set[i]).collect();
            let (x, y) = batch_tensors(&items, size)?;
            net.zero_grad();
            let tape = net.forward(&x)?;
            let loss = dice_loss(tape.probability(), &y, smooth)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {epoch}, batch {b}")));
            }
            let grad = dice_loss_backward(tape.probability(), &y, smooth)?;
            net.backward(&tape, &grad)?;
            adam.update(&mut net.params_mut()).map_err(|e| match e {
                Error::NonFinite(what) => Error::NonFinite(format!("{what} at epoch {epoch}, batch {b}")),
                other => other,
            })?;
            loss_sum += f64::from(loss) * chunk.len() as f64;
        }
        let val_dice = evaluate_epoch(&net, val_set, threshold)?;
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            val_dice,
            lr,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        log.epochs.push(record);
        let ev = schedule.observe(val_dice);
        if ev.improved {
            log.best_epoch = epoch;
            best_net = net.clone();
        }
        if ev.stop {
            log.stopped_early = true;
            break;
        }
    }
    Ok((best_net, log))
}
