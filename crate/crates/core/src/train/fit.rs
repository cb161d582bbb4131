//! The mini-batch training loop and batched inference.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::softmax_cross_entropy;
use super::metrics::{argmax, EvalReport};
use super::optim::{Optimizer, OptimizerConfig};
use crate::data::ImageDataset;
use crate::model::{GradTape, Network};
use crate::{Error, Result, Scalar, Tensor};

const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Drives the epoch shuffles. Initialization uses the build seed.
    pub seed: u64,
    /// Invoke the checkpoint hook every this many epochs; 0 disables it.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 64,
            optimizer: OptimizerConfig::default(),
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let o = &self.optimizer;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(o.learning_rate >= 0.0 && o.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be a finite non-negative number".into()));
        }
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || o.epsilon <= 0.0 {
            return Err(Error::Config("adam betas must lie in [0, 1) and epsilon be positive".into()));
        }
        if !(0.0..1.0).contains(&o.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub steps: u64,
}

fn check_dataset<T: Scalar>(net: &Network<T>, data: &ImageDataset) -> Result<()> {
    let classes = net.num_classes();
    if let Some(&label) = data.labels.iter().find(|&&l| l >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(())
}

/// Trains `net` in place. `checkpoint(epoch, net)` runs every
/// `cfg.checkpoint_every` epochs. If the loss stops being finite the network
/// is rolled back to the last checkpointed state (or its initial state) and
/// [`Error::Diverged`] is returned.
pub fn train<T: Scalar>(
    net: &mut Network<T>,
    data: &ImageDataset,
    cfg: &TrainConfig,
    mut checkpoint: impl FnMut(usize, &Network<T>) -> Result<()>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    check_dataset(net, data)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::<T>::new(cfg.optimizer);
    let mut tape = GradTape::new();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut snapshot: Vec<Tensor<T>> = net.state().into_iter().cloned().collect();
    let mut report = TrainReport::default();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut hits) = (0.0f64, 0usize);
        for (b, idx) in order.chunks(cfg.batch_size).enumerate() {
            let x = data.batch::<T>(idx)?;
            let labels: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
            let logits = net.forward_train(&x, &mut tape)?;
            let (loss, grad, probs) = softmax_cross_entropy(&logits, &labels)?;
            let loss = loss.as_f64();
            if !loss.is_finite() {
                net.load_state(snapshot)?;
                return Err(Error::Diverged {
                    epoch,
                    batch: b,
                    loss,
                });
            }
            net.backward(&mut tape, &grad)?;
            opt.step(net.parameters_mut(), tape.gradients())?;
            loss_sum += loss * idx.len() as f64;
            let c = probs.shape()[1];
            hits += probs
                .data()
                .chunks(c)
                .zip(&labels)
                .filter(|(row, &l)| argmax(row) == l)
                .count();
        }
        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / data.len() as f64,
            train_accuracy: hits as f64 / data.len() as f64,
        };
        log::info!(
            "epoch {epoch}: loss {:.5} accuracy {:.4}",
            stats.mean_loss,
            stats.train_accuracy
        );
        report.epochs.push(stats);
        if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
            checkpoint(epoch, net)?;
            snapshot = net.state().into_iter().cloned().collect();
        }
    }
    report.steps = opt.steps();
    Ok(report)
}

/// Predicted class per image, in inference mode.
pub fn predict<T: Scalar>(net: &Network<T>, data: &ImageDataset) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(data.len());
    let all: Vec<usize> = (0..data.len()).collect();
    for idx in all.chunks(EVAL_BATCH) {
        let y = net.forward(&data.batch::<T>(idx)?)?;
        let c = y.shape()[1];
        out.extend(y.data().chunks(c).map(argmax));
    }
    Ok(out)
}

pub fn evaluate<T: Scalar>(net: &Network<T>, data: &ImageDataset) -> Result<EvalReport> {
    check_dataset(net, data)?;
    let preds = predict(net, data)?;
    EvalReport::from_predictions(net.num_classes(), &data.labels, &preds)
}
