//! Mini-batch training loop: shuffled batches, Adam with the step-decay
//! schedule, per-epoch train/validation losses, and a NaN abort with
//! diagnostics.

use serde::{Deserialize, Serialize};

use super::AutoflowModel;
use crate::autodiff::{lr_schedule, AdamState, Graph, Tensor};
use crate::error::{DosnetError, Result};
use crate::rng::SeedRng;

/// Sample source for training: index-addressable (input, target) pairs,
/// each shaped `[1, C, spatial..]`.
pub trait TrainSamples: Sync {
    fn len(&self) -> usize;
    fn sample(&self, idx: usize) -> Result<(Tensor, Tensor)>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2: f64,
    pub seed: u64,
    /// Apply the drop-to-10%-every-30-epochs schedule.
    pub step_decay: bool,
    /// Restrict the loss to a spatial window `(start, len)` of the last
    /// axis (used by the fiber model, where only the middle of a segment
    /// is valid).
    pub loss_window: Option<(usize, usize)>,
    pub shuffle: bool,
}

impl TrainConfig {
    pub fn new(base_lr: f64, epochs: usize, l2: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            base_lr,
            epochs,
            batch_size: 64,
            l2,
            seed,
            step_decay: true,
            loss_window: None,
            shuffle: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub history: Vec<EpochStats>,
    pub adam: AdamState,
}

fn crop_target(target: &Tensor, window: Option<(usize, usize)>) -> Result<Tensor> {
    match window {
        None => Ok(target.clone()),
        Some((start, len)) => {
            let mut g = Graph::new();
            let t = g.input(target.clone());
            let c = g.crop1d(t, start, len)?;
            Ok(g.value(c).clone())
        }
    }
}

fn gather_batch<S: TrainSamples + ?Sized>(
    data: &S,
    indices: &[usize],
) -> Result<(Tensor, Tensor)> {
    let mut inputs = Vec::with_capacity(indices.len());
    let mut targets = Vec::with_capacity(indices.len());
    for &i in indices {
        let (x, y) = data.sample(i)?;
        inputs.push(x);
        targets.push(y);
    }
    Ok((Tensor::stack(&inputs)?, Tensor::stack(&targets)?))
}

/// Loss of the model on a batch, without gradients.
pub fn batch_loss(
    model: &AutoflowModel,
    input: &Tensor,
    target: &Tensor,
    window: Option<(usize, usize)>,
) -> Result<f64> {
    let mut graph = Graph::new();
    let x = graph.input(input.clone());
    let pass = model.forward(&mut graph, x)?;
    let pred = match window {
        Some((start, len)) => graph.crop1d(pass.output, start, len)?,
        None => pass.output,
    };
    let t = crop_target(target, window)?;
    let loss = graph.mse_loss(pred, &t)?;
    graph.value(loss).scalar_value()
}

/// Mean loss over a whole sample set, processed in batches.
pub fn dataset_loss<S: TrainSamples + ?Sized>(
    model: &AutoflowModel,
    data: &S,
    batch_size: usize,
    window: Option<(usize, usize)>,
) -> Result<f64> {
    if data.is_empty() {
        return Ok(f64::NAN);
    }
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    let mut count = 0usize;
    for chunk in indices.chunks(batch_size.max(1)) {
        let (x, y) = gather_batch(data, chunk)?;
        total += batch_loss(model, &x, &y, window)? * chunk.len() as f64;
        count += chunk.len();
    }
    Ok(total / count as f64)
}

/// Trains `model` in place. `resume` continues from a saved optimizer
/// state (the step counter carries over); otherwise a fresh Adam state is
/// created. Returns the per-epoch history and the final optimizer state.
pub fn train<S, V>(
    model: &mut AutoflowModel,
    train_data: &S,
    val_data: Option<&V>,
    cfg: &TrainConfig,
    resume: Option<AdamState>,
) -> Result<TrainOutcome>
where
    S: TrainSamples + ?Sized,
    V: TrainSamples + ?Sized,
{
    if train_data.is_empty() {
        return Err(DosnetError::arg("training set is empty"));
    }
    if cfg.batch_size == 0 {
        return Err(DosnetError::arg("batch size must be >= 1"));
    }
    let mut adam = resume.unwrap_or_else(|| AdamState::new(cfg.base_lr, cfg.l2));
    adam.l2 = cfg.l2;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = if cfg.step_decay {
            lr_schedule(cfg.base_lr, epoch)
        } else {
            cfg.base_lr
        };
        adam.lr = lr;

        let mut order: Vec<usize> = (0..train_data.len()).collect();
        if cfg.shuffle {
            let mut rng = SeedRng::with_stream(cfg.seed, epoch as u64 + 1);
            rng.shuffle(&mut order);
        }

        let mut epoch_loss = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (x, y) = gather_batch(train_data, chunk)?;
            let mut graph = Graph::new();
            let xid = graph.input(x);
            let pass = model.forward(&mut graph, xid)?;
            let pred = match cfg.loss_window {
                Some((start, len)) => graph.crop1d(pass.output, start, len)?,
                None => pass.output,
            };
            let target = crop_target(&y, cfg.loss_window)?;
            let loss = graph.mse_loss(pred, &target)?;
            let loss_val = graph.value(loss).scalar_value()?;
            if !loss_val.is_finite() {
                let max_param = model
                    .params
                    .iter()
                    .map(|p| p.value.max_abs_scalar())
                    .fold(0.0, f64::max);
                return Err(DosnetError::NanLoss {
                    epoch,
                    batch: batch_idx,
                    max_param,
                });
            }
            epoch_loss += loss_val * chunk.len() as f64;

            graph.backward(loss)?;
            let grads: Vec<Tensor> = model
                .params
                .iter()
                .zip(&pass.param_nodes)
                .filter(|(p, _)| p.trainable)
                .map(|(_, &id)| graph.grad_or_zeros(id))
                .collect();
            let mut values: Vec<Tensor> = model
                .params
                .iter()
                .filter(|p| p.trainable)
                .map(|p| p.value.clone())
                .collect();
            adam.step(&mut values, &grads)?;
            let mut it = values.into_iter();
            for p in model.params.iter_mut().filter(|p| p.trainable) {
                p.value = it.next().expect("length matched above");
            }
            if model.config.unitary {
                model.project_dense_unitary()?;
            }
        }
        let train_loss = epoch_loss / train_data.len() as f64;
        let val_loss = match val_data {
            Some(v) if !v.is_empty() => {
                dataset_loss(model, v, cfg.batch_size, cfg.loss_window)?
            }
            _ => f64::NAN,
        };
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            lr,
        });
    }
    Ok(TrainOutcome {
        history,
        adam,
    })
}

/// In-memory sample list (used by tests and small experiments).
pub struct VecSamples {
    pub pairs: Vec<(Tensor, Tensor)>,
}

impl TrainSamples for VecSamples {
    fn len(&self) -> usize {
        self.pairs.len()
    }

    fn sample(&self, idx: usize) -> Result<(Tensor, Tensor)> {
        let (a, b) = &self.pairs[idx];
        Ok((a.clone(), b.clone()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::AutoflowConfig;

    #[test]
    fn zero_epochs_change_nothing() {
        let mut rng = SeedRng::new(11);
        let mut model =
            AutoflowModel::init(AutoflowConfig::toy_linear(2, 5), &mut rng).unwrap();
        let before: Vec<Tensor> = model.params.iter().map(|p| p.value.clone()).collect();
        let data = VecSamples {
            pairs: vec![(
                Tensor::new_real(vec![1, 1, 8], vec![0.1; 8]).unwrap(),
                Tensor::new_real(vec![1, 1, 8], vec![0.2; 8]).unwrap(),
            )],
        };
        let cfg = TrainConfig::new(1e-3, 0, 0.0, 1);
        let out = train(&mut model, &data, None::<&VecSamples>, &cfg, None).unwrap();
        assert!(out.history.is_empty());
        for (p, b) in model.params.iter().zip(&before) {
            assert_eq!(&p.value, b);
        }
    }

    #[test]
    fn single_pair_overfits() {
        // Target produced by a model of the same class, so zero loss is
        // attainable.
        let mut rng = SeedRng::new(12);
        let mut model =
            AutoflowModel::init(AutoflowConfig::toy_linear(2, 5), &mut rng).unwrap();
        let x: Vec<f64> = (0..16).map(|i| ((i as f64) * 0.7).sin()).collect();
        let input = Tensor::new_real(vec![1, 1, 16], x).unwrap();
        let mut teacher =
            AutoflowModel::init(AutoflowConfig::toy_linear(2, 5), &mut rng).unwrap();
        for (i, p) in teacher.params.iter_mut().enumerate() {
            let vals: Vec<f64> = (0..5).map(|j| 0.3 * ((i + j) as f64 * 1.3).cos()).collect();
            p.value = Tensor::new_real(vec![1, 1, 5], vals).unwrap();
        }
        let target = teacher.apply_batch(&input).unwrap();
        let data = VecSamples {
            pairs: vec![(input, target)],
        };
        let mut cfg = TrainConfig::new(1e-2, 2000, 0.0, 2);
        cfg.step_decay = false;
        let out = train(&mut model, &data, None::<&VecSamples>, &cfg, None).unwrap();
        let last = out.history.last().unwrap().train_loss;
        assert!(last < 1e-6, "loss {}", last);
    }
}
