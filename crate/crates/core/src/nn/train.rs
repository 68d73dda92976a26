//! Mini-batch Adam training with learning-rate decay and early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamState, ParamBlock};
use super::model::{MlpModel, Mode};
use crate::dataset::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub l2_penalty: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before each learning-rate decay.
    pub patience: usize,
    /// Epochs without validation improvement before stopping.
    pub lookahead: usize,
    pub lr_decay_factor: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            l2_penalty: 1e-5,
            batch_size: 128,
            max_epochs: 100,
            patience: 3,
            lookahead: 10,
            lr_decay_factor: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.l2_penalty >= 0.0 && self.l2_penalty.is_finite()) {
            return bad(format!("l2_penalty must be non-negative, got {}", self.l2_penalty));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.patience == 0 || self.patience > self.lookahead {
            return bad(format!(
                "need 1 <= patience <= lookahead, got patience {} and lookahead {}",
                self.patience, self.lookahead
            ));
        }
        if !(self.lr_decay_factor > 0.0 && self.lr_decay_factor < 1.0) {
            return bad(format!(
                "lr_decay_factor must lie in (0, 1), got {}",
                self.lr_decay_factor
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_losses: Vec<f64>,
    pub val_losses: Vec<f64>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub final_learning_rate: f64,
    pub epochs_run: usize,
    pub stopped_early: bool,
}

/// Trains `model` and returns the parameters from the epoch with the lowest
/// validation loss.
///
/// After every `patience` consecutive epochs without a strict improvement
/// the learning rate is multiplied by `lr_decay_factor`; after `lookahead`
/// such epochs training stops.
pub fn train(
    mut model: MlpModel,
    train_set: &Dataset,
    val_set: &Dataset,
    config: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("training set".into()));
    }
    if val_set.is_empty() {
        return Err(Error::EmptyDataset("validation set".into()));
    }
    for (name, d) in [("training", train_set), ("validation", val_set)] {
        if d.n_features() != model.input_dim() {
            return Err(Error::Shape(format!(
                "{name} set has {} features, model expects {}",
                d.n_features(),
                model.input_dim()
            )));
        }
    }

    let task = model.task();
    let layout = model.param_layout();
    let lens: Vec<usize> = layout.iter().map(|p| p.len).collect();
    let mut adam = AdamState::new(&lens);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut lr = config.learning_rate;
    let val_targets = val_set.targets();

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best: Option<(f64, usize, MlpModel)> = None;
    let mut since_best = 0usize;
    let mut report = TrainReport {
        train_losses: Vec::new(),
        val_losses: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        final_learning_rate: lr,
        epochs_run: 0,
        stopped_early: false,
    };

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch = train_set.subset(chunk);
            let (out, cache) = model.forward(&batch.x, Mode::Train, &mut rng)?;
            let (loss, grad) = task.loss(&out, &batch.targets())?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b,
                    value: loss,
                });
            }
            let grads = model.backward(&cache, &grad)?;
            model.absorb_batch_statistics(&cache);
            let mut blocks: Vec<ParamBlock<'_>> = model
                .params_mut()
                .into_iter()
                .zip(&grads.params)
                .zip(&layout)
                .map(|((values, grad), info)| ParamBlock {
                    values,
                    grad,
                    decay: info.decays(),
                })
                .collect();
            adam.step(&mut blocks, lr, config.l2_penalty)?;
            loss_sum += loss * chunk.len() as f64;
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let (val_loss, _) = task.loss(&model.forward_eval(&val_set.x)?, &val_targets)?;
        if !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: usize::MAX,
                value: val_loss,
            });
        }
        report.train_losses.push(train_loss);
        report.val_losses.push(val_loss);
        report.epochs_run = epoch + 1;

        if best.as_ref().map_or(true, |(b, _, _)| val_loss < *b) {
            best = Some((val_loss, epoch, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best % config.patience == 0 {
                lr *= config.lr_decay_factor;
            }
            if since_best >= config.lookahead {
                report.stopped_early = true;
                break;
            }
        }
    }

    report.final_learning_rate = lr;
    match best {
        Some((loss, epoch, best_model)) => {
            report.best_val_loss = loss;
            report.best_epoch = epoch;
            Ok((best_model, report))
        }
        None => Err(Error::Config("max_epochs must be at least 1".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{Architecture, Task};

    fn toy_classification(n: usize, seed: u64) -> Dataset {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a: f64 = rng.gen_range(-1.0..1.0);
            let b: f64 = rng.gen_range(-1.0..1.0);
            // margin keeps the set linearly separable
            if (a + b).abs() < 0.1 {
                continue;
            }
            x.extend([a, b]);
            y.push(if a + b > 0.0 { 1.0 } else { 0.0 });
        }
        Dataset::new(crate::matrix::Matrix::new(y.len(), 2, x).unwrap(), y).unwrap()
    }

    fn small_arch() -> Architecture {
        Architecture {
            hidden: vec![8],
            dropout: 0.0,
            batch_norm: true,
        }
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let train_set = toy_classification(600, 1);
        let val_set = toy_classification(200, 2);
        let model =
            MlpModel::with_architecture(Task::BinaryClassification, 2, &small_arch(), 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.01,
            batch_size: 32,
            max_epochs: 60,
            ..TrainConfig::default()
        };
        let (model, _) = train(model, &train_set, &val_set, &cfg).unwrap();
        let p = model.predict(&train_set.x).unwrap();
        let acc = crate::eval::metric_accuracy(p.as_slice(), &train_set.y).unwrap();
        assert!(acc >= 0.99, "accuracy {acc}");
    }

    #[test]
    fn same_seed_gives_identical_report_and_parameters() {
        let train_set = toy_classification(300, 4);
        let val_set = toy_classification(100, 5);
        let cfg = TrainConfig {
            max_epochs: 8,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let run = || {
            let arch = Architecture {
                hidden: vec![6, 4],
                dropout: 0.5,
                batch_norm: true,
            };
            let m = MlpModel::with_architecture(Task::BinaryClassification, 2, &arch, 7).unwrap();
            train(m, &train_set, &val_set, &cfg).unwrap()
        };
        let (m1, r1) = run();
        let (m2, r2) = run();
        assert_eq!(r1, r2);
        assert_eq!(m1.layers(), m2.layers());
    }

    #[test]
    fn returned_model_has_best_recorded_validation_loss() {
        let train_set = toy_classification(300, 6);
        let val_set = toy_classification(100, 7);
        let cfg = TrainConfig {
            max_epochs: 15,
            batch_size: 16,
            ..TrainConfig::default()
        };
        let m = MlpModel::with_architecture(Task::BinaryClassification, 2, &small_arch(), 1).unwrap();
        let (m, report) = train(m, &train_set, &val_set, &cfg).unwrap();
        let min = report.val_losses.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(report.best_val_loss, min);
        let (loss, _) = m
            .task()
            .loss(&m.forward_eval(&val_set.x).unwrap(), &val_set.targets())
            .unwrap();
        assert_eq!(loss, min);
    }

    #[test]
    fn config_validation() {
        let mut c = TrainConfig::default();
        c.patience = 11;
        assert!(c.validate().is_err());
        c = TrainConfig::default();
        c.lr_decay_factor = 1.0;
        assert!(c.validate().is_err());
        c = TrainConfig::default();
        c.learning_rate = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn empty_and_mismatched_sets_are_rejected() {
        let ok = toy_classification(50, 1);
        let empty = ok.subset(&[]);
        let m = MlpModel::with_architecture(Task::BinaryClassification, 2, &small_arch(), 1).unwrap();
        assert!(matches!(
            train(m.clone(), &empty, &ok, &TrainConfig::default()),
            Err(Error::EmptyDataset(_))
        ));
        let m3 = MlpModel::with_architecture(Task::BinaryClassification, 3, &small_arch(), 1).unwrap();
        assert!(matches!(
            train(m3, &ok, &ok, &TrainConfig::default()),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn divergence_is_reported_as_non_finite_loss() {
        let x = crate::matrix::Matrix::new(4, 1, vec![1e200, -1e200, 1e200, 3.0]).unwrap();
        let d = Dataset::new(x, vec![1e200, 0.0, -1e200, 1.0]).unwrap();
        let arch = Architecture {
            hidden: vec![2],
            dropout: 0.0,
            batch_norm: false,
        };
        let m = MlpModel::with_architecture(Task::Regression, 1, &arch, 1).unwrap();
        let r = train(m, &d, &d, &TrainConfig::default());
        assert!(
            matches!(r, Err(Error::NonFiniteLoss { .. }) | Err(Error::Domain(_))),
            "{r:?}"
        );
    }
}
