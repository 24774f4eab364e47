use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{accuracy, loss_and_grad, MiniMcqError, ModelParams, Vocabulary};
use crate::dataset::PuzzleInstance;

/// Hyperparameters. Defaults: 5 epochs, lr 5e-5, batch 16.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffles. Initialization uses the encoder seed.
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            lr: 5e-5,
            batch_size: 16,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-instance loss seen during the epoch, before each batch's update.
    pub mean_loss: f64,
    /// Accuracy on the training set after the epoch's last update.
    pub train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: Vec<EpochLog>,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training setup: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] MiniMcqError),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        /// Parameters before the failing step.
        last_good: Box<ModelParams>,
        log: Vec<EpochLog>,
    },
}

/// Adam without warmup or decay.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: ModelParams,
    v: ModelParams,
}

impl Adam {
    pub fn new(params: &ModelParams, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(grads.tensors());
        for (((p, m), v), (_, g)) in tensors {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// Mini-batch training on cross-entropy. Deterministic for a given config.
pub fn train(
    params: ModelParams,
    dataset: &[PuzzleInstance],
    vocab: &Vocabulary,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    train_with(params, dataset, vocab, config, |_| {})
}

/// Like [`train`], calling `on_epoch` after every epoch.
pub fn train_with(
    mut params: ModelParams,
    dataset: &[PuzzleInstance],
    vocab: &Vocabulary,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, TrainError> {
    if dataset.is_empty() {
        return Err(TrainError::InvalidConfig("empty training set".into()));
    }
    if config.batch_size == 0 || config.lr < 0.0 || !config.lr.is_finite() {
        return Err(TrainError::InvalidConfig("batch_size must be positive and lr finite and non-negative".into()));
    }
    params.check_shapes()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut optimizer = Adam::new(&params, config.lr, config.beta1, config.beta2, config.eps);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<PuzzleInstance> = chunk.iter().map(|i| dataset[*i].clone()).collect();
            let (loss, grads) = loss_and_grad(&params, &batch, vocab)?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: b,
                    last_good: Box::new(params),
                    log,
                });
            }
            loss_sum += loss * batch.len() as f64;
            optimizer.step(&mut params, &grads);
        }
        let entry = EpochLog {
            epoch,
            mean_loss: loss_sum / dataset.len() as f64,
            train_accuracy: accuracy(&params, dataset, vocab)?,
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(TrainOutcome { params, log })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minimcq::synthetic::separable_dataset;
    use crate::minimcq::{build_vocab, corpus_of, EncoderConfig};

    fn setup() -> (Vec<PuzzleInstance>, Vocabulary, ModelParams) {
        let data = separable_dataset(12, 5);
        let vocab = build_vocab(&corpus_of(&data), 1).unwrap();
        let params = ModelParams::init(EncoderConfig {
            d_model: 8,
            n_heads: 2,
            n_layers: 1,
            d_ff: 16,
            max_len: 16,
            vocab_size: vocab.len(),
            seed: 1,
        })
        .unwrap();
        (data, vocab, params)
    }

    #[test]
    fn zero_lr_leaves_params_unchanged() {
        let (data, vocab, params) = setup();
        let config = TrainConfig {
            epochs: 3,
            lr: 0.0,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let out = train(params.clone(), &data, &vocab, &config).unwrap();
        assert_eq!(out.params, params);
        assert_eq!(out.log.len(), 3);
    }

    #[test]
    fn same_seed_same_weights() {
        let (data, vocab, params) = setup();
        let config = TrainConfig {
            epochs: 2,
            lr: 1e-3,
            batch_size: 5,
            seed: 11,
            ..TrainConfig::default()
        };
        let a = train(params.clone(), &data, &vocab, &config).unwrap();
        let b = train(params.clone(), &data, &vocab, &config).unwrap();
        assert_eq!(a.params.to_flat(), b.params.to_flat());
        assert_eq!(a.log, b.log);
        assert_ne!(a.params, params);
    }

    #[test]
    fn loss_goes_down() {
        let (data, vocab, params) = setup();
        let config = TrainConfig {
            epochs: 15,
            lr: 3e-3,
            batch_size: 4,
            seed: 2,
            ..TrainConfig::default()
        };
        let out = train(params, &data, &vocab, &config).unwrap();
        assert!(out.log.last().unwrap().mean_loss < out.log[0].mean_loss);
    }

    #[test]
    fn non_finite_loss_aborts_with_checkpoint() {
        let (data, vocab, mut params) = setup();
        params.head_weight[0] = f64::NAN;
        let config = TrainConfig {
            epochs: 1,
            batch_size: 4,
            ..TrainConfig::default()
        };
        match train(params.clone(), &data, &vocab, &config) {
            Err(TrainError::NonFiniteLoss { epoch: 1, batch: 0, last_good, .. }) => {
                assert_eq!(last_good.to_flat().len(), params.num_params());
            }
            other => panic!("expected NonFiniteLoss, got {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_hyperparameters() {
        let (data, vocab, params) = setup();
        let zero_batch = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(matches!(train(params.clone(), &data, &vocab, &zero_batch), Err(TrainError::InvalidConfig(_))));
        assert!(matches!(train(params, &[], &vocab, &TrainConfig::default()), Err(TrainError::InvalidConfig(_))));
    }
}
