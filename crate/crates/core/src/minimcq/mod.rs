//! Desk-scale pair-encoding multiple-choice scorer.
//!
//! Each choice is paired with the question as `[CLS] Q [SEP] C [SEP]` and
//! encoded independently; the CLS state goes through a dense head to a
//! scalar logit, and a softmax across the choices gives the distribution.

mod checkpoint;
mod encode;
mod model;
pub mod synthetic;
mod train;
mod vocab;

use ndarray::Array1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::PuzzleInstance;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CHECKPOINT_VERSION};
pub use encode::{encode_pair, PairSequence, Segment};
pub use model::{backward, forward, forward_cached, head_logit, EncoderConfig, ForwardCache, LayerParams, ModelParams};
pub use train::{train, train_with, Adam, EpochLog, TrainConfig, TrainError, TrainOutcome};
pub use vocab::{build_vocab, tokenize, Vocabulary, CLS, PAD, SEP, UNK};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MiniMcqError {
    #[error("cannot build a vocabulary from an empty corpus")]
    EmptyCorpus,
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("{0:?} segment has no tokens")]
    EmptySegment(Segment),
    #[error("max_len {max_len} leaves no room for choice tokens")]
    ChoiceTruncatedAway { max_len: usize },
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("need at least 2 choices, got {0}")]
    TooFewChoices(usize),
    #[error("gold index {gold} out of range for {n_choices} choices")]
    GoldOutOfRange { gold: usize, n_choices: usize },
    #[error("empty batch")]
    EmptyBatch,
}

/// Probability of each choice being correct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceDistribution {
    pub probs: Vec<f64>,
}

impl ChoiceDistribution {
    /// Softmax with the maximum logit subtracted first.
    pub fn from_logits(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        ChoiceDistribution {
            probs: exps.into_iter().map(|e| e / sum).collect(),
        }
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// `-log softmax(logits)[gold]` via log-sum-exp.
pub fn cross_entropy(logits: &[f64], gold: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    lse - logits[gold]
}

fn encode_choices(
    question: &str,
    choices: &[String],
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<Vec<PairSequence>, MiniMcqError> {
    if choices.len() < 2 {
        return Err(MiniMcqError::TooFewChoices(choices.len()));
    }
    choices.iter().map(|c| encode_pair(question, c, vocab, max_len)).collect()
}

/// Per-pair logits, one forward pass per choice.
pub fn choice_logits(params: &ModelParams, question: &str, choices: &[String], vocab: &Vocabulary) -> Result<Vec<f64>, MiniMcqError> {
    encode_choices(question, choices, vocab, params.config.max_len)?
        .iter()
        .map(|pair| forward(params, pair).map(|f| head_logit(params, f.view())))
        .collect()
}

pub fn score_choices(params: &ModelParams, question: &str, choices: &[String], vocab: &Vocabulary) -> Result<ChoiceDistribution, MiniMcqError> {
    Ok(ChoiceDistribution::from_logits(&choice_logits(params, question, choices, vocab)?))
}

pub fn predict(params: &ModelParams, instance: &PuzzleInstance, vocab: &Vocabulary) -> Result<usize, MiniMcqError> {
    Ok(score_choices(params, &instance.question, &instance.choices, vocab)?.argmax())
}

pub fn loss(params: &ModelParams, instance: &PuzzleInstance, vocab: &Vocabulary) -> Result<f64, MiniMcqError> {
    let logits = choice_logits(params, &instance.question, &instance.choices, vocab)?;
    check_gold(instance)?;
    Ok(cross_entropy(&logits, instance.gold_index))
}

fn check_gold(instance: &PuzzleInstance) -> Result<(), MiniMcqError> {
    if instance.gold_index >= instance.choices.len() {
        return Err(MiniMcqError::GoldOutOfRange {
            gold: instance.gold_index,
            n_choices: instance.choices.len(),
        });
    }
    Ok(())
}

/// Mean cross-entropy over the batch and its gradient.
pub fn loss_and_grad(
    params: &ModelParams,
    batch: &[PuzzleInstance],
    vocab: &Vocabulary,
) -> Result<(f64, ModelParams), MiniMcqError> {
    if batch.is_empty() {
        return Err(MiniMcqError::EmptyBatch);
    }
    let weight = 1.0 / batch.len() as f64;
    let mut grads = params.zeros_like();
    let mut total = 0.0;
    for instance in batch {
        check_gold(instance)?;
        let pairs = encode_choices(&instance.question, &instance.choices, vocab, params.config.max_len)?;
        let caches = pairs
            .iter()
            .map(|pair| forward_cached(params, pair))
            .collect::<Result<Vec<_>, _>>()?;
        let logits: Vec<f64> = caches.iter().map(|c| head_logit(params, c.feature.view())).collect();
        total += cross_entropy(&logits, instance.gold_index);

        let probs = ChoiceDistribution::from_logits(&logits).probs;
        for (i, cache) in caches.iter().enumerate() {
            let onehot = if i == instance.gold_index { 1.0 } else { 0.0 };
            backward(params, cache, (probs[i] - onehot) * weight, &mut grads);
        }
    }
    Ok((total * weight, grads))
}

/// Gradient of the mean batch loss, same layout as the parameters.
pub fn grad(params: &ModelParams, batch: &[PuzzleInstance], vocab: &Vocabulary) -> Result<ModelParams, MiniMcqError> {
    Ok(loss_and_grad(params, batch, vocab)?.1)
}

/// Mean loss over the batch without gradients.
pub fn batch_loss(params: &ModelParams, batch: &[PuzzleInstance], vocab: &Vocabulary) -> Result<f64, MiniMcqError> {
    if batch.is_empty() {
        return Err(MiniMcqError::EmptyBatch);
    }
    let mut total = 0.0;
    for instance in batch {
        total += loss(params, instance, vocab)?;
    }
    Ok(total / batch.len() as f64)
}

/// Fraction of instances whose argmax equals the gold index.
pub fn accuracy(params: &ModelParams, instances: &[PuzzleInstance], vocab: &Vocabulary) -> Result<f64, MiniMcqError> {
    let mut correct = 0usize;
    for instance in instances {
        correct += (predict(params, instance, vocab)? == instance.gold_index) as usize;
    }
    Ok(correct as f64 / instances.len().max(1) as f64)
}

/// Texts a vocabulary should cover for a dataset: every question and choice.
pub fn corpus_of(instances: &[PuzzleInstance]) -> Vec<&str> {
    instances
        .iter()
        .flat_map(|i| std::iter::once(i.question.as_str()).chain(i.choices.iter().map(String::as_str)))
        .collect()
}

/// The feature vector type returned by [`forward`].
pub type FeatureVector = Array1<f64>;
