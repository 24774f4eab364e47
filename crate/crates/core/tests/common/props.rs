//! Property checks on the scoring pipeline, shared by the proptest suites
//! and the acceptance run. Each takes its randomness as plain inputs.

use lateral_bench::minimcq::{encode_pair, forward, score_choices, ChoiceDistribution, EncoderConfig, ModelParams, Vocabulary};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{random_instance, random_params, small_vocab};

pub const PROPERTY_CASES: u32 = 256;

pub const MAX_LEN: usize = 24;

pub fn config(vocab: &Vocabulary) -> EncoderConfig {
    EncoderConfig {
        d_model: 8,
        n_heads: 2,
        n_layers: 1,
        d_ff: 16,
        max_len: MAX_LEN,
        vocab_size: vocab.len(),
        seed: 0,
    }
}

fn setup(seed: u64) -> (Vocabulary, ModelParams, ChaCha8Rng) {
    let vocab = small_vocab();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = random_params(config(&vocab), &mut rng);
    (vocab, params, rng)
}

pub fn logits_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3..1e3f64, 2..=8)
}

pub fn softmax_normalized(logits: &[f64]) -> Result<(), TestCaseError> {
    let probs = ChoiceDistribution::from_logits(logits).probs;
    let sum: f64 = probs.iter().sum();
    prop_assert!((sum - 1.0).abs() <= 1e-6, "sum {sum}");
    for p in &probs {
        prop_assert!((0.0..=1.0).contains(p), "p {p}");
    }
    Ok(())
}

pub fn softmax_shift_invariant(logits: &[f64], shift: f64) -> Result<(), TestCaseError> {
    let base = ChoiceDistribution::from_logits(logits).probs;
    let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
    for (a, b) in base.iter().zip(ChoiceDistribution::from_logits(&shifted).probs) {
        prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
    }
    Ok(())
}

/// Permuting the choices permutes the distribution the same way.
pub fn permutation_equivariant(seed: u64) -> Result<(), TestCaseError> {
    let (vocab, params, mut rng) = setup(seed);
    let n = rng.random_range(2..=6);
    let inst = random_instance(&vocab, &mut rng, n);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let permuted: Vec<String> = perm.iter().map(|i| inst.choices[*i].clone()).collect();

    let base = score_choices(&params, &inst.question, &inst.choices, &vocab).unwrap().probs;
    let moved = score_choices(&params, &inst.question, &permuted, &vocab).unwrap().probs;
    for (slot, source) in perm.iter().enumerate() {
        prop_assert!((moved[slot] - base[*source]).abs() <= 1e-12, "slot {slot}: {} vs {}", moved[slot], base[*source]);
    }
    Ok(())
}

/// Extra PAD positions leave the CLS feature unchanged.
pub fn padding_invariant(seed: u64, extra: usize) -> Result<(), TestCaseError> {
    let (vocab, params, mut rng) = setup(seed);
    let inst = random_instance(&vocab, &mut rng, 2);
    let short = rng.random_range(9..=MAX_LEN - extra);
    let pair = encode_pair(&inst.question, &inst.choices[0], &vocab, short).unwrap();
    let longer = pair.padded(extra);
    prop_assert_eq!(pair.real_len(), longer.real_len());
    let a = forward(&params, &pair).unwrap();
    let b = forward(&params, &longer).unwrap();
    for (x, y) in a.iter().zip(b.iter()) {
        prop_assert!((x - y).abs() <= 1e-12, "{x} vs {y}");
    }
    Ok(())
}

/// With a zero head weight every choice gets the same logit.
pub fn zero_head_uniform(seed: u64) -> Result<(), TestCaseError> {
    let (vocab, mut params, mut rng) = setup(seed);
    params.head_weight.fill(0.0);
    params.head_bias = rng.random_range(-5.0..5.0);
    let inst = random_instance(&vocab, &mut rng, 4);
    let probs = score_choices(&params, &inst.question, &inst.choices, &vocab).unwrap().probs;
    prop_assert_eq!(probs, vec![0.25; 4]);
    Ok(())
}
