//! Compares the analytic gradient of the batch loss with central finite
//! differences on every parameter coordinate of a tiny encoder.
//!
//! `cargo run --release --example gradient_check`

use anyhow::Result;
use lateral_bench::dataset::{PuzzleInstance, Subtask, Variant};
use lateral_bench::minimcq::{batch_loss, build_vocab, grad, EncoderConfig, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let vocab = build_vocab(&["the quick brown fox jumps over a lazy dog near red barn"], 1)?;
    let config = EncoderConfig {
        d_model: 8,
        n_heads: 2,
        n_layers: 1,
        d_ff: 16,
        max_len: 16,
        vocab_size: vocab.len(),
        seed: 4,
    };
    // Perturb the initialization so layer norms and biases are not at their
    // identity values.
    let mut params = ModelParams::init(config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let jittered: Vec<f64> = params.to_flat().iter().map(|v| v + rng.random_range(-0.3..0.3)).collect();
    params.set_flat(&jittered)?;

    let batch = vec![PuzzleInstance {
        id: "x".into(),
        group_id: "x".into(),
        variant: Variant::Original,
        subtask: Subtask::Word,
        question: "the quick brown fox".into(),
        choices: vec!["lazy dog".into(), "red barn".into(), "jumps over".into(), "near a".into()],
        gold_index: 1,
    }];

    let h = 1e-4;
    let analytic = grad(&params, &batch, &vocab)?.to_flat();
    let base = params.to_flat();
    let mut probe = params.clone();
    let mut worst = 0.0_f64;
    for i in 0..base.len() {
        let mut flat = base.clone();
        flat[i] += h;
        probe.set_flat(&flat)?;
        let plus = batch_loss(&probe, &batch, &vocab)?;
        flat[i] -= 2.0 * h;
        probe.set_flat(&flat)?;
        let minus = batch_loss(&probe, &batch, &vocab)?;
        let numeric = (plus - minus) / (2.0 * h);
        let rel = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-7);
        worst = worst.max(rel);
    }
    println!("{} coordinates, worst relative error {worst:.2e}", base.len());
    anyhow::ensure!(worst < 1e-4, "gradient mismatch");
    Ok(())
}
