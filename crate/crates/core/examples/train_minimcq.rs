//! Trains the small pair-encoding scorer on generated puzzles, saves a
//! checkpoint, reloads it and checks the predictions survive the round trip.
//!
//! `cargo run --release --example train_minimcq`

use anyhow::Result;
use lateral_bench::minimcq::synthetic::separable_dataset;
use lateral_bench::minimcq::{
    accuracy, build_vocab, corpus_of, load_checkpoint, predict, save_checkpoint, train_with, Checkpoint, EncoderConfig,
    ModelParams, TrainConfig,
};

fn main() -> Result<()> {
    let data = separable_dataset(48, 0);
    let vocab = build_vocab(&corpus_of(&data), 1)?;
    let config = EncoderConfig {
        d_model: 16,
        n_heads: 2,
        n_layers: 1,
        d_ff: 32,
        max_len: 24,
        vocab_size: vocab.len(),
        seed: 0,
    };
    let params = ModelParams::init(config)?;
    println!("{} parameters, untrained accuracy {:.3}", params.num_params(), accuracy(&params, &data, &vocab)?);

    let train_config = TrainConfig {
        epochs: 60,
        lr: 3e-3,
        ..TrainConfig::default()
    };
    let outcome = train_with(params, &data, &vocab, &train_config, |e| {
        if e.epoch % 10 == 0 {
            println!("epoch {:>3}  loss {:.4}  train acc {:.3}", e.epoch, e.mean_loss, e.train_accuracy);
        }
    })?;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("model.ckpt");
    save_checkpoint(
        &path,
        &Checkpoint {
            params: outcome.params.clone(),
            vocab: vocab.clone(),
        },
    )?;
    let restored = load_checkpoint(&path)?;
    for inst in &data {
        assert_eq!(predict(&outcome.params, inst, &vocab)?, predict(&restored.params, inst, &restored.vocab)?);
    }
    println!("checkpoint {} bytes, predictions identical after reload", std::fs::metadata(&path)?.len());
    Ok(())
}
