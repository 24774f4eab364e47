//! Scores a prediction log against a dataset and prints the breakdown as
//! text, JSON and CSV, then shows how the overall cell set can be changed.
//!
//! `cargo run --example score_predictions`

use anyhow::Result;
use lateral_bench::dataset::{save_dataset, write_prediction_log, Prediction, PredictionRecord};
use lateral_bench::metrics::Cell;
use lateral_bench::minimcq::synthetic::separable_dataset;
use lateral_bench::report::{render_breakdown, rescore_from_log, rescore_from_log_with, BreakdownFormat};

fn main() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let data = separable_dataset(30, 2);
    let dataset = dir.path().join("puzzles.json");
    save_dataset(&dataset, &data)?;

    // Wrong on every third CR question, ABSTAIN on one SR question.
    let records: Vec<PredictionRecord> = data
        .iter()
        .enumerate()
        .map(|(i, inst)| {
            let predicted = match i {
                4 => Prediction::Abstain,
                _ if i % 9 == 2 => Prediction::Choice((inst.gold_index + 1) % inst.choices.len()),
                _ => Prediction::Choice(inst.gold_index),
            };
            PredictionRecord {
                instance_id: inst.id.clone(),
                predicted_index: predicted,
                solver_id: "example".into(),
                temperature: None,
                raw_response: String::new(),
                attempts: 1,
                error: None,
            }
        })
        .collect();
    let log = dir.path().join("predictions.jsonl");
    write_prediction_log(&log, &records)?;

    let breakdown = rescore_from_log(&log, &dataset)?;
    for format in [BreakdownFormat::Text, BreakdownFormat::Json, BreakdownFormat::Csv] {
        println!("{}", render_breakdown(&breakdown, format));
    }

    let instance_only = rescore_from_log_with(&log, &dataset, &[Cell::InstOr, Cell::InstSr, Cell::InstCr])?;
    println!("overall over instance cells only: {:.4}", instance_only.overall.unwrap_or(f64::NAN));
    Ok(())
}
