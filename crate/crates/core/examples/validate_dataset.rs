//! Writes a small grouped dataset with a few deliberate problems, then lists
//! every issue the validator finds.
//!
//! `cargo run --example validate_dataset`

use anyhow::Result;
use lateral_bench::dataset::{group_instances, load_dataset_unchecked, save_dataset, validate, Severity};
use lateral_bench::minimcq::synthetic::separable_dataset;

fn main() -> Result<()> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("puzzles.json");

    let mut data = separable_dataset(9, 1);
    save_dataset(&path, &data)?;
    let clean = validate(&load_dataset_unchecked(&path)?);
    println!("clean dataset: {clean}");
    println!("groups: {}", group_instances(&data)?.len());

    // Break it: an out-of-range label, a 3-choice question, and an orphan CR.
    data[0].gold_index = 7;
    data[1].choices.pop();
    data[5].group_id = "lonely".into();
    save_dataset(&path, &data)?;
    let report = validate(&load_dataset_unchecked(&path)?);
    println!("\nedited dataset:\n{report}");
    assert!(report.has_errors());
    assert!(report.count(Severity::Warning) > 0);
    Ok(())
}
