//! Runs a resumable temperature sweep against a mock whose accuracy drops as
//! temperature rises, then writes per-cell curve CSVs and an SVG chart.
//!
//! `cargo run --example temperature_sweep`

use std::hash::{Hash, Hasher};

use anyhow::Result;
use lateral_bench::llm::mock::{AnswerKey, MockReply, MockServer};
use lateral_bench::llm::{ChatClient, ClientConfig, PromptTemplate, SolveSettings};
use lateral_bench::metrics::Cell;
use lateral_bench::minimcq::synthetic::separable_dataset;
use lateral_bench::report::render_curves;
use lateral_bench::sweep::{curve_data, dataset_hash, default_temperatures, run_sweep_with, DatasetRef, SolverRef, SweepPlan};

#[tokio::main]
async fn main() -> Result<()> {
    let data = separable_dataset(30, 6);
    let key = AnswerKey::new(&data, &PromptTemplate::default());
    let server = MockServer::start(move |request| {
        let inst = key.instance_for(request).expect("known prompt");
        let t = request.temperature().unwrap_or(0.0);
        let mut h = std::collections::hash_map::DefaultHasher::new();
        (inst.id.as_str(), request.index).hash(&mut h);
        let wrong = (h.finish() % 100) as f64 / 100.0 < 0.1 + 0.4 * t;
        let pick = if wrong { (inst.gold_index + 1) % inst.choices.len() } else { inst.gold_index };
        MockReply::Content(format!("{{\"answer\": {}}}", pick + 1))
    })?;
    let client = ChatClient::new(
        ClientConfig {
            endpoint: server.url(),
            model: "mock".into(),
            ..ClientConfig::default()
        },
        None,
    )?;
    let settings = SolveSettings::new(0.0);
    let plan = SweepPlan {
        temperatures: default_temperatures(),
        repeats_per_temperature: 3,
        dataset: DatasetRef {
            path: "generated".into(),
            sha256: dataset_hash(&data),
        },
        solver: SolverRef::describe(&client, &settings),
        seed: 0,
        overall_cells: Cell::SCORED.to_vec(),
    };

    let out = tempfile::tempdir()?;
    let state = out.path().join("state");
    let result = run_sweep_with(&plan, &client, &settings, &data, &state, |cell| {
        println!("t={} repeat {} overall {:.3}", cell.temperature, cell.repeat, cell.breakdown.overall.unwrap_or(f64::NAN));
    })
    .await?;

    println!("\ntemperature  mean    stddev");
    for row in curve_data(&result, Cell::Overall)? {
        println!("{:>11}  {:.3}   {:.3}", row.temperature, row.mean, row.stddev);
    }
    let files = render_curves(&result, out.path().join("curves"), true)?;
    println!("\nwrote {} files, e.g. {}", files.len(), files[0].display());
    Ok(())
}
