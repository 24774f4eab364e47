//! Keeps the JSON schemas under docs/schemas in step with what the library
//! actually serializes: every emitted key is declared, every required key is
//! emitted.

mod common;

use std::collections::BTreeSet;

use common::fixtures::STORED_RUNS;
use lateral_bench::dataset::{load_dataset, read_prediction_log, DatasetFormat};
use lateral_bench::report::rescore_from_log;
use serde_json::Value;

fn schema(name: &str) -> Value {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/schemas/").to_string() + name;
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

fn keys(obj: &Value) -> BTreeSet<String> {
    obj.as_object().unwrap().keys().cloned().collect()
}

fn check(schema: &Value, value: &Value, what: &str) {
    let declared = keys(&schema["properties"]);
    let required: BTreeSet<String> =
        schema["required"].as_array().unwrap().iter().map(|v| v.as_str().unwrap().to_string()).collect();
    let emitted = keys(value);
    assert!(emitted.is_subset(&declared), "{what}: undeclared keys {:?}", emitted.difference(&declared).collect::<Vec<_>>());
    assert!(required.is_subset(&emitted), "{what}: missing keys {:?}", required.difference(&emitted).collect::<Vec<_>>());
}

#[test]
fn dataset_records_match_schema() {
    let s = schema("dataset.schema.json");
    let run = &STORED_RUNS[0];
    for inst in load_dataset(run.dataset(), DatasetFormat::Json).unwrap() {
        check(&s["$defs"]["instance"], &serde_json::to_value(&inst).unwrap(), "instance");
    }
}

#[test]
fn prediction_records_match_schema() {
    let s = schema("prediction-record.schema.json");
    let mut saw_error = false;
    for run in &STORED_RUNS {
        for record in read_prediction_log(run.log()).unwrap() {
            saw_error |= record.error.is_some();
            check(&s, &serde_json::to_value(&record).unwrap(), "prediction");
        }
    }
    assert!(saw_error, "fixtures should include an ABSTAIN record with an error note");
}

#[test]
fn breakdown_matches_schema() {
    let s = schema("breakdown.schema.json");
    let run = &STORED_RUNS[1];
    let b = serde_json::to_value(rescore_from_log(run.log(), run.dataset()).unwrap()).unwrap();
    check(&s, &b, "breakdown");
    for cell in ["inst_or", "inst_sr", "inst_cr", "group_pair", "group_triple"] {
        check(&s["$defs"]["accuracy"], &b[cell], cell);
    }
}
