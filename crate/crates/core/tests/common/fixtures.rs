//! Stored dataset + prediction-log pairs and the cells they must rescore to.

use std::path::PathBuf;

pub struct StoredRun {
    pub name: &'static str,
    /// inst_or, inst_sr, inst_cr, group_pair, group_triple as (correct, total).
    pub counts: [(u64, u64); 5],
    pub overall: f64,
    pub shown: &'static str,
}

/// Three runs whose overall cells land on 0.98, 0.59 and 0.27: a near-perfect
/// sentence run, and two zero-shot chat runs (sentence and word puzzles).
pub const STORED_RUNS: [StoredRun; 3] = [
    StoredRun {
        name: "sentence_top",
        counts: [(39, 40), (39, 40), (40, 40), (39, 40), (39, 40)],
        overall: 0.98,
        shown: "0.98",
    },
    StoredRun {
        name: "chat_sentence",
        counts: [(29, 40), (28, 40), (26, 40), (21, 40), (14, 40)],
        overall: 0.59,
        shown: "0.59",
    },
    StoredRun {
        name: "chat_word",
        counts: [(8, 20), (7, 20), (6, 20), (4, 20), (2, 20)],
        overall: 0.27,
        shown: "0.27",
    },
];

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

impl StoredRun {
    pub fn dataset(&self) -> PathBuf {
        fixture(&format!("{}.json", self.name))
    }

    pub fn log(&self) -> PathBuf {
        fixture(&format!("{}.predictions.jsonl", self.name))
    }
}
