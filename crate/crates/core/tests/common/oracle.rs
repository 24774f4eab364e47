//! Loop-and-count metric oracles and a random grouped-dataset generator.
//!
//! The oracles scan the raw lists directly; they share no indexing or
//! grouping code with the library.

use lateral_bench::dataset::{Prediction, PredictionRecord, PuzzleInstance, Subtask, Variant};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn is_solved(instance: &PuzzleInstance, predictions: &[PredictionRecord]) -> bool {
    let mut solved = false;
    for p in predictions {
        if p.instance_id == instance.id && p.predicted_index == Prediction::Choice(instance.gold_index) {
            solved = true;
        }
    }
    solved
}

/// `(correct, total)` over instances passing the filter.
pub fn instance_oracle(predictions: &[PredictionRecord], instances: &[PuzzleInstance], filter: Option<Variant>) -> (u64, u64) {
    let mut correct = 0;
    let mut total = 0;
    for inst in instances {
        if filter.is_some() && Some(inst.variant) != filter {
            continue;
        }
        total += 1;
        if is_solved(inst, predictions) {
            correct += 1;
        }
    }
    (correct, total)
}

/// `(correct, total)` over groups that hold every required variant.
pub fn group_oracle(predictions: &[PredictionRecord], instances: &[PuzzleInstance], required: &[Variant]) -> (u64, u64) {
    let mut group_ids: Vec<&str> = Vec::new();
    for inst in instances {
        if !group_ids.contains(&inst.group_id.as_str()) {
            group_ids.push(&inst.group_id);
        }
    }
    let mut correct = 0;
    let mut total = 0;
    for gid in group_ids {
        let mut eligible = true;
        let mut all_right = true;
        for v in required {
            match instances.iter().find(|i| i.group_id == gid && i.variant == *v) {
                Some(inst) => all_right &= is_solved(inst, predictions),
                None => eligible = false,
            }
        }
        if eligible {
            total += 1;
            if all_right {
                correct += 1;
            }
        }
    }
    (correct, total)
}

pub fn record(id: &str, predicted: Prediction) -> PredictionRecord {
    PredictionRecord {
        instance_id: id.to_string(),
        predicted_index: predicted,
        solver_id: "random".into(),
        temperature: None,
        raw_response: String::new(),
        attempts: 1,
        error: None,
    }
}

/// `n_groups` groups of OR/SR/CR with 2 to 5 choices each. When `complete` is
/// false some groups lose their SR or CR member.
pub fn random_dataset(rng: &mut ChaCha8Rng, n_groups: usize, complete: bool) -> Vec<PuzzleInstance> {
    let mut out = Vec::new();
    for g in 0..n_groups {
        for variant in Variant::ALL {
            if !complete && variant != Variant::Original && rng.random_bool(0.25) {
                continue;
            }
            let n_choices = rng.random_range(2..=5);
            out.push(PuzzleInstance {
                id: format!("g{g}-{variant}"),
                group_id: format!("g{g}"),
                variant,
                subtask: Subtask::Sentence,
                question: format!("question {g} {variant}"),
                choices: (0..n_choices).map(|c| format!("choice {c}")).collect(),
                gold_index: rng.random_range(0..n_choices),
            });
        }
    }
    out.shuffle(rng);
    out
}

/// Right, wrong, ABSTAIN or missing per instance, in shuffled order.
pub fn random_predictions(rng: &mut ChaCha8Rng, instances: &[PuzzleInstance]) -> Vec<PredictionRecord> {
    let p_right = rng.random_range(0.0..=1.0);
    let mut out = Vec::new();
    for inst in instances {
        let roll: f64 = rng.random();
        let predicted = if roll < p_right {
            Prediction::Choice(inst.gold_index)
        } else {
            match rng.random_range(0..4) {
                0 => continue,
                1 => Prediction::Abstain,
                _ => Prediction::Choice((inst.gold_index + rng.random_range(1..inst.choices.len())) % inst.choices.len()),
            }
        };
        out.push(record(&inst.id, predicted));
    }
    out.shuffle(rng);
    out
}

pub fn random_case(seed: u64, max_groups: usize, complete: bool) -> (Vec<PuzzleInstance>, Vec<PredictionRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=max_groups);
    let data = random_dataset(&mut rng, n, complete);
    let preds = random_predictions(&mut rng, &data);
    (data, preds)
}
