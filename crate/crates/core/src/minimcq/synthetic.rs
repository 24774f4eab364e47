//! Generated category-matching puzzles that a small model can fit exactly.
//!
//! Every question names a category; the gold choice is a member of it and
//! the distractors come from other categories. Instances are laid out as
//! OR/SR/CR groups so the full metrics path can be exercised.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{PuzzleInstance, Subtask, Variant};

const CATEGORIES: [(&str, [&str; 5]); 6] = [
    ("color", ["red", "blue", "green", "yellow", "purple"]),
    ("animal", ["cat", "dog", "horse", "mouse", "tiger"]),
    ("fruit", ["apple", "banana", "cherry", "grape", "lemon"]),
    ("tool", ["hammer", "saw", "drill", "wrench", "chisel"]),
    ("planet", ["mars", "venus", "saturn", "jupiter", "mercury"]),
    ("drink", ["tea", "coffee", "milk", "juice", "water"]),
];

fn question(variant: Variant, category: &str) -> String {
    match variant {
        Variant::Original => format!("which of these is a {category} ?"),
        Variant::Semantic => format!("pick the {category} from the list ."),
        Variant::Context => format!("one of these answers names a {category} . which one ?"),
    }
}

/// `n` four-choice instances in groups of three, deterministic in `seed`.
pub fn separable_dataset(n: usize, seed: u64) -> Vec<PuzzleInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let variant = Variant::ALL[i % 3];
        let group = i / 3;
        let mut cats: Vec<usize> = (0..CATEGORIES.len()).collect();
        cats.shuffle(&mut rng);
        let (target, distractors) = (cats[0], &cats[1..4]);

        let mut choices: Vec<String> = distractors
            .iter()
            .map(|c| CATEGORIES[*c].1.choose(&mut rng).unwrap().to_string())
            .collect();
        let gold_index = rng.random_range(0..4);
        let gold = CATEGORIES[target].1.choose(&mut rng).unwrap().to_string();
        choices.insert(gold_index, gold);

        out.push(PuzzleInstance {
            id: format!("syn-{i}"),
            group_id: format!("syn-g{group}"),
            variant,
            subtask: Subtask::Sentence,
            question: question(variant, CATEGORIES[target].0),
            choices,
            gold_index,
        });
    }
    out
}
