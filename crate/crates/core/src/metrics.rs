//! Instance-based and group-based accuracy, and the per-variant breakdown
//! reported on the task leaderboard.
//!
//! Every cell is kept as an integer `correct / total` pair and divided once at
//! the end, so scores are reproducible bit for bit.

use std::collections::{HashMap, HashSet};
use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{group_instances, AdversarialGroup, GroupingError, Prediction, PredictionRecord, PuzzleInstance, Variant};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("prediction for unknown instance id {0:?}")]
    UnknownInstanceId(String),
    #[error("more than one prediction for instance {0:?}")]
    DuplicatePrediction(String),
    #[error("prediction {index} for instance {id:?} is outside its {n_choices} choices")]
    PredictionOutOfRange { id: String, index: usize, n_choices: usize },
    #[error(transparent)]
    Grouping(#[from] GroupingError),
}

/// An accuracy cell as exact counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Accuracy {
    pub correct: u64,
    pub total: u64,
}

impl Accuracy {
    pub fn new(correct: u64, total: u64) -> Self {
        debug_assert!(correct <= total);
        Accuracy { correct, total }
    }

    /// `None` when nothing was eligible; an empty cell is undefined, not 0.
    pub fn value(&self) -> Option<f64> {
        (self.total > 0).then(|| self.correct as f64 / self.total as f64)
    }

    fn ratio(&self) -> Option<Ratio<i128>> {
        (self.total > 0).then(|| Ratio::new(self.correct as i128, self.total as i128))
    }
}

impl Serialize for Accuracy {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr {
            correct: u64,
            total: u64,
            value: Option<f64>,
        }
        Repr {
            correct: self.correct,
            total: self.total,
            value: self.value(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Accuracy {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        // `value` is derived from the counts and ignored on input.
        #[derive(Deserialize)]
        struct Repr {
            correct: u64,
            total: u64,
        }
        let repr = Repr::deserialize(deserializer)?;
        if repr.correct > repr.total {
            return Err(serde::de::Error::custom("correct exceeds total"));
        }
        Ok(Accuracy::new(repr.correct, repr.total))
    }
}

/// The cells of a [`ScoreBreakdown`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cell {
    InstOr,
    InstSr,
    InstCr,
    GroupPair,
    GroupTriple,
    Overall,
}

impl Cell {
    /// The five scored cells, in leaderboard column order.
    pub const SCORED: [Cell; 5] = [Cell::InstOr, Cell::InstSr, Cell::InstCr, Cell::GroupPair, Cell::GroupTriple];
    pub const ALL: [Cell; 6] = [
        Cell::Overall,
        Cell::InstOr,
        Cell::InstSr,
        Cell::InstCr,
        Cell::GroupPair,
        Cell::GroupTriple,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Cell::InstOr => "inst_or",
            Cell::InstSr => "inst_sr",
            Cell::InstCr => "inst_cr",
            Cell::GroupPair => "group_pair",
            Cell::GroupTriple => "group_triple",
            Cell::Overall => "overall",
        }
    }

    pub fn parse(name: &str) -> Option<Cell> {
        Cell::ALL.into_iter().find(|c| c.name() == name)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub inst_or: Accuracy,
    pub inst_sr: Accuracy,
    pub inst_cr: Accuracy,
    /// Groups whose OR and SR members are both correct.
    pub group_pair: Accuracy,
    /// Groups whose OR, SR and CR members are all correct.
    pub group_triple: Accuracy,
    /// Mean of the defined cells in `overall_cells`.
    pub overall: Option<f64>,
    pub overall_cells: Vec<Cell>,
}

impl ScoreBreakdown {
    /// Counts for a scored cell; `None` for [`Cell::Overall`].
    pub fn accuracy(&self, cell: Cell) -> Option<Accuracy> {
        match cell {
            Cell::InstOr => Some(self.inst_or),
            Cell::InstSr => Some(self.inst_sr),
            Cell::InstCr => Some(self.inst_cr),
            Cell::GroupPair => Some(self.group_pair),
            Cell::GroupTriple => Some(self.group_triple),
            Cell::Overall => None,
        }
    }

    pub fn value(&self, cell: Cell) -> Option<f64> {
        match cell {
            Cell::Overall => self.overall,
            other => self.accuracy(other).and_then(|a| a.value()),
        }
    }
}

/// Exact mean of the defined cells, divided once.
pub fn overall_score(cells: &[Accuracy]) -> Option<f64> {
    let defined: Vec<Ratio<i128>> = cells.iter().filter_map(Accuracy::ratio).collect();
    if defined.is_empty() {
        return None;
    }
    let n = defined.len() as i128;
    let mean = defined.into_iter().fold(Ratio::from_integer(0), |acc, r| acc + r) / n;
    Some(*mean.numer() as f64 / *mean.denom() as f64)
}

/// Index predictions by instance id, rejecting unknown ids, duplicates and
/// out-of-range choices.
fn index_predictions<'a>(
    predictions: &'a [PredictionRecord],
    known: &HashMap<&str, usize>,
) -> Result<HashMap<&'a str, Prediction>, MetricsError> {
    let mut by_id = HashMap::with_capacity(predictions.len());
    for record in predictions {
        let n_choices = *known
            .get(record.instance_id.as_str())
            .ok_or_else(|| MetricsError::UnknownInstanceId(record.instance_id.clone()))?;
        if let Prediction::Choice(index) = record.predicted_index {
            if index >= n_choices {
                return Err(MetricsError::PredictionOutOfRange {
                    id: record.instance_id.clone(),
                    index,
                    n_choices,
                });
            }
        }
        if by_id.insert(record.instance_id.as_str(), record.predicted_index).is_some() {
            return Err(MetricsError::DuplicatePrediction(record.instance_id.clone()));
        }
    }
    Ok(by_id)
}

fn instance_choice_counts<'a>(instances: impl IntoIterator<Item = &'a PuzzleInstance>) -> HashMap<&'a str, usize> {
    instances.into_iter().map(|i| (i.id.as_str(), i.choices.len())).collect()
}

fn solved(instance: &PuzzleInstance, predictions: &HashMap<&str, Prediction>) -> bool {
    predictions.get(instance.id.as_str()).is_some_and(|p| instance.is_correct(*p))
}

/// Counts for instance-based accuracy. Missing predictions and ABSTAIN count
/// as incorrect.
pub fn instance_counts(
    predictions: &[PredictionRecord],
    instances: &[PuzzleInstance],
    variant_filter: Option<Variant>,
) -> Result<Accuracy, MetricsError> {
    let predicted = index_predictions(predictions, &instance_choice_counts(instances))?;
    let mut acc = Accuracy::default();
    for inst in instances.iter().filter(|i| variant_filter.is_none_or(|v| i.variant == v)) {
        acc.total += 1;
        acc.correct += solved(inst, &predicted) as u64;
    }
    Ok(acc)
}

/// Instance-based accuracy; `Ok(None)` when the filter matches nothing.
pub fn instance_accuracy(
    predictions: &[PredictionRecord],
    instances: &[PuzzleInstance],
    variant_filter: Option<Variant>,
) -> Result<Option<f64>, MetricsError> {
    Ok(instance_counts(predictions, instances, variant_filter)?.value())
}

/// Counts for group-based accuracy over groups holding every required variant.
/// Members outside `required_variants` are ignored.
pub fn group_counts(
    predictions: &[PredictionRecord],
    groups: &[AdversarialGroup],
    required_variants: &[Variant],
) -> Result<Accuracy, MetricsError> {
    let predicted = index_predictions(
        predictions,
        &instance_choice_counts(groups.iter().flat_map(|g| g.members.values())),
    )?;
    let mut acc = Accuracy::default();
    for group in groups.iter().filter(|g| g.has_all(required_variants)) {
        acc.total += 1;
        let all_correct = required_variants
            .iter()
            .all(|v| solved(&group.members[v], &predicted));
        acc.correct += all_correct as u64;
    }
    Ok(acc)
}

/// Group-based accuracy; `Ok(None)` when no group is eligible.
pub fn group_accuracy(
    predictions: &[PredictionRecord],
    groups: &[AdversarialGroup],
    required_variants: &[Variant],
) -> Result<Option<f64>, MetricsError> {
    Ok(group_counts(predictions, groups, required_variants)?.value())
}

pub const PAIR: [Variant; 2] = [Variant::Original, Variant::Semantic];
pub const TRIPLE: [Variant; 3] = [Variant::Original, Variant::Semantic, Variant::Context];

/// Breakdown with the overall score averaged over all five scored cells.
pub fn score_breakdown(predictions: &[PredictionRecord], instances: &[PuzzleInstance]) -> Result<ScoreBreakdown, MetricsError> {
    score_breakdown_with(predictions, instances, &Cell::SCORED)
}

/// Breakdown with a caller-chosen cell set for the overall mean.
pub fn score_breakdown_with(
    predictions: &[PredictionRecord],
    instances: &[PuzzleInstance],
    overall_cells: &[Cell],
) -> Result<ScoreBreakdown, MetricsError> {
    let groups = group_instances(instances)?;
    // Validate the full prediction set once against every instance.
    index_predictions(predictions, &instance_choice_counts(instances))?;

    let mut breakdown = ScoreBreakdown {
        inst_or: instance_counts(predictions, instances, Some(Variant::Original))?,
        inst_sr: instance_counts(predictions, instances, Some(Variant::Semantic))?,
        inst_cr: instance_counts(predictions, instances, Some(Variant::Context))?,
        group_pair: group_counts(predictions, &groups, &PAIR)?,
        group_triple: group_counts(predictions, &groups, &TRIPLE)?,
        overall: None,
        overall_cells: Vec::new(),
    };
    let mut cells: Vec<Cell> = overall_cells.iter().copied().filter(|c| *c != Cell::Overall).collect();
    let mut seen = HashSet::new();
    cells.retain(|c| seen.insert(*c));
    let scored: Vec<Accuracy> = cells.iter().filter_map(|c| breakdown.accuracy(*c)).collect();
    breakdown.overall = overall_score(&scored);
    breakdown.overall_cells = cells;
    Ok(breakdown)
}
