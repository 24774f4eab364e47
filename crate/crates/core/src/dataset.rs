//! Puzzle data model, dataset loading, validation and adversarial grouping.
//!
//! A dataset is a JSON array of flat records:
//!
//! ```json
//! [{"id": "s1", "group_id": "g1", "variant": "OR", "subtask": "sentence",
//!   "question": "Q?", "choices": ["a", "b", "c", "d"], "gold_index": 2}]
//! ```
//!
//! Gold labels are 0-based on disk and in memory. Prediction logs are
//! JSON-lines with one [`PredictionRecord`] per line.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;
use thiserror::Error;

/// Adversarial variant of a puzzle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// Original question.
    #[serde(rename = "OR")]
    Original,
    /// Semantic reconstruction: rephrased question, same answer and distractors.
    #[serde(rename = "SR")]
    Semantic,
    /// Context reconstruction: same reasoning path, new situation and answer.
    #[serde(rename = "CR")]
    Context,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Original, Variant::Semantic, Variant::Context];

    pub fn code(self) -> &'static str {
        match self {
            Variant::Original => "OR",
            Variant::Semantic => "SR",
            Variant::Context => "CR",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subtask {
    Sentence,
    Word,
}

impl fmt::Display for Subtask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Subtask::Sentence => "sentence",
            Subtask::Word => "word",
        })
    }
}

/// One multiple-choice puzzle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PuzzleInstance {
    pub id: String,
    pub group_id: String,
    pub variant: Variant,
    pub subtask: Subtask,
    pub question: String,
    pub choices: Vec<String>,
    pub gold_index: usize,
}

impl PuzzleInstance {
    pub fn is_correct(&self, prediction: Prediction) -> bool {
        matches!(prediction, Prediction::Choice(i) if i == self.gold_index)
    }
}

/// The original puzzle together with whichever adversarial variants exist.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdversarialGroup {
    pub group_id: String,
    pub members: BTreeMap<Variant, PuzzleInstance>,
}

impl AdversarialGroup {
    pub fn original(&self) -> &PuzzleInstance {
        &self.members[&Variant::Original]
    }

    pub fn get(&self, variant: Variant) -> Option<&PuzzleInstance> {
        self.members.get(&variant)
    }

    pub fn is_complete(&self) -> bool {
        self.members.len() == Variant::ALL.len()
    }

    pub fn has_all(&self, variants: &[Variant]) -> bool {
        variants.iter().all(|v| self.members.contains_key(v))
    }
}

/// A solver's answer for one instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Prediction {
    Choice(usize),
    /// No usable answer after the retry budget ran out. Scored as incorrect.
    Abstain,
}

impl Prediction {
    pub fn index(self) -> Option<usize> {
        match self {
            Prediction::Choice(i) => Some(i),
            Prediction::Abstain => None,
        }
    }
}

impl fmt::Display for Prediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Prediction::Choice(i) => write!(f, "{i}"),
            Prediction::Abstain => f.write_str("ABSTAIN"),
        }
    }
}

impl Serialize for Prediction {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Prediction::Choice(i) => serializer.serialize_u64(*i as u64),
            Prediction::Abstain => serializer.serialize_str("ABSTAIN"),
        }
    }
}

impl<'de> Deserialize<'de> for Prediction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PredictionVisitor;

        impl Visitor<'_> for PredictionVisitor {
            type Value = Prediction;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a non-negative choice index or \"ABSTAIN\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Prediction, E> {
                Ok(Prediction::Choice(v as usize))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Prediction, E> {
                usize::try_from(v)
                    .map(Prediction::Choice)
                    .map_err(|_| E::custom(format!("negative choice index {v}")))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Prediction, E> {
                if v == "ABSTAIN" {
                    Ok(Prediction::Abstain)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }

        deserializer.deserialize_any(PredictionVisitor)
    }
}

/// Solver output for one instance. Serialized as one line of a prediction log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub instance_id: String,
    pub predicted_index: Prediction,
    pub solver_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    pub raw_response: String,
    pub attempts: u32,
    /// Why the solver abstained, if it did.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DatasetFormat {
    #[default]
    Json,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed dataset{}{}: {message}", fmt_id(.id), fmt_offset(.offset))]
    MalformedFile {
        id: Option<String>,
        offset: Option<usize>,
        message: String,
    },
    #[error("duplicate instance id {id:?}{}", fmt_offset(.offset))]
    DuplicateId { id: String, offset: Option<usize> },
    #[error("record {id:?}{}: gold_index {gold_index} out of range for {n_choices} choices", fmt_offset(.offset))]
    LabelOutOfRange {
        id: String,
        offset: Option<usize>,
        gold_index: usize,
        n_choices: usize,
    },
    #[error("record {id:?}{}: needs at least 2 choices, found {n_choices}", fmt_offset(.offset))]
    TooFewChoices {
        id: String,
        offset: Option<usize>,
        n_choices: usize,
    },
    #[error("record {id:?}{}: group {group_id:?} already has a {variant} member", fmt_offset(.offset))]
    DuplicateGroupVariant {
        id: String,
        offset: Option<usize>,
        group_id: String,
        variant: Variant,
    },
}

fn fmt_id(id: &Option<String>) -> String {
    id.as_ref().map(|id| format!(" (record {id:?})")).unwrap_or_default()
}

fn fmt_offset(offset: &Option<usize>) -> String {
    offset.map(|o| format!(" at byte {o}")).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroupingError {
    #[error("group {0:?} has no OR member")]
    MissingOriginal(String),
    #[error("group {0:?} has more than one {1} member")]
    DuplicateVariant(String, Variant),
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Vec<PuzzleInstance>, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    match format {
        DatasetFormat::Json => parse_dataset(&text),
    }
}

/// Parses the JSON array form and enforces every per-record invariant.
pub fn parse_dataset(text: &str) -> Result<Vec<PuzzleInstance>, DatasetError> {
    let records = parse_records(text)?;
    let mut seen_ids = HashSet::new();
    let mut seen_slots = HashSet::new();
    let mut out = Vec::with_capacity(records.len());
    for (offset, instance) in records {
        let offset = Some(offset);
        if !seen_ids.insert(instance.id.clone()) {
            return Err(DatasetError::DuplicateId { id: instance.id, offset });
        }
        if instance.choices.len() < 2 {
            return Err(DatasetError::TooFewChoices {
                n_choices: instance.choices.len(),
                id: instance.id,
                offset,
            });
        }
        if instance.gold_index >= instance.choices.len() {
            return Err(DatasetError::LabelOutOfRange {
                gold_index: instance.gold_index,
                n_choices: instance.choices.len(),
                id: instance.id,
                offset,
            });
        }
        if !seen_slots.insert((instance.group_id.clone(), instance.variant)) {
            return Err(DatasetError::DuplicateGroupVariant {
                group_id: instance.group_id,
                variant: instance.variant,
                id: instance.id,
                offset,
            });
        }
        out.push(instance);
    }
    Ok(out)
}

/// Schema-only load: JSON and field types are checked, invariants are not.
/// Pair with [`validate`] to list every problem in a dataset.
pub fn load_dataset_unchecked(path: impl AsRef<Path>) -> Result<Vec<PuzzleInstance>, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(parse_records(&text)?.into_iter().map(|(_, inst)| inst).collect())
}

/// Returns each record with the byte offset where it starts.
fn parse_records(text: &str) -> Result<Vec<(usize, PuzzleInstance)>, DatasetError> {
    let raws: Vec<&RawValue> = serde_json::from_str(text).map_err(|e| DatasetError::MalformedFile {
        id: None,
        offset: line_col_to_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let base = text.as_ptr() as usize;
    raws.into_iter()
        .map(|raw| {
            let offset = raw.get().as_ptr() as usize - base;
            serde_json::from_str(raw.get())
                .map(|inst| (offset, inst))
                .map_err(|e| DatasetError::MalformedFile {
                    id: sniff_id(raw),
                    offset: Some(offset),
                    message: e.to_string(),
                })
        })
        .collect()
}

fn sniff_id(raw: &RawValue) -> Option<String> {
    #[derive(Deserialize)]
    struct IdOnly {
        id: String,
    }
    serde_json::from_str::<IdOnly>(raw.get()).ok().map(|r| r.id)
}

fn line_col_to_offset(text: &str, line: usize, column: usize) -> Option<usize> {
    if line == 0 {
        return None;
    }
    let line_start: usize = text.split_inclusive('\n').take(line - 1).map(str::len).sum();
    Some((line_start + column.saturating_sub(1)).min(text.len()))
}

pub fn dataset_to_json(instances: &[PuzzleInstance]) -> String {
    serde_json::to_string_pretty(instances).expect("instances always serialize")
}

pub fn save_dataset(path: impl AsRef<Path>, instances: &[PuzzleInstance]) -> std::io::Result<()> {
    fs::write(path, dataset_to_json(instances) + "\n")
}

/// Partitions instances into groups sorted by `group_id`.
pub fn group_instances(instances: &[PuzzleInstance]) -> Result<Vec<AdversarialGroup>, GroupingError> {
    let mut by_group: BTreeMap<&str, BTreeMap<Variant, PuzzleInstance>> = BTreeMap::new();
    for instance in instances {
        let members = by_group.entry(&instance.group_id).or_default();
        if members.insert(instance.variant, instance.clone()).is_some() {
            return Err(GroupingError::DuplicateVariant(instance.group_id.clone(), instance.variant));
        }
    }
    by_group
        .into_iter()
        .map(|(group_id, members)| {
            if !members.contains_key(&Variant::Original) {
                return Err(GroupingError::MissingOriginal(group_id.to_string()));
            }
            Ok(AdversarialGroup {
                group_id: group_id.to_string(),
                members,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationIssue {
    pub severity: Severity,
    /// Instance id or group id the issue is about.
    pub subject: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn has_errors(&self) -> bool {
        self.issues.iter().any(|i| i.severity == Severity::Error)
    }

    pub fn count(&self, severity: Severity) -> usize {
        self.issues.iter().filter(|i| i.severity == severity).count()
    }

    fn push(&mut self, severity: Severity, subject: &str, message: impl Into<String>) {
        self.issues.push(ValidationIssue {
            severity,
            subject: subject.to_string(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            let tag = match issue.severity {
                Severity::Warning => "WARNING",
                Severity::Error => "ERROR",
            };
            writeln!(f, "{tag:<7} {}: {}", issue.subject, issue.message)?;
        }
        write!(
            f,
            "{} error(s), {} warning(s)",
            self.count(Severity::Error),
            self.count(Severity::Warning)
        )
    }
}

/// Collects every invariant violation instead of stopping at the first.
///
/// Per-instance issues come first in input order, then group-level issues
/// sorted by group id.
pub fn validate(instances: &[PuzzleInstance]) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut id_counts: HashMap<&str, usize> = HashMap::new();
    let mut groups: BTreeMap<&str, BTreeMap<Variant, usize>> = BTreeMap::new();

    for inst in instances {
        let seen = id_counts.entry(&inst.id).or_insert(0);
        *seen += 1;
        if *seen == 2 {
            report.push(Severity::Error, &inst.id, "duplicate instance id");
        }
        if inst.choices.len() < 2 {
            report.push(
                Severity::Error,
                &inst.id,
                format!("choices < 2 (found {})", inst.choices.len()),
            );
        }
        if inst.gold_index >= inst.choices.len() {
            report.push(
                Severity::Error,
                &inst.id,
                format!(
                    "gold_index {} out of range for {} choices",
                    inst.gold_index,
                    inst.choices.len()
                ),
            );
        }
        if inst.question.trim().is_empty() {
            report.push(Severity::Error, &inst.id, "empty question");
        }
        if let Some(pos) = inst.choices.iter().position(|c| c.trim().is_empty()) {
            report.push(Severity::Error, &inst.id, format!("choice {pos} is empty"));
        }
        if !inst.choices.is_empty() && inst.choices.len() != 4 {
            report.push(
                Severity::Warning,
                &inst.id,
                format!("{} choices (canonical count is 4)", inst.choices.len()),
            );
        }
        *groups.entry(&inst.group_id).or_default().entry(inst.variant).or_insert(0) += 1;
    }

    for (group_id, variants) in &groups {
        for (variant, count) in variants {
            if *count > 1 {
                report.push(Severity::Error, group_id, format!("{count} {variant} members"));
            }
        }
        if !variants.contains_key(&Variant::Original) {
            report.push(Severity::Error, group_id, "group has no OR member");
            continue;
        }
        let missing: Vec<&str> = Variant::ALL
            .iter()
            .filter(|v| !variants.contains_key(v))
            .map(|v| v.code())
            .collect();
        if !missing.is_empty() {
            report.push(
                Severity::Warning,
                group_id,
                format!("incomplete group (missing {})", missing.join(", ")),
            );
        }
    }
    report
}

#[derive(Debug, Error)]
pub enum PredictionLogError {
    #[error("cannot access prediction log {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("prediction log line {line}: {message}")]
    Malformed { line: usize, message: String },
}

pub fn read_prediction_log(path: impl AsRef<Path>) -> Result<Vec<PredictionRecord>, PredictionLogError> {
    let path = path.as_ref();
    let io_err = |source| PredictionLogError::Io {
        path: path.display().to_string(),
        source,
    };
    let file = fs::File::open(path).map_err(io_err)?;
    let mut records = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| PredictionLogError::Malformed {
            line: n + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

pub fn write_prediction_log(path: impl AsRef<Path>, records: &[PredictionRecord]) -> Result<(), PredictionLogError> {
    let path = path.as_ref();
    let io_err = |source| PredictionLogError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for record in records {
        let line = serde_json::to_string(record).expect("records always serialize");
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inst(id: &str, group: &str, variant: Variant, n_choices: usize, gold: usize) -> PuzzleInstance {
        PuzzleInstance {
            id: id.into(),
            group_id: group.into(),
            variant,
            subtask: Subtask::Sentence,
            question: format!("question {id}?"),
            choices: (0..n_choices).map(|i| format!("choice {i}")).collect(),
            gold_index: gold,
        }
    }

    #[test]
    fn loads_single_record() {
        let text = r#"[{"id":"s1","group_id":"g1","variant":"OR","subtask":"sentence","question":"Q?","choices":["a","b","c","d"],"gold_index":2}]"#;
        let instances = parse_dataset(text).unwrap();
        assert_eq!(instances.len(), 1);
        assert_eq!(instances[0].gold_index, 2);
        assert_eq!(instances[0].variant, Variant::Original);
    }

    #[test]
    fn duplicate_id_is_reported_with_offset() {
        let rec = r#"{"id":"s1","group_id":"g1","variant":"OR","subtask":"sentence","question":"Q?","choices":["a","b"],"gold_index":0}"#;
        let rec2 = rec.replace("\"g1\"", "\"g2\"");
        let text = format!("[{rec},\n {rec2}]");
        match parse_dataset(&text) {
            Err(DatasetError::DuplicateId { id, offset }) => {
                assert_eq!(id, "s1");
                assert_eq!(offset, Some(rec.len() + 4));
            }
            other => panic!("expected DuplicateId, got {other:?}"),
        }
    }

    #[test]
    fn gold_out_of_range() {
        let text = r#"[{"id":"s9","group_id":"g1","variant":"OR","subtask":"word","question":"Q?","choices":["a","b","c","d"],"gold_index":4}]"#;
        let err = parse_dataset(text).unwrap_err();
        assert!(matches!(err, DatasetError::LabelOutOfRange { ref id, gold_index: 4, n_choices: 4, .. } if id == "s9"));
        assert!(err.to_string().contains("s9"));
    }

    #[test]
    fn malformed_json_and_schema() {
        assert!(matches!(parse_dataset("[{"), Err(DatasetError::MalformedFile { .. })));
        let bad_variant = r#"[{"id":"x","group_id":"g","variant":"XX","subtask":"word","question":"Q","choices":["a","b"],"gold_index":0}]"#;
        match parse_dataset(bad_variant) {
            Err(DatasetError::MalformedFile { id, offset, .. }) => {
                assert_eq!(id.as_deref(), Some("x"));
                assert_eq!(offset, Some(1));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn groups_complete_and_partial() {
        let full = vec![
            inst("a", "g1", Variant::Original, 4, 0),
            inst("b", "g1", Variant::Semantic, 4, 0),
            inst("c", "g1", Variant::Context, 4, 0),
        ];
        let groups = group_instances(&full).unwrap();
        assert_eq!(groups.len(), 1);
        assert!(groups[0].is_complete());

        let partial = vec![
            inst("a", "g1", Variant::Original, 4, 0),
            inst("b", "g1", Variant::Semantic, 4, 0),
            inst("c", "g2", Variant::Original, 4, 0),
        ];
        let groups = group_instances(&partial).unwrap();
        assert_eq!(groups.len(), 2);
        assert!(!groups[0].is_complete());
        assert!(groups[0].get(Variant::Context).is_none());
        assert_eq!(groups[1].members.len(), 1);
    }

    #[test]
    fn group_without_original() {
        let only_sr = vec![inst("a", "g1", Variant::Semantic, 4, 0)];
        assert_eq!(
            group_instances(&only_sr),
            Err(GroupingError::MissingOriginal("g1".into()))
        );
        let dup = vec![inst("a", "g1", Variant::Original, 4, 0), inst("b", "g1", Variant::Original, 4, 0)];
        assert_eq!(
            group_instances(&dup),
            Err(GroupingError::DuplicateVariant("g1".into(), Variant::Original))
        );
    }

    #[test]
    fn validation_severities() {
        let clean = vec![
            inst("a", "g1", Variant::Original, 4, 0),
            inst("b", "g1", Variant::Semantic, 4, 1),
            inst("c", "g1", Variant::Context, 4, 2),
        ];
        assert!(validate(&clean).is_empty());

        let one_choice = vec![inst("a", "g1", Variant::Original, 1, 0)];
        let report = validate(&one_choice);
        assert!(report.has_errors());
        assert!(report
            .issues
            .iter()
            .any(|i| i.severity == Severity::Error && i.message.starts_with("choices < 2")));

        let no_cr = vec![
            inst("a", "g1", Variant::Original, 4, 0),
            inst("b", "g1", Variant::Semantic, 4, 1),
        ];
        let report = validate(&no_cr);
        assert!(!report.has_errors());
        assert_eq!(report.count(Severity::Warning), 1);
        assert_eq!(validate(&no_cr), report);
    }

    #[test]
    fn prediction_serde() {
        let rec = PredictionRecord {
            instance_id: "a".into(),
            predicted_index: Prediction::Abstain,
            solver_id: "llm".into(),
            temperature: Some(0.2),
            raw_response: "???".into(),
            attempts: 3,
            error: None,
        };
        let line = serde_json::to_string(&rec).unwrap();
        assert!(line.contains("\"predicted_index\":\"ABSTAIN\""));
        assert_eq!(serde_json::from_str::<PredictionRecord>(&line).unwrap(), rec);
        let choice: Prediction = serde_json::from_str("2").unwrap();
        assert_eq!(choice, Prediction::Choice(2));
        assert!(serde_json::from_str::<Prediction>("\"maybe\"").is_err());
        assert!(serde_json::from_str::<Prediction>("-1").is_err());
    }
}
