use std::ops::Range;

use serde_json::{Deserializer, Map, Value};
use thiserror::Error;

/// A 0-based answer and where it came from in the raw reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedAnswer {
    pub choice_index: usize,
    /// Byte range of the JSON object holding the answer.
    pub source_span: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("no JSON object in response")]
    NoJsonFound,
    #[error("JSON object has no \"answer\" key")]
    MissingKey,
    #[error("answer is not an integer: {0}")]
    NotAnInteger(String),
    #[error("answer {0} is not a listed choice number")]
    OutOfRange(i64),
}

/// Finds the first JSON object carrying an `"answer"` key, anywhere in the
/// reply, and reads its 1-based choice number.
///
/// Prose and code fences around the object are ignored. The value itself
/// must be an integer or a string holding one.
pub fn parse_answer(raw: &str, n_choices: usize) -> Result<ParsedAnswer, ParseError> {
    let mut saw_object = false;
    for (start, _) in raw.match_indices('{') {
        let mut stream = Deserializer::from_str(&raw[start..]).into_iter::<Map<String, Value>>();
        let Some(Ok(object)) = stream.next() else {
            continue;
        };
        saw_object = true;
        let Some(value) = object.get("answer") else {
            continue;
        };
        let span = start..start + stream.byte_offset();
        let number = answer_number(value)?;
        if number < 1 || number > n_choices as i64 {
            return Err(ParseError::OutOfRange(number));
        }
        return Ok(ParsedAnswer {
            choice_index: (number - 1) as usize,
            source_span: span,
        });
    }
    Err(if saw_object { ParseError::MissingKey } else { ParseError::NoJsonFound })
}

fn answer_number(value: &Value) -> Result<i64, ParseError> {
    let not_int = || ParseError::NotAnInteger(value.to_string());
    match value {
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => Ok(i),
            (None, Some(_)) => Ok(i64::MAX),
            _ => Err(not_int()),
        },
        Value::String(s) => s.trim().parse::<i64>().map_err(|_| not_int()),
        _ => Err(not_int()),
    }
}
