use serde::{Deserialize, Serialize};

use crate::dataset::PuzzleInstance;

/// Header above the numbered choices, spelled as in the original protocol.
pub const CHOICES_HEADER: &str = "liste of choices :";
pub const CORRECTED_CHOICES_HEADER: &str = "list of choices :";
pub const ANSWER_FOOTER: &str = "Response should be in json format :\n{ \"answer\": Number of the choice }";

/// Zero-shot prompt layout. `{question}` and `{numbered_choices}` are the
/// placeholders; everything else is copied through.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub text: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::with_header(CHOICES_HEADER)
    }
}

impl PromptTemplate {
    pub fn with_header(header: &str) -> Self {
        PromptTemplate {
            text: format!("{{question}}\n\n{header}\n{{numbered_choices}}\n\n{ANSWER_FOOTER}"),
        }
    }

    /// Same layout with the header's spelling fixed.
    pub fn corrected() -> Self {
        PromptTemplate::with_header(CORRECTED_CHOICES_HEADER)
    }

    /// Single pass, so placeholder-like text inside the question or choices
    /// is left alone.
    pub fn render(&self, question: &str, choices: &[String]) -> String {
        let choices = numbered_choices(choices);
        let mut out = String::with_capacity(self.text.len() + question.len() + choices.len());
        let mut rest = self.text.as_str();
        while let Some(start) = rest.find('{') {
            out.push_str(&rest[..start]);
            let tail = &rest[start..];
            if let Some(after) = tail.strip_prefix("{question}") {
                out.push_str(question);
                rest = after;
            } else if let Some(after) = tail.strip_prefix("{numbered_choices}") {
                out.push_str(&choices);
                rest = after;
            } else {
                out.push('{');
                rest = &tail[1..];
            }
        }
        out.push_str(rest);
        out
    }
}

/// One `N- text.` line per choice, numbered from 1. A choice that already
/// ends in a period does not get a second one.
pub fn numbered_choices(choices: &[String]) -> String {
    choices
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let c = c.trim();
            if c.ends_with('.') {
                format!("{}- {c}", i + 1)
            } else {
                format!("{}- {c}.", i + 1)
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn build_prompt(instance: &PuzzleInstance) -> String {
    PromptTemplate::default().render(&instance.question, &instance.choices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Subtask, Variant};

    fn instance(choices: &[&str]) -> PuzzleInstance {
        PuzzleInstance {
            id: "q".into(),
            group_id: "g".into(),
            variant: Variant::Original,
            subtask: Subtask::Sentence,
            question: "What has keys but can't open locks?".into(),
            choices: choices.iter().map(|s| s.to_string()).collect(),
            gold_index: 0,
        }
    }

    #[test]
    fn four_choices() {
        let p = build_prompt(&instance(&["A piano", "A map", "A door", "None of above."]));
        assert_eq!(
            p,
            "What has keys but can't open locks?\n\nliste of choices :\n1- A piano.\n2- A map.\n3- A door.\n4- None of above.\n\nResponse should be in json format :\n{ \"answer\": Number of the choice }"
        );
        assert_eq!(p.matches("Response should be in json format").count(), 1);
    }

    #[test]
    fn two_choices() {
        let p = build_prompt(&instance(&["yes", "no"]));
        assert!(p.contains("\n1- yes.\n2- no.\n\n"));
        assert!(!p.contains("3-"));
        assert_eq!(p, build_prompt(&instance(&["yes", "no"])));
    }

    #[test]
    fn corrected_header() {
        let p = PromptTemplate::corrected().render("q?", &["a".into(), "b".into()]);
        assert!(p.contains("\nlist of choices :\n"));
    }

    #[test]
    fn placeholder_in_question_is_not_expanded() {
        let p = PromptTemplate::default().render("what is {numbered_choices}?", &["{question}".into(), "b".into()]);
        assert!(p.starts_with("what is {numbered_choices}?\n"));
        assert!(p.contains("\n1- {question}.\n"));
    }
}
