//! Benchmark harness and solvers for lateral-thinking multiple-choice puzzles.
//!
//! The crate covers the whole evaluation loop:
//!
//! * [`dataset`] loads and validates puzzle files and assembles OR/SR/CR groups.
//! * [`metrics`] computes instance- and group-based accuracy.
//! * [`minimcq`] is a small pair-encoding transformer that scores each
//!   question/choice pair and takes a softmax across choices.
//! * [`llm`] runs zero-shot evaluation against any chat-completions endpoint.
//! * [`sweep`] repeats LLM evaluation over a temperature grid, resumably.
//! * [`report`] renders tables, CSV curves and SVG charts.
//! * [`cli`] wires the above into the `lateral-bench` command.

pub mod cli;
pub mod dataset;
pub mod llm;
pub mod metrics;
pub mod minimcq;
pub mod report;
pub mod sweep;
