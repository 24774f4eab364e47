//! Zero-shot solving through a chat-completions HTTP endpoint.
//!
//! [`build_prompt`] renders the fixed prompt, [`parse_answer`] pulls the JSON
//! answer out of a reply, and [`solve_dataset`] runs a whole dataset with
//! bounded concurrency, one fresh single-message session per request.

pub mod client;
pub mod mock;
pub mod parse;
pub mod prompt;
pub mod solver;

pub use client::{
    backoff_delay, ChatClient, ChatMessage, ChatReply, ChatRequest, ClientConfig, ClientError, RateLimiter,
    TranscriptLog, DEFAULT_API_KEY_VAR,
};
pub use parse::{parse_answer, ParseError, ParsedAnswer};
pub use prompt::{build_prompt, PromptTemplate};
pub use solver::{
    solve_dataset, solve_dataset_each, solve_dataset_with, solve_instance, solve_instance_with, SolveError, SolveSettings,
    DEFAULT_RETRY_BUDGET,
};
