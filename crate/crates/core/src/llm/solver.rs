use futures::stream::{self, StreamExt};
use thiserror::Error;

use super::client::{ChatClient, ClientError};
use super::parse::parse_answer;
use super::prompt::PromptTemplate;
use crate::dataset::{Prediction, PredictionRecord, PuzzleInstance};

/// Total attempts per instance when the reply cannot be parsed.
pub const DEFAULT_RETRY_BUDGET: u32 = 3;
pub const DEFAULT_CONCURRENCY: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveSettings {
    pub temperature: f64,
    pub retry_budget: u32,
    pub concurrency_limit: usize,
    pub template: PromptTemplate,
}

impl SolveSettings {
    pub fn new(temperature: f64) -> Self {
        SolveSettings {
            temperature,
            retry_budget: DEFAULT_RETRY_BUDGET,
            concurrency_limit: DEFAULT_CONCURRENCY,
            template: PromptTemplate::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid solver settings: {0}")]
    InvalidSettings(String),
    #[error("instance {instance_id}: attempt {attempts} failed: {source}")]
    Request {
        instance_id: String,
        attempts: u32,
        /// Last reply content received before the failure, if any.
        raw_response: String,
        #[source]
        source: ClientError,
    },
}

impl SolveError {
    pub fn is_auth(&self) -> bool {
        matches!(self, SolveError::Request { source, .. } if source.is_auth())
    }
}

/// Solves one instance with the default prompt.
pub async fn solve_instance(
    client: &ChatClient,
    instance: &PuzzleInstance,
    temperature: f64,
    retry_budget: u32,
) -> Result<PredictionRecord, SolveError> {
    let settings = SolveSettings {
        retry_budget,
        ..SolveSettings::new(temperature)
    };
    solve_instance_with(client, instance, &settings).await
}

/// Each attempt is a fresh one-message session with the identical prompt.
/// Unparseable replies use up the retry budget and end in ABSTAIN; request
/// failures that survive the client's own retries are returned as errors.
pub async fn solve_instance_with(
    client: &ChatClient,
    instance: &PuzzleInstance,
    settings: &SolveSettings,
) -> Result<PredictionRecord, SolveError> {
    if settings.retry_budget == 0 {
        return Err(SolveError::InvalidSettings("retry_budget must be at least 1".into()));
    }
    let prompt = settings.template.render(&instance.question, &instance.choices);
    let request = client
        .request(&prompt, settings.temperature)
        .map_err(|e| SolveError::InvalidSettings(e.to_string()))?
        .tagged(&instance.id);

    let record = |predicted_index, raw_response: String, attempts, error| PredictionRecord {
        instance_id: instance.id.clone(),
        predicted_index,
        solver_id: client.config().model.clone(),
        temperature: Some(settings.temperature),
        raw_response,
        attempts,
        error,
    };

    let mut raw = String::new();
    let mut last_problem = String::new();
    for attempt in 1..=settings.retry_budget {
        match client.complete(&request).await {
            Ok(reply) => {
                raw = reply.content;
                match parse_answer(&raw, instance.choices.len()) {
                    Ok(parsed) => return Ok(record(Prediction::Choice(parsed.choice_index), raw, attempt, None)),
                    Err(e) => last_problem = e.to_string(),
                }
            }
            Err(ClientError::MalformedResponse { message, body }) => {
                raw = body;
                last_problem = message;
            }
            Err(source) => {
                return Err(SolveError::Request {
                    instance_id: instance.id.clone(),
                    attempts: attempt,
                    raw_response: raw,
                    source,
                })
            }
        }
        tracing::debug!(instance = %instance.id, attempt, problem = %last_problem, "unusable reply");
    }
    let note = format!("no usable answer after {} attempts: {last_problem}", settings.retry_budget);
    Ok(record(Prediction::Abstain, raw, settings.retry_budget, Some(note)))
}

/// Solves every instance with the default prompt and retry budget.
pub async fn solve_dataset(
    client: &ChatClient,
    instances: &[PuzzleInstance],
    temperature: f64,
    concurrency_limit: usize,
) -> Result<Vec<PredictionRecord>, SolveError> {
    let settings = SolveSettings {
        concurrency_limit,
        ..SolveSettings::new(temperature)
    };
    solve_dataset_with(client, instances, &settings).await
}

/// One record per instance, in input order. At most `concurrency_limit`
/// instances are in flight. Request failures become ABSTAIN records; only an
/// authentication failure stops the run.
pub async fn solve_dataset_with(
    client: &ChatClient,
    instances: &[PuzzleInstance],
    settings: &SolveSettings,
) -> Result<Vec<PredictionRecord>, SolveError> {
    let mut records = Vec::with_capacity(instances.len());
    solve_dataset_each(client, instances, settings, |r| records.push(r.clone())).await?;
    Ok(records)
}

/// Like [`solve_dataset_with`], handing each record to `on_record` as soon as
/// it and every record before it are done. After an abort, `on_record` has
/// seen exactly the finished prefix.
pub async fn solve_dataset_each(
    client: &ChatClient,
    instances: &[PuzzleInstance],
    settings: &SolveSettings,
    mut on_record: impl FnMut(&PredictionRecord),
) -> Result<(), SolveError> {
    if settings.concurrency_limit == 0 {
        return Err(SolveError::InvalidSettings("concurrency_limit must be at least 1".into()));
    }
    // Futures are built up front; a mapping closure here would make the
    // stream's future type higher-ranked and not provably Send.
    let pending: Vec<_> = instances
        .iter()
        .map(|instance| solve_or_abstain(client, instance, settings))
        .collect();
    let mut results = stream::iter(pending).buffered(settings.concurrency_limit);
    while let Some(record) = results.next().await {
        on_record(&record?);
    }
    Ok(())
}

async fn solve_or_abstain(
    client: &ChatClient,
    instance: &PuzzleInstance,
    settings: &SolveSettings,
) -> Result<PredictionRecord, SolveError> {
    match solve_instance_with(client, instance, settings).await {
        Err(SolveError::Request {
            instance_id,
            attempts,
            raw_response,
            source,
        }) if !source.is_auth() => Ok(PredictionRecord {
            instance_id,
            predicted_index: Prediction::Abstain,
            solver_id: client.config().model.clone(),
            temperature: Some(settings.temperature),
            raw_response,
            attempts,
            error: Some(source.to_string()),
        }),
        other => other,
    }
}
