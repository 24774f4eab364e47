//! Zero-shot solving against an in-process mock chat endpoint. The mock
//! answers most prompts correctly, wraps some in prose, and returns garbage
//! for one puzzle so it ends as ABSTAIN.
//!
//! Pointing `ClientConfig::endpoint` at a real chat-completions URL and
//! exporting LATERAL_BENCH_API_KEY runs the same code against a live model.
//!
//! `cargo run --example llm_zero_shot`

use anyhow::Result;
use lateral_bench::llm::mock::{AnswerKey, MockReply, MockServer};
use lateral_bench::llm::{build_prompt, solve_dataset_with, ChatClient, ClientConfig, PromptTemplate, SolveSettings};
use lateral_bench::metrics::score_breakdown;
use lateral_bench::minimcq::synthetic::separable_dataset;
use lateral_bench::report::{render_breakdown, BreakdownFormat};

#[tokio::main]
async fn main() -> Result<()> {
    let data = separable_dataset(12, 3);
    println!("first prompt:\n{}\n", build_prompt(&data[0]));

    let key = AnswerKey::new(&data, &PromptTemplate::default());
    let server = MockServer::start(move |request| {
        let inst = key.instance_for(request).expect("known prompt");
        match inst.id.as_str() {
            "syn-7" => MockReply::Content("I am not sure.".into()),
            id if id.ends_with('2') => {
                MockReply::Content(format!("Sure! ```json\n{{\"answer\": {}}}\n```", inst.gold_index + 1))
            }
            _ => MockReply::Content(format!("{{\"answer\": {}}}", inst.gold_index + 1)),
        }
    })?;

    let client = ChatClient::new(
        ClientConfig {
            endpoint: server.url(),
            model: "mock".into(),
            ..ClientConfig::default()
        },
        None,
    )?;
    let settings = SolveSettings {
        concurrency_limit: 4,
        ..SolveSettings::new(0.2)
    };
    let records = solve_dataset_with(&client, &data, &settings).await?;
    for r in &records {
        println!("{:<7} {:<8} attempts {}", r.instance_id, r.predicted_index.to_string(), r.attempts);
    }
    println!("\n{} requests sent", server.request_count());
    println!("{}", render_breakdown(&score_breakdown(&records, &data)?, BreakdownFormat::Text));
    Ok(())
}
