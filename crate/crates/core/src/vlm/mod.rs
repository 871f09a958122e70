//! Two-stage prompting: stage 1 estimates connector counts and types per
//! component, stage 2 pairs concrete attachment points.

mod client;
mod parse;
mod pipeline;
mod prompt;

pub use client::{
    oracle_stage1, oracle_stage2, prompt_key, prompt_step, ClientError, Concurrency, HttpClient, HttpConfig, MockClient,
    ModelClient, RecordingClient, ReplayClient, Transport, UreqTransport,
};
pub use parse::{connector_type_from_text, parse_stage1, parse_stage2, ParseMode, StageOneEntry, StageOneOutput};
pub use pipeline::{resume_pipeline, run_pipeline, PipelineOptions, PipelineRun, StepDiagnostic};
pub use prompt::{build_stage1_prompt, build_stage2_prompt, ConnectorGlossary, PromptBundle, TEMPLATE_VERSION};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VlmError {
    #[error("step {step}: missing asset: {what}")]
    MissingAsset { step: usize, what: String },
    #[error("unparseable response: {message} (near `{span}`)")]
    UnparseableResponse { message: String, span: String },
}
