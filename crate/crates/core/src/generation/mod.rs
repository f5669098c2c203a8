//! Teacher-side data generation: prompt construction, completion clients
//! and completion parsing.

pub mod client;
pub mod http;
pub mod parse;
pub mod prompt;

pub use client::{
    generate_batch, generate_many, Backend, CompletionRequest, Generator, GeneratorClientConfig, RawCompletion,
};
pub use http::HttpGenerator;
pub use parse::{parse_completion, parse_samples, ParseOutcome, RejectReason, Rejection, SampleIds};
pub use prompt::{
    build_label_query, build_train_prompt, build_val_prompt, render_inputs, render_sample, rotated_label, PartKind,
    PromptText,
};
