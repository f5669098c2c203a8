use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generation::prompt::PromptText;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Http,
    Simulated,
}

fn default_temperature() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorClientConfig {
    pub backend: Backend,
    /// Base URL; requests go to `{endpoint_url}/chat/completions`.
    pub endpoint_url: String,
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    pub max_tokens: u32,
    pub timeout_ms: u64,
    pub max_retries: u32,
    /// First retry delay; doubles on each further retry.
    pub backoff_base_ms: u64,
    pub parallelism: usize,
}

impl Default for GeneratorClientConfig {
    fn default() -> Self {
        GeneratorClientConfig {
            backend: Backend::Simulated,
            endpoint_url: "http://127.0.0.1:8000/v1".into(),
            model_name: "teacher".into(),
            temperature: default_temperature(),
            max_tokens: 512,
            timeout_ms: 60_000,
            max_retries: 3,
            backoff_base_ms: 500,
            parallelism: 4,
        }
    }
}

impl GeneratorClientConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::InvalidConfig("temperature must be finite and >= 0".into()));
        }
        if self.parallelism == 0 {
            return Err(Error::InvalidConfig("parallelism must be >= 1".into()));
        }
        if self.max_tokens == 0 || self.timeout_ms == 0 {
            return Err(Error::InvalidConfig("max_tokens and timeout_ms must be positive".into()));
        }
        if self.backend == Backend::Http && self.endpoint_url.trim().is_empty() {
            return Err(Error::InvalidConfig("http backend needs endpoint_url".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawCompletion {
    /// Position of the request within its batch call.
    pub prompt_id: usize,
    pub text: String,
    pub finish_reason: String,
}

#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub prompt_id: usize,
    pub prompt: &'a PromptText,
    /// Per-request seed drawn from the caller's rng stream.
    pub seed: u64,
}

/// A teacher model: remote endpoint or deterministic stand-in.
pub trait Generator: Send + Sync {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<RawCompletion>;

    /// Upper bound on concurrent in-flight requests.
    fn parallelism(&self) -> usize {
        1
    }
}

impl<G: Generator + ?Sized> Generator for &G {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<RawCompletion> {
        (**self).complete(request)
    }

    fn parallelism(&self) -> usize {
        (**self).parallelism()
    }
}

impl<G: Generator + ?Sized> Generator for Box<G> {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<RawCompletion> {
        (**self).complete(request)
    }

    fn parallelism(&self) -> usize {
        (**self).parallelism()
    }
}

/// `n` completions of the same prompt, in request order.
pub fn generate_batch<G, R>(client: &G, prompt: &PromptText, n: usize, rng: &mut R) -> Result<Vec<RawCompletion>>
where
    G: Generator + ?Sized,
    R: RngCore,
{
    let prompts: Vec<&PromptText> = std::iter::repeat_n(prompt, n).collect();
    generate_many(client, &prompts, rng)
}

/// One completion per prompt, in request order regardless of the order in
/// which requests finish. Seeds are drawn from `rng` before any request is
/// issued, so the outcome does not depend on scheduling.
pub fn generate_many<G, R>(client: &G, prompts: &[&PromptText], rng: &mut R) -> Result<Vec<RawCompletion>>
where
    G: Generator + ?Sized,
    R: RngCore,
{
    let requests: Vec<CompletionRequest<'_>> = prompts
        .iter()
        .enumerate()
        .map(|(prompt_id, prompt)| CompletionRequest { prompt_id, prompt, seed: rng.next_u64() })
        .collect();
    let workers = client.parallelism().max(1).min(requests.len());
    if workers <= 1 {
        return requests.iter().map(|r| client.complete(r)).collect();
    }

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<RawCompletion>>>> = Mutex::new((0..requests.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(req) = requests.get(i) else { break };
                let out = client.complete(req);
                let failed = out.is_err();
                slots.lock().expect("result slots poisoned")[i] = Some(out);
                if failed {
                    // stop handing out new work; in-flight requests finish
                    next.store(requests.len(), Ordering::Relaxed);
                }
            });
        }
    });
    let slots = slots.into_inner().expect("result slots poisoned");
    let mut out = Vec::with_capacity(slots.len());
    for (i, slot) in slots.into_iter().enumerate() {
        match slot {
            Some(r) => out.push(r?),
            None => {
                return Err(Error::Transport {
                    attempts: 0,
                    message: format!("request {i} abandoned after an earlier failure"),
                })
            }
        }
    }
    Ok(out)
}
