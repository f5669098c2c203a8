//! Chat-completion client for OpenAI-compatible inference servers.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generation::client::{CompletionRequest, Generator, GeneratorClientConfig, RawCompletion};

#[derive(Debug, Serialize)]
struct ChatMessage<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Debug, Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ResponseMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    content: Option<String>,
}

enum Attempt {
    Done(RawCompletion),
    Retry(String),
    Fatal(Error),
}

pub struct HttpGenerator {
    config: GeneratorClientConfig,
    url: String,
    api_key: Option<String>,
    send_seed: bool,
    agent: ureq::Agent,
}

// api_key stays out of logs
impl fmt::Debug for HttpGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpGenerator")
            .field("url", &self.url)
            .field("model", &self.config.model_name)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpGenerator {
    pub fn new(config: GeneratorClientConfig, api_key: Option<String>) -> Result<Self> {
        config.validate()?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        let url = format!("{}/chat/completions", config.endpoint_url.trim_end_matches('/'));
        Ok(HttpGenerator { config, url, api_key, send_seed: true, agent })
    }

    /// Omit the `seed` field for servers that reject it.
    pub fn without_seed(mut self) -> Self {
        self.send_seed = false;
        self
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn attempt(&self, request: &CompletionRequest<'_>) -> Attempt {
        let body = ChatRequest {
            model: &self.config.model_name,
            messages: [ChatMessage { role: "user", content: request.prompt.text() }],
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
            seed: self.send_seed.then_some(request.seed),
        };
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(&body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(format!("reading body: {e}")),
        };
        if status == 429 || status >= 500 {
            return Attempt::Retry(format!("HTTP {status}"));
        }
        if !(200..300).contains(&status) {
            return Attempt::Fatal(Error::Transport {
                attempts: 1,
                message: format!("HTTP {status}: {}", text.chars().take(200).collect::<String>()),
            });
        }
        let parsed: ChatResponse = match serde_json::from_str(&text) {
            Ok(p) => p,
            Err(e) => return Attempt::Fatal(Error::MalformedResponse(e.to_string())),
        };
        let Some(choice) = parsed.choices.into_iter().next() else {
            return Attempt::Fatal(Error::MalformedResponse("empty choices".into()));
        };
        let Some(content) = choice.message.content else {
            return Attempt::Fatal(Error::MalformedResponse("choices[0].message.content missing".into()));
        };
        Attempt::Done(RawCompletion {
            prompt_id: request.prompt_id,
            text: content,
            finish_reason: choice.finish_reason.unwrap_or_default(),
        })
    }
}

impl Generator for HttpGenerator {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<RawCompletion> {
        let mut last = String::new();
        for k in 0..=self.config.max_retries {
            if k > 0 {
                let delay = self.config.backoff_base_ms.saturating_mul(1 << (k - 1).min(16));
                log::warn!("request {} retry {k} in {delay} ms: {last}", request.prompt_id);
                std::thread::sleep(Duration::from_millis(delay));
            }
            match self.attempt(request) {
                Attempt::Done(c) => return Ok(c),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Retry(msg) => last = msg,
            }
        }
        Err(Error::Transport { attempts: self.config.max_retries + 1, message: last })
    }

    fn parallelism(&self) -> usize {
        self.config.parallelism
    }
}
