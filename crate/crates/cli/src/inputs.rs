//! Building the effective configuration and reading input files.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use kdgen::config::RunConfig;
use kdgen::generation::Backend;
use kdgen::Sample;

use crate::{usage, ConfigArgs};

pub const API_KEY_VAR: &str = "GOLD_API_KEY";

pub fn build_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut config = match &args.config {
        Some(path) => {
            if !path.is_file() {
                return Err(usage(format!("config file {} does not exist", path.display())));
            }
            RunConfig::load(path).map_err(|e| usage(e.to_string()))?
        }
        None => RunConfig::default(),
    };
    for o in &args.overrides {
        config.apply_override(o).map_err(|e| usage(e.to_string()))?;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(b) = args.backend {
        config.generator.backend = b.into();
    }
    if let Some(url) = &args.endpoint {
        config.generator.endpoint_url = url.clone();
    }
    if let Some(model) = &args.model {
        config.generator.model_name = model.clone();
    }
    config.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

/// The credential for the HTTP backend. Only its presence is ever logged.
pub fn api_key(config: &RunConfig) -> Option<String> {
    if config.generator.backend != Backend::Http {
        return None;
    }
    let key = std::env::var(API_KEY_VAR).ok().filter(|k| !k.is_empty());
    if key.is_none() {
        log::info!("{API_KEY_VAR} is not set; sending requests without credentials");
    }
    key
}

/// Configuration mistakes surfaced by the library count as usage errors.
pub fn classify(e: kdgen::Error) -> anyhow::Error {
    match e {
        kdgen::Error::InvalidConfig(_) | kdgen::Error::InvalidTask(_) => usage(e.to_string()),
        other => other.into(),
    }
}

pub fn read_samples(path: &Path) -> Result<Vec<Sample>> {
    let file = fs::File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    kdgen::dataset::read_samples(file).with_context(|| format!("reading {}", path.display()))
}

/// One label per JSONL line: a JSON string, or an object with a `label`.
pub fn read_labels(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let value: serde_json::Value =
                serde_json::from_str(line).with_context(|| format!("{}:{}: not JSON", path.display(), i + 1))?;
            match value {
                serde_json::Value::String(s) => Ok(s),
                serde_json::Value::Object(mut m) => match m.remove("label") {
                    Some(serde_json::Value::String(s)) => Ok(s),
                    _ => anyhow::bail!("{}:{}: object has no string `label`", path.display(), i + 1),
                },
                _ => anyhow::bail!("{}:{}: expected a string or an object", path.display(), i + 1),
            }
        })
        .collect()
}
