use std::fs;
use std::path::Path;

use masque::config::RunConfig;
use masque::data::{read_jsonl, write_atomic, RawExample};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{resolve_seed, CliError, ConfigArgs};

pub const VOCAB_FILE: &str = "vocab.json";
pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.csv";

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    Ok(write_atomic(path, text.as_bytes())?)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    Ok(write_atomic(path, text.as_bytes())?)
}

pub fn read_corpus(path: &Path) -> Result<Vec<RawExample>, CliError> {
    let corpus: Vec<RawExample> = read_jsonl(path)?;
    if corpus.is_empty() {
        return Err(CliError::Invalid(format!("{}: corpus is empty", path.display())));
    }
    Ok(corpus)
}

/// The config file (or `fallback`, or the defaults), then `--set`
/// overrides, then the seed.
pub fn load_run_config(args: &ConfigArgs, fallback: Option<&str>) -> Result<RunConfig, CliError> {
    let mut cfg = match (&args.config, fallback) {
        (Some(path), _) => RunConfig::from_json(&read_text(path)?)
            .map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))?,
        (None, Some(text)) => RunConfig::from_json(text).map_err(CliError::Invalid)?,
        (None, None) => RunConfig::default(),
    };
    for item in &args.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| CliError::Invalid(format!("--set expects KEY=VALUE, got {item:?}")))?;
        cfg.set(key.trim(), value.trim()).map_err(CliError::Invalid)?;
    }
    cfg.train.seed = resolve_seed(args.seed, cfg.train.seed)?;
    cfg.validate().map_err(CliError::Invalid)?;
    Ok(cfg)
}
