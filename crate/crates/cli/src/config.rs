//! Run settings from a TOML file, the environment and flags, in rising
//! precedence.
//!
//! Recognized file keys, all optional:
//!
//! ```toml
//! endpoint = "https://api.example.com/v1"   # REFOCUS_ENDPOINT
//! model = "some-model"                      # REFOCUS_MODEL
//! temperature = 0.0
//! max_output_tokens = 1024
//! max_turns = 5
//! concurrency = 4
//! ```
//!
//! Unknown keys are an error. The API key is read from `REFOCUS_API_KEY`
//! only; a key in the file is rejected so it does not end up in a repo.

use std::path::Path;

use serde::Deserialize;

use refocus::agent::{AgentConfig, DEFAULT_CONCURRENCY};
use refocus::llm::{ENV_ENDPOINT, ENV_MODEL};

#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_output_tokens: Option<u32>,
    pub max_turns: Option<usize>,
    pub concurrency: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let value: toml::Table = toml::from_str(text).map_err(|e| e.to_string())?;
        if value.keys().any(|k| k.contains("key") || (k.contains("token") && k != "max_output_tokens")) {
            return Err("credentials do not belong in the config file; set REFOCUS_API_KEY".into());
        }
        toml::from_str(text).map_err(|e| e.to_string())
    }
}

/// Values given on the command line.
#[derive(Debug, Default, Clone)]
pub struct FlagConfig {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_turns: Option<usize>,
    pub concurrency: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub agent: AgentConfig,
    pub concurrency: usize,
}

/// `env` is a lookup so tests do not have to touch the process
/// environment.
pub fn resolve(file: &FileConfig, env: impl Fn(&str) -> Option<String>, flags: &FlagConfig) -> Result<Settings, String> {
    let pick = |flag: &Option<String>, var: &str, file: &Option<String>| {
        flag.clone().or_else(|| env(var).filter(|v| !v.is_empty())).or_else(|| file.clone())
    };
    let endpoint = pick(&flags.endpoint, ENV_ENDPOINT, &file.endpoint);
    let model = pick(&flags.model, ENV_MODEL, &file.model);
    let defaults = AgentConfig::default();
    let agent = AgentConfig {
        max_turns: flags.max_turns.or(file.max_turns).unwrap_or(defaults.max_turns),
        temperature: flags.temperature.or(file.temperature).unwrap_or(defaults.temperature),
        max_output_tokens: file.max_output_tokens.unwrap_or(defaults.max_output_tokens),
        model_name: model.clone().unwrap_or_default(),
    };
    if agent.max_turns == 0 {
        return Err("max_turns must be at least 1".into());
    }
    let concurrency = flags.concurrency.or(file.concurrency).unwrap_or(DEFAULT_CONCURRENCY);
    if concurrency == 0 {
        return Err("concurrency must be at least 1".into());
    }
    Ok(Settings { endpoint, model, agent, concurrency })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_beat_env_beat_file() {
        let file = FileConfig::parse("endpoint = \"http://file\"\nmodel = \"file-model\"\nmax_turns = 3\n").unwrap();
        let env = |k: &str| (k == ENV_MODEL).then(|| "env-model".to_string());
        let s = resolve(&file, env, &FlagConfig::default()).unwrap();
        assert_eq!(s.endpoint.as_deref(), Some("http://file"));
        assert_eq!(s.model.as_deref(), Some("env-model"));
        assert_eq!(s.agent.max_turns, 3);
        let flags = FlagConfig { model: Some("flag-model".into()), max_turns: Some(2), ..Default::default() };
        let s = resolve(&file, env, &flags).unwrap();
        assert_eq!((s.model.as_deref(), s.agent.max_turns), (Some("flag-model"), 2));
    }

    #[test]
    fn rejects_keys_and_typos() {
        assert!(FileConfig::parse("api_key = \"sk-123\"").unwrap_err().contains("REFOCUS_API_KEY"));
        assert!(FileConfig::parse("max_turn = 3").is_err());
        assert_eq!(FileConfig::parse("").unwrap(), FileConfig::default());
        let f = FileConfig { max_turns: Some(0), ..Default::default() };
        assert!(resolve(&f, |_| None, &FlagConfig::default()).is_err());
    }
}
