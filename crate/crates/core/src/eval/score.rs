//! Answer matching.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ChatClient, ChatMessage, ChatRequest, LlmError, Part};

pub const DEFAULT_TOLERANCE: f64 = 0.05;

/// Prompt sent in `external_judge` mode; the reply must start with YES or NO.
pub const JUDGE_PROMPT: &str = "Decide whether a predicted answer means the same as the gold answer. \
Ignore formatting, units written out in words, and trivial rounding. \
Reply with YES or NO only.";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    ExactNormalized,
    NumericRelaxed,
    ExternalJudge,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreConfig {
    pub mode: ScoreMode,
    pub tolerance: f64,
    /// Map true/false/yes/no onto entailed/refuted before comparing.
    #[serde(default)]
    pub fact_labels: bool,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        ScoreConfig { mode: ScoreMode::ExactNormalized, tolerance: DEFAULT_TOLERANCE, fact_labels: false }
    }
}

impl ScoreConfig {
    pub fn exact() -> Self {
        ScoreConfig::default()
    }

    pub fn relaxed(tolerance: f64) -> Self {
        ScoreConfig { mode: ScoreMode::NumericRelaxed, tolerance, fact_labels: false }
    }

    /// Relaxed numeric match for charts and synth items, exact for tables,
    /// label match for fact verification.
    pub fn for_source(source: &str) -> Self {
        match source {
            "vtabfact" => ScoreConfig { fact_labels: true, ..ScoreConfig::exact() },
            "vwtq" | "vwtq_syn" => ScoreConfig::exact(),
            _ => ScoreConfig::relaxed(DEFAULT_TOLERANCE),
        }
    }

    pub fn validate(&self) -> Result<(), ScoreError> {
        if self.mode == ScoreMode::NumericRelaxed && !(self.tolerance > 0.0 && self.tolerance < 1.0) {
            return Err(ScoreError::InvalidConfig(format!("tolerance {} must be in (0, 1)", self.tolerance)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScoreError {
    #[error("JudgeUnavailable: external_judge mode needs a chat client")]
    JudgeUnavailable,
    #[error("judge request failed: {0}")]
    Judge(#[from] LlmError),
    #[error("invalid score config: {0}")]
    InvalidConfig(String),
}

/// Lowercase, trim, collapse whitespace, drop `,` between digits, `%`, `$`.
pub fn normalize(s: &str) -> String {
    let chars: Vec<char> = s.chars().collect();
    let mut out = String::with_capacity(s.len());
    for (i, &c) in chars.iter().enumerate() {
        let thousands = c == ','
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit());
        if thousands || c == '%' || c == '$' {
            continue;
        }
        out.extend(c.to_lowercase());
    }
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn fact_label(s: &str) -> String {
    match s {
        "true" | "yes" | "entailed" | "entails" | "supported" => "entailed".into(),
        "false" | "no" | "refuted" | "refutes" => "refuted".into(),
        other => other.to_string(),
    }
}

fn parse_number(s: &str) -> Option<f64> {
    let v: f64 = s.trim_end_matches('.').parse().ok()?;
    v.is_finite().then_some(v)
}

/// Compare without any model call; `external_judge` is rejected here.
pub fn score(prediction: &str, gold: &str, cfg: &ScoreConfig) -> Result<bool, ScoreError> {
    score_with(prediction, gold, cfg, None)
}

pub fn score_with(
    prediction: &str,
    gold: &str,
    cfg: &ScoreConfig,
    judge: Option<&dyn ChatClient>,
) -> Result<bool, ScoreError> {
    cfg.validate()?;
    let (mut p, mut g) = (normalize(prediction), normalize(gold));
    if cfg.fact_labels {
        p = fact_label(&p);
        g = fact_label(&g);
    }
    match cfg.mode {
        ScoreMode::ExactNormalized => Ok(p == g),
        ScoreMode::NumericRelaxed => match (parse_number(&p), parse_number(&g)) {
            (Some(pv), Some(gv)) => Ok((pv - gv).abs() <= cfg.tolerance * gv.abs()),
            _ => Ok(p == g),
        },
        ScoreMode::ExternalJudge => {
            let client = judge.ok_or(ScoreError::JudgeUnavailable)?;
            let req = ChatRequest::new(vec![
                ChatMessage::system(JUDGE_PROMPT),
                ChatMessage::user(vec![Part::Text(format!("Gold answer: {gold}\nPredicted answer: {prediction}"))]),
            ]);
            let reply = client.complete(&req)?;
            Ok(reply.trim_start().to_ascii_uppercase().starts_with("YES"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedClient;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let ex = ScoreConfig::exact();
        assert!(score("24.75", "24.75", &ex).unwrap());
        assert!(score("16", "16", &ex).unwrap());
        assert!(score("99", "100", &ScoreConfig::relaxed(0.05)).unwrap());
        assert!(!score("90", "100", &ScoreConfig::relaxed(0.05)).unwrap());
        assert!(score(" $1,234 ", "1234", &ex).unwrap());
        assert!(score("45%", "45", &ex).unwrap());
        assert!(score("0", "0.0", &ScoreConfig::relaxed(0.05)).unwrap());
        assert!(!score("0.01", "0", &ScoreConfig::relaxed(0.05)).unwrap());
        assert!(score("Belgium", "belgium", &ScoreConfig::relaxed(0.05)).unwrap());
        assert!(score("True", "entailed", &ScoreConfig::for_source("vtabfact")).unwrap());
        assert!(!score("yes", "refuted", &ScoreConfig::for_source("vtabfact")).unwrap());
        // the comma in a list is not a thousands separator
        assert_eq!(normalize("a, b"), "a, b");
    }

    #[test]
    fn judge_mode() {
        let cfg = ScoreConfig { mode: ScoreMode::ExternalJudge, ..ScoreConfig::default() };
        assert_eq!(score("a", "b", &cfg), Err(ScoreError::JudgeUnavailable));
        let yes = ScriptedClient::single(vec!["YES".into()]);
        assert!(score_with("sixteen", "16", &cfg, Some(&yes)).unwrap());
    }

    #[test]
    fn bad_tolerance() {
        assert!(score("1", "1", &ScoreConfig::relaxed(1.5)).is_err());
    }

    proptest! {
        #[test]
        fn exact_ignores_case_and_spacing(s in "[a-zA-Z0-9 ]{0,20}", pad in "[ \t]{0,3}") {
            let messy = format!("{pad}{}{pad}", s.to_uppercase().replace(' ', "  "));
            prop_assert!(score(&messy, &s, &ScoreConfig::exact()).unwrap());
        }
    }
}
