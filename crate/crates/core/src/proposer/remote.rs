//! Proposer backend over the same OpenAI-compatible chat-completions API the
//! judge uses, with a separately configured model and temperature.

use std::path::Path;
use std::time::Duration;

use serde_json::{json, Value};

use super::parse::parse_statement_list;
use super::{ProposerBackend, ProposerConfig, ProposerError};
use crate::types::{PreferencePair, PreferredSide, WeightedRubricSet};

const DEFAULT_REASONER: &str = include_str!("../../templates/vision_reasoner.txt");
const DEFAULT_EXTRACTOR: &str = include_str!("../../templates/rule_extractor.txt");
const DEFAULT_MERGER: &str = include_str!("../../templates/rule_merger.txt");
const DEFAULT_DIAGNOSER: &str = include_str!("../../templates/failure_diagnosis.txt");

pub struct RemoteProposer {
    client: reqwest::blocking::Client,
    config: ProposerConfig,
    api_key: Option<String>,
    reasoner: String,
    extractor: String,
    merger: String,
    diagnoser: String,
}

impl RemoteProposer {
    pub fn new(config: ProposerConfig) -> Result<Self, ProposerError> {
        let load = |path: &Option<String>, fallback: &str| -> Result<String, ProposerError> {
            match path {
                Some(p) => Ok(std::fs::read_to_string(Path::new(p))?),
                None => Ok(fallback.to_string()),
            }
        };
        let api_key = config
            .api_key_env
            .as_ref()
            .and_then(|var| std::env::var(var).ok());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.request_timeout_secs))
            .build()
            .map_err(|e| ProposerError::Unavailable(e.to_string()))?;
        Ok(Self {
            reasoner: load(&config.vision_reasoner_template, DEFAULT_REASONER)?,
            extractor: load(&config.rule_extractor_template, DEFAULT_EXTRACTOR)?,
            merger: load(&config.rule_merger_template, DEFAULT_MERGER)?,
            diagnoser: load(&config.failure_diagnosis_template, DEFAULT_DIAGNOSER)?,
            client,
            config,
            api_key,
        })
    }

    /// Images ordered preferred-first, matching how the templates describe
    /// them.
    fn image_parts(pair: &PreferencePair) -> Vec<Value> {
        let (first, second) = match pair.label {
            PreferredSide::A => (&pair.image_a, &pair.image_b),
            PreferredSide::B => (&pair.image_b, &pair.image_a),
        };
        [first, second]
            .iter()
            .map(|image| json!({ "type": "image_url", "image_url": { "url": image } }))
            .collect()
    }

    fn chat(&self, text: String, images: Vec<Value>) -> Result<String, ProposerError> {
        let mut content = vec![json!({ "type": "text", "text": text })];
        content.extend(images);
        let mut payload = json!({
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "messages": [{ "role": "user", "content": content }],
        });
        if let Some(budget) = self.config.thinking_budget {
            payload["thinking_budget"] = json!(budget);
        }

        let mut delay = Duration::from_millis(250);
        let mut last_error = String::new();
        for attempt in 0..=self.config.retry_budget {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            let mut builder = self.client.post(&self.config.endpoint_url).json(&payload);
            if let Some(key) = &self.api_key {
                builder = builder.bearer_auth(key);
            }
            match builder.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        let body: Value = response.json().map_err(|e| {
                            ProposerError::Unavailable(format!("bad response body: {e}"))
                        })?;
                        return body
                            .pointer("/choices/0/message/content")
                            .and_then(Value::as_str)
                            .map(str::to_string)
                            .ok_or_else(|| {
                                ProposerError::Unavailable("response has no content".into())
                            });
                    }
                    last_error = format!("HTTP {status}");
                    if status.is_client_error() && status.as_u16() != 429 {
                        break;
                    }
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(ProposerError::Unavailable(format!(
            "{} after {} retries: {last_error}",
            self.config.endpoint_url, self.config.retry_budget
        )))
    }
}

impl ProposerBackend for RemoteProposer {
    fn vision_reason(&self, pair: &PreferencePair) -> Result<String, ProposerError> {
        let text = self.reasoner.replace("{prompt}", &pair.prompt);
        self.chat(text, Self::image_parts(pair))
    }

    fn extract_rules(
        &self,
        pair: &PreferencePair,
        context: &str,
    ) -> Result<Vec<String>, ProposerError> {
        let text = self
            .extractor
            .replace("{prompt}", &pair.prompt)
            .replace("{diagnosis}", context);
        let response = self.chat(text, Self::image_parts(pair))?;
        Ok(parse_statement_list(&response))
    }

    fn merge_rules(&self, statements: &[String]) -> Result<Vec<String>, ProposerError> {
        let listing = statements
            .iter()
            .map(|s| format!("- {s}"))
            .collect::<Vec<_>>()
            .join("\n");
        let text = self.merger.replace("{rubrics}", &listing);
        let response = self.chat(text, Vec::new())?;
        Ok(parse_statement_list(&response))
    }

    fn diagnose_failure(
        &self,
        pair: &PreferencePair,
        retained: &WeightedRubricSet<f64>,
    ) -> Result<String, ProposerError> {
        let listing = retained
            .entries
            .iter()
            .map(|e| format!("- {}", e.rubric.text))
            .collect::<Vec<_>>()
            .join("\n");
        let text = self
            .diagnoser
            .replace("{prompt}", &pair.prompt)
            .replace("{rubrics}", &listing);
        self.chat(text, Self::image_parts(pair))
    }
}
