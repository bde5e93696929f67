//! Judge backend speaking an OpenAI-compatible chat-completions API with
//! log-probability support.
//!
//! The rendered yes/no template goes out as the text part of a multimodal
//! user message; the image rides along as a URL or, for local files, a
//! base64 data URL. The score comes from the first generated token's top
//! log-probabilities, falling back to hard text parsing when the endpoint
//! returns none.

use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::extract::{score_from_text, score_from_top_logprobs};
use super::template::Template;
use super::{IndeterminatePolicy, JudgeBackend, JudgeConfig, JudgeError, JudgeRequest};

pub struct RemoteJudge {
    client: reqwest::blocking::Client,
    config: JudgeConfig,
    template: Template,
    api_key: Option<String>,
}

impl RemoteJudge {
    pub fn new(config: JudgeConfig) -> Result<Self, JudgeError> {
        config.validate()?;
        let template = match &config.template_path {
            Some(path) => Template::load(std::path::Path::new(path))?,
            None => Template::binary_default(),
        };
        let api_key = config
            .api_key_env
            .as_ref()
            .and_then(|var| std::env::var(var).ok());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.request_timeout_secs))
            .build()
            .map_err(|e| JudgeError::Unavailable(e.to_string()))?;
        Ok(Self {
            client,
            config,
            template,
            api_key,
        })
    }

    fn payload(&self, request: &JudgeRequest) -> Result<Value, JudgeError> {
        let text = self.template.render(&request.rubric_text, &request.prompt);
        let image_url = resolve_image_ref(&request.image_ref)?;
        Ok(json!({
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_output_tokens,
            "logprobs": true,
            "top_logprobs": 20,
            "messages": [{
                "role": "user",
                "content": [
                    { "type": "text", "text": text },
                    { "type": "image_url", "image_url": { "url": image_url } },
                ],
            }],
        }))
    }

    fn post_with_retries(&self, payload: &Value) -> Result<Value, JudgeError> {
        let mut delay = Duration::from_millis(250);
        let mut last_error = String::new();
        for attempt in 0..=self.config.retry_budget {
            if attempt > 0 {
                std::thread::sleep(delay);
                delay *= 2;
            }
            let mut builder = self.client.post(&self.config.endpoint_url).json(payload);
            if let Some(key) = &self.api_key {
                builder = builder.bearer_auth(key);
            }
            match builder.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.is_success() {
                        return response
                            .json::<Value>()
                            .map_err(|e| JudgeError::Unavailable(format!("bad response body: {e}")));
                    }
                    last_error = format!("HTTP {status}");
                    // Client errors other than rate limiting will not heal on
                    // retry.
                    if status.is_client_error() && status.as_u16() != 429 {
                        break;
                    }
                }
                Err(e) => last_error = e.to_string(),
            }
        }
        Err(JudgeError::Unavailable(format!(
            "{} after {} retries: {last_error}",
            self.config.endpoint_url, self.config.retry_budget
        )))
    }

    fn extract_score(&self, response: &Value) -> Result<f64, JudgeError> {
        let choice = response
            .get("choices")
            .and_then(|c| c.get(0))
            .ok_or_else(|| JudgeError::Indeterminate("response has no choices".into()))?;

        if let Some(top) = first_token_top_logprobs(choice) {
            if let Some(score) = score_from_top_logprobs(&top) {
                return Ok(score);
            }
        }
        let content = choice
            .pointer("/message/content")
            .and_then(Value::as_str)
            .unwrap_or("");
        if let Some(score) = score_from_text(content) {
            return Ok(score);
        }
        match self.config.indeterminate_policy {
            IndeterminatePolicy::Half => Ok(0.5),
            IndeterminatePolicy::Error => Err(JudgeError::Indeterminate(format!(
                "no yes/no signal in {content:?}"
            ))),
        }
    }
}

impl JudgeBackend for RemoteJudge {
    fn score(&self, request: &JudgeRequest) -> Result<f64, JudgeError> {
        let payload = self.payload(request)?;
        let response = self.post_with_retries(&payload)?;
        self.extract_score(&response)
    }

    fn tag(&self) -> String {
        format!("remote:{}", self.config.model_name)
    }
}

/// Top log-probabilities of the first generated token, as (token, logprob).
fn first_token_top_logprobs(choice: &Value) -> Option<Vec<(String, f64)>> {
    let first = choice.pointer("/logprobs/content/0")?;
    let top = first.get("top_logprobs")?.as_array()?;
    let mut out = Vec::with_capacity(top.len());
    for entry in top {
        let token = entry.get("token")?.as_str()?;
        let logprob = entry.get("logprob")?.as_f64()?;
        out.push((token.to_string(), logprob));
    }
    Some(out)
}

/// Pass URLs through; inline local files as base64 data URLs.
fn resolve_image_ref(image_ref: &str) -> Result<String, JudgeError> {
    if image_ref.starts_with("http://")
        || image_ref.starts_with("https://")
        || image_ref.starts_with("data:")
    {
        return Ok(image_ref.to_string());
    }
    let bytes = std::fs::read(image_ref)?;
    let mime = match image_ref.rsplit('.').next().map(str::to_ascii_lowercase) {
        Some(ext) if ext == "png" => "image/png",
        Some(ext) if ext == "jpg" || ext == "jpeg" => "image/jpeg",
        Some(ext) if ext == "webp" => "image/webp",
        Some(ext) if ext == "gif" => "image/gif",
        _ => "application/octet-stream",
    };
    let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
    Ok(format!("data:{mime};base64,{encoded}"))
}
