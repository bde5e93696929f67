//! Scores (rubric, prompt, image) triples in `[0, 1]` through a pluggable
//! judge backend, with a persistent append-only score cache in front of it.

mod cache;
mod extract;
mod remote;
mod scorer;
mod template;

pub use cache::{ScoreCache, ScoreCacheEntry};
pub use extract::{score_from_text, score_from_top_logprobs};
pub use remote::RemoteJudge;
pub use scorer::{Scorer, ScoringStats};
pub use template::Template;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{PreferencePair, PreferredSide};

#[derive(Debug, Error)]
pub enum JudgeError {
    /// Transport failure that survived the retry budget.
    #[error("judge unavailable: {0}")]
    Unavailable(String),

    /// Response carried no usable yes/no signal.
    #[error("judge response indeterminate: {0}")]
    Indeterminate(String),

    /// Backend returned a score outside `[0, 1]`.
    #[error("backend {backend} returned score {score} outside [0, 1]")]
    ScoreOutOfRange { backend: String, score: f64 },

    #[error("score cache: {0}")]
    Cache(#[from] std::io::Error),

    /// A batch stopped early; completed scores are already persisted.
    #[error("scoring batch aborted after {completed} persisted scores: {source}")]
    BatchAborted {
        completed: usize,
        #[source]
        source: Box<JudgeError>,
    },

    #[error(transparent)]
    Type(#[from] crate::types::TypeError),
}

/// One judge invocation: score `rubric` on the image of `side`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeRequest {
    pub rubric_id: String,
    pub rubric_text: String,
    pub pair_id: String,
    pub prompt: String,
    pub image_ref: String,
    pub side: PreferredSide,
    /// Which prompt template to render.
    pub template_id: String,
}

impl JudgeRequest {
    pub fn for_pair(rubric: &crate::types::Rubric, pair: &PreferencePair, side: PreferredSide) -> Self {
        Self {
            rubric_id: rubric.id.clone(),
            rubric_text: rubric.text.clone(),
            pair_id: pair.id.clone(),
            prompt: pair.prompt.clone(),
            image_ref: pair.image(side).to_string(),
            side,
            template_id: "binary".to_string(),
        }
    }
}

/// What to do when a response has no yes/no signal at all.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IndeterminatePolicy {
    /// Fail the call (default): a silent 0.5 would corrupt the features.
    #[default]
    Error,
    /// Treat the response as maximally uncertain.
    Half,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub endpoint_url: String,
    pub model_name: String,
    /// Environment variable holding the API key, if the endpoint needs one.
    pub api_key_env: Option<String>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub request_timeout_secs: u64,
    pub max_parallel_requests: usize,
    pub retry_budget: u32,
    #[serde(default)]
    pub indeterminate_policy: IndeterminatePolicy,
    /// Template file override; the built-in binary template is used when
    /// absent.
    pub template_path: Option<String>,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "http://127.0.0.1:8000/v1/chat/completions".to_string(),
            model_name: "Qwen3-VL-8B-Instruct".to_string(),
            api_key_env: None,
            temperature: 0.0,
            max_output_tokens: 16,
            request_timeout_secs: 120,
            max_parallel_requests: 8,
            retry_budget: 3,
            indeterminate_policy: IndeterminatePolicy::Error,
            template_path: None,
        }
    }
}

impl JudgeConfig {
    pub fn validate(&self) -> Result<(), JudgeError> {
        if self.max_parallel_requests < 1 {
            return Err(JudgeError::Unavailable(
                "max_parallel_requests must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// A judge backend maps requests to scores in `[0, 1]`. Implementations must
/// be safe to call from multiple scorer workers at once.
pub trait JudgeBackend: Send + Sync {
    fn score(&self, request: &JudgeRequest) -> Result<f64, JudgeError>;

    /// Short identifier persisted with every cache entry.
    fn tag(&self) -> String;
}
