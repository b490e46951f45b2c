//! Live agent backend speaking the OpenAI-compatible chat-completions wire
//! format, with bounded retry and per-position logprob harvesting.

use std::time::Duration;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use crate::config::HttpSettings;
use crate::engine::backend::{AgentBackend, BackendError, BackendResponse};
use crate::model::{AgentRole, TaskInput, TokenDistribution};

/// Environment variable holding the bearer token for authenticated
/// endpoints.
pub const AUTH_TOKEN_ENV: &str = "CONCLAVE_API_TOKEN";

#[derive(Debug, Serialize)]
struct ChatRequest {
    model: String,
    messages: Vec<Message>,
    #[serde(skip_serializing_if = "Option::is_none")]
    logprobs: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    top_logprobs: Option<u8>,
    temperature: f32,
}

#[derive(Debug, Serialize)]
struct Message {
    role: &'static str,
    content: Content,
}

#[derive(Debug, Serialize)]
#[serde(untagged)]
enum Content {
    Text(String),
    Parts(Vec<Part>),
}

#[derive(Debug, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Part {
    Text { text: String },
    ImageUrl { image_url: ImageUrl },
}

#[derive(Debug, Serialize)]
struct ImageUrl {
    url: String,
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ResponseMessage,
    #[serde(default)]
    logprobs: Option<Logprobs>,
}

#[derive(Debug, Deserialize)]
struct ResponseMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Debug, Deserialize)]
struct Logprobs {
    #[serde(default)]
    content: Option<Vec<PositionLogprob>>,
}

#[derive(Debug, Deserialize)]
struct PositionLogprob {
    token: String,
    logprob: f64,
    #[serde(default)]
    top_logprobs: Vec<TokenLogprob>,
}

#[derive(Debug, Deserialize)]
struct TokenLogprob {
    token: String,
    logprob: f64,
}

#[derive(Debug, Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

/// Backend for OpenAI-compatible chat-completions endpoints.
pub struct HttpBackend {
    client: reqwest::Client,
    url: String,
    model: String,
    settings: HttpSettings,
    auth_token: Option<String>,
}

impl HttpBackend {
    pub fn new(settings: HttpSettings) -> Result<Self, BackendError> {
        let endpoint = settings
            .endpoint
            .clone()
            .ok_or_else(|| BackendError::InvalidResponse("endpoint not configured".into()))?;
        let model = settings
            .model
            .clone()
            .ok_or_else(|| BackendError::InvalidResponse("model not configured".into()))?;
        let client = reqwest::Client::builder()
            .timeout(Duration::from_millis(settings.timeout_ms))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let url = format!("{}/chat/completions", endpoint.trim_end_matches('/'));
        Ok(HttpBackend {
            client,
            url,
            model,
            settings,
            auth_token: std::env::var(AUTH_TOKEN_ENV).ok(),
        })
    }

    fn build_request(&self, role: &AgentRole, task: &TaskInput, context: &str) -> ChatRequest {
        let mut user_text = task.question.clone();
        if let Some(options) = &task.answer_options {
            user_text.push_str("\nOptions:");
            for option in options {
                user_text.push_str(&format!("\n{}: {}", option.label, option.text));
            }
        }
        if !context.is_empty() {
            user_text.push_str("\n\n");
            user_text.push_str(context);
        }
        let user_content = if self.settings.send_images && !task.media.is_empty() {
            let mut parts = vec![Part::Text { text: user_text }];
            parts.extend(task.media.iter().map(|url| Part::ImageUrl {
                image_url: ImageUrl { url: url.clone() },
            }));
            Content::Parts(parts)
        } else {
            Content::Text(user_text)
        };
        ChatRequest {
            model: self.model.clone(),
            messages: vec![
                Message {
                    role: "system",
                    content: Content::Text(role.prompt_template.clone()),
                },
                Message {
                    role: "user",
                    content: user_content,
                },
            ],
            logprobs: self.settings.request_logprobs.then_some(true),
            top_logprobs: self
                .settings
                .request_logprobs
                .then_some(self.settings.top_logprobs),
            temperature: 0.0,
        }
    }

    async fn send_once(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let mut builder = self.client.post(&self.url).json(request);
        if let Some(token) = &self.auth_token {
            builder = builder.bearer_auth(token);
        }
        let response = builder
            .send()
            .await
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            let message = response.text().await.unwrap_or_default();
            return Err(BackendError::Http {
                status: status.as_u16(),
                message: message.chars().take(300).collect(),
            });
        }
        response
            .json()
            .await
            .map_err(|e| BackendError::InvalidResponse(e.to_string()))
    }

    fn harvest_distributions(&self, logprobs: Option<&Logprobs>) -> Option<Vec<TokenDistribution>> {
        let positions = logprobs?.content.as_deref()?;
        if positions.is_empty() {
            return None;
        }
        let mut dists = Vec::with_capacity(positions.len());
        for position in positions {
            let mut entries: Vec<(String, f64)> = if position.top_logprobs.is_empty() {
                vec![(position.token.clone(), position.logprob.exp())]
            } else {
                position
                    .top_logprobs
                    .iter()
                    .map(|t| (t.token.clone(), t.logprob.exp()))
                    .collect()
            };
            // Top-K probabilities cover only part of the vocabulary;
            // renormalize so the listed support forms a distribution.
            let sum: f64 = entries.iter().map(|(_, p)| p).sum();
            if sum <= 0.0 {
                continue;
            }
            entries.iter_mut().for_each(|(_, p)| *p /= sum);
            entries.sort_by(|(ta, pa), (tb, pb)| {
                pb.partial_cmp(pa)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| ta.cmp(tb))
            });
            let hint = self.settings.vocab_size_hint.max(entries.len());
            match TokenDistribution::new(entries, hint) {
                Ok(dist) => dists.push(dist),
                Err(e) => {
                    warn!(error = %e, "dropping malformed logprob position");
                }
            }
        }
        (!dists.is_empty()).then_some(dists)
    }
}

#[async_trait]
impl AgentBackend for HttpBackend {
    async fn generate(
        &self,
        role: &AgentRole,
        task: &TaskInput,
        _round: u32,
        context: &str,
    ) -> Result<BackendResponse, BackendError> {
        let request = self.build_request(role, task, context);
        let attempts = 1 + self.settings.max_retries;
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            match self.send_once(&request).await {
                Ok(parsed) => {
                    let choice = parsed.choices.into_iter().next().ok_or_else(|| {
                        BackendError::InvalidResponse("response carried no choices".into())
                    })?;
                    let text = choice.message.content.unwrap_or_default();
                    let token_distributions = self.harvest_distributions(choice.logprobs.as_ref());
                    let token_cost = parsed
                        .usage
                        .map(|u| u.prompt_tokens + u.completion_tokens)
                        .unwrap_or(0);
                    return Ok(BackendResponse {
                        text,
                        token_distributions,
                        token_cost,
                    });
                }
                Err(BackendError::Http { status, message }) if status < 500 && status != 429 => {
                    // client errors are not retryable
                    return Err(BackendError::Http { status, message });
                }
                Err(e) => {
                    last_error = e.to_string();
                    debug!(attempt, error = %last_error, "backend attempt failed");
                    if attempt < attempts {
                        let delay = self
                            .settings
                            .retry_base_ms
                            .saturating_mul(1 << (attempt - 1));
                        tokio::time::sleep(Duration::from_millis(delay)).await;
                    }
                }
            }
        }
        Err(BackendError::Exhausted {
            attempts,
            last: last_error,
        })
    }
}
