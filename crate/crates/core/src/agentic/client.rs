//! Chat-completion clients: an OpenAI-style HTTP backend with retry/backoff
//! and a scripted backend that replays a fixed response list for tests and
//! offline runs.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::embedding::API_KEY_ENV;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClientKind {
    Http,
    Scripted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatClientSpec {
    pub kind: ClientKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<Vec<String>>,
}

fn default_retries() -> u32 {
    3
}

impl ChatClientSpec {
    pub fn scripted(script: Vec<String>) -> Self {
        ChatClientSpec {
            kind: ClientKind::Scripted,
            endpoint: None,
            model_id: None,
            temperature: 0.0,
            max_retries: 0,
            script: Some(script),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            ClientKind::Http => {
                if self.endpoint.is_none() || self.model_id.is_none() {
                    return Err(Error::Config(
                        "http chat client requires endpoint and model_id".into(),
                    ));
                }
            }
            ClientKind::Scripted => {
                if self.script.as_ref().is_none_or(|s| s.is_empty()) {
                    return Err(Error::Config(
                        "scripted chat client requires a non-empty script".into(),
                    ));
                }
            }
        }
        if self.temperature < 0.0 {
            return Err(Error::Config("temperature must be >= 0".into()));
        }
        Ok(())
    }
}

pub trait ChatClient {
    /// Sends one system+user exchange and returns the assistant text.
    fn complete(&mut self, system: &str, user: &str) -> Result<String>;
}

pub fn build_client(spec: &ChatClientSpec) -> Result<Box<dyn ChatClient>> {
    spec.validate()?;
    match spec.kind {
        ClientKind::Scripted => Ok(Box::new(ScriptedClient::new(
            spec.script.clone().unwrap_or_default(),
        ))),
        ClientKind::Http => Ok(Box::new(HttpChatClient::new(spec)?)),
    }
}

/// Replays a fixed response list in order; exhaustion is a client failure.
pub struct ScriptedClient {
    responses: Vec<String>,
    cursor: usize,
}

impl ScriptedClient {
    pub fn new(responses: Vec<String>) -> Self {
        ScriptedClient {
            responses,
            cursor: 0,
        }
    }
}

impl ChatClient for ScriptedClient {
    fn complete(&mut self, _system: &str, _user: &str) -> Result<String> {
        match self.responses.get(self.cursor) {
            Some(r) => {
                self.cursor += 1;
                Ok(r.clone())
            }
            None => Err(Error::ChatClient {
                msg: format!("script exhausted after {} responses", self.cursor),
            }),
        }
    }
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    temperature: f64,
    messages: Vec<ChatMessage<'a>>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatChoiceMessage,
}

#[derive(Deserialize)]
struct ChatChoiceMessage {
    content: String,
}

pub struct HttpChatClient {
    endpoint: String,
    model_id: String,
    temperature: f64,
    max_retries: u32,
    client: reqwest::blocking::Client,
}

const BACKOFF_BASE_MS: u64 = 100;

impl HttpChatClient {
    pub fn new(spec: &ChatClientSpec) -> Result<Self> {
        Ok(HttpChatClient {
            endpoint: spec.endpoint.clone().expect("validated"),
            model_id: spec.model_id.clone().expect("validated"),
            temperature: spec.temperature,
            max_retries: spec.max_retries,
            client: reqwest::blocking::Client::builder()
                .timeout(Duration::from_secs(120))
                .build()
                .map_err(|e| Error::ChatClient { msg: e.to_string() })?,
        })
    }
}

impl ChatClient for HttpChatClient {
    fn complete(&mut self, system: &str, user: &str) -> Result<String> {
        let body = ChatRequest {
            model: &self.model_id,
            temperature: self.temperature,
            messages: vec![
                ChatMessage {
                    role: "system",
                    content: system,
                },
                ChatMessage {
                    role: "user",
                    content: user,
                },
            ],
        };
        let mut last_err = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(BACKOFF_BASE_MS << (attempt - 1)));
            }
            let mut req = self.client.post(&self.endpoint).json(&body);
            if let Ok(key) = std::env::var(API_KEY_ENV) {
                req = req.bearer_auth(key);
            }
            match req.send() {
                Ok(resp) => {
                    let status = resp.status();
                    if status.is_success() {
                        let parsed: ChatResponse =
                            resp.json().map_err(|e| Error::ChatClient {
                                msg: format!("bad response body: {e}"),
                            })?;
                        return parsed
                            .choices
                            .into_iter()
                            .next()
                            .map(|c| c.message.content)
                            .ok_or_else(|| Error::ChatClient {
                                msg: "response contained no choices".into(),
                            });
                    }
                    if status.as_u16() == 429 || status.is_server_error() {
                        last_err = format!("status {status}");
                        continue;
                    }
                    return Err(Error::HttpStatus {
                        status: status.as_u16(),
                        body: resp.text().unwrap_or_default(),
                    });
                }
                Err(e) => {
                    last_err = e.to_string();
                    continue;
                }
            }
        }
        Err(Error::ChatClient {
            msg: format!(
                "gave up after {} retries: {last_err}",
                self.max_retries
            ),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scripted_replays_in_order_then_fails() {
        let mut c = ScriptedClient::new(vec!["one".into(), "two".into()]);
        assert_eq!(c.complete("s", "u").unwrap(), "one");
        assert_eq!(c.complete("s", "u").unwrap(), "two");
        assert!(c.complete("s", "u").is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(ChatClientSpec::scripted(vec!["x".into()]).validate().is_ok());
        assert!(ChatClientSpec::scripted(vec![]).validate().is_err());
        let http = ChatClientSpec {
            kind: ClientKind::Http,
            endpoint: None,
            model_id: Some("m".into()),
            temperature: 0.0,
            max_retries: 3,
            script: None,
        };
        assert!(http.validate().is_err());
    }
}
