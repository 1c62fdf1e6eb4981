//! HTTP chat backend speaking the common chat-completions JSON shape.
//!
//! The wire layer is behind the [`Transport`] trait so retry, auth, and
//! image-encoding behavior are testable without a network.

use super::{BackendConfig, BackendError, ChatBackend, ChatRequest, ChatRole};
use base64::Engine;
use serde_json::{json, Value};

/// Raw HTTP exchange. The production implementation is [`UreqTransport`].
pub trait Transport: Send + Sync {
    /// Returns (status, body) or a transport-level failure message
    /// (connect error, timeout) which is treated as transient.
    fn post_json(&self, url: &str, bearer: &str, body: &Value)
        -> Result<TransportResponse, String>;
}

pub struct TransportResponse {
    pub status: u16,
    pub body: String,
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout_secs: u64) -> Self {
        UreqTransport {
            agent: ureq::AgentBuilder::new()
                .timeout(std::time::Duration::from_secs(timeout_secs))
                .build(),
        }
    }
}

impl Transport for UreqTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: &str,
        body: &Value,
    ) -> Result<TransportResponse, String> {
        let result = self
            .agent
            .post(url)
            .set("Authorization", &format!("Bearer {bearer}"))
            .set("Content-Type", "application/json")
            .send_string(&body.to_string());
        match result {
            Ok(resp) => {
                let status = resp.status();
                let body = resp.into_string().map_err(|e| e.to_string())?;
                Ok(TransportResponse { status, body })
            }
            Err(ureq::Error::Status(status, resp)) => Ok(TransportResponse {
                status,
                body: resp.into_string().unwrap_or_default(),
            }),
            Err(ureq::Error::Transport(t)) => Err(t.to_string()),
        }
    }
}

pub struct HttpBackend<T: Transport = UreqTransport> {
    config: BackendConfig,
    transport: T,
}

impl HttpBackend<UreqTransport> {
    pub fn new(config: BackendConfig) -> Result<Self, BackendError> {
        config.validate()?;
        Ok(HttpBackend {
            config,
            transport: UreqTransport::new(60),
        })
    }
}

impl<T: Transport> HttpBackend<T> {
    pub fn with_transport(config: BackendConfig, transport: T) -> Result<Self, BackendError> {
        config.validate()?;
        Ok(HttpBackend { config, transport })
    }

    fn credential(&self) -> Result<String, BackendError> {
        std::env::var(&self.config.credential_env).map_err(|_| {
            BackendError::Auth(format!(
                "credential env var {} is not set",
                self.config.credential_env
            ))
        })
    }

    fn image_part(&self, uri: &str) -> Result<Value, BackendError> {
        if self.config.images_as_base64 && !uri.starts_with("data:") {
            let bytes = std::fs::read(uri).map_err(|e| {
                BackendError::Other(format!("cannot read image {uri} for base64 transfer: {e}"))
            })?;
            let encoded = base64::engine::general_purpose::STANDARD.encode(bytes);
            Ok(json!({
                "type": "image_url",
                "image_url": {"url": format!("data:application/octet-stream;base64,{encoded}")}
            }))
        } else {
            Ok(json!({"type": "image_url", "image_url": {"url": uri}}))
        }
    }

    fn build_body(&self, request: &ChatRequest) -> Result<Value, BackendError> {
        let mut messages = Vec::new();
        if let Some(system) = &request.system {
            messages.push(json!({"role": "system", "content": system}));
        }
        for message in &request.messages {
            let role = match message.role {
                ChatRole::User => "user",
                ChatRole::Assistant => "assistant",
            };
            if message.images.is_empty() {
                messages.push(json!({"role": role, "content": message.text}));
            } else {
                let mut parts = vec![json!({"type": "text", "text": message.text})];
                for uri in &message.images {
                    parts.push(self.image_part(uri)?);
                }
                messages.push(json!({"role": role, "content": parts}));
            }
        }
        let mut body = json!({
            "model": request.model,
            "messages": messages,
            "temperature": request.params.temperature,
            "max_tokens": request.params.max_tokens,
        });
        if let Some(seed) = request.params.seed {
            body["seed"] = json!(seed);
        }
        Ok(body)
    }

    fn parse_body(body: &str) -> Result<String, BackendError> {
        let value: Value = serde_json::from_str(body)
            .map_err(|e| BackendError::Other(format!("malformed backend response: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| {
                BackendError::Other("backend response missing choices[0].message.content".into())
            })
    }
}

impl<T: Transport> ChatBackend for HttpBackend<T> {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let bearer = self.credential()?;
        let body = self.build_body(request)?;
        match self
            .transport
            .post_json(&self.config.endpoint, &bearer, &body)
        {
            Err(transport_failure) => Err(BackendError::Transient(transport_failure)),
            Ok(resp) if resp.status == 401 || resp.status == 403 => Err(BackendError::Auth(
                format!("status {}: {}", resp.status, resp.body),
            )),
            Ok(resp) if resp.status == 408 || resp.status == 429 || resp.status >= 500 => Err(
                BackendError::Transient(format!("status {}: {}", resp.status, resp.body)),
            ),
            Ok(resp) if resp.status >= 400 => Err(BackendError::Other(format!(
                "status {}: {}",
                resp.status, resp.body
            ))),
            Ok(resp) => Self::parse_body(&resp.body),
        }
    }

    fn name(&self) -> &str {
        "http"
    }
}
