//! Chat-completion clients and neighbor-name parsing.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::Deserialize;

use super::normalize_name;
use crate::error::{Error, Result};

/// Environment variable holding the chat-completion base URL.
pub const ENV_LLM_URL: &str = "TAILEXT_LLM_URL";
/// Environment variable holding the API key.
pub const ENV_LLM_KEY: &str = "TAILEXT_LLM_KEY";
/// Optional environment variable overriding the model name.
pub const ENV_LLM_MODEL: &str = "TAILEXT_LLM_MODEL";

pub trait LlmClient: Send + Sync {
    /// Completion text for `prompt`. `class_name` identifies the query for
    /// clients that replay recorded answers.
    fn complete(&self, class_name: &str, prompt: &str) -> Result<String>;
}

/// Replays recorded responses keyed by normalized class name. Repeated
/// queries for the same class walk through the recorded list and then
/// keep returning its last entry.
#[derive(Debug, Default)]
pub struct FixtureClient {
    responses: HashMap<String, Vec<String>>,
    cursor: Mutex<HashMap<String, usize>>,
}

impl FixtureClient {
    pub fn new(responses: HashMap<String, Vec<String>>) -> Self {
        let responses = responses
            .into_iter()
            .map(|(k, v)| (normalize_name(&k), v))
            .collect();
        Self {
            responses,
            cursor: Mutex::new(HashMap::new()),
        }
    }

    /// Loads `<dir>/responses.json`: `{"class name": ["response", ...]}`.
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let map: HashMap<String, Vec<String>> = crate::dataset::read_json(&dir.join("responses.json"))?;
        Ok(Self::new(map))
    }
}

impl LlmClient for FixtureClient {
    fn complete(&self, class_name: &str, _prompt: &str) -> Result<String> {
        let key = normalize_name(class_name);
        let list = self
            .responses
            .get(&key)
            .filter(|l| !l.is_empty())
            .ok_or_else(|| Error::Service(format!("no recorded response for {class_name:?}")))?;
        let mut cursor = self.cursor.lock().unwrap();
        let i = cursor.entry(key).or_insert(0);
        let out = list[(*i).min(list.len() - 1)].clone();
        *i += 1;
        Ok(out)
    }
}

/// OpenAI-compatible `POST {base}/chat/completions` client.
#[cfg(feature = "http")]
pub struct HttpClient {
    agent: ureq::Agent,
    base_url: String,
    api_key: Option<String>,
    model: String,
}

#[cfg(feature = "http")]
impl HttpClient {
    pub fn new(base_url: &str, api_key: Option<String>, model: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(std::time::Duration::from_secs(60)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key: api_key.filter(|k| !k.is_empty()),
            model: model.to_string(),
        }
    }

    /// Reads the URL, key and model from the environment.
    pub fn from_env(default_model: &str) -> Result<Self> {
        let url = std::env::var(ENV_LLM_URL)
            .map_err(|_| Error::config(format!("{ENV_LLM_URL} is not set and no fixture was given")))?;
        let key = std::env::var(ENV_LLM_KEY).ok();
        let model = std::env::var(ENV_LLM_MODEL).unwrap_or_else(|_| default_model.to_string());
        Ok(Self::new(&url, key, &model))
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

#[derive(Deserialize)]
struct ChatMessage {
    #[serde(default)]
    content: Option<String>,
}

/// Extracts the first choice's message content from a chat-completion body.
pub fn parse_chat_body(body: &str) -> Result<String> {
    let resp: ChatResponse = serde_json::from_str(body)
        .map_err(|e| Error::MalformedResponse(format!("chat completion body: {e}")))?;
    resp.choices
        .into_iter()
        .next()
        .and_then(|c| c.message.content)
        .ok_or_else(|| Error::MalformedResponse("chat completion without content".into()))
}

#[cfg(feature = "http")]
impl LlmClient for HttpClient {
    fn complete(&self, _class_name: &str, prompt: &str) -> Result<String> {
        let url = format!("{}/chat/completions", self.base_url);
        let body = serde_json::json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        let mut req = self.agent.post(&url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send(body.to_string())
            .map_err(|e| Error::Service(format!("{url}: {e}")))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Service(format!("{url}: {e}")))?;
        if !(200..300).contains(&status) {
            return Err(Error::Service(format!("{url}: HTTP {status}: {text}")));
        }
        parse_chat_body(&text)
    }
}

/// Splits a completion into normalized, de-duplicated names, keeping the
/// first occurrence of each.
pub fn parse_neighbor_list(response: &str) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for part in response.split([',', '\n', ';']) {
        let part = part
            .trim()
            .trim_start_matches(|c: char| c == '-' || c == '*' || c.is_ascii_digit() || c == '.' || c == ')')
            .trim()
            .trim_end_matches('.');
        let name = normalize_name(part);
        if !name.is_empty() && !out.contains(&name) {
            out.push(name);
        }
    }
    out
}

/// Asks `client` for up to `k` neighbor categories of `class_name`.
/// Empty or unparseable answers and transport failures are retried up to
/// `max_retries` times.
pub fn query_neighbors(
    client: &dyn LlmClient,
    class_name: &str,
    k: usize,
    max_retries: usize,
) -> Result<Vec<String>> {
    let prompt = super::build_prompt(class_name, k)?;
    let mut last_err = None;
    for attempt in 0..=max_retries {
        match client.complete(class_name, &prompt) {
            Ok(text) => {
                let mut names = parse_neighbor_list(&text);
                if !names.is_empty() {
                    names.truncate(k);
                    return Ok(names);
                }
                log::warn!("empty neighbor list for {class_name:?} (attempt {})", attempt + 1);
                last_err = Some(Error::MalformedResponse(format!(
                    "no category names in response for {class_name:?} after {} attempts",
                    attempt + 1
                )));
            }
            Err(e @ Error::Config(_)) => return Err(e),
            Err(e) => {
                log::warn!("query for {class_name:?} failed (attempt {}): {e}", attempt + 1);
                last_err = Some(e);
            }
        }
    }
    Err(last_err.expect("at least one attempt"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(class: &str, answers: &[&str]) -> FixtureClient {
        let mut m = HashMap::new();
        m.insert(class.to_string(), answers.iter().map(|s| s.to_string()).collect());
        FixtureClient::new(m)
    }

    #[test]
    fn exemplar_response_parses() {
        let c = fixture("sports car", &["sedan, coupe, SUV, luxury car, electric car"]);
        let names = query_neighbors(&c, "sports car", 5, 0).unwrap();
        assert_eq!(names, vec!["sedan", "coupe", "suv", "luxury car", "electric car"]);
    }

    #[test]
    fn duplicates_removed() {
        let c = fixture("car", &["sedan, sedan, coupe"]);
        assert_eq!(query_neighbors(&c, "car", 5, 0).unwrap(), vec!["sedan", "coupe"]);
    }

    #[test]
    fn truncates_to_k() {
        let c = fixture("car", &["a, b, c, d"]);
        assert_eq!(query_neighbors(&c, "car", 2, 0).unwrap(), vec!["a", "b"]);
    }

    #[test]
    fn retries_then_fails() {
        let c = fixture("car", &["", "  "]);
        match query_neighbors(&c, "car", 5, 1) {
            Err(Error::MalformedResponse(_)) => {}
            other => panic!("expected parse failure, got {other:?}"),
        }
    }

    #[test]
    fn retry_recovers() {
        let c = fixture("car", &["", "van, truck"]);
        assert_eq!(query_neighbors(&c, "car", 5, 1).unwrap(), vec!["van", "truck"]);
    }

    #[test]
    fn missing_fixture_is_service_error() {
        let c = fixture("car", &["van"]);
        assert!(matches!(query_neighbors(&c, "boat", 5, 2), Err(Error::Service(_))));
    }

    #[test]
    fn numbered_lines() {
        assert_eq!(
            parse_neighbor_list("1. Persian\n2. Maine  Coon.\n- Siamese"),
            vec!["persian", "maine coon", "siamese"]
        );
    }

    #[test]
    fn chat_body() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"a, b"}}]}"#;
        assert_eq!(parse_chat_body(body).unwrap(), "a, b");
        assert!(parse_chat_body(r#"{"choices":[]}"#).is_err());
        assert!(parse_chat_body("not json").is_err());
    }
}
