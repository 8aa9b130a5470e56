//! Paraphrase and translation providers.
//!
//! Every provider has an offline mock that is a pure function of its input.
//! The live clients speak HTTP+JSON through a shared [`HttpBackend`] that
//! owns the rate limiter and the retry loop; nothing else in the crate does
//! network I/O.

use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub const LLM_KEY_ENV: &str = "PERSUAKIT_LLM_KEY";
pub const TRANSLATE_KEY_ENV: &str = "PERSUAKIT_TRANSLATE_KEY";

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("transport failure: {0}")]
    Transport(String),

    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },

    #[error("rate limit still exceeded after {0} attempts")]
    RateLimited(usize),

    #[error("malformed provider response: {0}")]
    Malformed(String),

    #[error("unsupported language pair {source_lang} -> {target_lang}")]
    UnsupportedLanguagePair { source_lang: String, target_lang: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid provider configuration: {0}")]
    Config(String),

    #[error("environment variable {0} is not set")]
    MissingKey(&'static str),
}

pub type ServiceResult<T> = std::result::Result<T, ServiceError>;

pub trait ParaphraseProvider: Send + Sync {
    /// Exactly `n` paraphrases of `text`, or an error.
    fn paraphrase(&self, text: &str, n: usize) -> ServiceResult<Vec<String>>;
}

pub trait Translator: Send + Sync {
    /// `source = None` lets the provider detect the language.
    fn translate(&self, text: &str, source: Option<&str>, target: &str) -> ServiceResult<String>;
}

/// Returns `"{text} ⟨para k⟩"` for `k = 1..=n`.
#[derive(Clone, Copy, Debug, Default)]
pub struct MockParaphraser;

impl ParaphraseProvider for MockParaphraser {
    fn paraphrase(&self, text: &str, n: usize) -> ServiceResult<Vec<String>> {
        require_text(text)?;
        Ok((1..=n).map(|k| format!("{text} ⟨para {k}⟩")).collect())
    }
}

/// Identity when source and target agree, otherwise `"[{target}] {text}"`.
#[derive(Clone, Copy, Debug, Default)]
pub struct MockTranslator;

impl Translator for MockTranslator {
    fn translate(&self, text: &str, source: Option<&str>, target: &str) -> ServiceResult<String> {
        require_text(text)?;
        check_pair(source, target)?;
        if source == Some(target) {
            Ok(text.to_owned())
        } else {
            Ok(format!("[{target}] {text}"))
        }
    }
}

fn require_text(text: &str) -> ServiceResult<()> {
    if text.trim().is_empty() {
        Err(ServiceError::InvalidInput("text is empty".into()))
    } else {
        Ok(())
    }
}

/// Loose BCP 47 shape check: a 2–3 letter primary subtag followed by
/// alphanumeric subtags of 1–8 characters.
pub fn valid_language_tag(tag: &str) -> bool {
    let mut parts = tag.split('-');
    let primary = parts.next().unwrap_or("");
    (2..=3).contains(&primary.len())
        && primary.chars().all(|c| c.is_ascii_alphabetic())
        && parts.all(|p| (1..=8).contains(&p.len()) && p.chars().all(|c| c.is_ascii_alphanumeric()))
}

fn check_pair(source: Option<&str>, target: &str) -> ServiceResult<()> {
    let source_ok = source.is_none_or(valid_language_tag);
    if !source_ok || !valid_language_tag(target) {
        return Err(ServiceError::UnsupportedLanguagePair {
            source_lang: source.unwrap_or("auto").to_owned(),
            target_lang: target.to_owned(),
        });
    }
    Ok(())
}

fn default_temperature() -> f64 {
    0.7
}
fn default_retries() -> u32 {
    3
}
fn default_rate() -> f64 {
    1.0
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_max_backoff_ms() -> u64 {
    8_000
}
fn default_timeout() -> u64 {
    60
}

/// Provider settings. Secrets never live here; keys come from the
/// environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub endpoint: String,
    #[serde(default)]
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Requests per second; 0 disables limiting.
    #[serde(default = "default_rate")]
    pub rate_limit: f64,
    #[serde(default = "default_backoff_ms")]
    pub initial_backoff_ms: u64,
    #[serde(default = "default_max_backoff_ms")]
    pub max_backoff_ms: u64,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Prompt template file; the bundled template is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_template: Option<PathBuf>,
}

impl ProviderConfig {
    pub fn new(endpoint: impl Into<String>, model_name: impl Into<String>) -> Self {
        ProviderConfig {
            endpoint: endpoint.into(),
            model_name: model_name.into(),
            temperature: default_temperature(),
            max_retries: default_retries(),
            rate_limit: default_rate(),
            initial_backoff_ms: default_backoff_ms(),
            max_backoff_ms: default_max_backoff_ms(),
            timeout_secs: default_timeout(),
            prompt_template: None,
        }
    }

    pub fn parse(doc: &[u8]) -> ServiceResult<Self> {
        let cfg: ProviderConfig =
            serde_json::from_slice(doc).map_err(|e| ServiceError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> ServiceResult<()> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(ServiceError::Config(format!(
                "temperature {} is outside [0, 2]",
                self.temperature
            )));
        }
        if !(self.rate_limit >= 0.0 && self.rate_limit.is_finite()) {
            return Err(ServiceError::Config(format!("bad rate_limit {}", self.rate_limit)));
        }
        reqwest::Url::parse(&self.endpoint)
            .map_err(|e| ServiceError::Config(format!("endpoint `{}`: {e}", self.endpoint)))?;
        Ok(())
    }
}

/// Versioned paraphrase prompt with `{n}` and `{text}` placeholders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplate {
    pub version: u32,
    pub system: String,
    pub user: String,
}

const BUNDLED_PROMPT: &str = include_str!("../assets/paraphrase_prompt.v1.json");

impl Default for PromptTemplate {
    fn default() -> Self {
        serde_json::from_str(BUNDLED_PROMPT).expect("bundled prompt is valid")
    }
}

impl PromptTemplate {
    pub fn load(path: &std::path::Path) -> ServiceResult<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_slice(&bytes).map_err(|e| ServiceError::Config(e.to_string()))
    }

    pub fn render(&self, text: &str, n: usize) -> (String, String) {
        let fill = |s: &str| s.replace("{n}", &n.to_string()).replace("{text}", text);
        (fill(&self.system), fill(&self.user))
    }
}

/// Minimum spacing between requests, shared by every caller of a backend.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn per_second(rate: f64) -> Self {
        let interval = if rate > 0.0 {
            Duration::from_secs_f64(1.0 / rate)
        } else {
            Duration::ZERO
        };
        RateLimiter {
            interval,
            next: Mutex::new(None),
        }
    }

    /// Blocks until the caller may issue a request.
    pub fn acquire(&self) {
        if self.interval.is_zero() {
            return;
        }
        let wait = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + self.interval);
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

/// Blocking JSON-over-HTTP with bounded exponential backoff.
#[derive(Debug)]
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    limiter: RateLimiter,
    max_retries: u32,
    initial_backoff: Duration,
    max_backoff: Duration,
}

impl HttpBackend {
    pub fn new(cfg: &ProviderConfig) -> ServiceResult<Self> {
        cfg.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| ServiceError::Config(e.to_string()))?;
        Ok(HttpBackend {
            client,
            limiter: RateLimiter::per_second(cfg.rate_limit),
            max_retries: cfg.max_retries,
            initial_backoff: Duration::from_millis(cfg.initial_backoff_ms),
            max_backoff: Duration::from_millis(cfg.max_backoff_ms),
        })
    }

    fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff
            .saturating_mul(1u32 << attempt.min(16))
            .min(self.max_backoff)
    }

    pub fn post_json(&self, url: &str, bearer: Option<&str>, body: &Value) -> ServiceResult<Value> {
        let mut last = None;
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                let pause = self.backoff(attempt - 1);
                log::debug!("retrying {url} in {pause:?} (attempt {attempt})");
                std::thread::sleep(pause);
            }
            self.limiter.acquire();
            let mut req = self.client.post(url).json(body);
            if let Some(key) = bearer {
                req = req.bearer_auth(key);
            }
            let resp = match req.send() {
                Ok(r) => r,
                Err(e) => {
                    last = Some(ServiceError::Transport(e.to_string()));
                    continue;
                }
            };
            let status = resp.status();
            if status.is_success() {
                let text = resp.text().map_err(|e| ServiceError::Transport(e.to_string()))?;
                return serde_json::from_str(&text).map_err(|e| ServiceError::Malformed(e.to_string()));
            }
            let body = resp.text().unwrap_or_default();
            if status.as_u16() == 429 {
                last = Some(ServiceError::RateLimited(attempt as usize + 1));
            } else if status.is_server_error() {
                last = Some(ServiceError::Http {
                    status: status.as_u16(),
                    body,
                });
            } else {
                return Err(ServiceError::Http {
                    status: status.as_u16(),
                    body,
                });
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

/// Chat-completion paraphraser (OpenAI-compatible protocol).
#[derive(Debug)]
pub struct ChatParaphraser {
    cfg: ProviderConfig,
    template: PromptTemplate,
    api_key: String,
    backend: HttpBackend,
}

impl ChatParaphraser {
    /// Reads the key from `PERSUAKIT_LLM_KEY`.
    pub fn from_env(cfg: ProviderConfig) -> ServiceResult<Self> {
        let key = std::env::var(LLM_KEY_ENV).map_err(|_| ServiceError::MissingKey(LLM_KEY_ENV))?;
        Self::with_key(cfg, key)
    }

    pub fn with_key(cfg: ProviderConfig, api_key: impl Into<String>) -> ServiceResult<Self> {
        let template = match &cfg.prompt_template {
            Some(p) => PromptTemplate::load(p)?,
            None => PromptTemplate::default(),
        };
        Ok(ChatParaphraser {
            backend: HttpBackend::new(&cfg)?,
            cfg,
            template,
            api_key: api_key.into(),
        })
    }

    pub fn request_body(&self, text: &str, n: usize) -> Value {
        let (system, user) = self.template.render(text, n);
        json!({
            "model": self.cfg.model_name,
            "temperature": self.cfg.temperature,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        })
    }
}

/// Pulls exactly `n` paraphrases out of a chat-completion response. The
/// message content must be a JSON array of strings, optionally wrapped in a
/// Markdown code fence.
pub fn parse_paraphrases(response: &Value, n: usize) -> ServiceResult<Vec<String>> {
    let content = response
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| ServiceError::Malformed("missing choices[0].message.content".into()))?;
    let trimmed = content
        .trim()
        .trim_start_matches("```json")
        .trim_start_matches("```")
        .trim_end_matches("```")
        .trim();
    let items: Vec<String> =
        serde_json::from_str(trimmed).map_err(|e| ServiceError::Malformed(format!("content is not a JSON string array: {e}")))?;
    let items: Vec<String> = items
        .into_iter()
        .map(|s| s.trim().to_owned())
        .filter(|s| !s.is_empty())
        .collect();
    if items.len() != n {
        return Err(ServiceError::Malformed(format!(
            "asked for {n} paraphrases, got {}",
            items.len()
        )));
    }
    Ok(items)
}

impl ParaphraseProvider for ChatParaphraser {
    fn paraphrase(&self, text: &str, n: usize) -> ServiceResult<Vec<String>> {
        require_text(text)?;
        if n == 0 {
            return Ok(Vec::new());
        }
        let resp = self
            .backend
            .post_json(&self.cfg.endpoint, Some(&self.api_key), &self.request_body(text, n))?;
        parse_paraphrases(&resp, n)
    }
}

/// Translation over a LibreTranslate-style endpoint:
/// `{"q", "source", "target", "format"}` → `{"translatedText"}`.
#[derive(Debug)]
pub struct HttpTranslator {
    cfg: ProviderConfig,
    api_key: Option<String>,
    backend: HttpBackend,
}

impl HttpTranslator {
    /// Uses `PERSUAKIT_TRANSLATE_KEY` when set; the key is optional.
    pub fn from_env(cfg: ProviderConfig) -> ServiceResult<Self> {
        Self::with_key(cfg, std::env::var(TRANSLATE_KEY_ENV).ok())
    }

    pub fn with_key(cfg: ProviderConfig, api_key: Option<String>) -> ServiceResult<Self> {
        Ok(HttpTranslator {
            backend: HttpBackend::new(&cfg)?,
            cfg,
            api_key,
        })
    }
}

impl Translator for HttpTranslator {
    fn translate(&self, text: &str, source: Option<&str>, target: &str) -> ServiceResult<String> {
        require_text(text)?;
        check_pair(source, target)?;
        if source == Some(target) {
            return Ok(text.to_owned());
        }
        let body = json!({
            "q": text,
            "source": source.unwrap_or("auto"),
            "target": target,
            "format": "text",
        });
        let resp = self.backend.post_json(&self.cfg.endpoint, self.api_key.as_deref(), &body)?;
        resp.get("translatedText")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| ServiceError::Malformed("missing translatedText".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_paraphrases() {
        assert!(MockParaphraser.paraphrase("hello", 0).unwrap().is_empty());
        assert_eq!(
            MockParaphraser.paraphrase("hello", 2).unwrap(),
            ["hello ⟨para 1⟩", "hello ⟨para 2⟩"]
        );
        assert!(MockParaphraser.paraphrase("", 1).is_err());
    }

    #[test]
    fn mock_translation() {
        assert_eq!(MockTranslator.translate("hello", Some("en"), "en").unwrap(), "hello");
        assert_eq!(MockTranslator.translate("текст", Some("bg"), "en").unwrap(), "[en] текст");
        assert_eq!(MockTranslator.translate("текст", None, "en").unwrap(), "[en] текст");
        assert!(matches!(
            MockTranslator.translate("x", Some("bg"), "english!"),
            Err(ServiceError::UnsupportedLanguagePair { .. })
        ));
    }

    #[test]
    fn language_tags() {
        for ok in ["en", "bg", "mk", "ar", "zh-Hant", "en-US", "sr-Latn-RS"] {
            assert!(valid_language_tag(ok), "{ok}");
        }
        for bad in ["", "e", "english", "en_US", "en-", "12"] {
            assert!(!valid_language_tag(bad), "{bad}");
        }
    }

    #[test]
    fn default_request_carries_temperature() {
        let p = ChatParaphraser::with_key(ProviderConfig::new("http://127.0.0.1:9/v1/chat", "gpt-3.5-turbo"), "k")
            .unwrap();
        let body = p.request_body("some meme text", 3);
        assert_eq!(body["temperature"], 0.7);
        assert_eq!(body["model"], "gpt-3.5-turbo");
        let user = body["messages"][1]["content"].as_str().unwrap();
        assert!(user.contains("some meme text") && user.contains('3'));
    }

    #[test]
    fn config_validation() {
        let cfg = ProviderConfig::parse(br#"{"endpoint":"https://api.example.com/v1/chat/completions","model_name":"m"}"#)
            .unwrap();
        assert_eq!(cfg.temperature, 0.7);
        assert_eq!(cfg.max_retries, 3);
        assert!(ProviderConfig::parse(br#"{"endpoint":"https://x.y","temperature":2.5}"#).is_err());
        assert!(ProviderConfig::parse(br#"{"endpoint":"not a url"}"#).is_err());
        // keys are not accepted from files
        assert!(ProviderConfig::parse(br#"{"endpoint":"https://x.y","api_key":"sk-123"}"#).is_err());
    }

    #[test]
    fn response_parsing() {
        let ok = json!({"choices":[{"message":{"content":"```json\n[\"a\", \"b\"]\n```"}}]});
        assert_eq!(parse_paraphrases(&ok, 2).unwrap(), ["a", "b"]);
        assert!(matches!(parse_paraphrases(&ok, 3), Err(ServiceError::Malformed(_))));
        let prose = json!({"choices":[{"message":{"content":"Sure! Here you go"}}]});
        assert!(parse_paraphrases(&prose, 1).is_err());
        assert!(parse_paraphrases(&json!({}), 1).is_err());
    }

    #[test]
    fn rate_limiter_spaces_requests() {
        let rl = RateLimiter::per_second(50.0);
        let start = Instant::now();
        for _ in 0..4 {
            rl.acquire();
        }
        assert!(start.elapsed() >= Duration::from_millis(55));
        let free = RateLimiter::per_second(0.0);
        let start = Instant::now();
        for _ in 0..100 {
            free.acquire();
        }
        assert!(start.elapsed() < Duration::from_millis(50));
    }

    #[test]
    fn prompt_rendering() {
        let (_, user) = PromptTemplate::default().render("abc", 5);
        assert!(user.contains("5 different paraphrases"));
        assert!(user.ends_with("abc"));
    }
}
