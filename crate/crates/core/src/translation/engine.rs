use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use reqwest::blocking::{Client, RequestBuilder};
use reqwest::StatusCode;
use serde_json::{json, Value};

use super::{fixture_miss, EngineId, TranslateError};

/// A machine translation backend. Implementations are only called on cache
/// misses.
pub trait TranslationEngine: Send + Sync {
    fn id(&self) -> &EngineId;
    fn fetch(&self, src_lang: &str, tgt_lang: &str, text: &str) -> Result<String, TranslateError>;
}

/// Offline engine: every cache miss is an error.
#[derive(Debug, Clone)]
pub struct FixtureEngine {
    id: EngineId,
}

impl FixtureEngine {
    pub fn new() -> Self {
        FixtureEngine { id: EngineId::fixture() }
    }

    pub fn with_id(id: EngineId) -> Self {
        FixtureEngine { id }
    }
}

impl Default for FixtureEngine {
    fn default() -> Self {
        Self::new()
    }
}

impl TranslationEngine for FixtureEngine {
    fn id(&self) -> &EngineId {
        &self.id
    }

    fn fetch(&self, src_lang: &str, tgt_lang: &str, text: &str) -> Result<String, TranslateError> {
        Err(fixture_miss(&self.id, src_lang, tgt_lang, text))
    }
}

/// Token bucket limiting request starts per second. Callers block in
/// [`TokenBucket::acquire`] until a token is available.
#[derive(Debug)]
pub struct TokenBucket {
    rate: f64,
    capacity: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(requests_per_second: f64) -> Self {
        let rate = requests_per_second.max(1e-3);
        let capacity = rate.max(1.0);
        TokenBucket {
            rate,
            capacity,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().expect("bucket lock");
                let now = Instant::now();
                let refill = now.duration_since(state.1).as_secs_f64() * self.rate;
                state.0 = (state.0 + refill).min(self.capacity);
                state.1 = now;
                if state.0 >= 1.0 {
                    state.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - state.0) / self.rate)
            };
            thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

/// Settings shared by the HTTP clients. Credentials are read from the
/// named environment variables when the client is built.
#[derive(Debug, Clone, PartialEq)]
pub struct LiveClientConfig {
    pub endpoint: String,
    pub key_env: String,
    pub region_env: Option<String>,
    pub requests_per_second: f64,
    pub retry: RetryPolicy,
    pub timeout: Duration,
}

impl LiveClientConfig {
    pub fn google() -> Self {
        LiveClientConfig {
            endpoint: "https://translation.googleapis.com/language/translate/v2".into(),
            key_env: "GOOGLE_TRANSLATE_API_KEY".into(),
            region_env: None,
            requests_per_second: 5.0,
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(30),
        }
    }

    pub fn microsoft() -> Self {
        LiveClientConfig {
            endpoint: "https://api.cognitive.microsofttranslator.com".into(),
            key_env: "MICROSOFT_TRANSLATOR_KEY".into(),
            region_env: Some("MICROSOFT_TRANSLATOR_REGION".into()),
            requests_per_second: 5.0,
            retry: RetryPolicy::default(),
            timeout: Duration::from_secs(30),
        }
    }
}

/// Rate limiting, retries and error mapping shared by the vendor clients.
struct HttpTransport {
    id: EngineId,
    client: Client,
    bucket: TokenBucket,
    retry: RetryPolicy,
}

impl HttpTransport {
    fn new(id: EngineId, config: &LiveClientConfig) -> Result<Self, TranslateError> {
        let client = Client::builder()
            .timeout(config.timeout)
            .build()
            .map_err(|e| TranslateError::Unreachable {
                engine: id.clone(),
                msg: e.to_string(),
            })?;
        Ok(HttpTransport {
            bucket: TokenBucket::new(config.requests_per_second),
            retry: config.retry,
            client,
            id,
        })
    }

    fn send(&self, build: impl Fn(&Client) -> RequestBuilder) -> Result<Value, TranslateError> {
        let mut attempt = 0u32;
        loop {
            self.bucket.acquire();
            let outcome = build(&self.client).send();
            let (retriable, hint, err) = match outcome {
                Ok(resp) if resp.status().is_success() => {
                    return resp.json::<Value>().map_err(|e| TranslateError::BadResponse {
                        engine: self.id.clone(),
                        msg: e.to_string(),
                    });
                }
                Ok(resp) => {
                    let status = resp.status();
                    let hint = resp
                        .headers()
                        .get(reqwest::header::RETRY_AFTER)
                        .and_then(|v| v.to_str().ok())
                        .and_then(|v| v.parse::<u64>().ok())
                        .map(Duration::from_secs);
                    let body = resp.text().unwrap_or_default();
                    let retriable = status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error();
                    let err = if status == StatusCode::TOO_MANY_REQUESTS {
                        TranslateError::RateLimited {
                            engine: self.id.clone(),
                            attempts: attempt + 1,
                            retry_after_ms: hint.unwrap_or(self.backoff(attempt)).as_millis() as u64,
                        }
                    } else if status.is_server_error() {
                        TranslateError::Unreachable {
                            engine: self.id.clone(),
                            msg: format!("HTTP {status}: {body}"),
                        }
                    } else {
                        TranslateError::BadResponse {
                            engine: self.id.clone(),
                            msg: format!("HTTP {status}: {body}"),
                        }
                    };
                    (retriable, hint, err)
                }
                Err(e) => (
                    true,
                    None,
                    TranslateError::Unreachable {
                        engine: self.id.clone(),
                        msg: e.to_string(),
                    },
                ),
            };
            if !retriable || attempt >= self.retry.max_retries {
                return Err(err);
            }
            let delay = hint.unwrap_or_else(|| self.backoff(attempt));
            log::warn!("{err}; retrying in {delay:?}");
            thread::sleep(delay);
            attempt += 1;
        }
    }

    fn backoff(&self, attempt: u32) -> Duration {
        self.retry.base_delay * 2u32.saturating_pow(attempt)
    }

    fn bad(&self, msg: &str) -> TranslateError {
        TranslateError::BadResponse {
            engine: self.id.clone(),
            msg: msg.into(),
        }
    }
}

fn read_env(id: &EngineId, var: &str) -> Result<String, TranslateError> {
    std::env::var(var).map_err(|_| TranslateError::Unreachable {
        engine: id.clone(),
        msg: format!("credential environment variable {var} is not set"),
    })
}

/// Client for the Google Cloud Translation v2 REST API.
pub struct GoogleTranslateClient {
    http: HttpTransport,
    endpoint: String,
    key: String,
}

impl GoogleTranslateClient {
    pub fn new(id: EngineId, config: &LiveClientConfig) -> Result<Self, TranslateError> {
        let key = read_env(&id, &config.key_env)?;
        Self::with_key(id, config, key)
    }

    pub fn with_key(id: EngineId, config: &LiveClientConfig, key: String) -> Result<Self, TranslateError> {
        Ok(GoogleTranslateClient {
            http: HttpTransport::new(id, config)?,
            endpoint: config.endpoint.clone(),
            key,
        })
    }
}

impl TranslationEngine for GoogleTranslateClient {
    fn id(&self) -> &EngineId {
        &self.http.id
    }

    fn fetch(&self, src_lang: &str, tgt_lang: &str, text: &str) -> Result<String, TranslateError> {
        let body = json!({"q": text, "source": src_lang, "target": tgt_lang, "format": "text"});
        let value = self.http.send(|c| {
            c.post(&self.endpoint)
                .query(&[("key", self.key.as_str())])
                .json(&body)
        })?;
        value
            .pointer("/data/translations/0/translatedText")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| self.http.bad("missing data.translations[0].translatedText"))
    }
}

/// Client for the Microsoft Translator v3 REST API.
pub struct MicrosoftTranslatorClient {
    http: HttpTransport,
    endpoint: String,
    key: String,
    region: Option<String>,
}

impl MicrosoftTranslatorClient {
    pub fn new(id: EngineId, config: &LiveClientConfig) -> Result<Self, TranslateError> {
        let key = read_env(&id, &config.key_env)?;
        let region = config.region_env.as_ref().and_then(|v| std::env::var(v).ok());
        Self::with_key(id, config, key, region)
    }

    pub fn with_key(
        id: EngineId,
        config: &LiveClientConfig,
        key: String,
        region: Option<String>,
    ) -> Result<Self, TranslateError> {
        Ok(MicrosoftTranslatorClient {
            http: HttpTransport::new(id, config)?,
            endpoint: config.endpoint.trim_end_matches('/').to_string(),
            key,
            region,
        })
    }
}

impl TranslationEngine for MicrosoftTranslatorClient {
    fn id(&self) -> &EngineId {
        &self.http.id
    }

    fn fetch(&self, src_lang: &str, tgt_lang: &str, text: &str) -> Result<String, TranslateError> {
        let url = format!("{}/translate", self.endpoint);
        let body = json!([{ "Text": text }]);
        let value = self.http.send(|c| {
            let mut req = c
                .post(&url)
                .query(&[("api-version", "3.0"), ("from", src_lang), ("to", tgt_lang)])
                .header("Ocp-Apim-Subscription-Key", &self.key)
                .json(&body);
            if let Some(region) = &self.region {
                req = req.header("Ocp-Apim-Subscription-Region", region);
            }
            req
        })?;
        value
            .pointer("/0/translations/0/text")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| self.http.bad("missing [0].translations[0].text"))
    }
}
