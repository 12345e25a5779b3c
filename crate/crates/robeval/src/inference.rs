//! HTTP text-generation client, cached batch inference and the paraphrase provider.
//!
//! One JSON POST per prompt. Completion style sends `{model, prompt, ...}`,
//! chat style sends `{model, messages, ...}`; responses of either shape (and a
//! few common single-field shapes) are normalized to the completion string.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;
use std::time::Duration;

use log::{debug, info, warn};
use robeval_core::model::{Dataset, PerturbationGroup};
use robeval_core::perturb::{paraphrase_key, ParaphraseSource, MAX_PARAPHRASES};
use robeval_core::prompt::PromptTemplates;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::cache::{cache_key, Cache};
use crate::error::{Error, Result};
use crate::io::Prediction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiStyle {
    #[default]
    Completion,
    Chat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    /// Delay before the first retry; doubles on each further retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

fn default_max_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    500
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: default_max_retries(), backoff_ms: default_backoff_ms() }
    }
}

impl RetryPolicy {
    fn delay(&self, retry: u32) -> Duration {
        let factor = 1u64 << retry.saturating_sub(1).min(16);
        Duration::from_millis(self.backoff_ms.saturating_mul(factor))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub endpoint_url: String,
    pub model_name: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_new_tokens")]
    pub max_new_tokens: u32,
    /// Name of the environment variable holding a bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_token_env: Option<String>,
    #[serde(default = "default_parallel")]
    pub max_parallel_requests: usize,
    #[serde(default)]
    pub retry_policy: RetryPolicy,
    #[serde(default)]
    pub api_style: ApiStyle,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Chat style only. No system message is sent unless this is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_prompt: Option<String>,
}

fn default_max_new_tokens() -> u32 {
    64
}

fn default_parallel() -> usize {
    4
}

fn default_timeout_secs() -> u64 {
    60
}

impl ModelConfig {
    pub fn new(endpoint_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            endpoint_url: endpoint_url.into(),
            model_name: model_name.into(),
            temperature: 0.0,
            max_new_tokens: default_max_new_tokens(),
            auth_token_env: None,
            max_parallel_requests: default_parallel(),
            retry_policy: RetryPolicy::default(),
            api_style: ApiStyle::default(),
            timeout_secs: default_timeout_secs(),
            system_prompt: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.into()));
        if self.endpoint_url.trim().is_empty() {
            return bad("endpoint_url is empty");
        }
        if self.model_name.trim().is_empty() {
            return bad("model_name is empty");
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return bad("temperature must be a finite value >= 0");
        }
        if self.max_new_tokens == 0 {
            return bad("max_new_tokens must be positive");
        }
        if self.max_parallel_requests == 0 {
            return bad("max_parallel_requests must be positive");
        }
        Ok(())
    }

    /// Evaluation runs decode greedily.
    pub fn validate_for_evaluation(&self) -> Result<()> {
        self.validate()?;
        if self.temperature != 0.0 {
            return Err(Error::Config(format!("evaluation requires temperature 0, got {}", self.temperature)));
        }
        Ok(())
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        let mut body = json!({
            "model": self.model_name,
            "temperature": self.temperature,
            "top_p": 1.0,
            "max_tokens": self.max_new_tokens,
        });
        match self.api_style {
            ApiStyle::Completion => body["prompt"] = json!(prompt),
            ApiStyle::Chat => {
                let mut messages = Vec::new();
                if let Some(system) = &self.system_prompt {
                    messages.push(json!({"role": "system", "content": system}));
                }
                messages.push(json!({"role": "user", "content": prompt}));
                body["messages"] = Value::Array(messages);
            }
        }
        body
    }
}

/// Pull the completion text out of a response body.
pub fn extract_completion(body: &Value) -> Result<String> {
    let first = |v: &Value| -> Option<String> {
        let choice = v.get("choices")?.get(0)?;
        choice.get("text").or_else(|| choice.get("message")?.get("content")).and_then(Value::as_str).map(str::to_owned)
    };
    if let Some(text) = first(body) {
        return Ok(text);
    }
    for field in ["completion", "text", "generated_text"] {
        if let Some(text) = body.get(field).and_then(Value::as_str) {
            return Ok(text.into());
        }
    }
    if let Some(text) = body.get(0).and_then(|v| v.get("generated_text")).and_then(Value::as_str) {
        return Ok(text.into());
    }
    Err(Error::Response(format!("no completion field in {}", truncate(&body.to_string(), 200))))
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    pub completion: String,
    pub retries: u32,
}

enum Attempt {
    Done(String),
    Retry { status: Option<u16>, message: String },
    Fail(Error),
}

pub struct Client {
    config: ModelConfig,
    agent: ureq::Agent,
    token: Option<String>,
    sent: AtomicUsize,
}

impl Client {
    /// Validates the config and resolves the auth token; a named but unset
    /// variable fails here, before any request.
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let token = match &config.auth_token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| Error::MissingAuth(var.clone()))?),
            None => None,
        };
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .build()
            .into();
        Ok(Self { config, agent, token, sent: AtomicUsize::new(0) })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// HTTP requests sent so far, retries included.
    pub fn requests_sent(&self) -> usize {
        self.sent.load(Ordering::Relaxed)
    }

    pub fn generate(&self, prompt: &str) -> Result<Generation> {
        let body = self.config.request_body(prompt);
        let policy = self.config.retry_policy;
        let mut retries = 0;
        loop {
            let (status, message) = match self.attempt(&body) {
                Attempt::Done(completion) => return Ok(Generation { completion, retries }),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry { status, message } => (status, message),
            };
            if retries >= policy.max_retries {
                return Err(Error::Http { attempts: retries + 1, status, message });
            }
            retries += 1;
            debug!("transient failure ({message}); retry {retries}/{}", policy.max_retries);
            thread::sleep(policy.delay(retries));
        }
    }

    fn attempt(&self, body: &Value) -> Attempt {
        self.sent.fetch_add(1, Ordering::Relaxed);
        let mut req = self.agent.post(&self.config.endpoint_url);
        if let Some(token) = &self.token {
            req = req.header("Authorization", &format!("Bearer {token}"));
        }
        let mut resp = match req.send_json(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry { status: None, message: e.to_string() },
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry { status: Some(status), message: format!("reading body: {e}") },
        };
        if status == 429 || status >= 500 {
            return Attempt::Retry {
                status: Some(status),
                message: format!("HTTP {status}: {}", truncate(&text, 200)),
            };
        }
        if !(200..300).contains(&status) {
            return Attempt::Fail(Error::Http {
                attempts: 1,
                status: Some(status),
                message: format!("HTTP {status}: {}", truncate(&text, 200)),
            });
        }
        match serde_json::from_str::<Value>(&text) {
            Ok(v) => match extract_completion(&v) {
                Ok(c) => Attempt::Done(c),
                Err(e) => Attempt::Fail(e),
            },
            Err(e) => Attempt::Fail(Error::Response(format!("{e}: {}", truncate(&text, 200)))),
        }
    }
}

/// One-shot generation with a fresh client.
pub fn generate(prompt: &str, config: &ModelConfig) -> Result<Generation> {
    Client::new(config.clone())?.generate(prompt)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub group_id: String,
    pub variant_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct InferenceOutcome {
    /// Successful predictions, in dataset order.
    pub predictions: Vec<Prediction>,
    pub failures: Vec<Failure>,
    /// Prompts sent to the endpoint (first attempts only).
    pub requests: usize,
    pub retries: u32,
    /// Instances answered from the cache without a request.
    pub cache_hits: usize,
}

impl InferenceOutcome {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn incomplete_groups(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.failures.iter().map(|f| f.group_id.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }
}

/// Predict every instance of the dataset, consulting and extending the cache.
///
/// Identical prompts are requested once. Workers run in parallel; this thread
/// is the only cache writer. Per-instance failures are collected, not raised.
pub fn run_inference(
    dataset: &Dataset,
    client: &Client,
    templates: &PromptTemplates,
    cache: &mut Cache,
) -> Result<InferenceOutcome> {
    let model = client.config().model_name.clone();
    let mut jobs = Vec::with_capacity(dataset.instance_count());
    for instance in dataset.instances() {
        let prompt = templates.render(instance)?;
        let key = cache_key(&model, &prompt);
        jobs.push((instance, key, prompt));
    }

    let mut queued = BTreeSet::new();
    let pending: Vec<(&str, &str)> = jobs
        .iter()
        .filter(|(_, key, _)| cache.get(key).is_none() && queued.insert(key.as_str()))
        .map(|(_, key, prompt)| (key.as_str(), prompt.as_str()))
        .collect();
    let mut outcome = InferenceOutcome { requests: pending.len(), ..Default::default() };
    info!("{} instances, {} distinct prompts to request", jobs.len(), pending.len());

    let mut errors: HashMap<&str, String> = HashMap::new();
    let mut write_error = None;
    let next = AtomicUsize::new(0);
    let workers = client.config().max_parallel_requests.min(pending.len());
    thread::scope(|s| {
        let (tx, rx) = mpsc::channel();
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, pending) = (&next, &pending);
            s.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(_, prompt)) = pending.get(i) else { break };
                if tx.send((i, client.generate(prompt))).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        for (i, result) in rx {
            let (key, prompt) = pending[i];
            match result {
                Ok(g) => {
                    outcome.retries += g.retries;
                    if write_error.is_none() {
                        if let Err(e) = cache.insert(key, prompt, &g.completion) {
                            write_error = Some(e);
                        }
                    }
                }
                Err(e) => {
                    errors.insert(key, e.to_string());
                }
            }
        }
    });
    if let Some(e) = write_error {
        return Err(e);
    }

    let pending_keys: BTreeSet<&str> = pending.iter().map(|(k, _)| *k).collect();
    for (instance, key, _) in &jobs {
        match cache.get(key) {
            Some(completion) => {
                if !pending_keys.contains(key.as_str()) {
                    outcome.cache_hits += 1;
                }
                outcome.predictions.push(Prediction {
                    group_id: instance.group_id.clone(),
                    variant_id: instance.variant_id.clone(),
                    model: model.clone(),
                    completion: completion.into(),
                });
            }
            None => {
                let error = errors.get(key.as_str()).cloned().unwrap_or_else(|| "no completion".into());
                warn!("{}/{}: {error}", instance.group_id, instance.variant_id);
                outcome.failures.push(Failure {
                    group_id: instance.group_id.clone(),
                    variant_id: instance.variant_id.clone(),
                    error,
                });
            }
        }
    }
    Ok(outcome)
}

pub const PARAPHRASE_TEMPLATE: &str = "Rewrite the following text in {k} different ways without changing its meaning. Write one rewrite per line and nothing else.\nText: {text}\nRewrites:";

fn strip_list_marker(line: &str) -> &str {
    let line = line.trim();
    for bullet in ["- ", "* ", "• "] {
        if let Some(rest) = line.strip_prefix(bullet) {
            return rest.trim();
        }
    }
    let digits = line.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(rest) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return rest.trim();
        }
    }
    line
}

/// Split a provider completion into at most `k` distinct candidates, none
/// equal to `text` after normalization.
pub fn parse_paraphrases(text: &str, completion: &str, k: usize) -> Vec<String> {
    let mut seen = BTreeSet::from([paraphrase_key(text)]);
    completion
        .lines()
        .map(strip_list_marker)
        .filter(|l| !l.is_empty() && seen.insert(paraphrase_key(l)))
        .map(str::to_owned)
        .take(k)
        .collect()
}

/// Ask the model for up to `k` paraphrases of `text`.
pub fn paraphrase_provider(client: &Client, text: &str, k: usize) -> Result<Vec<String>> {
    let prompt = paraphrase_prompt(text, k)?;
    let g = client.generate(&prompt)?;
    Ok(parse_paraphrases(text, &g.completion, k))
}

fn paraphrase_prompt(text: &str, k: usize) -> Result<String> {
    if !(1..=MAX_PARAPHRASES).contains(&k) {
        return Err(Error::Config(format!("paraphrase count must be in 1..={MAX_PARAPHRASES}, got {k}")));
    }
    Ok(PARAPHRASE_TEMPLATE.replacen("{k}", &k.to_string(), 1).replacen("{text}", text, 1))
}

/// Paraphrase source backed by the provider, with an optional cache.
pub struct ProviderSource<'a> {
    pub client: &'a Client,
    pub k: usize,
    pub cache: Option<&'a mut Cache>,
}

impl ProviderSource<'_> {
    fn fetch(&mut self, text: &str) -> Result<Vec<String>> {
        let prompt = paraphrase_prompt(text, self.k)?;
        let key = cache_key(&self.client.config().model_name, &prompt);
        let cached = self.cache.as_ref().and_then(|c| c.get(&key)).map(str::to_owned);
        let completion = match cached {
            Some(c) => c,
            None => {
                let c = self.client.generate(&prompt)?.completion;
                if let Some(cache) = self.cache.as_mut() {
                    cache.insert(&key, &prompt, &c)?;
                }
                c
            }
        };
        Ok(parse_paraphrases(text, &completion, self.k))
    }
}

impl ParaphraseSource for ProviderSource<'_> {
    fn paraphrases(&mut self, group: &PerturbationGroup) -> robeval_core::Result<Option<Vec<String>>> {
        self.fetch(&group.original().input)
            .map(Some)
            .map_err(|e| robeval_core::Error::Provider { group_id: group.group_id().into(), message: e.to_string() })
    }
}
