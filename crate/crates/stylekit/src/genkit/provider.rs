//! LLM and embedding provider clients with an append-only response cache.
//!
//! Wire shape follows the common chat/embeddings JSON convention: chat takes
//! `{model, messages, temperature, top_p}` and returns
//! `choices[0].message.content`; embeddings take `{model, input: [...]}` and
//! return `data[i].embedding`. A warm cache short-circuits the network
//! entirely. When `base_url` is not an http(s) URL, `embed_texts` reads it
//! as a local JSONL embedding file instead.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::PathBuf;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::data::{Embedding, EmbeddingSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RetryConfig {
    pub max_attempts: u32,
    pub backoff_ms: u64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        RetryConfig {
            max_attempts: 3,
            backoff_ms: 100,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub base_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_concurrent: usize,
    pub embed_batch_size: usize,
    pub retry: RetryConfig,
    pub cache_path: Option<PathBuf>,
    /// Name of the environment variable holding the API credential.
    pub api_key_env: Option<String>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            base_url: String::new(),
            model_name: "gpt-4".into(),
            temperature: 1.0,
            top_p: 1.0,
            max_concurrent: 4,
            embed_batch_size: 64,
            retry: RetryConfig::default(),
            cache_path: None,
            api_key_env: None,
        }
    }
}

impl ProviderConfig {
    fn validate(&self) -> Result<()> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(Error::InvalidConfig("temperature must be in [0, 2]".into()));
        }
        if !(0.0..=1.0).contains(&self.top_p) {
            return Err(Error::InvalidConfig("top_p must be in [0, 1]".into()));
        }
        if self.max_concurrent == 0 || self.embed_batch_size == 0 {
            return Err(Error::InvalidConfig(
                "max_concurrent and embed_batch_size must be >= 1".into(),
            ));
        }
        Ok(())
    }

    fn is_http(&self) -> bool {
        self.base_url.starts_with("http://") || self.base_url.starts_with("https://")
    }
}

/// Per-call sampling parameters; stored in the cache key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    pub temperature: f64,
    pub top_p: f64,
}

/// Pair generation samples broadly (1.0, 1.0); topic extraction is
/// effectively greedy (1.0, 0.0).
pub const PAIR_GENERATION_PARAMS: SamplingParams = SamplingParams {
    temperature: 1.0,
    top_p: 1.0,
};
pub const TOPIC_EXTRACTION_PARAMS: SamplingParams = SamplingParams {
    temperature: 1.0,
    top_p: 0.0,
};

#[derive(Debug, Default, Clone, Serialize)]
pub struct Telemetry {
    pub requests: u64,
    pub retries: u64,
    pub cache_hits: u64,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    hash: String,
    request: serde_json::Value,
    response: String,
    timestamp: u64,
}

struct Cache {
    path: Option<PathBuf>,
    entries: HashMap<String, String>,
}

impl Cache {
    fn open(path: Option<PathBuf>) -> Result<Self> {
        let mut entries = HashMap::new();
        if let Some(p) = &path {
            if p.exists() {
                let file =
                    std::fs::File::open(p).map_err(|e| Error::io(p.display().to_string(), e))?;
                for (i, line) in BufReader::new(file).lines().enumerate() {
                    let line = line.map_err(|e| Error::io(p.display().to_string(), e))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let entry: CacheEntry =
                        serde_json::from_str(&line).map_err(|e| Error::Parse {
                            path: p.display().to_string(),
                            line: i + 1,
                            message: e.to_string(),
                        })?;
                    entries.insert(entry.hash, entry.response);
                }
            }
        }
        Ok(Cache { path, entries })
    }

    fn get(&self, hash: &str) -> Option<&String> {
        self.entries.get(hash)
    }

    fn put(&mut self, hash: String, request: serde_json::Value, response: String) -> Result<()> {
        if let Some(p) = &self.path {
            let entry = CacheEntry {
                hash: hash.clone(),
                request,
                response: response.clone(),
                timestamp: std::time::SystemTime::now()
                    .duration_since(std::time::UNIX_EPOCH)
                    .map(|d| d.as_secs())
                    .unwrap_or(0),
            };
            let mut line =
                serde_json::to_vec(&entry).map_err(|e| Error::Other(e.to_string()))?;
            line.push(b'\n');
            let mut file = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .map_err(|e| Error::io(p.display().to_string(), e))?;
            file.write_all(&line)
                .map_err(|e| Error::io(p.display().to_string(), e))?;
        }
        self.entries.insert(hash, response);
        Ok(())
    }
}

fn content_hash(request: &serde_json::Value) -> String {
    let mut hasher = Sha256::new();
    hasher.update(request.to_string().as_bytes());
    format!("{:x}", hasher.finalize())
}

pub struct ProviderClient {
    config: ProviderConfig,
    http: reqwest::blocking::Client,
    cache: Mutex<Cache>,
    telemetry: Mutex<Telemetry>,
}

impl ProviderClient {
    pub fn new(config: ProviderConfig) -> Result<Self> {
        config.validate()?;
        let cache = Cache::open(config.cache_path.clone())?;
        Ok(ProviderClient {
            config,
            http: reqwest::blocking::Client::new(),
            cache: Mutex::new(cache),
            telemetry: Mutex::new(Telemetry::default()),
        })
    }

    pub fn telemetry(&self) -> Telemetry {
        self.telemetry.lock().unwrap().clone()
    }

    fn post_with_retries(&self, url: &str, body: &serde_json::Value) -> Result<serde_json::Value> {
        let mut last_error = String::new();
        for attempt in 1..=self.config.retry.max_attempts {
            if attempt > 1 {
                std::thread::sleep(std::time::Duration::from_millis(
                    self.config.retry.backoff_ms * (attempt as u64 - 1),
                ));
                self.telemetry.lock().unwrap().retries += 1;
            }
            self.telemetry.lock().unwrap().requests += 1;
            let mut req = self.http.post(url).json(body);
            if let Some(env_name) = &self.config.api_key_env {
                if let Ok(key) = std::env::var(env_name) {
                    req = req.bearer_auth(key);
                }
            }
            match req.send() {
                Ok(resp) if resp.status().is_success() => {
                    return resp
                        .json::<serde_json::Value>()
                        .map_err(|e| Error::Transport {
                            attempts: attempt,
                            message: format!("malformed response body: {e}"),
                        });
                }
                Ok(resp) => {
                    last_error = format!("HTTP {}", resp.status());
                }
                Err(e) => {
                    last_error = e.to_string();
                }
            }
        }
        Err(Error::Transport {
            attempts: self.config.retry.max_attempts,
            message: last_error,
        })
    }

    /// One chat completion, cached by (model, prompt, params) content hash.
    pub fn llm_generate(&self, prompt: &str, params: SamplingParams) -> Result<String> {
        let request = json!({
            "kind": "chat",
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "top_p": params.top_p,
        });
        let hash = content_hash(&request);
        if let Some(hit) = self.cache.lock().unwrap().get(&hash).cloned() {
            self.telemetry.lock().unwrap().cache_hits += 1;
            return Ok(hit);
        }
        let wire = json!({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "top_p": params.top_p,
        });
        let response = self.post_with_retries(&self.config.base_url, &wire)?;
        let text = response["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| Error::Transport {
                attempts: 1,
                message: "response missing choices[0].message.content".into(),
            })?
            .to_string();
        self.cache.lock().unwrap().put(hash, request, text.clone())?;
        Ok(text)
    }

    /// Embeds texts in batches; duplicate keys are rejected up front.
    ///
    /// In offline mode (non-http `base_url`) vectors come from the JSONL
    /// embedding file at that path instead of the network.
    pub fn embed_texts(&self, keys_and_texts: &[(String, String)]) -> Result<EmbeddingSet> {
        let mut seen = HashSet::new();
        for (key, text) in keys_and_texts {
            if text.is_empty() {
                return Err(Error::InvalidConfig(format!("empty text for key `{key}`")));
            }
            if !seen.insert(key.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate text key `{key}`")));
            }
        }
        if !self.config.is_http() {
            let records: Vec<Embedding> = crate::data::read_jsonl(&self.config.base_url)?;
            let all = EmbeddingSet::from_records(records)?;
            let mut out = EmbeddingSet::new();
            for (key, _) in keys_and_texts {
                out.insert(key.clone(), all.get(key)?.to_vec())?;
            }
            return Ok(out);
        }

        let mut out = EmbeddingSet::new();
        let mut pending: Vec<&(String, String)> = Vec::new();
        for item in keys_and_texts {
            let request = self.embed_cache_key(&item.1);
            let hash = content_hash(&request);
            if let Some(hit) = self.cache.lock().unwrap().get(&hash).cloned() {
                self.telemetry.lock().unwrap().cache_hits += 1;
                let values: Vec<f64> =
                    serde_json::from_str(&hit).map_err(|e| Error::Other(e.to_string()))?;
                out.insert(item.0.clone(), values)?;
            } else {
                pending.push(item);
            }
        }

        let batches: Vec<&[&(String, String)]> =
            pending.chunks(self.config.embed_batch_size).collect();
        // Bounded fan-out: at most max_concurrent batches in flight.
        let results: Vec<Result<Vec<(String, String, Vec<f64>)>>> =
            std::thread::scope(|scope| {
                let mut all = Vec::with_capacity(batches.len());
                for window in batches.chunks(self.config.max_concurrent) {
                    let handles: Vec<_> = window
                        .iter()
                        .map(|batch| scope.spawn(|| self.embed_batch(batch)))
                        .collect();
                    for handle in handles {
                        all.push(handle.join().expect("embed worker panicked"));
                    }
                }
                all
            });
        for result in results {
            for (key, text, values) in result? {
                let request = self.embed_cache_key(&text);
                let hash = content_hash(&request);
                let payload = serde_json::to_string(&values)
                    .map_err(|e| Error::Other(e.to_string()))?;
                self.cache.lock().unwrap().put(hash, request, payload)?;
                out.insert(key, values)?;
            }
        }
        Ok(out)
    }

    fn embed_cache_key(&self, text: &str) -> serde_json::Value {
        json!({
            "kind": "embed",
            "model": self.config.model_name,
            "input": text,
        })
    }

    fn embed_batch(
        &self,
        batch: &[&(String, String)],
    ) -> Result<Vec<(String, String, Vec<f64>)>> {
        let texts: Vec<&str> = batch.iter().map(|(_, t)| t.as_str()).collect();
        let wire = json!({
            "model": self.config.model_name,
            "input": texts,
        });
        let response = self.post_with_retries(&self.config.base_url, &wire)?;
        let data = response["data"].as_array().ok_or_else(|| Error::Transport {
            attempts: 1,
            message: "response missing data array".into(),
        })?;
        if data.len() != batch.len() {
            return Err(Error::Transport {
                attempts: 1,
                message: format!("expected {} embeddings, got {}", batch.len(), data.len()),
            });
        }
        let mut dim: Option<usize> = None;
        let mut out = Vec::with_capacity(batch.len());
        for ((key, text), item) in batch.iter().zip(data) {
            let values: Vec<f64> = item["embedding"]
                .as_array()
                .ok_or_else(|| Error::Transport {
                    attempts: 1,
                    message: "embedding entry is not an array".into(),
                })?
                .iter()
                .map(|v| v.as_f64().unwrap_or(f64::NAN))
                .collect();
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(Error::DimMismatch {
                        expected: d,
                        got: values.len(),
                    })
                }
                _ => {}
            }
            out.push((key.clone(), text.clone(), values));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let mut config = ProviderConfig {
            base_url: "http://localhost:1".into(),
            ..ProviderConfig::default()
        };
        config.temperature = 3.0;
        assert!(ProviderClient::new(config.clone()).is_err());
        config.temperature = 1.0;
        config.top_p = 1.5;
        assert!(ProviderClient::new(config.clone()).is_err());
        config.top_p = 1.0;
        assert!(ProviderClient::new(config).is_ok());
    }

    #[test]
    fn offline_embeddings_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.jsonl");
        let records = vec![
            Embedding { key: "k1".into(), values: vec![1.0, 2.0] },
            Embedding { key: "k2".into(), values: vec![3.0, 4.0] },
        ];
        crate::data::write_jsonl(&path, &records).unwrap();
        let config = ProviderConfig {
            base_url: path.display().to_string(),
            ..ProviderConfig::default()
        };
        let client = ProviderClient::new(config).unwrap();
        let out = client
            .embed_texts(&[("k1".into(), "text one".into()), ("k2".into(), "text two".into())])
            .unwrap();
        assert_eq!(out.get("k1").unwrap(), &[1.0, 2.0]);
        assert_eq!(out.get("k2").unwrap(), &[3.0, 4.0]);
        assert_eq!(client.telemetry().requests, 0);
    }

    #[test]
    fn duplicate_keys_rejected_before_any_request() {
        let config = ProviderConfig {
            base_url: "http://localhost:1".into(),
            ..ProviderConfig::default()
        };
        let client = ProviderClient::new(config).unwrap();
        let err = client
            .embed_texts(&[("k".into(), "a".into()), ("k".into(), "b".into())])
            .unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)));
        assert_eq!(client.telemetry().requests, 0);
    }

    #[test]
    fn cache_round_trip_without_network() {
        // Pre-seed the cache file with the hash llm_generate will compute,
        // then check the call returns identical bytes with zero requests.
        let dir = tempfile::tempdir().unwrap();
        let cache_path = dir.path().join("cache.jsonl");
        let config = ProviderConfig {
            base_url: "http://localhost:1".into(),
            cache_path: Some(cache_path.clone()),
            ..ProviderConfig::default()
        };
        let request = json!({
            "kind": "chat",
            "model": config.model_name,
            "messages": [{"role": "user", "content": "hello"}],
            "temperature": 0.5,
            "top_p": 1.0,
        });
        let entry = CacheEntry {
            hash: content_hash(&request),
            request,
            response: "cached reply".into(),
            timestamp: 0,
        };
        std::fs::write(&cache_path, format!("{}\n", serde_json::to_string(&entry).unwrap()))
            .unwrap();
        let client = ProviderClient::new(config).unwrap();
        let params = SamplingParams { temperature: 0.5, top_p: 1.0 };
        let text = client.llm_generate("hello", params).unwrap();
        assert_eq!(text, "cached reply");
        let telemetry = client.telemetry();
        assert_eq!(telemetry.requests, 0);
        assert_eq!(telemetry.cache_hits, 1);
    }

    #[test]
    fn default_sampling_params() {
        assert_eq!(PAIR_GENERATION_PARAMS.temperature, 1.0);
        assert_eq!(PAIR_GENERATION_PARAMS.top_p, 1.0);
        assert_eq!(TOPIC_EXTRACTION_PARAMS.temperature, 1.0);
        assert_eq!(TOPIC_EXTRACTION_PARAMS.top_p, 0.0);
    }
}
