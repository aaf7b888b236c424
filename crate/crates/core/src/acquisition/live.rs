//! Thin HTTP adapters for live generation and search services.
//!
//! Generation speaks the common images-API shape:
//! `POST {endpoint}` with `{"model", "prompt", "n": 1, "size", "response_format": "b64_json"}`
//! and a response `{"data": [{"b64_json": ...} | {"url": ...}]}`.
//!
//! Search expects a JSON endpoint `GET {endpoint}?q=<query>&num=<k>` that
//! returns `{"results": [{"url": ...}, ...]}` in rank order; the images are
//! then fetched one by one.

use std::time::Duration;

use base64::Engine as _;
use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;
use serde::Deserialize;

use super::{AcquiredImage, AcquisitionError, GenerationBackend, GenerationRequest, Origin, RetryPolicy, SearchBackend, SearchOutcome, SearchRequest};

pub const DEFAULT_API_KEY_VAR: &str = "MAPFORENSICS_API_KEY";

fn http_client(timeout: Duration) -> Result<Client, AcquisitionError> {
    Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| AcquisitionError::BackendUnavailable(e.to_string()))
}

fn api_key_from_env(var: &str) -> Result<String, AcquisitionError> {
    std::env::var(var)
        .ok()
        .filter(|k| !k.is_empty())
        .ok_or_else(|| AcquisitionError::BackendUnavailable(format!("credential variable {var} is not set")))
}

fn unavailable(e: reqwest::Error) -> AcquisitionError {
    AcquisitionError::BackendUnavailable(e.to_string())
}

/// Maps non-success statuses onto the acquisition error classes.
fn check_status(resp: Response) -> Result<Response, AcquisitionError> {
    let status = resp.status();
    if status.is_success() {
        return Ok(resp);
    }
    if status == StatusCode::TOO_MANY_REQUESTS {
        let retry_after = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        return Err(AcquisitionError::RateLimited { attempts: 1, retry_after });
    }
    let body = resp.text().unwrap_or_default();
    let snippet: String = body.chars().take(200).collect();
    if status == StatusCode::BAD_REQUEST && (body.contains("content_policy") || body.contains("safety")) {
        return Err(AcquisitionError::ContentRejected(snippet));
    }
    Err(AcquisitionError::BackendUnavailable(format!("HTTP {status}: {snippet}")))
}

#[derive(Deserialize)]
struct ImagesResponse {
    data: Vec<ImageDatum>,
}

#[derive(Deserialize)]
struct ImageDatum {
    b64_json: Option<String>,
    url: Option<String>,
}

#[derive(Clone, Debug)]
pub struct LiveGenerationClient {
    endpoint: String,
    api_key: String,
    size: String,
    retry: RetryPolicy,
    http: Client,
}

impl LiveGenerationClient {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>) -> Result<Self, AcquisitionError> {
        Ok(LiveGenerationClient {
            endpoint: endpoint.into(),
            api_key: api_key.into(),
            size: "512x512".into(),
            retry: RetryPolicy::default(),
            http: http_client(Duration::from_secs(120))?,
        })
    }

    /// Reads the bearer token from `key_var`.
    pub fn from_env(endpoint: impl Into<String>, key_var: &str) -> Result<Self, AcquisitionError> {
        Self::new(endpoint, api_key_from_env(key_var)?)
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_size(mut self, size: impl Into<String>) -> Self {
        self.size = size.into();
        self
    }

    fn request_once(&self, request: &GenerationRequest) -> Result<Vec<u8>, AcquisitionError> {
        let body = serde_json::json!({
            "model": request.model_id,
            "prompt": request.prompt,
            "n": 1,
            "size": self.size,
            "response_format": "b64_json",
        });
        let resp = self
            .http
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(unavailable)?;
        let parsed: ImagesResponse = check_status(resp)?.json().map_err(unavailable)?;
        let datum = parsed
            .data
            .into_iter()
            .next()
            .ok_or_else(|| AcquisitionError::BackendUnavailable("response carried no image".into()))?;
        match (datum.b64_json, datum.url) {
            (Some(b64), _) => base64::engine::general_purpose::STANDARD
                .decode(b64.trim())
                .map_err(|e| AcquisitionError::UndecodableImage(e.to_string())),
            (None, Some(url)) => {
                let resp = self.http.get(url).send().map_err(unavailable)?;
                Ok(check_status(resp)?.bytes().map_err(unavailable)?.to_vec())
            }
            (None, None) => Err(AcquisitionError::BackendUnavailable("response carried no image".into())),
        }
    }
}

impl GenerationBackend for LiveGenerationClient {
    fn generate(&self, request: &GenerationRequest) -> Result<AcquiredImage, AcquisitionError> {
        let bytes = self.retry.run(|| self.request_once(request))?;
        AcquiredImage::new(bytes, Origin::Generated, request.model_id.clone(), None)
    }
}

#[derive(Deserialize)]
struct SearchResponse {
    results: Vec<SearchHit>,
}

#[derive(Deserialize)]
struct SearchHit {
    url: String,
}

#[derive(Clone, Debug)]
pub struct LiveSearchClient {
    endpoint: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    http: Client,
}

impl LiveSearchClient {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Result<Self, AcquisitionError> {
        Ok(LiveSearchClient {
            endpoint: endpoint.into(),
            api_key,
            retry: RetryPolicy::default(),
            http: http_client(Duration::from_secs(60))?,
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    fn hits(&self, request: &SearchRequest) -> Result<Vec<SearchHit>, AcquisitionError> {
        let url = reqwest::Url::parse_with_params(&self.endpoint, [("q", request.query.as_str()), ("num", &request.k.to_string())])
            .map_err(|e| AcquisitionError::InvalidRequest(format!("bad search endpoint: {e}")))?;
        let mut req = self.http.get(url);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(unavailable)?;
        let parsed: SearchResponse = check_status(resp)?.json().map_err(unavailable)?;
        Ok(parsed.results)
    }
}

impl SearchBackend for LiveSearchClient {
    fn search(&self, request: &SearchRequest) -> Result<SearchOutcome, AcquisitionError> {
        let hits = self.retry.run(|| self.hits(request))?;
        let mut images = Vec::new();
        let mut skipped = 0usize;
        for hit in hits {
            if images.len() >= request.k as usize {
                break;
            }
            let fetched = self.retry.run(|| {
                let resp = self.http.get(&hit.url).send().map_err(unavailable)?;
                Ok(check_status(resp)?.bytes().map_err(unavailable)?.to_vec())
            });
            let rank = images.len() as u32 + 1;
            match fetched.and_then(|b| AcquiredImage::new(b, Origin::Searched, hit.url.clone(), Some(rank))) {
                Ok(img) => images.push(img),
                Err(e @ AcquisitionError::RateLimited { .. }) => return Err(e),
                Err(e) => {
                    log::warn!("skipping result {}: {e}", hit.url);
                    skipped += 1;
                }
            }
        }
        let warning = match (images.is_empty(), skipped) {
            (true, _) => Some(format!("no usable results for {:?}", request.query)),
            (false, 0) => None,
            (false, n) => Some(format!("skipped {n} undecodable or unreachable result(s)")),
        };
        Ok(SearchOutcome { images, warning })
    }
}
