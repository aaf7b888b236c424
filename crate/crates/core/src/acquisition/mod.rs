//! Image acquisition: a text-to-image generation client for synthetic maps
//! and an image-search client for human-designed maps.
//!
//! Both clients sit behind a trait with a live HTTP adapter and an offline
//! fixture backend. Nothing here writes to a corpus; callers hand the
//! returned [`AcquiredImage`]s to the corpus module.

pub mod fixture;
pub mod live;

use std::io::Cursor;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt_grammar::Region;

pub use fixture::{FixtureGenerator, FixtureSearch};
pub use live::{LiveGenerationClient, LiveSearchClient};

pub const MAX_SEARCH_RESULTS: u32 = 200;

#[derive(Debug, Error)]
pub enum AcquisitionError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32, retry_after: Option<Duration> },
    #[error("content rejected by backend: {0}")]
    ContentRejected(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("payload is not a decodable raster image: {0}")]
    UndecodableImage(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub model_id: String,
    /// Zero-based index among requests sharing the same prompt. Live models
    /// resample on every call; fixture backends use it to vary their output.
    #[serde(default)]
    pub sample: u32,
    pub request_time: DateTime<Utc>,
}

impl GenerationRequest {
    pub fn new(prompt: impl Into<String>, model_id: impl Into<String>) -> Result<Self, AcquisitionError> {
        let (prompt, model_id) = (prompt.into(), model_id.into());
        if prompt.trim().is_empty() {
            return Err(AcquisitionError::InvalidRequest("empty prompt".into()));
        }
        if model_id.trim().is_empty() {
            return Err(AcquisitionError::InvalidRequest("empty model id".into()));
        }
        Ok(GenerationRequest { prompt, model_id, sample: 0, request_time: Utc::now() })
    }

    pub fn with_sample(mut self, sample: u32) -> Self {
        self.sample = sample;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRequest {
    pub query: String,
    pub k: u32,
    pub request_time: DateTime<Utc>,
}

impl SearchRequest {
    pub fn new(query: impl Into<String>, k: u32) -> Result<Self, AcquisitionError> {
        let query = query.into();
        if !(1..=MAX_SEARCH_RESULTS).contains(&k) {
            return Err(AcquisitionError::InvalidRequest(format!("k={k} outside 1..={MAX_SEARCH_RESULTS}")));
        }
        if query.trim().is_empty() {
            return Err(AcquisitionError::InvalidRequest("empty query".into()));
        }
        Ok(SearchRequest { query, k, request_time: Utc::now() })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Generated,
    Searched,
    Fixture,
}

#[derive(Clone, PartialEq, Eq)]
pub struct AcquiredImage {
    pub bytes: Vec<u8>,
    pub origin: Origin,
    /// Model id for generated images, result URL for searched ones, fixture
    /// path otherwise.
    pub source_detail: String,
    /// 1-based search rank.
    pub rank: Option<u32>,
}

impl std::fmt::Debug for AcquiredImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AcquiredImage")
            .field("bytes", &format_args!("{} bytes", self.bytes.len()))
            .field("origin", &self.origin)
            .field("source_detail", &self.source_detail)
            .field("rank", &self.rank)
            .finish()
    }
}

impl AcquiredImage {
    /// Validates the payload header and the origin/rank pairing.
    pub fn new(bytes: Vec<u8>, origin: Origin, source_detail: impl Into<String>, rank: Option<u32>) -> Result<Self, AcquisitionError> {
        if origin == Origin::Searched && rank.is_none() {
            return Err(AcquisitionError::InvalidRequest("searched image without rank".into()));
        }
        image_dimensions(&bytes)?;
        Ok(AcquiredImage { bytes, origin, source_detail: source_detail.into(), rank })
    }
}

/// Reads the raster header without decoding pixels.
pub fn image_dimensions(bytes: &[u8]) -> Result<(u32, u32), AcquisitionError> {
    image::ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| AcquisitionError::UndecodableImage(e.to_string()))?
        .into_dimensions()
        .map_err(|e| AcquisitionError::UndecodableImage(e.to_string()))
}

#[derive(Clone, Debug, Default)]
pub struct SearchOutcome {
    pub images: Vec<AcquiredImage>,
    pub warning: Option<String>,
}

pub trait GenerationBackend: Send + Sync {
    fn generate(&self, request: &GenerationRequest) -> Result<AcquiredImage, AcquisitionError>;
}

pub trait SearchBackend: Send + Sync {
    fn search(&self, request: &SearchRequest) -> Result<SearchOutcome, AcquisitionError>;
}

pub fn generate_image(request: &GenerationRequest, backend: &dyn GenerationBackend) -> Result<AcquiredImage, AcquisitionError> {
    backend.generate(request)
}

/// Searches and enforces the result contract: at most `k` images, ranks
/// `1..=n` in order.
pub fn search_images(request: &SearchRequest, backend: &dyn SearchBackend) -> Result<SearchOutcome, AcquisitionError> {
    let mut outcome = backend.search(request)?;
    outcome.images.truncate(request.k as usize);
    for (i, img) in outcome.images.iter_mut().enumerate() {
        img.rank = Some(i as u32 + 1);
    }
    if outcome.images.is_empty() && outcome.warning.is_none() {
        outcome.warning = Some(format!("no results for {:?}", request.query));
    }
    Ok(outcome)
}

pub fn build_search_query(region: &Region) -> String {
    format!("{} maps", region.name)
}

/// Exponential backoff applied to rate-limit responses only.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 3, base_delay: Duration::from_secs(1) }
    }
}

impl RetryPolicy {
    pub fn run<T>(&self, mut op: impl FnMut() -> Result<T, AcquisitionError>) -> Result<T, AcquisitionError> {
        let mut attempt = 0;
        loop {
            match op() {
                Err(AcquisitionError::RateLimited { retry_after, .. }) => {
                    if attempt >= self.max_retries {
                        return Err(AcquisitionError::RateLimited { attempts: attempt + 1, retry_after });
                    }
                    let backoff = self.base_delay * 2u32.pow(attempt);
                    let delay = retry_after.map_or(backoff, |r| r.max(backoff));
                    log::warn!("rate limited, retrying in {delay:?} (attempt {})", attempt + 1);
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt_grammar::RegionLevel;
    use std::cell::Cell;

    #[test]
    fn search_queries() {
        assert_eq!(build_search_query(&Region::new("United States", RegionLevel::Country)), "United States maps");
        assert_eq!(build_search_query(&Region::new("Asia", RegionLevel::Continent)), "Asia maps");
        assert_eq!(build_search_query(&Region::new("Wisconsin", RegionLevel::State)), "Wisconsin maps");
    }

    #[test]
    fn request_validation() {
        assert!(GenerationRequest::new("", "m").is_err());
        assert!(GenerationRequest::new("A heat map of Asia", " ").is_err());
        assert!(SearchRequest::new("Asia maps", 0).is_err());
        assert!(SearchRequest::new("Asia maps", 201).is_err());
        assert!(SearchRequest::new("Asia maps", 200).is_ok());
    }

    #[test]
    fn searched_images_need_rank_and_valid_bytes() {
        let png = fixture::draw_search_placeholder("Asia maps", 1);
        assert!(AcquiredImage::new(png.clone(), Origin::Searched, "u", None).is_err());
        assert!(AcquiredImage::new(png, Origin::Searched, "u", Some(1)).is_ok());
        assert!(matches!(
            AcquiredImage::new(b"not an image".to_vec(), Origin::Generated, "m", None),
            Err(AcquisitionError::UndecodableImage(_))
        ));
    }

    #[test]
    fn retry_gives_up_after_three_retries() {
        let calls = Cell::new(0);
        let policy = RetryPolicy { max_retries: 3, base_delay: Duration::from_millis(1) };
        let res: Result<(), _> = policy.run(|| {
            calls.set(calls.get() + 1);
            Err(AcquisitionError::RateLimited { attempts: 1, retry_after: None })
        });
        assert_eq!(calls.get(), 4);
        assert!(matches!(res, Err(AcquisitionError::RateLimited { attempts: 4, .. })));
    }

    #[test]
    fn retry_does_not_retry_other_failures() {
        let calls = Cell::new(0);
        let res: Result<(), _> = RetryPolicy::default().run(|| {
            calls.set(calls.get() + 1);
            Err(AcquisitionError::ContentRejected("no".into()))
        });
        assert_eq!(calls.get(), 1);
        assert!(matches!(res, Err(AcquisitionError::ContentRejected(_))));

        let calls = Cell::new(0);
        let policy = RetryPolicy { max_retries: 3, base_delay: Duration::from_millis(1) };
        let ok = policy.run(|| {
            calls.set(calls.get() + 1);
            if calls.get() < 3 {
                Err(AcquisitionError::RateLimited { attempts: 1, retry_after: None })
            } else {
                Ok(7)
            }
        });
        assert_eq!(ok.unwrap(), 7);
    }
}
