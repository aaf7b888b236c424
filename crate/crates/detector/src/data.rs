//! Labeled image sets for training. Small sets are decoded once and kept
//! as resized RGB bytes; larger ones are re-read from the store per batch.

use std::path::PathBuf;

use mapforensics_core::corpus::{DatasetManifest, ImageStore, Label, Split};

use crate::error::DetectorError;
use crate::nn::Tensor;
use crate::preprocess::{resize_bytes, ChannelStats, Normalization, ResizedImage, INPUT_SIZE};

/// Default ceiling on cached resized pixels per set.
pub const DEFAULT_CACHE_BYTES: usize = 1 << 30;

#[derive(Clone, Debug)]
enum Source {
    Cached(ResizedImage),
    File(PathBuf),
}

#[derive(Clone, Debug)]
pub struct LabeledImages {
    items: Vec<(Source, Label)>,
    side: u32,
}

impl LabeledImages {
    pub fn from_resized(items: Vec<(ResizedImage, Label)>) -> Self {
        let side = items.first().map_or(INPUT_SIZE, |(r, _)| r.side);
        assert!(items.iter().all(|(r, _)| r.side == side), "mixed image sizes");
        LabeledImages { items: items.into_iter().map(|(r, l)| (Source::Cached(r), l)).collect(), side }
    }

    /// Decodes every record of `split`, caching while the total stays under
    /// `cache_bytes`.
    pub fn from_manifest(manifest: &DatasetManifest, split: Split, store: &ImageStore, cache_bytes: usize) -> Result<Self, DetectorError> {
        let records: Vec<_> = manifest.split(split).collect();
        if records.is_empty() {
            return Err(DetectorError::EmptySplit(split));
        }
        let per_image = (INPUT_SIZE * INPUT_SIZE * 3) as usize;
        let cache = records.len() * per_image <= cache_bytes;
        let mut items = Vec::with_capacity(records.len());
        for r in records {
            let path = store.absolute(&r.image_path);
            let source = if cache {
                Source::Cached(resize_bytes(&std::fs::read(&path)?, INPUT_SIZE)?)
            } else {
                Source::File(path)
            };
            items.push((source, r.label));
        }
        Ok(LabeledImages { items, side: INPUT_SIZE })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn side(&self) -> u32 {
        self.side
    }

    pub fn label(&self, i: usize) -> Label {
        self.items[i].1
    }

    pub fn resized(&self, i: usize) -> Result<ResizedImage, DetectorError> {
        match &self.items[i].0 {
            Source::Cached(r) => Ok(r.clone()),
            Source::File(p) => resize_bytes(&std::fs::read(p)?, self.side),
        }
    }

    pub fn tensor(&self, i: usize, norm: &Normalization) -> Result<Tensor<f32>, DetectorError> {
        match &self.items[i].0 {
            Source::Cached(r) => Ok(r.to_tensor(norm)),
            Source::File(p) => Ok(resize_bytes(&std::fs::read(p)?, self.side)?.to_tensor(norm)),
        }
    }

    pub fn channel_stats(&self) -> Result<ChannelStats, DetectorError> {
        let mut stats = ChannelStats::default();
        for i in 0..self.len() {
            stats.add(&self.resized(i)?);
        }
        Ok(stats)
    }

    pub fn class_counts(&self) -> [usize; 2] {
        let mut counts = [0; 2];
        for (_, l) in &self.items {
            counts[l.class_index()] += 1;
        }
        counts
    }
}
