//! Decoding, direct resize to the network input size and per-channel
//! normalization.

use image::imageops::FilterType;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::DetectorError;
use crate::nn::Tensor;

pub const INPUT_SIZE: u32 = 224;

/// Per-channel normalization constants applied to pixels scaled to [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub id: String,
    pub mean: [f32; 3],
    pub std: [f32; 3],
}

impl Normalization {
    /// The statistics that ship with ImageNet-pretrained backbones.
    pub fn imagenet() -> Self {
        Normalization { id: "imagenet".into(), mean: [0.485, 0.456, 0.406], std: [0.229, 0.224, 0.225] }
    }

    /// Constants measured on a training split; the id carries a digest of
    /// the values.
    pub fn from_stats(stats: &ChannelStats) -> Self {
        let (mean, std) = stats.mean_std();
        let mut h = Sha256::new();
        for v in mean.iter().chain(&std) {
            h.update(v.to_le_bytes());
        }
        Normalization { id: format!("train-split:{}", &hex::encode(h.finalize())[..16]), mean, std }
    }
}

/// Decoded image resized to `INPUT_SIZE`, interleaved RGB bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResizedImage {
    pub side: u32,
    pub rgb: Vec<u8>,
}

/// Decodes any supported format, converts to RGB and resizes directly to
/// `side x side` with a linear (triangle) filter. No cropping: non-square
/// inputs are stretched.
pub fn resize_bytes(bytes: &[u8], side: u32) -> Result<ResizedImage, DetectorError> {
    let img = image::load_from_memory(bytes).map_err(|e| DetectorError::UndecodableImage(e.to_string()))?;
    let rgb = img.to_rgb8();
    let resized = if rgb.dimensions() == (side, side) { rgb } else { image::imageops::resize(&rgb, side, side, FilterType::Triangle) };
    Ok(ResizedImage { side, rgb: resized.into_raw() })
}

impl ResizedImage {
    /// Normalized planar `[1, 3, side, side]` tensor.
    pub fn to_tensor(&self, norm: &Normalization) -> Tensor<f32> {
        let plane = (self.side * self.side) as usize;
        let mut data = vec![0.0f32; 3 * plane];
        for (p, px) in self.rgb.chunks_exact(3).enumerate() {
            for c in 0..3 {
                data[c * plane + p] = (px[c] as f32 / 255.0 - norm.mean[c]) / norm.std[c];
            }
        }
        Tensor::from_vec([1, 3, self.side as usize, self.side as usize], data)
    }
}

/// Network-ready image.
#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessedImage {
    /// Planar `[1, 3, 224, 224]`.
    pub pixels: Tensor<f32>,
    pub normalization_id: String,
}

pub fn preprocess(bytes: &[u8], norm: &Normalization) -> Result<PreprocessedImage, DetectorError> {
    let pixels = resize_bytes(bytes, INPUT_SIZE)?.to_tensor(norm);
    debug_assert!(pixels.data.iter().all(|v| v.is_finite()));
    Ok(PreprocessedImage { pixels, normalization_id: norm.id.clone() })
}

/// Running per-channel sums of pixels scaled to [0, 1].
#[derive(Clone, Debug, Default)]
pub struct ChannelStats {
    sum: [f64; 3],
    sum_sq: [f64; 3],
    count: u64,
}

impl ChannelStats {
    pub fn add(&mut self, img: &ResizedImage) {
        for px in img.rgb.chunks_exact(3) {
            for c in 0..3 {
                let v = px[c] as f64 / 255.0;
                self.sum[c] += v;
                self.sum_sq[c] += v * v;
            }
        }
        self.count += img.rgb.len() as u64 / 3;
    }

    /// Mean and population standard deviation; a flat channel gets std 1.
    pub fn mean_std(&self) -> ([f32; 3], [f32; 3]) {
        let n = self.count.max(1) as f64;
        let mean = std::array::from_fn(|c| self.sum[c] / n);
        let std = std::array::from_fn(|c| {
            let var = (self.sum_sq[c] / n - mean[c] * mean[c]).max(0.0);
            if var > 1e-12 { var.sqrt() as f32 } else { 1.0 }
        });
        (mean.map(|m| m as f32), std)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{DynamicImage, ImageFormat, Rgb, RgbImage};
    use std::io::Cursor;

    fn png(w: u32, h: u32, f: impl Fn(u32, u32) -> Rgb<u8>) -> Vec<u8> {
        let mut out = Vec::new();
        DynamicImage::ImageRgb8(RgbImage::from_fn(w, h, f)).write_to(&mut Cursor::new(&mut out), ImageFormat::Png).unwrap();
        out
    }

    #[test]
    fn square_and_anisotropic_inputs_become_224() {
        for (w, h) in [(512, 512), (1000, 400), (17, 300)] {
            let p = preprocess(&png(w, h, |x, y| Rgb([x as u8, y as u8, 7])), &Normalization::imagenet()).unwrap();
            assert_eq!(p.pixels.shape, [1, 3, 224, 224]);
            assert!(p.pixels.data.iter().all(|v| v.is_finite()));
            assert_eq!(p.normalization_id, "imagenet");
        }
    }

    #[test]
    fn black_image_maps_to_negative_mean_over_std() {
        let n = Normalization::imagenet();
        let p = preprocess(&png(64, 32, |_, _| Rgb([0, 0, 0])), &n).unwrap();
        for c in 0..3 {
            let expected = (0.0 - n.mean[c]) / n.std[c];
            assert!(p.pixels.data[c * 224 * 224..(c + 1) * 224 * 224].iter().all(|v| *v == expected));
        }
    }

    #[test]
    fn undecodable_bytes_error() {
        assert!(matches!(preprocess(b"nope", &Normalization::imagenet()), Err(DetectorError::UndecodableImage(_))));
    }

    #[test]
    fn channel_stats_match_direct_computation() {
        let img = resize_bytes(&png(30, 30, |x, y| Rgb([(x * 8) as u8, (y * 3) as u8, 200])), 16).unwrap();
        let mut s = ChannelStats::default();
        s.add(&img);
        let (mean, std) = s.mean_std();
        let reds: Vec<f64> = img.rgb.chunks(3).map(|p| p[0] as f64 / 255.0).collect();
        let m = reds.iter().sum::<f64>() / reds.len() as f64;
        let sd = (reds.iter().map(|v| (v - m).powi(2)).sum::<f64>() / reds.len() as f64).sqrt();
        assert!((mean[0] as f64 - m).abs() < 1e-6 && (std[0] as f64 - sd).abs() < 1e-5);
        assert_eq!(std[2], 1.0);
        let norm = Normalization::from_stats(&s);
        assert!(norm.id.starts_with("train-split:"));
    }
}
