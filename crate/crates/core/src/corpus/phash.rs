//! 64-bit DCT perceptual hash.
//!
//! Procedure:
//! 1. convert to 8-bit luma (`image`'s Rec. 601 weights);
//! 2. resize to 32x32 with the triangle (bilinear) filter;
//! 3. take the unnormalized 2-D DCT-II,
//!    `X[u][v] = sum_y sum_x p[y][x] cos(pi(2y+1)u/64) cos(pi(2x+1)v/64)`;
//! 4. keep the low-frequency block `u, v < 8` (DC included);
//! 5. threshold at the block median (mean of the 32nd and 33rd smallest);
//! 6. bit `8u + v` is set when `X[u][v] > median`.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use image::imageops::FilterType;
use image::DynamicImage;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub const RESIZED_SIDE: usize = 32;
pub const BLOCK_SIDE: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PerceptualHash(pub u64);

impl PerceptualHash {
    pub fn distance(self, other: PerceptualHash) -> u32 {
        (self.0 ^ other.0).count_ones()
    }
}

impl fmt::Display for PerceptualHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for PerceptualHash {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        u64::from_str_radix(s, 16).map(PerceptualHash)
    }
}

impl Serialize for PerceptualHash {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PerceptualHash {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn cosine_table() -> &'static [[f64; RESIZED_SIDE]; BLOCK_SIDE] {
    static TABLE: OnceLock<[[f64; RESIZED_SIDE]; BLOCK_SIDE]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [[0.0; RESIZED_SIDE]; BLOCK_SIDE];
        for (u, row) in t.iter_mut().enumerate() {
            for (n, c) in row.iter_mut().enumerate() {
                *c = (std::f64::consts::PI * (2 * n + 1) as f64 * u as f64 / (2 * RESIZED_SIDE) as f64).cos();
            }
        }
        t
    })
}

/// The 32x32 luma grid the hash is computed from.
pub fn hash_input(img: &DynamicImage) -> [[f64; RESIZED_SIDE]; RESIZED_SIDE] {
    let luma = img.to_luma8();
    let small = image::imageops::resize(&luma, RESIZED_SIDE as u32, RESIZED_SIDE as u32, FilterType::Triangle);
    let mut grid = [[0.0; RESIZED_SIDE]; RESIZED_SIDE];
    for (x, y, p) in small.enumerate_pixels() {
        grid[y as usize][x as usize] = p.0[0] as f64;
    }
    grid
}

/// Low-frequency DCT block via separable row/column passes.
pub fn low_frequency_block(grid: &[[f64; RESIZED_SIDE]; RESIZED_SIDE]) -> [[f64; BLOCK_SIDE]; BLOCK_SIDE] {
    let cos = cosine_table();
    // rows[y][v] = sum_x grid[y][x] cos_v(x)
    let mut rows = [[0.0; BLOCK_SIDE]; RESIZED_SIDE];
    for (y, row) in grid.iter().enumerate() {
        for v in 0..BLOCK_SIDE {
            rows[y][v] = row.iter().zip(cos[v].iter()).map(|(p, c)| p * c).sum();
        }
    }
    let mut block = [[0.0; BLOCK_SIDE]; BLOCK_SIDE];
    for u in 0..BLOCK_SIDE {
        for v in 0..BLOCK_SIDE {
            block[u][v] = (0..RESIZED_SIDE).map(|y| rows[y][v] * cos[u][y]).sum();
        }
    }
    block
}

pub fn hash_from_block(block: &[[f64; BLOCK_SIDE]; BLOCK_SIDE]) -> PerceptualHash {
    let mut sorted: Vec<f64> = block.iter().flatten().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let median = (sorted[31] + sorted[32]) / 2.0;
    let mut bits = 0u64;
    for (i, c) in block.iter().flatten().enumerate() {
        if *c > median {
            bits |= 1 << i;
        }
    }
    PerceptualHash(bits)
}

pub fn phash_image(img: &DynamicImage) -> PerceptualHash {
    hash_from_block(&low_frequency_block(&hash_input(img)))
}

pub fn phash_bytes(bytes: &[u8]) -> Result<PerceptualHash, image::ImageError> {
    Ok(phash_image(&image::load_from_memory(bytes)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{Rgb, RgbImage};

    #[test]
    fn hex_round_trip() {
        let h = PerceptualHash(0x00ff_1234_abcd_0001);
        assert_eq!(h.to_string(), "00ff1234abcd0001");
        assert_eq!(h.to_string().parse::<PerceptualHash>().unwrap(), h);
        assert_eq!(serde_json::to_string(&h).unwrap(), "\"00ff1234abcd0001\"");
    }

    #[test]
    fn distance_is_popcount() {
        assert_eq!(PerceptualHash(0).distance(PerceptualHash(u64::MAX)), 64);
        assert_eq!(PerceptualHash(0b1011).distance(PerceptualHash(0b0001)), 2);
    }

    #[test]
    fn left_and_right_halves_differ() {
        let left = DynamicImage::ImageRgb8(RgbImage::from_fn(64, 64, |x, _| if x < 32 { Rgb([255; 3]) } else { Rgb([0; 3]) }));
        let right = DynamicImage::ImageRgb8(RgbImage::from_fn(64, 64, |x, _| if x >= 32 { Rgb([255; 3]) } else { Rgb([0; 3]) }));
        assert!(phash_image(&left).distance(phash_image(&right)) > 0);
        assert_eq!(phash_image(&left), phash_image(&left.clone()));
    }
}
