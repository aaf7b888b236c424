//! Perceptual hash checked against a direct (non-separable) DCT, plus
//! distance statistics over fixture images.

use image::{DynamicImage, GenericImageView, Rgb, RgbImage};
use mapforensics_core::acquisition::fixture::{draw_generated_placeholder, draw_search_placeholder};
use mapforensics_core::corpus::phash::{self, PerceptualHash};
use mapforensics_core::prompt_grammar::{MapType, PromptSpec, Vocabulary};

/// Brute-force oracle: X[u][v] = sum_y sum_x p[y][x] cos(pi(2y+1)u/64) cos(pi(2x+1)v/64),
/// bits set above the median of the 8x8 block, bit index 8u + v.
fn oracle_hash(img: &DynamicImage) -> PerceptualHash {
    let grid = phash::hash_input(img);
    let n = 32.0;
    let mut coeffs = Vec::with_capacity(64);
    for u in 0..8 {
        for v in 0..8 {
            let mut acc = 0.0;
            for (y, row) in grid.iter().enumerate() {
                for (x, p) in row.iter().enumerate() {
                    acc += p
                        * (std::f64::consts::PI * (2.0 * y as f64 + 1.0) * u as f64 / (2.0 * n)).cos()
                        * (std::f64::consts::PI * (2.0 * x as f64 + 1.0) * v as f64 / (2.0 * n)).cos();
                }
            }
            coeffs.push(acc);
        }
    }
    let mut sorted = coeffs.clone();
    sorted.sort_by(f64::total_cmp);
    let median = (sorted[31] + sorted[32]) / 2.0;
    let bits = coeffs.iter().enumerate().fold(0u64, |b, (i, c)| if *c > median { b | (1 << i) } else { b });
    PerceptualHash(bits)
}

fn shifted_right(img: &DynamicImage) -> DynamicImage {
    let (w, h) = img.dimensions();
    let rgb = img.to_rgb8();
    DynamicImage::ImageRgb8(RgbImage::from_fn(w, h, |x, y| *rgb.get_pixel(x.saturating_sub(1), y)))
}

fn sample_prompts(n: usize) -> Vec<String> {
    let v = Vocabulary::shipped();
    v.all_regions()
        .into_iter()
        .take(n)
        .enumerate()
        .map(|(i, r)| v.render(&PromptSpec::new(MapType::ALL[i % 6], r)).unwrap())
        .collect()
}

#[test]
fn separable_dct_matches_direct_oracle() {
    let mut images: Vec<DynamicImage> = sample_prompts(6)
        .iter()
        .map(|p| image::load_from_memory(&draw_generated_placeholder(p)).unwrap())
        .collect();
    images.push(image::load_from_memory(&draw_search_placeholder("Asia maps", 1)).unwrap());
    images.push(DynamicImage::ImageRgb8(RgbImage::from_fn(100, 37, |x, y| Rgb([(x * 2) as u8, (y * 5) as u8, 9]))));
    for img in &images {
        assert_eq!(phash::phash_image(img), oracle_hash(img));
    }
}

#[test]
fn one_pixel_shift_is_perceptually_close() {
    for p in sample_prompts(10) {
        let img = image::load_from_memory(&draw_generated_placeholder(&p)).unwrap();
        let shifted = shifted_right(&img);
        let (a, b) = (oracle_hash(&img), oracle_hash(&shifted));
        let d = phash::phash_image(&img).distance(phash::phash_image(&shifted));
        assert_eq!(d, a.distance(b));
        assert!(d <= 10, "{p}: distance {d}");
    }
}

#[test]
fn distinct_prompts_have_near_random_hash_distance() {
    let hashes: Vec<PerceptualHash> = sample_prompts(60)
        .iter()
        .map(|p| phash::phash_bytes(&draw_generated_placeholder(p)).unwrap())
        .collect();
    let mut total = 0u64;
    let mut pairs = 0u64;
    for i in 0..hashes.len() {
        for j in i + 1..hashes.len() {
            total += hashes[i].distance(hashes[j]) as u64;
            pairs += 1;
        }
    }
    let mean = total as f64 / pairs as f64;
    println!("mean pairwise distance over {pairs} pairs: {mean:.2}");
    // Independent uniform 64-bit hashes average 32 with per-pair sd 4.
    assert!((mean - 32.0).abs() <= 4.0, "mean {mean}");
}

#[test]
fn hamming_distance_satisfies_triangle_inequality() {
    let hashes: Vec<PerceptualHash> = sample_prompts(25)
        .iter()
        .map(|p| phash::phash_bytes(&draw_generated_placeholder(p)).unwrap())
        .collect();
    for a in &hashes {
        assert_eq!(a.distance(*a), 0);
        for b in &hashes {
            assert_eq!(a.distance(*b), b.distance(*a));
            for c in &hashes {
                assert!(a.distance(*c) <= a.distance(*b) + b.distance(*c));
            }
        }
    }
}
