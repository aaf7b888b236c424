//! Offline fixture backends and the procedural placeholder images they serve.
//!
//! Generated placeholders imitate text-to-image output: saturated gradient
//! backgrounds, shaded blobs and pseudo-text squiggles. Search placeholders
//! imitate conventional reference maps: pale sea, flat pastel regions with
//! crisp outlines, and boxed labels. Both are pure functions of their seed
//! text, so repeated calls are byte-identical.
//!
//! Recorded layout under a fixture root:
//!
//! ```text
//! generated/<sha256(prompt)>.png
//! search/<slug(query)>/<rank>.png
//! ```

use std::f32::consts::TAU;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ImageEncoder, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{AcquiredImage, AcquisitionError, GenerationBackend, GenerationRequest, Origin, SearchBackend, SearchOutcome, SearchRequest};

pub const FIXTURE_SIZE: u32 = 512;

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Lowercase ASCII alphanumerics with single `-` separators.
pub fn query_slug(query: &str) -> String {
    let mut slug = String::with_capacity(query.len());
    for c in query.chars() {
        if c.is_ascii_alphanumeric() {
            slug.push(c.to_ascii_lowercase());
        } else if !slug.ends_with('-') && !slug.is_empty() {
            slug.push('-');
        }
    }
    while slug.ends_with('-') {
        slug.pop();
    }
    slug
}

fn seeded_rng(domain: &str, text: &str) -> ChaCha8Rng {
    let digest = Sha256::new().chain_update(domain.as_bytes()).chain_update([0u8]).chain_update(text.as_bytes()).finalize();
    let mut seed = [0u8; 32];
    seed.copy_from_slice(&digest);
    ChaCha8Rng::from_seed(seed)
}

fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut out = Vec::new();
    PngEncoder::new_with_quality(Cursor::new(&mut out), CompressionType::Fast, FilterType::Sub)
        .write_image(img.as_raw(), img.width(), img.height(), image::ExtendedColorType::Rgb8)
        .expect("in-memory PNG encoding");
    out
}

// --- raster helpers -------------------------------------------------------

fn fill_polygon(img: &mut RgbImage, pts: &[(f32, f32)], mut shade: impl FnMut(u32, u32) -> Rgb<u8>) {
    let (w, h) = img.dimensions();
    let min_y = pts.iter().map(|p| p.1).fold(f32::INFINITY, f32::min).max(0.0) as u32;
    let max_y = (pts.iter().map(|p| p.1).fold(f32::NEG_INFINITY, f32::max).ceil() as u32).min(h);
    let mut xs = Vec::new();
    for y in min_y..max_y {
        let sy = y as f32 + 0.5;
        xs.clear();
        for i in 0..pts.len() {
            let (a, b) = (pts[i], pts[(i + 1) % pts.len()]);
            if (a.1 <= sy) != (b.1 <= sy) {
                xs.push(a.0 + (sy - a.1) / (b.1 - a.1) * (b.0 - a.0));
            }
        }
        xs.sort_by(f32::total_cmp);
        for pair in xs.chunks_exact(2) {
            let x0 = pair[0].max(0.0).round() as u32;
            let x1 = (pair[1].round().max(0.0) as u32).min(w);
            for x in x0..x1 {
                img.put_pixel(x, y, shade(x, y));
            }
        }
    }
}

fn fill_rect(img: &mut RgbImage, x0: i32, y0: i32, x1: i32, y1: i32, color: Rgb<u8>) {
    let (w, h) = img.dimensions();
    for y in y0.max(0)..y1.min(h as i32) {
        for x in x0.max(0)..x1.min(w as i32) {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

fn stroke(img: &mut RgbImage, pts: &[(f32, f32)], width: f32, color: Rgb<u8>) {
    let r = (width / 2.0).max(0.5);
    for seg in pts.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
        let steps = (len * 2.0).ceil().max(1.0) as usize;
        for s in 0..=steps {
            let t = s as f32 / steps as f32;
            let (cx, cy) = (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1));
            fill_rect(
                img,
                (cx - r).round() as i32,
                (cy - r).round() as i32,
                (cx + r).round() as i32,
                (cy + r).round() as i32,
                color,
            );
        }
    }
}

fn blob(rng: &mut impl Rng, cx: f32, cy: f32, radius: f32) -> Vec<(f32, f32)> {
    let n = rng.random_range(9..18);
    (0..n)
        .map(|i| {
            let angle = TAU * (i as f32 + rng.random_range(-0.3..0.3)) / n as f32;
            let r = radius * rng.random_range(0.55..1.3);
            (cx + r * angle.cos(), cy + r * angle.sin())
        })
        .collect()
}

fn hsv(h: f32, s: f32, v: f32) -> Rgb<u8> {
    let h = h.rem_euclid(1.0) * 6.0;
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |u: f32| ((u + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    Rgb([q(r), q(g), q(b)])
}

fn mix(a: Rgb<u8>, b: Rgb<u8>, t: f32) -> Rgb<u8> {
    let t = t.clamp(0.0, 1.0);
    Rgb(std::array::from_fn(|i| (a.0[i] as f32 * (1.0 - t) + b.0[i] as f32 * t).round() as u8))
}

// --- placeholder drawings -------------------------------------------------

/// Placeholder for a text-to-image result, seeded by the prompt text.
pub fn draw_generated_placeholder(prompt: &str) -> Vec<u8> {
    draw_generated_sample(prompt, 0)
}

/// The `sample`-th placeholder for `prompt`; sample 0 equals
/// [`draw_generated_placeholder`].
pub fn draw_generated_sample(prompt: &str, sample: u32) -> Vec<u8> {
    let mut rng = match sample {
        0 => seeded_rng("generated", prompt),
        n => seeded_rng("generated", &format!("{prompt}\u{0}{n}")),
    };
    let size = FIXTURE_SIZE;
    let base_hue: f32 = rng.random();
    let c0 = hsv(base_hue, rng.random_range(0.6..1.0), rng.random_range(0.25..0.6));
    let c1 = hsv(base_hue + rng.random_range(0.2..0.5), rng.random_range(0.6..1.0), rng.random_range(0.35..0.75));
    let angle: f32 = rng.random_range(0.0..TAU);
    let (dx, dy) = (angle.cos(), angle.sin());
    let freq: f32 = rng.random_range(2.0..6.0);
    let phase: f32 = rng.random_range(0.0..TAU);

    let mut img = RgbImage::from_fn(size, size, |x, y| {
        let (u, v) = (x as f32 / size as f32 - 0.5, y as f32 / size as f32 - 0.5);
        let t = 0.5 + u * dx + v * dy;
        let ripple = 0.08 * (freq * TAU * (u * dy - v * dx) + phase).sin();
        mix(c0, c1, t + ripple)
    });

    for _ in 0..rng.random_range(4..9) {
        let (cx, cy) = (rng.random_range(40.0..472.0), rng.random_range(40.0..472.0));
        let radius = rng.random_range(40.0..150.0);
        let pts = blob(&mut rng, cx, cy, radius);
        let core = hsv(rng.random(), rng.random_range(0.7..1.0), rng.random_range(0.7..1.0));
        let rim = hsv(rng.random(), rng.random_range(0.7..1.0), rng.random_range(0.2..0.5));
        fill_polygon(&mut img, &pts, |x, y| {
            let d = ((x as f32 - cx).powi(2) + (y as f32 - cy).powi(2)).sqrt() / (radius * 1.3);
            mix(core, rim, d)
        });
    }

    // Pseudo-text: words of random squiggle glyphs.
    let ink = if rng.random_bool(0.5) { Rgb([20, 16, 24]) } else { Rgb([236, 232, 220]) };
    for _ in 0..rng.random_range(12..30) {
        let (mut x, y) = (rng.random_range(10.0..430.0f32), rng.random_range(10.0..490.0f32));
        let glyph_h = rng.random_range(7.0..14.0f32);
        for _ in 0..rng.random_range(3..8) {
            let glyph_w = glyph_h * rng.random_range(0.4..0.8);
            let pts: Vec<(f32, f32)> = (0..rng.random_range(3..6))
                .map(|_| (x + rng.random_range(0.0..glyph_w), y + rng.random_range(0.0..glyph_h)))
                .collect();
            stroke(&mut img, &pts, 1.5, ink);
            x += glyph_w + 2.0;
        }
    }
    encode_png(&img)
}

/// Placeholder for a search result: a conventional reference map.
pub fn draw_search_placeholder(query: &str, rank: u32) -> Vec<u8> {
    let mut rng = seeded_rng("search", &format!("{query}\u{0}{rank}"));
    let size = FIXTURE_SIZE;
    let sea = if rng.random_bool(0.5) { Rgb([255, 255, 255]) } else { Rgb([214, 234, 248]) };
    let mut img = RgbImage::from_pixel(size, size, sea);
    let outline = Rgb([30, 30, 30]);

    for _ in 0..rng.random_range(3..8) {
        let (cx, cy) = (rng.random_range(60.0..452.0), rng.random_range(80.0..452.0));
        let radius = rng.random_range(50.0..140.0);
        let pts = blob(&mut rng, cx, cy, radius);
        let fill = hsv(rng.random(), rng.random_range(0.15..0.35), rng.random_range(0.9..1.0));
        fill_polygon(&mut img, &pts, |_, _| fill);
        let mut ring = pts.clone();
        ring.push(pts[0]);
        stroke(&mut img, &ring, 2.0, outline);
        // Internal boundary.
        let a = pts[rng.random_range(0..pts.len())];
        let b = pts[rng.random_range(0..pts.len())];
        stroke(&mut img, &[a, (cx, cy), b], 1.0, outline);
    }

    // Title bar and boxed labels with crisp text-like bars.
    let label = |img: &mut RgbImage, x: i32, y: i32, words: usize, rng: &mut ChaCha8Rng| {
        let widths: Vec<i32> = (0..words).map(|_| rng.random_range(12..36)).collect();
        let w = widths.iter().sum::<i32>() + 5 * words as i32 + 6;
        fill_rect(img, x - 1, y - 1, x + w + 1, y + 17, outline);
        fill_rect(img, x, y, x + w, y + 16, Rgb([255, 255, 255]));
        let mut cx = x + 4;
        for ww in widths {
            fill_rect(img, cx, y + 5, cx + ww, y + 11, outline);
            cx += ww + 5;
        }
    };
    label(&mut img, rng.random_range(100..250), 12, rng.random_range(2..4), &mut rng);
    for _ in 0..rng.random_range(3..9) {
        let (x, y) = (rng.random_range(10..380), rng.random_range(50..490));
        label(&mut img, x, y, rng.random_range(1..3), &mut rng);
    }
    encode_png(&img)
}

// --- backends -------------------------------------------------------------

/// Generation backend that serves recorded fixtures when present and falls
/// back to the procedural placeholder.
#[derive(Clone, Debug, Default)]
pub struct FixtureGenerator {
    root: Option<PathBuf>,
}

impl FixtureGenerator {
    pub fn procedural() -> Self {
        FixtureGenerator { root: None }
    }

    pub fn with_root(root: impl Into<PathBuf>) -> Self {
        FixtureGenerator { root: Some(root.into()) }
    }

    /// `generated/<sha256(prompt)>.png`, with a `-<sample>` suffix for
    /// repeated prompts.
    pub fn recorded_path(root: &Path, prompt: &str, sample: u32) -> PathBuf {
        let name = match sample {
            0 => format!("{}.png", prompt_hash(prompt)),
            n => format!("{}-{n}.png", prompt_hash(prompt)),
        };
        root.join("generated").join(name)
    }

    /// Writes the procedural placeholder for `prompt` into the fixture tree.
    pub fn record(root: &Path, prompt: &str, sample: u32) -> std::io::Result<PathBuf> {
        let path = Self::recorded_path(root, prompt, sample);
        fs::create_dir_all(path.parent().expect("has parent"))?;
        fs::write(&path, draw_generated_sample(prompt, sample))?;
        Ok(path)
    }
}

impl GenerationBackend for FixtureGenerator {
    fn generate(&self, request: &GenerationRequest) -> Result<AcquiredImage, AcquisitionError> {
        if let Some(root) = &self.root {
            let path = Self::recorded_path(root, &request.prompt, request.sample);
            if path.is_file() {
                let detail = format!("fixture:{}", path.strip_prefix(root).unwrap_or(&path).display());
                return AcquiredImage::new(fs::read(&path)?, Origin::Fixture, detail, None);
            }
        }
        AcquiredImage::new(draw_generated_sample(&request.prompt, request.sample), Origin::Fixture, "fixture:procedural", None)
    }
}

/// Search backend over a recorded `search/<slug>/<rank>.png` tree.
///
/// With `synthesize_missing`, queries without a recorded directory are
/// answered with `k` procedural search placeholders instead of an empty
/// result.
#[derive(Clone, Debug)]
pub struct FixtureSearch {
    root: Option<PathBuf>,
    synthesize_missing: bool,
}

impl FixtureSearch {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        FixtureSearch { root: Some(root.into()), synthesize_missing: false }
    }

    pub fn synthesizing(root: impl Into<PathBuf>) -> Self {
        FixtureSearch { root: Some(root.into()), synthesize_missing: true }
    }

    /// Answers every query with procedural placeholders, without a recorded tree.
    pub fn procedural() -> Self {
        FixtureSearch { root: None, synthesize_missing: true }
    }

    pub fn query_dir(root: &Path, query: &str) -> PathBuf {
        root.join("search").join(query_slug(query))
    }

    /// Records `k` procedural results for `query`.
    pub fn record(root: &Path, query: &str, k: u32) -> std::io::Result<PathBuf> {
        let dir = Self::query_dir(root, query);
        fs::create_dir_all(&dir)?;
        for rank in 1..=k {
            fs::write(dir.join(format!("{rank}.png")), draw_search_placeholder(query, rank))?;
        }
        Ok(dir)
    }
}

impl SearchBackend for FixtureSearch {
    fn search(&self, request: &SearchRequest) -> Result<SearchOutcome, AcquisitionError> {
        let dir = self.root.as_deref().map(|root| Self::query_dir(root, &request.query));
        let Some(dir) = dir.filter(|d| d.is_dir()) else {
            if self.synthesize_missing {
                let images = (1..=request.k)
                    .map(|rank| {
                        AcquiredImage::new(draw_search_placeholder(&request.query, rank), Origin::Fixture, format!("fixture:procedural#{rank}"), Some(rank))
                    })
                    .collect::<Result<_, _>>()?;
                return Ok(SearchOutcome { images, warning: None });
            }
            return Ok(SearchOutcome {
                images: Vec::new(),
                warning: Some(format!("no recorded fixture for query {:?}", request.query)),
            });
        };
        let mut ranked: Vec<(u32, PathBuf)> = fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter_map(|p| {
                let rank = p.file_stem()?.to_str()?.parse::<u32>().ok()?;
                Some((rank, p))
            })
            .collect();
        ranked.sort();
        let mut images = Vec::new();
        for (i, (_, path)) in ranked.into_iter().take(request.k as usize).enumerate() {
            let detail = format!("fixture:{}", self.root.as_deref().and_then(|r| path.strip_prefix(r).ok()).unwrap_or(&path).display());
            images.push(AcquiredImage::new(fs::read(&path)?, Origin::Fixture, detail, Some(i as u32 + 1))?);
        }
        let warning = images.is_empty().then(|| format!("fixture directory for {:?} is empty", request.query));
        Ok(SearchOutcome { images, warning })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::{search_images, GenerationRequest};

    #[test]
    fn slugs() {
        assert_eq!(query_slug("United States maps"), "united-states-maps");
        assert_eq!(query_slug("  Côte d'Ivoire maps!"), "c-te-d-ivoire-maps");
    }

    #[test]
    fn placeholders_are_512_square_and_deterministic() {
        let a = draw_generated_placeholder("A choropleth map of Wisconsin");
        assert_eq!(a, draw_generated_placeholder("A choropleth map of Wisconsin"));
        assert_ne!(a, draw_generated_placeholder("A choropleth map of Texas"));
        assert_eq!(crate::acquisition::image_dimensions(&a).unwrap(), (512, 512));
        let s = draw_search_placeholder("Asia maps", 3);
        assert_eq!(s, draw_search_placeholder("Asia maps", 3));
        assert_ne!(s, draw_search_placeholder("Asia maps", 4));
        assert_eq!(crate::acquisition::image_dimensions(&s).unwrap(), (512, 512));
    }

    #[test]
    fn repeated_prompts_get_distinct_samples() {
        let prompt = "A reference map of Asia";
        let req = GenerationRequest::new(prompt, "fixture").unwrap();
        let g = FixtureGenerator::procedural();
        let first = g.generate(&req).unwrap().bytes;
        let second = g.generate(&req.clone().with_sample(1)).unwrap().bytes;
        assert_ne!(first, second);
        assert_eq!(second, draw_generated_sample(prompt, 1));
        assert_eq!(first, draw_generated_sample(prompt, 0));
    }

    #[test]
    fn fixture_generator_prefers_recorded_files() {
        let dir = tempfile::tempdir().unwrap();
        let prompt = "A heat map of Asia";
        let path = FixtureGenerator::recorded_path(dir.path(), prompt, 0);
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        let other = draw_search_placeholder("x", 1);
        fs::write(&path, &other).unwrap();
        let req = GenerationRequest::new(prompt, "fixture").unwrap();
        let img = FixtureGenerator::with_root(dir.path()).generate(&req).unwrap();
        assert_eq!(img.bytes, other);
        assert_eq!(img.origin, Origin::Fixture);
        let procedural = FixtureGenerator::procedural().generate(&req).unwrap();
        assert_eq!(procedural.bytes, draw_generated_placeholder(prompt));
    }

    #[test]
    fn recorded_search_respects_k_and_ranks() {
        let dir = tempfile::tempdir().unwrap();
        FixtureSearch::record(dir.path(), "Wisconsin maps", 6).unwrap();
        let backend = FixtureSearch::new(dir.path());
        let out = search_images(&SearchRequest::new("Wisconsin maps", 4).unwrap(), &backend).unwrap();
        assert_eq!(out.images.len(), 4);
        assert_eq!(out.images.iter().map(|i| i.rank.unwrap()).collect::<Vec<_>>(), [1, 2, 3, 4]);
        assert_eq!(out.images[0].bytes, draw_search_placeholder("Wisconsin maps", 1));
        assert!(out.warning.is_none());

        let missing = search_images(&SearchRequest::new("Atlantis maps", 5).unwrap(), &backend).unwrap();
        assert!(missing.images.is_empty());
        assert!(missing.warning.is_some());

        let synth = FixtureSearch::synthesizing(dir.path());
        let out = search_images(&SearchRequest::new("Atlantis maps", 3).unwrap(), &synth).unwrap();
        assert_eq!(out.images.len(), 3);
    }
}
