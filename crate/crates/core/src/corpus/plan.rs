//! Acquisition plans: prompts to generate and search queries to run, with
//! per-level quotas.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::acquisition::build_search_query;
use crate::prompt_grammar::{PromptSpec, Region, RegionLevel, Vocabulary};

pub const PLAN_FORMAT: &str = "mapforensics-plan";
pub const PLAN_SCHEMA_VERSION: u32 = 1;

/// Images per region, by level.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelQuotas {
    pub state: u32,
    pub country: u32,
    pub continent: u32,
}

impl LevelQuotas {
    /// Synthetic maps per region.
    pub const GENERATION: LevelQuotas = LevelQuotas { state: 30, country: 30, continent: 25 };
    /// Search results kept per region.
    pub const SEARCH: LevelQuotas = LevelQuotas { state: 50, country: 50, continent: 100 };

    pub fn new(state: u32, country: u32, continent: u32) -> Self {
        LevelQuotas { state, country, continent }
    }

    pub fn get(&self, level: RegionLevel) -> u32 {
        match level {
            RegionLevel::State => self.state,
            RegionLevel::Country => self.country,
            RegionLevel::Continent => self.continent,
        }
    }

    fn ensure_positive(&self) -> Result<(), CorpusError> {
        if RegionLevel::ALL.iter().any(|&l| self.get(l) == 0) {
            return Err(CorpusError::InvalidQuota(format!("quotas must be positive, got {self}")));
        }
        Ok(())
    }
}

impl fmt::Display for LevelQuotas {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.state, self.country, self.continent)
    }
}

/// Parses `state,country,continent`.
impl FromStr for LevelQuotas {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || CorpusError::InvalidQuota(format!("expected state,country,continent counts, got {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let n: Vec<u32> = parts.iter().map(|p| p.parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
        Ok(LevelQuotas::new(n[0], n[1], n[2]))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Sub-seed for the `k`-th prompt of region `region_idx` at `level`.
pub fn derive_seed(seed: u64, level: RegionLevel, region_idx: usize, k: u32) -> u64 {
    let level_tag = RegionLevel::ALL.iter().position(|&l| l == level).expect("known level") as u64;
    [level_tag, region_idx as u64, k as u64].into_iter().fold(splitmix64(seed), |acc, part| splitmix64(acc ^ splitmix64(part)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationPlan {
    pub seed: u64,
    pub quotas: LevelQuotas,
    pub p_optional: f64,
    pub vocabulary_version: String,
    pub entries: Vec<PromptSpec>,
}

pub fn build_generation_plan(quotas: LevelQuotas, seed: u64, vocab: &Vocabulary, p_optional: f64) -> Result<GenerationPlan, CorpusError> {
    quotas.ensure_positive()?;
    let mut entries = Vec::new();
    for level in RegionLevel::ALL {
        for (idx, region) in vocab.regions(level).into_iter().enumerate() {
            for k in 0..quotas.get(level) {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, level, idx, k));
                entries.push(vocab.sample_for_region(&mut rng, region.clone(), p_optional)?);
            }
        }
    }
    Ok(GenerationPlan { seed, quotas, p_optional, vocabulary_version: vocab.version.clone(), entries })
}

#[derive(Serialize, Deserialize)]
struct PlanHeader {
    format: String,
    schema_version: u32,
    seed: u64,
    quotas: LevelQuotas,
    p_optional: f64,
    vocabulary_version: String,
    total: usize,
}

#[derive(Serialize, Deserialize)]
struct PlanLine {
    #[serde(flatten)]
    spec: PromptSpec,
    prompt: String,
}

impl GenerationPlan {
    pub fn total(&self) -> usize {
        self.entries.len()
    }

    pub fn level_totals(&self) -> BTreeMap<RegionLevel, usize> {
        let mut totals = BTreeMap::new();
        for e in &self.entries {
            *totals.entry(e.region.level).or_insert(0) += 1;
        }
        totals
    }

    /// Writes a header line followed by one JSON object per entry.
    pub fn save(&self, path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<(), CorpusError> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        let header = PlanHeader {
            format: PLAN_FORMAT.into(),
            schema_version: PLAN_SCHEMA_VERSION,
            seed: self.seed,
            quotas: self.quotas,
            p_optional: self.p_optional,
            vocabulary_version: self.vocabulary_version.clone(),
            total: self.entries.len(),
        };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        for spec in &self.entries {
            let line = PlanLine { spec: spec.clone(), prompt: vocab.render(spec)? };
            writeln!(out, "{}", serde_json::to_string(&line)?)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Loads a plan; entries keep their rendered prompt strings alongside.
    pub fn load(path: impl AsRef<Path>) -> Result<(Self, Vec<String>), CorpusError> {
        let reader = BufReader::new(fs::File::open(path)?);
        let mut lines = reader.lines();
        let header_line = lines.next().ok_or(CorpusError::Corrupt { line: 1, message: "empty plan file".into() })??;
        let header: PlanHeader = serde_json::from_str(&header_line).map_err(|e| CorpusError::Corrupt { line: 1, message: e.to_string() })?;
        if header.format != PLAN_FORMAT {
            return Err(CorpusError::Corrupt { line: 1, message: format!("not a plan file ({})", header.format) });
        }
        if header.schema_version != PLAN_SCHEMA_VERSION {
            return Err(CorpusError::SchemaVersion { found: header.schema_version, expected: PLAN_SCHEMA_VERSION });
        }
        let mut entries = Vec::with_capacity(header.total);
        let mut prompts = Vec::with_capacity(header.total);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: PlanLine = serde_json::from_str(&line).map_err(|e| CorpusError::Corrupt { line: i + 2, message: e.to_string() })?;
            entries.push(parsed.spec);
            prompts.push(parsed.prompt);
        }
        if entries.len() != header.total {
            return Err(CorpusError::Corrupt {
                line: 0,
                message: format!("header promises {} entries, found {}", header.total, entries.len()),
            });
        }
        let plan = GenerationPlan {
            seed: header.seed,
            quotas: header.quotas,
            p_optional: header.p_optional,
            vocabulary_version: header.vocabulary_version,
            entries,
        };
        Ok((plan, prompts))
    }
}

/// For each prompt, how many identical prompts precede it. Used as the
/// generation sample index so repeated prompts yield separate images.
pub fn repeat_indices(prompts: &[String]) -> Vec<u32> {
    let mut seen: BTreeMap<&str, u32> = BTreeMap::new();
    prompts
        .iter()
        .map(|p| {
            let n = seen.entry(p.as_str()).or_insert(0);
            *n += 1;
            *n - 1
        })
        .collect()
}

/// One image-search query and how many ranked results to keep.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchTarget {
    pub region: Region,
    pub query: String,
    pub k: u32,
}

pub fn build_search_targets(quotas: LevelQuotas, vocab: &Vocabulary) -> Result<Vec<SearchTarget>, CorpusError> {
    quotas.ensure_positive()?;
    Ok(vocab
        .all_regions()
        .into_iter()
        .map(|region| SearchTarget { query: build_search_query(&region), k: quotas.get(region.level), region })
        .collect())
}

/// Expected image totals per level for a set of search targets.
pub fn search_target_totals(targets: &[SearchTarget]) -> BTreeMap<RegionLevel, u64> {
    let mut totals = BTreeMap::new();
    for t in targets {
        *totals.entry(t.region.level).or_insert(0) += t.k as u64;
    }
    totals
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt_grammar::DEFAULT_P_OPTIONAL;

    #[test]
    fn default_plan_matches_quota_table() {
        let v = Vocabulary::shipped();
        let plan = build_generation_plan(LevelQuotas::GENERATION, 42, &v, DEFAULT_P_OPTIONAL).unwrap();
        assert_eq!(plan.total(), 4675);
        let t = plan.level_totals();
        assert_eq!((t[&RegionLevel::State], t[&RegionLevel::Country], t[&RegionLevel::Continent]), (1500, 3000, 175));
    }

    #[test]
    fn unit_quotas_cover_every_region_once() {
        let v = Vocabulary::shipped();
        let plan = build_generation_plan(LevelQuotas::new(1, 1, 1), 3, &v, DEFAULT_P_OPTIONAL).unwrap();
        assert_eq!(plan.total(), 157);
        let regions: Vec<_> = plan.entries.iter().map(|e| e.region.clone()).collect();
        assert_eq!(regions, v.all_regions());
    }

    #[test]
    fn plans_are_deterministic_in_seed() {
        let v = Vocabulary::shipped();
        let a = build_generation_plan(LevelQuotas::GENERATION, 42, &v, DEFAULT_P_OPTIONAL).unwrap();
        let b = build_generation_plan(LevelQuotas::GENERATION, 42, &v, DEFAULT_P_OPTIONAL).unwrap();
        assert_eq!(a, b);
        let c = build_generation_plan(LevelQuotas::GENERATION, 43, &v, DEFAULT_P_OPTIONAL).unwrap();
        assert_ne!(a.entries, c.entries);
    }

    #[test]
    fn zero_quota_is_rejected() {
        let v = Vocabulary::shipped();
        assert!(matches!(
            build_generation_plan(LevelQuotas::new(0, 1, 1), 1, &v, 0.5),
            Err(CorpusError::InvalidQuota(_))
        ));
        assert!("30,30".parse::<LevelQuotas>().is_err());
        assert_eq!("30, 30,25".parse::<LevelQuotas>().unwrap(), LevelQuotas::GENERATION);
    }

    #[test]
    fn search_targets_match_human_table() {
        let v = Vocabulary::shipped();
        let targets = build_search_targets(LevelQuotas::SEARCH, &v).unwrap();
        let t = search_target_totals(&targets);
        assert_eq!((t[&RegionLevel::State], t[&RegionLevel::Country], t[&RegionLevel::Continent]), (2500, 5000, 700));
        assert!(targets.iter().any(|t| t.query == "United States maps" && t.k == 50));
    }

    #[test]
    fn plan_file_round_trip() {
        let v = Vocabulary::shipped();
        let plan = build_generation_plan(LevelQuotas::new(2, 1, 3), 9, &v, DEFAULT_P_OPTIONAL).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.jsonl");
        plan.save(&path, &v).unwrap();
        let (loaded, prompts) = GenerationPlan::load(&path).unwrap();
        assert_eq!(loaded, plan);
        assert_eq!(prompts[0], v.render(&plan.entries[0]).unwrap());
    }
}
