//! Prompt grammar for text-to-image map generation.
//!
//! Prompts follow the template `A {map type} of {region}[ {place}][ {description}]`.
//! Place and description entries carry their own `on the` / `with` prefixes, so
//! rendering is plain concatenation with single spaces.
//!
//! The vocabulary is loaded from a line-oriented text file (see
//! `data/vocabulary.txt` for the layout); the shipped copy is embedded at
//! compile time so the binary works without a data directory.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const SHIPPED_VOCABULARY: &str = include_str!("../data/vocabulary.txt");

pub const PLACE_PREFIX: &str = "on the ";
pub const DESCRIPTION_PREFIX: &str = "with ";

/// Default probability that each optional prompt field is included.
pub const DEFAULT_P_OPTIONAL: f64 = 0.5;

#[derive(Debug, Error)]
pub enum GrammarError {
    #[error("unknown map type {0:?}")]
    UnknownMapType(String),
    #[error("unknown region level {0:?} (expected state, country or continent)")]
    UnknownLevel(String),
    #[error("invalid vocabulary entry for field `{field}`: {value:?}")]
    InvalidEntry { field: PromptField, value: String },
    #[error("vocabulary file line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("vocabulary failed validation: {0}")]
    InvalidVocabulary(ValidationReport),
    #[error("no regions at level {0}")]
    EmptyLevel(RegionLevel),
    #[error("optional-field probability must lie in [0, 1], got {0}")]
    InvalidProbability(f64),
    #[error("prompt {0:?} does not match the grammar")]
    Unparseable(String),
    #[error("prompt {0:?} has more than one parse")]
    Ambiguous(String),
    #[error("failed to read vocabulary: {0}")]
    Io(#[from] std::io::Error),
}

/// A field of [`PromptSpec`], used to name the offending field in errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PromptField {
    MapType,
    Region,
    Place,
    Description,
}

impl fmt::Display for PromptField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptField::MapType => "map_type",
            PromptField::Region => "region",
            PromptField::Place => "place",
            PromptField::Description => "description",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MapType {
    #[serde(rename = "choropleth map")]
    Choropleth,
    #[serde(rename = "general map")]
    General,
    #[serde(rename = "heat map")]
    Heat,
    #[serde(rename = "physical map")]
    Physical,
    #[serde(rename = "political map")]
    Political,
    #[serde(rename = "reference map")]
    Reference,
}

impl MapType {
    pub const ALL: [MapType; 6] = [
        MapType::Choropleth,
        MapType::General,
        MapType::Heat,
        MapType::Physical,
        MapType::Political,
        MapType::Reference,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MapType::Choropleth => "choropleth map",
            MapType::General => "general map",
            MapType::Heat => "heat map",
            MapType::Physical => "physical map",
            MapType::Political => "political map",
            MapType::Reference => "reference map",
        }
    }
}

impl fmt::Display for MapType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MapType {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MapType::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| GrammarError::UnknownMapType(s.to_string()))
    }
}

/// Administrative scale of a mapped region.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionLevel {
    State,
    Country,
    Continent,
}

impl RegionLevel {
    pub const ALL: [RegionLevel; 3] = [RegionLevel::State, RegionLevel::Country, RegionLevel::Continent];

    pub fn as_str(self) -> &'static str {
        match self {
            RegionLevel::State => "state",
            RegionLevel::Country => "country",
            RegionLevel::Continent => "continent",
        }
    }
}

impl fmt::Display for RegionLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RegionLevel {
    type Err = GrammarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "state" => Ok(RegionLevel::State),
            "country" => Ok(RegionLevel::Country),
            "continent" => Ok(RegionLevel::Continent),
            other => Err(GrammarError::UnknownLevel(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub level: RegionLevel,
}

impl Region {
    pub fn new(name: impl Into<String>, level: RegionLevel) -> Self {
        Region { name: name.into(), level }
    }
}

/// One structured prompt. `place` and `description` hold full vocabulary
/// entries, prefixes included.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PromptSpec {
    pub map_type: MapType,
    pub region: Region,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub place: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
}

impl PromptSpec {
    pub fn new(map_type: MapType, region: Region) -> Self {
        PromptSpec { map_type, region, place: None, description: None }
    }

    pub fn with_place(mut self, place: impl Into<String>) -> Self {
        self.place = Some(place.into());
        self
    }

    pub fn with_description(mut self, description: impl Into<String>) -> Self {
        self.description = Some(description.into());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub version: String,
    pub map_types: Vec<String>,
    pub states: Vec<String>,
    pub countries: Vec<String>,
    pub continents: Vec<String>,
    pub places: Vec<String>,
    pub descriptions: Vec<String>,
}

const SECTIONS: [&str; 6] = ["map_types", "states", "countries", "continents", "places", "descriptions"];

impl Vocabulary {
    /// The vocabulary shipped with the crate.
    pub fn shipped() -> Self {
        Self::parse(SHIPPED_VOCABULARY).expect("shipped vocabulary parses")
    }

    /// Parses the line-oriented vocabulary format without validating
    /// cardinalities; see [`Vocabulary::validate`].
    pub fn parse(text: &str) -> Result<Self, GrammarError> {
        let mut version = None;
        let mut sections: HashMap<&str, Vec<String>> = HashMap::new();
        let mut current: Option<&str> = None;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            if version.is_none() {
                let v = line.strip_prefix("version=").ok_or_else(|| GrammarError::Syntax {
                    line: line_no,
                    message: "expected `version=` header before any section".into(),
                })?;
                if v.trim().is_empty() {
                    return Err(GrammarError::Syntax { line: line_no, message: "empty version".into() });
                }
                version = Some(v.trim().to_string());
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = SECTIONS.iter().find(|s| **s == name).ok_or_else(|| GrammarError::Syntax {
                    line: line_no,
                    message: format!("unknown section [{name}]"),
                })?;
                if sections.contains_key(name) {
                    return Err(GrammarError::Syntax {
                        line: line_no,
                        message: format!("section [{name}] appears twice"),
                    });
                }
                sections.insert(name, Vec::new());
                current = Some(name);
                continue;
            }
            let section = current.ok_or_else(|| GrammarError::Syntax {
                line: line_no,
                message: "entry outside of any section".into(),
            })?;
            sections.get_mut(section).expect("section registered").push(line.to_string());
        }

        let version = version.ok_or_else(|| GrammarError::Syntax { line: 0, message: "missing `version=` header".into() })?;
        let mut take = |name: &str| {
            sections.remove(name).ok_or_else(|| GrammarError::Syntax {
                line: 0,
                message: format!("missing section [{name}]"),
            })
        };
        Ok(Vocabulary {
            version,
            map_types: take("map_types")?,
            states: take("states")?,
            countries: take("countries")?,
            continents: take("continents")?,
            places: take("places")?,
            descriptions: take("descriptions")?,
        })
    }

    /// Reads, parses and validates a vocabulary file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GrammarError> {
        let text = std::fs::read_to_string(path)?;
        let vocab = Self::parse(&text)?;
        let report = vocab.validate();
        if report.passed() {
            Ok(vocab)
        } else {
            Err(GrammarError::InvalidVocabulary(report))
        }
    }

    /// Serializes back to the file layout (without comments).
    pub fn to_text(&self) -> String {
        let mut out = format!("version={}\n", self.version);
        for (name, entries) in SECTIONS.iter().zip(self.sections()) {
            out.push_str(&format!("\n[{name}]\n"));
            for e in entries {
                out.push_str(e);
                out.push('\n');
            }
        }
        out
    }

    fn sections(&self) -> [&Vec<String>; 6] {
        [
            &self.map_types,
            &self.states,
            &self.countries,
            &self.continents,
            &self.places,
            &self.descriptions,
        ]
    }

    fn level_entries(&self, level: RegionLevel) -> &[String] {
        match level {
            RegionLevel::State => &self.states,
            RegionLevel::Country => &self.countries,
            RegionLevel::Continent => &self.continents,
        }
    }

    /// All regions of one level in case-insensitive alphabetical order.
    pub fn regions(&self, level: RegionLevel) -> Vec<Region> {
        let mut names: Vec<&String> = self.level_entries(level).iter().collect();
        names.sort_by_cached_key(|n| (n.to_lowercase(), (*n).clone()));
        names.into_iter().map(|n| Region::new(n.clone(), level)).collect()
    }

    /// Regions of every level, state first, each level in canonical order.
    pub fn all_regions(&self) -> Vec<Region> {
        RegionLevel::ALL.iter().flat_map(|&l| self.regions(l)).collect()
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let expected = [6usize, 50, 100, 7, 30, 30];
        for ((name, entries), want) in SECTIONS.iter().zip(self.sections()).zip(expected) {
            if entries.len() != want {
                violations.push(Violation::WrongCardinality {
                    section: name.to_string(),
                    expected: want,
                    found: entries.len(),
                });
            }
            let mut seen = HashSet::new();
            for e in entries {
                if e.trim() != e || e.is_empty() || e.contains("  ") {
                    violations.push(Violation::BadWhitespace { section: name.to_string(), entry: e.clone() });
                }
                if !seen.insert(e.as_str()) {
                    violations.push(Violation::Duplicate { section: name.to_string(), entry: e.clone() });
                }
            }
        }
        for m in &self.map_types {
            if m.parse::<MapType>().is_err() {
                violations.push(Violation::UnknownMapType { entry: m.clone() });
            }
        }
        for p in &self.places {
            if !p.starts_with(PLACE_PREFIX) {
                violations.push(Violation::MissingPrefix {
                    section: "places".into(),
                    entry: p.clone(),
                    prefix: PLACE_PREFIX.trim_end().into(),
                });
            }
        }
        for d in &self.descriptions {
            if !d.starts_with(DESCRIPTION_PREFIX) {
                violations.push(Violation::MissingPrefix {
                    section: "descriptions".into(),
                    entry: d.clone(),
                    prefix: DESCRIPTION_PREFIX.trim_end().into(),
                });
            }
        }
        // A region name shared between levels would make prompts ambiguous.
        let mut level_of: HashMap<&str, RegionLevel> = HashMap::new();
        for level in RegionLevel::ALL {
            for name in self.level_entries(level) {
                if let Some(prev) = level_of.insert(name, level) {
                    if prev != level {
                        violations.push(Violation::AmbiguousRegion { name: name.clone(), levels: (prev, level) });
                    }
                }
            }
        }
        ValidationReport {
            counts: VocabularyCounts {
                map_types: self.map_types.len(),
                states: self.states.len(),
                countries: self.countries.len(),
                continents: self.continents.len(),
                places: self.places.len(),
                descriptions: self.descriptions.len(),
            },
            violations,
        }
    }

    /// Checks a spec against this vocabulary, naming the first offending field.
    pub fn check(&self, spec: &PromptSpec) -> Result<(), GrammarError> {
        if !self.map_types.iter().any(|m| m == spec.map_type.as_str()) {
            return Err(GrammarError::InvalidEntry {
                field: PromptField::MapType,
                value: spec.map_type.to_string(),
            });
        }
        if !self.level_entries(spec.region.level).contains(&spec.region.name) {
            return Err(GrammarError::InvalidEntry {
                field: PromptField::Region,
                value: format!("{} ({})", spec.region.name, spec.region.level),
            });
        }
        if let Some(place) = &spec.place {
            if !self.places.contains(place) {
                return Err(GrammarError::InvalidEntry { field: PromptField::Place, value: place.clone() });
            }
        }
        if let Some(desc) = &spec.description {
            if !self.descriptions.contains(desc) {
                return Err(GrammarError::InvalidEntry { field: PromptField::Description, value: desc.clone() });
            }
        }
        Ok(())
    }

    /// Renders `A {map type} of {region}[ {place}][ {description}]`.
    pub fn render(&self, spec: &PromptSpec) -> Result<String, GrammarError> {
        self.check(spec)?;
        Ok(render_unchecked(spec))
    }

    pub fn parser(&self) -> PromptParser<'_> {
        PromptParser::new(self)
    }

    /// Parses a rendered prompt back into its spec. Builds a fresh index per
    /// call; use [`Vocabulary::parser`] for bulk parsing.
    pub fn parse_prompt(&self, prompt: &str) -> Result<PromptSpec, GrammarError> {
        self.parser().parse(prompt)
    }

    /// Draws a prompt for a uniformly chosen region of `level`.
    pub fn sample_prompt(&self, seed: u64, level: RegionLevel, p_optional: f64) -> Result<PromptSpec, GrammarError> {
        check_probability(p_optional)?;
        let regions = self.regions(level);
        if regions.is_empty() {
            return Err(GrammarError::EmptyLevel(level));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let region = regions[rng.random_range(0..regions.len())].clone();
        self.sample_for_region(&mut rng, region, p_optional)
    }

    /// Draws map type and optional fields for a fixed region.
    pub fn sample_for_region<R: Rng>(&self, rng: &mut R, region: Region, p_optional: f64) -> Result<PromptSpec, GrammarError> {
        check_probability(p_optional)?;
        if self.map_types.is_empty() {
            return Err(GrammarError::InvalidEntry { field: PromptField::MapType, value: String::new() });
        }
        let map_type: MapType = self.map_types[rng.random_range(0..self.map_types.len())].parse()?;
        let mut spec = PromptSpec::new(map_type, region);
        if rng.random_bool(p_optional) && !self.places.is_empty() {
            spec.place = Some(self.places[rng.random_range(0..self.places.len())].clone());
        }
        if rng.random_bool(p_optional) && !self.descriptions.is_empty() {
            spec.description = Some(self.descriptions[rng.random_range(0..self.descriptions.len())].clone());
        }
        Ok(spec)
    }
}

fn check_probability(p: f64) -> Result<(), GrammarError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(GrammarError::InvalidProbability(p))
    }
}

fn render_unchecked(spec: &PromptSpec) -> String {
    let mut out = format!("A {} of {}", spec.map_type, spec.region.name);
    for part in [&spec.place, &spec.description].into_iter().flatten() {
        out.push(' ');
        out.push_str(part);
    }
    out
}

/// Indexed inverse of [`Vocabulary::render`].
pub struct PromptParser<'a> {
    vocab: &'a Vocabulary,
    regions: HashMap<&'a str, RegionLevel>,
}

impl<'a> PromptParser<'a> {
    fn new(vocab: &'a Vocabulary) -> Self {
        let mut regions = HashMap::new();
        for level in RegionLevel::ALL {
            for name in vocab.level_entries(level) {
                regions.entry(name.as_str()).or_insert(level);
            }
        }
        PromptParser { vocab, regions }
    }

    pub fn parse(&self, prompt: &str) -> Result<PromptSpec, GrammarError> {
        let unparseable = || GrammarError::Unparseable(prompt.to_string());
        let rest = prompt.strip_prefix("A ").ok_or_else(unparseable)?;
        let mut found: Option<PromptSpec> = None;

        for map_type in MapType::ALL {
            let Some(body) = rest.strip_prefix(map_type.as_str()).and_then(|r| r.strip_prefix(" of ")) else {
                continue;
            };
            if !self.vocab.map_types.iter().any(|m| m == map_type.as_str()) {
                continue;
            }
            for (before_desc, description) in split_suffix(body, &self.vocab.descriptions) {
                for (region_name, place) in split_suffix(before_desc, &self.vocab.places) {
                    let Some(&level) = self.regions.get(region_name) else {
                        continue;
                    };
                    let spec = PromptSpec {
                        map_type,
                        region: Region::new(region_name, level),
                        place: place.map(str::to_string),
                        description: description.map(str::to_string),
                    };
                    if found.replace(spec).is_some() {
                        return Err(GrammarError::Ambiguous(prompt.to_string()));
                    }
                }
            }
        }
        found.ok_or_else(unparseable)
    }
}

/// Candidate splits of `text` into `(head, Some(entry))` where `text` ends
/// with `" " + entry`, plus the no-suffix split `(text, None)`.
fn split_suffix<'t, 'v>(text: &'t str, entries: &'v [String]) -> Vec<(&'t str, Option<&'v str>)> {
    let mut out = vec![(text, None)];
    for e in entries {
        if let Some(head) = text.strip_suffix(e.as_str()).and_then(|h| h.strip_suffix(' ')) {
            out.push((head, Some(e.as_str())));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabularyCounts {
    pub map_types: usize,
    pub states: usize,
    pub countries: usize,
    pub continents: usize,
    pub places: usize,
    pub descriptions: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    WrongCardinality { section: String, expected: usize, found: usize },
    Duplicate { section: String, entry: String },
    MissingPrefix { section: String, entry: String, prefix: String },
    BadWhitespace { section: String, entry: String },
    UnknownMapType { entry: String },
    AmbiguousRegion { name: String, levels: (RegionLevel, RegionLevel) },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::WrongCardinality { section, expected, found } => {
                write!(f, "[{section}] has {found} entries, expected {expected}")
            }
            Violation::Duplicate { section, entry } => write!(f, "[{section}] duplicate entry {entry:?}"),
            Violation::MissingPrefix { section, entry, prefix } => {
                write!(f, "[{section}] entry {entry:?} does not start with {prefix:?}")
            }
            Violation::BadWhitespace { section, entry } => {
                write!(f, "[{section}] entry {entry:?} has stray whitespace")
            }
            Violation::UnknownMapType { entry } => write!(f, "[map_types] unknown map type {entry:?}"),
            Violation::AmbiguousRegion { name, levels } => {
                write!(f, "region {name:?} appears at both {} and {} level", levels.0, levels.1)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationReport {
    pub counts: VocabularyCounts,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.counts;
        write!(
            f,
            "{} (counts {}/{}/{}/{}/{}/{})",
            if self.passed() { "pass" } else { "fail" },
            c.map_types,
            c.states,
            c.countries,
            c.continents,
            c.places,
            c.descriptions
        )?;
        for v in &self.violations {
            write!(f, "; {v}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn region(name: &str, level: RegionLevel) -> Region {
        Region::new(name, level)
    }

    #[test]
    fn renders_known_prompts() {
        let v = Vocabulary::shipped();
        let wi = PromptSpec::new(MapType::Choropleth, region("Wisconsin", RegionLevel::State));
        assert_eq!(v.render(&wi).unwrap(), "A choropleth map of Wisconsin");

        let us = PromptSpec::new(MapType::Choropleth, region("United States", RegionLevel::Country))
            .with_description("with warm colors");
        assert_eq!(v.render(&us).unwrap(), "A choropleth map of United States with warm colors");

        let nk = PromptSpec::new(MapType::Physical, region("North Korea", RegionLevel::Country))
            .with_place("on the pavement");
        assert_eq!(v.render(&nk).unwrap(), "A physical map of North Korea on the pavement");
    }

    #[test]
    fn render_rejects_unknown_entries() {
        let v = Vocabulary::shipped();
        let bad_place = PromptSpec::new(MapType::Heat, region("Asia", RegionLevel::Continent)).with_place("the table");
        match v.render(&bad_place) {
            Err(GrammarError::InvalidEntry { field, .. }) => assert_eq!(field, PromptField::Place),
            other => panic!("unexpected {other:?}"),
        }
        let wrong_level = PromptSpec::new(MapType::Heat, region("Asia", RegionLevel::Country));
        assert!(matches!(
            v.render(&wrong_level),
            Err(GrammarError::InvalidEntry { field: PromptField::Region, .. })
        ));
        let bad_desc = PromptSpec::new(MapType::Heat, region("Asia", RegionLevel::Continent)).with_description("warm");
        assert!(matches!(
            v.render(&bad_desc),
            Err(GrammarError::InvalidEntry { field: PromptField::Description, .. })
        ));
    }

    #[test]
    fn map_type_rejects_other_values() {
        assert!("topographic map".parse::<MapType>().is_err());
        assert_eq!("heat map".parse::<MapType>().unwrap(), MapType::Heat);
        assert!(matches!("city".parse::<RegionLevel>(), Err(GrammarError::UnknownLevel(_))));
    }

    #[test]
    fn region_enumeration_sizes_and_order() {
        let v = Vocabulary::shipped();
        assert_eq!(v.regions(RegionLevel::Continent).len(), 7);
        assert_eq!(v.regions(RegionLevel::State).len(), 50);
        assert_eq!(v.regions(RegionLevel::Country).len(), 100);
        for level in RegionLevel::ALL {
            let regions = v.regions(level);
            assert_eq!(regions, v.regions(level));
            assert!(regions.windows(2).all(|w| w[0].name.to_lowercase() < w[1].name.to_lowercase()));
        }
        assert_eq!(v.regions(RegionLevel::Continent)[0].name, "Africa");
    }

    #[test]
    fn shipped_vocabulary_validates() {
        let report = Vocabulary::shipped().validate();
        assert!(report.passed(), "{report}");
        assert_eq!(report.to_string(), "pass (counts 6/50/100/7/30/30)");
    }

    #[test]
    fn duplicate_place_fails_validation() {
        let mut v = Vocabulary::shipped();
        v.places[1] = "on the table".into();
        let report = v.validate();
        assert!(!report.passed());
        assert!(report
            .violations
            .iter()
            .any(|x| matches!(x, Violation::Duplicate { section, entry } if section == "places" && entry == "on the table")));
    }

    #[test]
    fn missing_prefix_fails_validation() {
        let mut v = Vocabulary::shipped();
        v.places[0] = "the table".into();
        let report = v.validate();
        assert!(report
            .violations
            .iter()
            .any(|x| matches!(x, Violation::MissingPrefix { entry, .. } if entry == "the table")));
    }

    #[test]
    fn wrong_cardinality_and_ambiguity_are_reported() {
        let mut v = Vocabulary::shipped();
        v.continents.push("Australia".into());
        let report = v.validate();
        assert!(report.violations.contains(&Violation::WrongCardinality {
            section: "continents".into(),
            expected: 7,
            found: 8
        }));
        assert!(report.violations.iter().any(|x| matches!(x, Violation::AmbiguousRegion { name, .. } if name == "Australia")));
    }

    #[test]
    fn text_layout_round_trips() {
        let v = Vocabulary::shipped();
        assert_eq!(Vocabulary::parse(&v.to_text()).unwrap(), v);
    }

    #[test]
    fn syntax_errors_carry_line_numbers() {
        match Vocabulary::parse("version=1\nstray\n") {
            Err(GrammarError::Syntax { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(Vocabulary::parse("[places]\n"), Err(GrammarError::Syntax { line: 1, .. })));
        assert!(matches!(
            Vocabulary::parse("version=1\n[cities]\n"),
            Err(GrammarError::Syntax { line: 2, .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic_and_closed() {
        let v = Vocabulary::shipped();
        let a = v.sample_prompt(7, RegionLevel::State, DEFAULT_P_OPTIONAL).unwrap();
        let b = v.sample_prompt(7, RegionLevel::State, DEFAULT_P_OPTIONAL).unwrap();
        assert_eq!(a, b);
        let c = v.sample_prompt(1, RegionLevel::Continent, DEFAULT_P_OPTIONAL).unwrap();
        assert!(v.continents.contains(&c.region.name));
        assert_eq!(c.region.level, RegionLevel::Continent);
        assert!(v.render(&c).is_ok());
    }

    #[test]
    fn sampling_probability_extremes() {
        let v = Vocabulary::shipped();
        for seed in 0..50 {
            let none = v.sample_prompt(seed, RegionLevel::Country, 0.0).unwrap();
            assert!(none.place.is_none() && none.description.is_none());
            let all = v.sample_prompt(seed, RegionLevel::Country, 1.0).unwrap();
            assert!(all.place.is_some() && all.description.is_some());
        }
        assert!(matches!(
            v.sample_prompt(0, RegionLevel::State, 1.5),
            Err(GrammarError::InvalidProbability(_))
        ));
    }

    #[test]
    fn parse_rejects_foreign_text() {
        let v = Vocabulary::shipped();
        assert!(v.parse_prompt("A choropleth map of Atlantis").is_err());
        assert!(v.parse_prompt("a choropleth map of Wisconsin").is_err());
        assert!(v.parse_prompt("A choropleth map of Wisconsin ").is_err());
        assert!(v.parse_prompt("A choropleth map of Wisconsin with warm colors on the table").is_err());
    }
}
