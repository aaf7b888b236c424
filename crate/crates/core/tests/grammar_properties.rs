use std::collections::HashSet;

use mapforensics_core::prompt_grammar::{MapType, PromptSpec, RegionLevel, Vocabulary, DEFAULT_P_OPTIONAL};
use proptest::prelude::*;

fn optional(entries: &[String]) -> Vec<Option<String>> {
    std::iter::once(None).chain(entries.iter().cloned().map(Some)).collect()
}

#[test]
fn no_optional_prompts_are_all_distinct() {
    let v = Vocabulary::shipped();
    let rendered: HashSet<String> = MapType::ALL
        .iter()
        .flat_map(|&m| v.all_regions().into_iter().map(move |r| PromptSpec::new(m, r)))
        .map(|s| v.render(&s).unwrap())
        .collect();
    assert_eq!(rendered.len(), 6 * 157);
    assert_eq!(rendered.len(), 942);
}

#[test]
fn full_cross_product_round_trips() {
    let v = Vocabulary::shipped();
    let parser = v.parser();
    let places = optional(&v.places);
    let descriptions = optional(&v.descriptions);
    let mut count = 0usize;
    for map_type in MapType::ALL {
        for region in v.all_regions() {
            for place in &places {
                for description in &descriptions {
                    let spec = PromptSpec { map_type, region: region.clone(), place: place.clone(), description: description.clone() };
                    let text = v.render(&spec).unwrap();
                    assert!(!text.contains("  ") && !text.ends_with(' '), "{text:?}");
                    assert_eq!(parser.parse(&text).unwrap(), spec);
                    count += 1;
                }
            }
        }
    }
    assert_eq!(count, 6 * 157 * 31 * 31);
}

/// Brute-force sampling oracle: 10,000 seeds, map-type frequencies and a
/// chi-square goodness-of-fit statistic against the uniform distribution.
#[test]
fn map_type_sampling_is_uniform() {
    let v = Vocabulary::shipped();
    let draws = 10_000;
    let mut counts = [0usize; 6];
    let mut with_place = 0usize;
    for seed in 0..draws {
        let spec = v.sample_prompt(seed as u64, RegionLevel::State, DEFAULT_P_OPTIONAL).unwrap();
        counts[MapType::ALL.iter().position(|m| *m == spec.map_type).unwrap()] += 1;
        with_place += spec.place.is_some() as usize;
    }
    let expected = draws as f64 / 6.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    for c in counts {
        let f = c as f64 / draws as f64;
        assert!((f - 1.0 / 6.0).abs() <= 0.02, "frequency {f}");
    }
    // df = 5, p = 0.001 critical value.
    assert!(chi2 < 20.515, "chi2 {chi2}");
    let p = with_place as f64 / draws as f64;
    assert!((p - 0.5).abs() < 0.02, "place inclusion {p}");
}

fn arb_spec() -> impl Strategy<Value = PromptSpec> {
    let v = Vocabulary::shipped();
    let regions = v.all_regions();
    let places = optional(&v.places);
    let descriptions = optional(&v.descriptions);
    (0..6usize, 0..regions.len(), 0..places.len(), 0..descriptions.len()).prop_map(move |(m, r, p, d)| PromptSpec {
        map_type: MapType::ALL[m],
        region: regions[r].clone(),
        place: places[p].clone(),
        description: descriptions[d].clone(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn random_specs_round_trip(spec in arb_spec()) {
        let v = Vocabulary::shipped();
        let text = v.render(&spec).unwrap();
        prop_assert_eq!(v.parse_prompt(&text).unwrap(), spec);
    }

    #[test]
    fn sampling_is_pure(seed in any::<u64>(), level in 0..3usize) {
        let v = Vocabulary::shipped();
        let level = RegionLevel::ALL[level];
        let a = v.sample_prompt(seed, level, DEFAULT_P_OPTIONAL).unwrap();
        prop_assert_eq!(&a, &v.sample_prompt(seed, level, DEFAULT_P_OPTIONAL).unwrap());
        prop_assert_eq!(a.region.level, level);
        prop_assert!(v.render(&a).is_ok());
    }
}
