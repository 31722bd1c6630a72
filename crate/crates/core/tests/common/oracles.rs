//! Reference implementations the library is checked against. Each one is
//! the slow, obvious version of a metric or property.

use std::collections::HashMap;

use contrast_core::model::{ComparisonRow, ComparisonSummary, ContrastLevel, Entity, RunMetadata};
use contrast_core::pipeline::RunOutput;
use contrast_core::text::nfc;
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Values outside the largest pairwise-compatible subset, by trying every
/// subset.
pub fn brute_inconsistency(values: &[String], compatible: impl Fn(&str, &str) -> bool) -> usize {
    let n = values.len();
    let mut best = 0;
    for mask in 0u32..(1 << n) {
        let members: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let ok = members
            .iter()
            .enumerate()
            .all(|(k, &i)| members[k + 1..].iter().all(|&j| compatible(&values[i], &values[j])));
        if ok {
            best = best.max(members.len());
        }
    }
    n - best
}

const VALUE_POOL: &[&str] = &[
    "45 liters",
    "46 liters",
    "46 liters in volume",
    "46 liters of space",
    "50 liters",
    "good",
    "great",
    "bad",
    "very good",
    "poor",
    "not good",
    "3 hours",
    "4 hours",
    "3 hours of playback",
    "$10",
    "$5000",
    "$10 per month",
    "quiet",
    "noisy",
    "spacious",
];

pub fn random_values(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<String> {
    let n = rng.gen_range(0..=max_len);
    (0..n).map(|_| VALUE_POOL.choose(rng).unwrap().to_string()).collect()
}

/// Attribute names grouped by meaning, written independently of the
/// library's tables. Case and plural variants are deliberate.
const CLUSTERS: &[&[&str]] = &[
    &["price", "cost", "pricing", "Price", "prices"],
    &["size", "dimensions", "Size"],
    &["amenities", "facilities", "amenity"],
    &["room", "rooms", "Rooms"],
    &["weight", "heft"],
    &["battery life", "battery", "battery runtime", "batteries"],
    &["sound quality", "audio quality", "sound"],
    &["range"],
    &["storage"],
    &["warranty", "warranties"],
    &["zoom"],
    &["screen resolution"],
];

/// A random attribute list and the number of distinct clusters in it.
pub fn synthetic_attributes(rng: &mut ChaCha8Rng) -> (Vec<String>, usize) {
    let k = rng.gen_range(1..=CLUSTERS.len());
    let mut attrs = Vec::new();
    for cluster in CLUSTERS.choose_multiple(rng, k) {
        let m = rng.gen_range(1..=cluster.len());
        attrs.extend(cluster.choose_multiple(rng, m).map(|s| s.to_string()));
    }
    attrs.shuffle(rng);
    (attrs, k)
}

pub fn expected_redundancy(clusters: usize, attributes: usize) -> Ratio<u64> {
    Ratio::new((attributes - clusters) as u64, attributes as u64)
}

/// A summary whose rows carry the given attributes and nothing else.
pub fn summary_with_attributes(attrs: &[String]) -> ComparisonSummary {
    ComparisonSummary {
        entity_a: Entity::new("a", "A"),
        entity_b: Entity::new("b", "B"),
        rows: attrs
            .iter()
            .map(|a| ComparisonRow {
                attribute: a.clone(),
                member_attributes: vec![a.clone()],
                cell_a: vec![],
                cell_b: vec![],
                contrast_level: ContrastLevel::Low,
                importance: 0.0,
                rank_score: 0.0,
            })
            .collect(),
        run_metadata: RunMetadata {
            backend_id: "synthetic".into(),
            config_hash: String::new(),
            duration_ms: None,
            trace_ids: vec![],
        },
    }
}

/// Spans of a run that are not verbatim (after NFC) in the document they
/// cite. `sources` maps URL to the text the corpus was built from.
pub fn non_extractive_spans(out: &RunOutput, sources: &HashMap<String, String>) -> Vec<String> {
    let norm: HashMap<&str, String> = sources.iter().map(|(u, t)| (u.as_str(), nfc(t))).collect();
    let mut bad = Vec::new();
    for row in &out.summary.rows {
        for cell in row.cell_a.iter().chain(&row.cell_b) {
            let cited: Vec<&String> = cell.source_urls.iter().filter_map(|u| norm.get(u.as_str())).collect();
            if cited.len() != cell.source_urls.len() {
                bad.push(format!("{:?} cites an unknown url", cell.value));
            }
            if !cited.iter().any(|t| t.contains(&nfc(&cell.value))) {
                bad.push(format!("value {:?}", cell.value));
            }
            for e in &cell.evidence {
                if !norm.get(e.url.as_str()).is_some_and(|t| t.contains(&nfc(&e.text))) {
                    bad.push(format!("evidence {:?} @ {}", e.text, e.url));
                }
            }
        }
    }
    for ex in out.extractions.iter().flatten() {
        if !norm.get(ex.source_url.as_str()).is_some_and(|t| t.contains(&nfc(&ex.evidence))) {
            bad.push(format!("extraction evidence {:?} @ {}", ex.evidence, ex.source_url));
        }
    }
    bad
}

const ATTRS: &[&str] = &[
    "battery life", "weight", "price", "screen", "range", "storage", "design", "sound", "zoom", "view",
    "camera", "warranty", "keyboard", "color", "wheels", "build",
];

const VALUES: &[&str] = &[
    "12 hours", "450 grams", "$99", "bright", "good", "great", "bad", "unknown", "n/a", "sturdy and light while cheap",
    "cafe\u{301}-grade crema", "naïve but fun", "3\u{0301}0 meters", "40 miles", "very good", "poor", "1.5 kg",
    "the frame stays rigid and the buttons click firmly while the lid closes tightly", "noisy", "excellent",
];

const FILLER: &[&str] = &[
    "Shipping took three days to arrive at the door.",
    "We tested it for two weeks in a small apartment.",
    "Click here to subscribe!!!",
    "$$$ 123 456 ###",
    "Short one.",
    "Overall, the unit feels like a reasonable purchase for most people.",
    "Übersicht: Der Test läuft seit Jänner.",
    "It is what it is.",
];

fn fuzz_sentence(rng: &mut ChaCha8Rng, me: &str, other: &str) -> String {
    let ent = if rng.gen_bool(0.1) { other } else { me };
    let attr = ATTRS.choose(rng).unwrap();
    let val = VALUES.choose(rng).unwrap();
    match rng.gen_range(0..6) {
        0 => format!("The {attr} of {ent} is {val}."),
        1 => format!("{ent}'s {attr} is {val}."),
        2 => format!("The {attr} of {ent} are {val}!"),
        3 => format!("Testers agree {ent} has a {val} {attr} in daily use."),
        _ => FILLER.choose(rng).unwrap().to_string(),
    }
}

/// A random two-entity corpus, three to six documents per side.
pub fn fuzz_corpus(rng: &mut ChaCha8Rng) -> Vec<(&'static str, Vec<String>)> {
    let names = [("Orion", "Vega"), ("Vega", "Orion")];
    names
        .iter()
        .map(|(me, other)| {
            let docs = (0..rng.gen_range(3..=6))
                .map(|_| {
                    let n = rng.gen_range(1..12);
                    let sep = if rng.gen_bool(0.2) { "\n" } else { " " };
                    (0..n).map(|_| fuzz_sentence(rng, me, other)).collect::<Vec<_>>().join(sep)
                })
                .collect();
            (*me, docs)
        })
        .collect()
}
