//! Lexical rules behind the offline backend: synonym table, stop-lists,
//! a small polarity lexicon and the value conflict relation.
//!
//! These are deliberately simple. They give every stage and every critique
//! kind a mechanical, testable meaning without a model.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;

use crate::text::{phrase_key, singularize};

const SYNONYMS: &[&[&str]] = &[
    &["amenities", "facilities"],
    &["price", "cost", "pricing"],
    &["size", "dimensions"],
    &["sound quality", "audio quality", "sound"],
    &["weight", "heft"],
    &["battery life", "battery", "battery runtime"],
];

const UNHELPFUL_ATTRIBUTES: &[&str] = &[
    "wheels",
    "number of wheels",
    "color",
    "colour",
    "logo",
    "website",
    "newsletter",
    "cookie",
    "copyright",
    "contact",
];

const UNHELPFUL_VALUES: &[&str] = &["n/a", "unknown", "none", "various", "yes", "no", "see above", "tbd"];

const POSITIVE: &[&str] = &[
    "good", "great", "excellent", "amazing", "superb", "fantastic", "nice", "wonderful", "best", "better",
    "comfortable", "clean", "quiet", "reliable", "stunning", "beautiful", "friendly", "spacious", "affordable",
    "cheap", "impressive", "solid", "decent", "pleasant", "powerful", "smooth",
];

const NEGATIVE: &[&str] = &[
    "bad", "poor", "terrible", "awful", "horrible", "worst", "worse", "uncomfortable", "dirty", "noisy",
    "unreliable", "ugly", "rude", "cramped", "expensive", "overpriced", "disappointing", "weak", "mediocre",
    "limited", "harsh", "flimsy",
];

const INTENSIFIERS: &[&str] = &["very", "really", "quite", "extremely", "so", "too", "pretty", "rather", "fairly", "super"];

const DESCRIPTIVE: &[&str] = &[
    "bright", "dark", "loud", "soft", "fast", "slow", "sporty", "accurate", "big", "small", "large", "light",
    "heavy", "new", "old", "modern", "classic", "high", "low", "long", "short", "warm", "cool", "fine", "okay",
    "ok", "average",
];

const NEGATORS: &[&str] = &["not", "never", "no", "hardly"];

const STOPWORDS: &[&str] = &[
    "a", "an", "the", "of", "in", "on", "at", "for", "from", "with", "to", "and", "or", "is", "are", "its", "it",
];

pub const CLAIM_MARKERS: &[&str] = &["and", ";", "while"];

/// Values longer than this many tokens count as long complex claims.
pub const LONG_CLAIM_TOKENS: usize = 25;

/// Values with fewer tokens than this may lack context.
pub const MIN_CONTEXT_TOKENS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValueKind {
    Numeric,
    Descriptive,
}

/// A number and the unit that follows (or precedes, for `$`).
#[derive(Debug, Clone, PartialEq)]
pub struct Quantity {
    pub amount: f64,
    pub unit: String,
}

struct Tables {
    synonym_of: HashMap<String, String>,
    unhelpful_attributes: HashSet<String>,
    unhelpful_values: HashSet<String>,
    positive: HashSet<&'static str>,
    negative: HashSet<&'static str>,
    qualifiers: HashSet<&'static str>,
}

fn tables() -> &'static Tables {
    static T: OnceLock<Tables> = OnceLock::new();
    T.get_or_init(|| {
        let mut synonym_of = HashMap::new();
        for group in SYNONYMS {
            let canonical = phrase_key(group[0]);
            for m in *group {
                synonym_of.insert(phrase_key(m), canonical.clone());
            }
        }
        let qualifiers = POSITIVE
            .iter()
            .chain(NEGATIVE)
            .chain(INTENSIFIERS)
            .chain(DESCRIPTIVE)
            .copied()
            .collect();
        Tables {
            synonym_of,
            unhelpful_attributes: UNHELPFUL_ATTRIBUTES.iter().map(|a| phrase_key(a)).collect(),
            unhelpful_values: UNHELPFUL_VALUES.iter().map(|v| phrase_key(v)).collect(),
            positive: POSITIVE.iter().copied().collect(),
            negative: NEGATIVE.iter().copied().collect(),
            qualifiers,
        }
    })
}

/// Lowercase word tokens with edge punctuation removed.
pub fn words(s: &str) -> Vec<String> {
    s.split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| !c.is_alphanumeric() && c != '$' && c != '%')
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Attribute identity after normalization and the synonym table.
pub fn attribute_key(attribute: &str) -> String {
    let k = phrase_key(attribute);
    tables().synonym_of.get(&k).cloned().unwrap_or(k)
}

pub fn is_unhelpful_attribute(attribute: &str) -> bool {
    tables().unhelpful_attributes.contains(&phrase_key(attribute))
}

pub fn is_unhelpful_value(value: &str) -> bool {
    tables().unhelpful_values.contains(&phrase_key(value))
}

pub fn is_qualifier(word: &str) -> bool {
    tables().qualifiers.contains(word)
}

fn is_negator(word: &str) -> bool {
    NEGATORS.contains(&word)
}

/// Sign of the summed word polarity; a negator flips the next polar word.
pub fn polarity(value: &str) -> i32 {
    let t = tables();
    let mut sum: i32 = 0;
    let mut negate = false;
    for w in words(value) {
        if is_negator(&w) {
            negate = !negate;
            continue;
        }
        let p = if t.positive.contains(w.as_str()) {
            1
        } else if t.negative.contains(w.as_str()) {
            -1
        } else {
            0
        };
        if p != 0 {
            sum += if negate { -p } else { p };
            negate = false;
        }
    }
    sum.signum()
}

/// The last content word, singularized.
pub fn head(value: &str) -> Option<String> {
    words(value)
        .into_iter()
        .rev()
        .find(|w| !is_qualifier(w) && !is_negator(w) && !STOPWORDS.contains(&w.as_str()))
        .map(|w| singularize(&w))
}

pub fn has_digit(s: &str) -> bool {
    s.chars().any(|c| c.is_ascii_digit())
}

/// A bare qualifier such as "good" or "very bright": too short, no number,
/// nothing but evaluative words.
pub fn insufficient_context(value: &str) -> bool {
    let w = words(value);
    !w.is_empty()
        && w.len() < MIN_CONTEXT_TOKENS
        && !has_digit(value)
        && w.iter().all(|t| is_qualifier(t) || is_negator(t))
}

pub fn value_kind(value: &str) -> ValueKind {
    if has_digit(value) {
        ValueKind::Numeric
    } else {
        ValueKind::Descriptive
    }
}

fn parse_amount(token: &str) -> Option<f64> {
    let digits: String = token
        .chars()
        .skip_while(|c| !c.is_ascii_digit())
        .take_while(|c| c.is_ascii_digit() || *c == '.' || *c == ',')
        .filter(|c| *c != ',')
        .collect();
    digits.trim_end_matches('.').parse().ok()
}

/// The first quantity in `value`.
pub fn quantity(value: &str) -> Option<Quantity> {
    let tokens: Vec<&str> = value.split_whitespace().collect();
    let i = tokens.iter().position(|t| has_digit(t))?;
    let tok = tokens[i].trim_matches(|c: char| matches!(c, '(' | ')' | ',' | '.' | ';' | ':'));
    let amount = parse_amount(tok)?;
    let unit = if tok.starts_with('$') {
        "$".to_string()
    } else if tok.ends_with('%') {
        "%".to_string()
    } else {
        let suffix: String = tok
            .chars()
            .skip_while(|c| !c.is_ascii_digit())
            .skip_while(|c| c.is_ascii_digit() || *c == '.' || *c == ',')
            .collect();
        if suffix.chars().any(char::is_alphabetic) {
            singularize(&suffix.to_lowercase())
        } else {
            tokens
                .get(i + 1)
                .map(|t| words(t))
                .and_then(|w| w.into_iter().next())
                .filter(|w| w.chars().all(char::is_alphabetic))
                .map(|w| singularize(&w))
                .unwrap_or_default()
        }
    };
    Some(Quantity { amount, unit })
}

/// Two values that cannot both describe the same entity: different
/// amounts of the same unit, or opposite polarity about the same thing.
pub fn conflicts(a: &str, b: &str) -> bool {
    if let (Some(qa), Some(qb)) = (quantity(a), quantity(b)) {
        if qa.unit == qb.unit {
            return qa.amount != qb.amount;
        }
    }
    let (pa, pb) = (polarity(a), polarity(b));
    if pa != 0 && pb != 0 && pa != pb {
        return match (head(a), head(b)) {
            (Some(ha), Some(hb)) => ha == hb,
            _ => true,
        };
    }
    false
}

fn key_tokens(s: &str) -> Vec<String> {
    phrase_key(s).split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect()
}

/// One value's normalized tokens are all contained in the other's.
pub fn token_subset(a: &str, b: &str) -> bool {
    let (ta, tb) = (key_tokens(a), key_tokens(b));
    if ta.is_empty() || tb.is_empty() {
        return false;
    }
    let (small, large) = if ta.len() <= tb.len() { (ta, tb) } else { (tb, ta) };
    let large: HashSet<_> = large.into_iter().collect();
    small.iter().all(|t| large.contains(t))
}

/// Values that should have been one group: one restates the other.
pub fn under_merged(a: &str, b: &str) -> bool {
    token_subset(a, b) && !conflicts(a, b)
}

pub fn marker_count(value: &str) -> usize {
    let words = value
        .split_whitespace()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|t| t == "and" || t == "while")
        .count();
    words + value.matches(';').count()
}

pub fn is_long_complex(value: &str) -> bool {
    crate::text::token_count(value) > LONG_CLAIM_TOKENS || marker_count(value) > 1
}

fn split_on<'a>(value: &'a str, sep: &str) -> Vec<&'a str> {
    value
        .split(sep)
        .map(|p| p.trim_matches(|c: char| c.is_whitespace() || matches!(c, ',' | ';' | '.')))
        .filter(|p| !p.is_empty())
        .collect()
}

/// Break a claim at its outermost conjunction: `;` first, then "while",
/// then "and", then commas for an overlong claim without markers. Every
/// part is a substring of `value`.
pub fn split_claim(value: &str) -> Option<Vec<String>> {
    let lower = value.to_ascii_lowercase();
    let seps: [&str; 3] = [";", " while ", " and "];
    for sep in seps {
        if lower.contains(sep) {
            let parts = split_ascii_ci(value, sep);
            if parts.len() > 1 {
                return Some(parts);
            }
        }
    }
    if crate::text::token_count(value) > LONG_CLAIM_TOKENS {
        let parts = split_on(value, ",");
        if parts.len() > 1 {
            return Some(parts.into_iter().map(str::to_string).collect());
        }
    }
    None
}

fn split_ascii_ci(value: &str, sep: &str) -> Vec<String> {
    let lower = value.to_ascii_lowercase();
    let mut parts = Vec::new();
    let mut start = 0;
    for (at, _) in lower.match_indices(sep) {
        parts.push(&value[start..at]);
        start = at + sep.len();
    }
    parts.push(&value[start..]);
    parts
        .into_iter()
        .map(|p| p.trim_matches(|c: char| c.is_whitespace() || matches!(c, ',' | ';' | '.')))
        .filter(|p| !p.is_empty())
        .map(str::to_string)
        .collect()
}

/// Indices of a maximum-weight subset of `items` whose members are
/// pairwise compatible. Exact for up to `exact_limit` items (ties go to the
/// lexicographically smallest index list), greedy by weight beyond.
pub fn max_compatible_subset(
    weights: &[u64],
    compatible: impl Fn(usize, usize) -> bool,
    exact_limit: usize,
) -> (Vec<usize>, bool) {
    let n = weights.len();
    if n == 0 {
        return (Vec::new(), true);
    }
    let mut ok = vec![vec![true; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let c = compatible(i, j);
            ok[i][j] = c;
            ok[j][i] = c;
        }
    }
    if n > exact_limit {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| weights[b].cmp(&weights[a]).then(a.cmp(&b)));
        let mut chosen: Vec<usize> = Vec::new();
        for i in order {
            if chosen.iter().all(|&j| ok[i][j]) {
                chosen.push(i);
            }
        }
        chosen.sort_unstable();
        return (chosen, false);
    }
    let mut best: (u64, Vec<usize>) = (0, Vec::new());
    let mut current = Vec::new();
    search(0, 0, &mut current, &mut best, weights, &ok);
    (best.1, true)
}

fn search(
    i: usize,
    weight: u64,
    current: &mut Vec<usize>,
    best: &mut (u64, Vec<usize>),
    weights: &[u64],
    ok: &[Vec<bool>],
) {
    let n = weights.len();
    if i == n {
        // include-first recursion visits index lists in lexicographic
        // order, so only a strictly heavier set replaces the incumbent
        if weight > best.0 || (best.1.is_empty() && !current.is_empty()) {
            *best = (weight, current.clone());
        }
        return;
    }
    let remaining: u64 = weights[i..].iter().sum();
    if weight + remaining < best.0 || (weight + remaining == best.0 && !best.1.is_empty()) {
        return;
    }
    if current.iter().all(|&j| ok[i][j]) {
        current.push(i);
        search(i + 1, weight + weights[i], current, best, weights, ok);
        current.pop();
    }
    search(i + 1, weight, current, best, weights, ok);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synonyms_share_a_key() {
        assert_eq!(attribute_key("Amenities"), attribute_key("facilities"));
        assert_eq!(attribute_key("room"), attribute_key("rooms"));
        assert_eq!(attribute_key("cost"), attribute_key("Price"));
        assert_ne!(attribute_key("price"), attribute_key("size"));
    }

    #[test]
    fn conflict_relation() {
        assert!(conflicts("45 liters", "46 liters"));
        assert!(!conflicts("46 liters", "46 liters in volume"));
        assert!(conflicts("$10", "$5000"));
        assert!(conflicts("good view", "bad view"));
        assert!(conflicts("good", "bad"));
        assert!(!conflicts("good", "great"));
        assert!(!conflicts("rooftop pool", "free parking"));
        assert!(!conflicts("not bad", "good"));
        assert!(!conflicts("10 hours", "3.3 gallons"));
    }

    #[test]
    fn quantities() {
        assert_eq!(quantity("$1,200 per night").unwrap(), Quantity { amount: 1200.0, unit: "$".into() });
        assert_eq!(quantity("holds 3.3 gallons").unwrap(), Quantity { amount: 3.3, unit: "gallon".into() });
        assert_eq!(quantity("20% off").unwrap().unit, "%");
        assert_eq!(quantity("5kg").unwrap(), Quantity { amount: 5.0, unit: "kg".into() });
        assert!(quantity("none").is_none());
    }

    #[test]
    fn context_rule() {
        assert!(insufficient_context("good"));
        assert!(insufficient_context("very bright"));
        assert!(!insufficient_context("good view from the rooftop"));
        assert!(!insufficient_context("10"));
        assert!(!insufficient_context("rooftop"));
    }

    #[test]
    fn claim_splitting() {
        assert!(is_long_complex("a powerful engine and a quiet cabin while cruising"));
        assert!(!is_long_complex("a powerful engine and a quiet cabin"));
        assert_eq!(
            split_claim("a crisp display; strong speakers and a long battery and fast charging").unwrap(),
            vec!["a crisp display", "strong speakers and a long battery and fast charging"]
        );
        assert_eq!(
            split_claim("strong speakers and a long battery and fast charging").unwrap(),
            vec!["strong speakers", "a long battery", "fast charging"]
        );
        assert_eq!(split_claim("plain"), None);
    }

    #[test]
    fn subset_search_prefers_weight_then_earliest() {
        // 0 and 1 conflict, 2 is compatible with both
        let compat = |i: usize, j: usize| !matches!((i.min(j), i.max(j)), (0, 1));
        assert_eq!(max_compatible_subset(&[1, 9, 1], compat, 20).0, vec![1, 2]);
        assert_eq!(max_compatible_subset(&[5, 5, 1], compat, 20).0, vec![0, 2]);
        assert_eq!(max_compatible_subset(&[5, 5, 1], compat, 1), (vec![0, 2], false));
        assert_eq!(max_compatible_subset(&[], compat, 20), (vec![], true));
    }
}
