//! String normalization used for comparisons across the crate.

use unicode_normalization::UnicodeNormalization;

pub fn nfc(s: &str) -> String {
    match unicode_normalization::is_nfc_quick(s.chars()) {
        unicode_normalization::IsNormalized::Yes => s.to_string(),
        _ => s.nfc().collect(),
    }
}

pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Identity key for attribute names: NFC, lowercase, collapsed whitespace.
/// "Room" and " room " share a key; "rooms" does not.
pub fn member_key(s: &str) -> String {
    collapse_whitespace(&nfc(s).to_lowercase())
}

/// Looser key for equivalence of phrases: [`member_key`] with edge
/// punctuation removed and each token singularized.
pub fn phrase_key(s: &str) -> String {
    member_key(s)
        .split(' ')
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric() && c != '$' && c != '%'))
        .filter(|t| !t.is_empty())
        .map(singularize)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Naive English singularization, good enough for "rooms"/"amenities".
pub fn singularize(token: &str) -> String {
    let n = token.chars().count();
    if n > 4 && token.ends_with("ies") {
        format!("{}y", &token[..token.len() - 3])
    } else if n > 3
        && token.ends_with('s')
        && !token.ends_with("ss")
        && !token.ends_with("us")
        && !token.ends_with("is")
        && !token.chars().all(|c| c.is_ascii_digit() || c == 's')
    {
        token[..token.len() - 1].to_string()
    } else {
        token.to_string()
    }
}

pub fn token_count(s: &str) -> usize {
    s.split_whitespace().count()
}

/// Case-insensitive whole-word search for `name` inside `haystack`.
pub fn mentions(haystack: &str, name: &str) -> bool {
    let needle = member_key(name);
    if needle.is_empty() {
        return false;
    }
    let hay = member_key(haystack);
    let mut start = 0;
    while let Some(pos) = hay[start..].find(&needle) {
        let at = start + pos;
        let end = at + needle.len();
        let before_ok = hay[..at]
            .chars()
            .next_back()
            .map_or(true, |c| !c.is_alphanumeric());
        let after_ok = hay[end..].chars().next().map_or(true, |c| !c.is_alphanumeric());
        if before_ok && after_ok {
            return true;
        }
        start = at + hay[at..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

/// Hex SHA-256 prefix used for content digests and trace ids.
pub fn digest(data: &str) -> String {
    use sha2::{Digest, Sha256};
    let hash = Sha256::digest(data.as_bytes());
    hex::encode(&hash[..8])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn member_key_ignores_case_and_spacing() {
        assert_eq!(member_key("  Battery   Life "), "battery life");
        assert_eq!(member_key("Room"), member_key("room"));
        assert_ne!(member_key("room"), member_key("rooms"));
    }

    #[test]
    fn nfc_composes() {
        assert_eq!(member_key("cafe\u{301}"), member_key("caf\u{e9}"));
    }

    #[test]
    fn phrase_key_singularizes() {
        assert_eq!(phrase_key("Rooms"), "room");
        assert_eq!(phrase_key("amenities"), "amenity");
        assert_eq!(phrase_key("facilities."), "facility");
        assert_eq!(phrase_key("glass"), "glass");
        assert_eq!(phrase_key("46 liters"), "46 liter");
        assert_eq!(phrase_key("bus"), "bus");
    }

    #[test]
    fn mentions_respects_word_boundaries() {
        assert!(mentions("The camera of iPhone 14 Pro is great.", "iphone 14 pro"));
        assert!(mentions("The camera of iPhone 14 is great.", "iPhone 14"));
        assert!(!mentions("The camera of iPhone 14 is great.", "iPhone 14 Pro"));
        assert!(!mentions("SpeakerXL is loud", "SpeakerX"));
        assert!(mentions("SpeakerX's battery", "SpeakerX"));
    }
}
