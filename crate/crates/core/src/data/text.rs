//! Lexical query/title similarity features.
//!
//! Character trigrams are hashed into a sparse count vector and compared
//! with cosine similarity; whitespace tokens are compared with Jaccard
//! overlap. Both are computed on lowercased text.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use super::QuerySession;

/// Number of features [`text_similarity`] emits.
pub const TEXT_FEATURES: usize = 2;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(chars: &[char]) -> u64 {
    let mut h = FNV_OFFSET;
    let mut buf = [0u8; 4];
    for c in chars {
        for b in c.encode_utf8(&mut buf).bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h
}

fn lowercase(s: &str) -> String {
    s.chars().flat_map(char::to_lowercase).collect()
}

/// Hashed character-trigram counts. Strings shorter than three characters
/// contribute a single gram made of the whole string.
pub fn trigram_counts(s: &str) -> BTreeMap<u64, f64> {
    let chars: Vec<char> = lowercase(s).chars().collect();
    let mut counts = BTreeMap::new();
    if chars.is_empty() {
        return counts;
    }
    if chars.len() < 3 {
        *counts.entry(fnv1a(&chars)).or_insert(0.0) += 1.0;
        return counts;
    }
    for w in chars.windows(3) {
        *counts.entry(fnv1a(w)).or_insert(0.0) += 1.0;
    }
    counts
}

fn cosine(a: &BTreeMap<u64, f64>, b: &BTreeMap<u64, f64>) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let dot: f64 = a.iter().filter_map(|(k, v)| b.get(k).map(|w| v * w)).sum();
    let na: f64 = a.values().map(|v| v * v).sum();
    let nb: f64 = b.values().map(|v| v * v).sum();
    (dot / (libm::sqrt(na) * libm::sqrt(nb))).clamp(0.0, 1.0)
}

fn jaccard(a: &str, b: &str) -> f64 {
    let (a, b) = (lowercase(a), lowercase(b));
    let ta: BTreeSet<&str> = a.split_whitespace().collect();
    let tb: BTreeSet<&str> = b.split_whitespace().collect();
    let union = ta.union(&tb).count();
    if union == 0 {
        return 0.0;
    }
    ta.intersection(&tb).count() as f64 / union as f64
}

/// `[trigram cosine, token jaccard]` between a query and a product title.
/// Empty inputs yield zeros.
pub fn text_similarity(query: &str, title: &str) -> [f64; TEXT_FEATURES] {
    let cos = cosine(&trigram_counts(query), &trigram_counts(title));
    [cos, jaccard(query, title)]
}

/// Appends the similarity features to every item. Items without both texts
/// get zeros so that all items keep the same width.
pub fn append_text_features(sessions: &mut [QuerySession]) {
    for item in sessions.iter_mut().flat_map(|s| s.items.iter_mut()) {
        let sim = match (&item.query_text, &item.title_text) {
            (Some(q), Some(t)) => text_similarity(q, t),
            _ => [0.0; TEXT_FEATURES],
        };
        item.features.extend_from_slice(&sim);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;
    use std::string::ToString;

    /// Exact trigram cosine computed on the literal strings, no hashing.
    fn oracle_cosine(a: &str, b: &str) -> f64 {
        let grams = |s: &str| {
            let c: Vec<char> = s.to_lowercase().chars().collect();
            let mut m: HashMap<String, f64> = HashMap::new();
            if c.len() < 3 {
                if !c.is_empty() {
                    *m.entry(c.iter().collect()).or_default() += 1.0;
                }
            } else {
                for i in 0..c.len() - 2 {
                    *m.entry(c[i..i + 3].iter().collect()).or_default() += 1.0;
                }
            }
            m
        };
        let (ga, gb) = (grams(a), grams(b));
        if ga.is_empty() || gb.is_empty() {
            return 0.0;
        }
        let mut dot = 0.0;
        for (k, v) in &ga {
            if let Some(w) = gb.get(k) {
                dot += v * w;
            }
        }
        let na: f64 = ga.values().map(|v| v * v).sum::<f64>().sqrt();
        let nb: f64 = gb.values().map(|v| v * v).sum::<f64>().sqrt();
        dot / (na * nb)
    }

    #[test]
    fn identical_strings_have_unit_cosine() {
        let [cos, jac] = text_similarity("shoes", "shoes");
        assert!((cos - 1.0).abs() < 1e-12);
        assert_eq!(jac, 1.0);
    }

    #[test]
    fn empty_input_is_zero() {
        assert_eq!(text_similarity("", "anything"), [0.0, 0.0]);
        assert_eq!(text_similarity("anything", ""), [0.0, 0.0]);
    }

    #[test]
    fn matches_trigram_oracle() {
        // "red shoe": red, ed_, d_s, _sh, sho, hoe; "blue shoe": blu, lue, ue_, e_s, _sh, sho, hoe
        let [cos, jac] = text_similarity("red shoe", "blue shoe");
        let expected = 3.0 / (6.0f64.sqrt() * 7.0f64.sqrt());
        assert!((cos - expected).abs() < 1e-12);
        assert!((cos - oracle_cosine("red shoe", "blue shoe")).abs() < 1e-12);
        assert!((jac - 1.0 / 3.0).abs() < 1e-12);

        for (a, b) in [
            ("Running Shoes men", "running shoe for men"),
            ("ab", "abc"),
            ("ab", "ab"),
            ("wireless earbuds", "Earbuds, wireless (black)"),
        ] {
            let [cos, _] = text_similarity(a, b);
            assert!((cos - oracle_cosine(a, b)).abs() < 1e-12, "{a} / {b}");
        }
    }

    #[test]
    fn append_keeps_widths_consistent() {
        let mut s = QuerySession {
            query_id: "q".to_string(),
            domain: 0,
            timestamp: 0,
            items: alloc::vec![
                crate::data::Item {
                    features: alloc::vec![1.0],
                    label: 1.0,
                    query_text: Some("usb cable".into()),
                    title_text: Some("usb c cable".into()),
                },
                crate::data::Item::new(alloc::vec![2.0], 0.0),
            ],
        };
        append_text_features(core::slice::from_mut(&mut s));
        assert_eq!(s.items[0].features.len(), 3);
        assert_eq!(s.items[1].features, alloc::vec![2.0, 0.0, 0.0]);
        assert!(s.items[0].features[1] > 0.0);
    }
}
