//! Reversible character-unit transliteration with longest-match lookup.

use std::fs;
use std::path::Path;

use super::sentence::Sentence;
use super::TextError;

/// Bijective map between script units and roman units. Multi-character units
/// are supported; lookup always takes the longest matching unit.
#[derive(Debug, Clone)]
pub struct TransliterationTable {
    /// (source unit, roman unit), sorted by source length descending.
    forward: Vec<(String, String)>,
    /// (roman unit, source unit), sorted by roman length descending.
    backward: Vec<(String, String)>,
}

/// How much of the input the table actually covered.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Coverage {
    pub mapped: usize,
    pub passed_through: usize,
}

impl TransliterationTable {
    pub fn from_pairs(pairs: Vec<(String, String)>) -> Result<Self, TextError> {
        let mut seen_src = std::collections::BTreeSet::new();
        let mut seen_dst = std::collections::BTreeSet::new();
        for (a, b) in &pairs {
            if a.is_empty() || b.is_empty() {
                return Err(TextError::NotBijective("empty unit".into()));
            }
            if !seen_src.insert(a.clone()) {
                return Err(TextError::NotBijective(format!("duplicate source unit `{a}`")));
            }
            if !seen_dst.insert(b.clone()) {
                return Err(TextError::NotBijective(format!("duplicate target unit `{b}`")));
            }
        }
        let mut forward = pairs.clone();
        forward.sort_by(|x, y| y.0.len().cmp(&x.0.len()).then_with(|| x.0.cmp(&y.0)));
        let mut backward: Vec<(String, String)> =
            pairs.into_iter().map(|(a, b)| (b, a)).collect();
        backward.sort_by(|x, y| y.0.len().cmp(&x.0.len()).then_with(|| x.0.cmp(&y.0)));
        Ok(TransliterationTable { forward, backward })
    }

    /// Load a two-column tab-separated file; `#` starts a comment line.
    pub fn load(path: &Path) -> Result<Self, TextError> {
        let text = fs::read_to_string(path)?;
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split('\t');
            match (cols.next(), cols.next(), cols.next()) {
                (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => {
                    pairs.push((a.to_string(), b.to_string()));
                }
                _ => {
                    return Err(TextError::BadTableLine {
                        line: i + 1,
                        reason: "expected exactly two tab-separated columns".into(),
                    })
                }
            }
        }
        Self::from_pairs(pairs)
    }

    fn apply(units: &[(String, String)], text: &str) -> (String, Coverage) {
        let mut out = String::with_capacity(text.len());
        let mut cov = Coverage::default();
        let mut rest = text;
        'outer: while !rest.is_empty() {
            for (src, dst) in units {
                if let Some(tail) = rest.strip_prefix(src.as_str()) {
                    out.push_str(dst);
                    cov.mapped += 1;
                    rest = tail;
                    continue 'outer;
                }
            }
            let ch = rest.chars().next().unwrap();
            out.push(ch);
            if !ch.is_whitespace() {
                cov.passed_through += 1;
            }
            rest = &rest[ch.len_utf8()..];
        }
        (out, cov)
    }

    pub fn transliterate_text(&self, text: &str) -> (String, Coverage) {
        Self::apply(&self.forward, text)
    }

    pub fn detransliterate_text(&self, text: &str) -> (String, Coverage) {
        Self::apply(&self.backward, text)
    }

    pub fn transliterate(&self, m: &Sentence) -> (Sentence, Coverage) {
        let (text, cov) = self.transliterate_text(&m.surface());
        (Sentence::from_text(&text, &m.language), cov)
    }

    pub fn detransliterate(&self, m: &Sentence) -> (Sentence, Coverage) {
        let (text, cov) = self.detransliterate_text(&m.surface());
        (Sentence::from_text(&text, &m.language), cov)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(pairs: &[(&str, &str)]) -> TransliterationTable {
        TransliterationTable::from_pairs(
            pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        )
        .unwrap()
    }

    #[test]
    fn direct_substitution() {
        let t = table(&[("\u{3b1}", "a"), ("\u{3b2}", "b")]);
        let (out, cov) = t.transliterate_text("\u{3b1}\u{3b2}\u{3b1}");
        assert_eq!(out, "aba");
        assert_eq!(cov, Coverage { mapped: 3, passed_through: 0 });
    }

    #[test]
    fn empty_input_stays_empty() {
        let t = table(&[("x", "y")]);
        assert_eq!(t.transliterate_text("").0, "");
    }

    #[test]
    fn unknown_units_pass_through_and_are_counted() {
        let t = table(&[("\u{3b1}", "a")]);
        let (out, cov) = t.transliterate_text("\u{3b1}?\u{3b1}");
        assert_eq!(out, "a?a");
        assert_eq!(cov.passed_through, 1);
    }

    #[test]
    fn longest_match_wins() {
        let t = table(&[("k", "q"), ("kh", "x")]);
        assert_eq!(t.transliterate_text("khk").0, "xq");
    }

    #[test]
    fn duplicate_units_rejected_both_directions() {
        assert!(TransliterationTable::from_pairs(vec![
            ("a".into(), "x".into()),
            ("a".into(), "y".into()),
        ])
        .is_err());
        assert!(TransliterationTable::from_pairs(vec![
            ("a".into(), "x".into()),
            ("b".into(), "x".into()),
        ])
        .is_err());
    }
}
