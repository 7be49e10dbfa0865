//! Unigram language model, perplexity, word entropy and type-token ratio.

use std::collections::{BTreeMap, BTreeSet};

use crate::textpipe::Sentence;

use super::MetricsError;

/// Unigram model with optional add-one smoothing over an explicit type set.
#[derive(Debug, Clone)]
pub struct UnigramLm {
    counts: BTreeMap<String, u64>,
    total_tokens: u64,
    vocab_size: u64,
    smoothed: bool,
}

impl UnigramLm {
    /// Probability of a token. Under smoothing, unseen members of the type
    /// set and unknown tokens alike receive the add-one floor 1/(N+k).
    pub fn prob(&self, token: &str) -> f64 {
        let c = self.counts.get(token).copied().unwrap_or(0);
        if self.smoothed {
            (c + 1) as f64 / (self.total_tokens + self.vocab_size) as f64
        } else {
            c as f64 / self.total_tokens as f64
        }
    }

    pub fn vocab_size(&self) -> u64 {
        self.vocab_size
    }

    /// Sum of probabilities over the model's own type set.
    pub fn total_mass(&self) -> f64 {
        if self.smoothed {
            self.counts
                .keys()
                .map(|t| self.prob(t))
                .sum::<f64>()
                + (self.vocab_size - self.counts.len() as u64) as f64
                    / (self.total_tokens + self.vocab_size) as f64
        } else {
            self.counts.keys().map(|t| self.prob(t)).sum()
        }
    }
}

fn token_counts(corpus: &[Sentence]) -> (BTreeMap<String, u64>, u64) {
    let mut counts = BTreeMap::new();
    let mut total = 0u64;
    for s in corpus {
        for t in &s.tokens {
            *counts.entry(t.clone()).or_insert(0) += 1;
            total += 1;
        }
    }
    (counts, total)
}

/// Add-one-smoothed unigram model over the corpus's own types.
pub fn train_unigram_lm(corpus: &[Sentence]) -> Result<UnigramLm, MetricsError> {
    let (counts, total) = token_counts(corpus);
    if total == 0 {
        return Err(MetricsError::EmptyCorpus { context: "unigram lm".into() });
    }
    let vocab_size = counts.len() as u64;
    Ok(UnigramLm { counts, total_tokens: total, vocab_size, smoothed: true })
}

/// Add-one-smoothed unigram model over an explicit shared type set, for
/// cross-language comparisons on equal footing.
pub fn train_unigram_lm_over(
    corpus: &[Sentence],
    types: &BTreeSet<String>,
) -> Result<UnigramLm, MetricsError> {
    let (counts, total) = token_counts(corpus);
    if total == 0 {
        return Err(MetricsError::EmptyCorpus { context: "unigram lm".into() });
    }
    Ok(UnigramLm {
        counts,
        total_tokens: total,
        vocab_size: types.len() as u64,
        smoothed: true,
    })
}

/// Unsmoothed relative frequencies (unseen tokens get probability zero).
pub fn train_unigram_lm_unsmoothed(corpus: &[Sentence]) -> Result<UnigramLm, MetricsError> {
    let (counts, total) = token_counts(corpus);
    if total == 0 {
        return Err(MetricsError::EmptyCorpus { context: "unigram lm".into() });
    }
    let vocab_size = counts.len() as u64;
    Ok(UnigramLm { counts, total_tokens: total, vocab_size, smoothed: false })
}

/// Per-token perplexity computed in log space.
pub fn perplexity(corpus: &[Sentence], lm: &UnigramLm) -> Result<f64, MetricsError> {
    let mut log_sum = 0.0;
    let mut n = 0u64;
    for s in corpus {
        for t in &s.tokens {
            log_sum += lm.prob(t).ln();
            n += 1;
        }
    }
    if n == 0 {
        return Err(MetricsError::EmptyCorpus { context: "perplexity".into() });
    }
    Ok((-log_sum / n as f64).exp())
}

/// Shannon entropy in bits of the empirical type distribution.
pub fn entropy(corpus: &[Sentence]) -> Result<f64, MetricsError> {
    let (counts, total) = token_counts(corpus);
    if total == 0 {
        return Err(MetricsError::EmptyCorpus { context: "entropy".into() });
    }
    let mut h = 0.0;
    for &c in counts.values() {
        let p = c as f64 / total as f64;
        h -= p * p.log2();
    }
    Ok(h)
}

/// Type-token ratio.
pub fn ttr(corpus: &[Sentence]) -> Result<f64, MetricsError> {
    let (counts, total) = token_counts(corpus);
    if total == 0 {
        return Err(MetricsError::EmptyCorpus { context: "ttr".into() });
    }
    Ok(counts.len() as f64 / total as f64)
}

/// Cross-perplexity matrix: entry (i, j) is the perplexity of corpus j under
/// the model trained on corpus i, all smoothed over the union type set.
pub fn cross_perplexity_matrix(
    corpora: &[(String, Vec<Sentence>)],
) -> Result<(Vec<String>, Vec<Vec<f64>>), MetricsError> {
    let mut union = BTreeSet::new();
    for (_, c) in corpora {
        for s in c {
            for t in &s.tokens {
                union.insert(t.clone());
            }
        }
    }
    let mut names = Vec::with_capacity(corpora.len());
    let mut rows = Vec::with_capacity(corpora.len());
    for (name, train) in corpora {
        names.push(name.clone());
        let lm = train_unigram_lm_over(train, &union)?;
        let mut row = Vec::with_capacity(corpora.len());
        for (_, eval) in corpora {
            row.push(perplexity(eval, &lm)?);
        }
        rows.push(row);
    }
    Ok((names, rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(lines: &[&str]) -> Vec<Sentence> {
        lines.iter().map(|l| Sentence::from_text(l, "l1")).collect()
    }

    #[test]
    fn add_one_example_values() {
        // "a a b" over {a, b}: p(a) = (2+1)/(3+2), p(b) = (1+1)/(3+2).
        let lm = train_unigram_lm(&corpus(&["a a b"])).unwrap();
        assert!((lm.prob("a") - 3.0 / 5.0).abs() < 1e-15);
        assert!((lm.prob("b") - 2.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn smoothed_probabilities_positive_and_normalized() {
        let types: BTreeSet<String> =
            ["a", "b", "zzz"].iter().map(|s| s.to_string()).collect();
        let lm = train_unigram_lm_over(&corpus(&["a a b"]), &types).unwrap();
        assert!(lm.prob("zzz") > 0.0);
        assert!((lm.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_lm_perplexity_equals_vocab_size() {
        // Four types seen once each: smoothed model stays uniform, so any
        // corpus over them has perplexity 4.
        let train = corpus(&["a b c d"]);
        let lm = train_unigram_lm(&train).unwrap();
        let eval = corpus(&["a a b d c c"]);
        assert!((perplexity(&eval, &lm).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn certainty_gives_perplexity_one() {
        let c = corpus(&["a a a"]);
        let lm = train_unigram_lm_unsmoothed(&c).unwrap();
        assert!((perplexity(&c, &lm).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perplexity_is_two_to_the_cross_entropy() {
        let train = corpus(&["a a b c"]);
        let eval = corpus(&["a b b c a"]);
        let lm = train_unigram_lm(&train).unwrap();
        let pp = perplexity(&eval, &lm).unwrap();
        let mut bits = 0.0;
        let mut n = 0.0;
        for s in &eval {
            for t in &s.tokens {
                bits -= lm.prob(t).log2();
                n += 1.0;
            }
        }
        assert!((pp - (bits / n).exp2()).abs() < 1e-9);
    }

    #[test]
    fn entropy_examples() {
        assert!((entropy(&corpus(&["a b"])).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(entropy(&corpus(&["a a a"])).unwrap(), 0.0);
        let expected = -(0.75f64 * 0.75f64.log2() + 0.25 * 0.25f64.log2());
        assert!((entropy(&corpus(&["a a a b"])).unwrap() - expected).abs() < 1e-12);
        assert!((expected - 0.8112781).abs() < 1e-6);
    }

    #[test]
    fn ttr_examples() {
        assert!((ttr(&corpus(&["a b a"])).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(ttr(&corpus(&["q w e r"])).unwrap(), 1.0);
        assert!((ttr(&corpus(&["z z z z z"])).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn ttr_never_increases_under_repetition() {
        let base = corpus(&["ka ru mi", "to na"]);
        let mut extended = base.clone();
        extended.extend(base.clone());
        assert!(ttr(&extended).unwrap() <= ttr(&base).unwrap());
    }

    #[test]
    fn cross_matrix_diagonal_smallest_for_distinct_corpora() {
        let corpora = vec![
            ("l1".to_string(), corpus(&["ka ru mi to", "ka na se", "ru to ka"])),
            ("l2".to_string(), corpus(&["qa su ni po", "qa da xe", "su po qa"])),
        ];
        let (_, m) = cross_perplexity_matrix(&corpora).unwrap();
        assert!(m[0][0] < m[0][1]);
        assert!(m[1][1] < m[1][0]);
    }
}
