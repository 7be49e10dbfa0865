//! Character n-gram F-score.
//!
//! Orders 1 through 6 over whitespace-stripped characters. Precision and
//! recall are averaged over the orders that have any n-grams on either side,
//! then combined as an F-score where recall is weighted beta times precision.

use std::collections::HashMap;

const MAX_ORDER: usize = 6;

fn strip(text: &str) -> Vec<char> {
    text.chars().filter(|c| !c.is_whitespace()).collect()
}

fn ngram_counts(chars: &[char], n: usize) -> HashMap<&[char], usize> {
    let mut counts = HashMap::new();
    if chars.len() >= n {
        for w in chars.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// chrF with an adjustable recall weight beta.
pub fn chrf_beta(hyp: &str, reference: &str, beta: f64) -> f64 {
    let h = strip(hyp);
    let r = strip(reference);
    if h.is_empty() && r.is_empty() {
        return 1.0;
    }
    if h.is_empty() || r.is_empty() {
        return 0.0;
    }
    let mut prec_sum = 0.0;
    let mut rec_sum = 0.0;
    let mut orders = 0usize;
    for n in 1..=MAX_ORDER {
        let hc = ngram_counts(&h, n);
        let rc = ngram_counts(&r, n);
        let h_total: usize = hc.values().sum();
        let r_total: usize = rc.values().sum();
        if h_total == 0 && r_total == 0 {
            continue;
        }
        let matches: usize = hc
            .iter()
            .map(|(gram, &c)| c.min(rc.get(gram).copied().unwrap_or(0)))
            .sum();
        if h_total > 0 {
            prec_sum += matches as f64 / h_total as f64;
        }
        if r_total > 0 {
            rec_sum += matches as f64 / r_total as f64;
        }
        orders += 1;
    }
    let p = prec_sum / orders as f64;
    let rr = rec_sum / orders as f64;
    if p + rr == 0.0 {
        return 0.0;
    }
    let b2 = beta * beta;
    (1.0 + b2) * p * rr / (b2 * p + rr)
}

/// chrF2: recall weighted twice precision.
pub fn chrf2(hyp: &str, reference: &str) -> f64 {
    chrf_beta(hyp, reference, 2.0)
}

/// Macro-averaged sentence chrF2 over a corpus.
pub fn chrf2_corpus<'a, I>(pairs: I) -> f64
where
    I: IntoIterator<Item = (&'a str, &'a str)>,
{
    let mut sum = 0.0;
    let mut n = 0usize;
    for (hyp, reference) in pairs {
        sum += chrf2(hyp, reference);
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_strings_score_one() {
        assert_eq!(chrf2("ka ru mi", "ka ru mi"), 1.0);
    }

    #[test]
    fn disjoint_alphabets_score_zero() {
        assert_eq!(chrf2("aaaa", "bbbb"), 0.0);
    }

    #[test]
    fn empty_cases() {
        assert_eq!(chrf2("", ""), 1.0);
        assert_eq!(chrf2("a", ""), 0.0);
        assert_eq!(chrf2("", "a"), 0.0);
    }

    #[test]
    fn hand_enumerated_golden() {
        // hyp=abcd ref=abce. Per order: P=R = 3/4, 2/3, 1/2, 0 over the four
        // orders that have n-grams; average 23/48. P == R makes F = P.
        let expected = 23.0 / 48.0;
        assert!((chrf2("abcd", "abce") - expected).abs() < 1e-12);
    }

    #[test]
    fn whitespace_is_ignored() {
        assert_eq!(chrf2("a b c d", "abcd"), 1.0);
    }

    #[test]
    fn beta_swap_symmetry() {
        // Swapping hypothesis and reference swaps precision and recall, so
        // beta=2 one way equals beta=1/2 the other way.
        let a = "ka ru mi to";
        let b = "ka ru na";
        assert!((chrf_beta(a, b, 2.0) - chrf_beta(b, a, 0.5)).abs() < 1e-12);
    }
}
