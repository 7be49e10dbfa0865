//! Per-language and aggregated translation reward.
//!
//! Held-out pairs are partitioned into K sets, each holding exactly one pair
//! per language. An evaluation scores one set: per language, the absolute
//! critic-score gap between the generated translation and the reference,
//! then the arithmetic mean across languages. Sets are consumed round-robin
//! across successive evaluations. Smaller is better: the gap estimates how
//! far generated translations sit from references under the critic.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Rng;
use crate::nmt::{Critic, Generator, NmtError};
use crate::textpipe::Sentence;

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("K must be >= 1")]
    ZeroK,
    #[error("no test entries to partition")]
    EmptyTestSet,
    #[error("language pair `{lang_pair}` has {have} examples, needs >= {need}")]
    LanguageTooSmall { lang_pair: String, have: usize, need: usize },
    #[error("empty entry list for a language pair")]
    EmptyLanguage,
    #[error("evaluator holds no sets")]
    NoSets,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One held-out evaluation pair: a tagged source sentence, its reference
/// translation and the language-pair label the pair belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct TestEntry {
    pub source: Sentence,
    pub reference: Sentence,
    pub lang_pair: String,
}

#[derive(Debug, Clone)]
pub struct Partition {
    /// K sets, each with exactly one entry per language pair.
    pub sets: Vec<Vec<TestEntry>>,
    /// Entries beyond the first K of a language, dropped from every set.
    pub dropped: usize,
}

/// Split `entries` into K sets so that every set holds exactly one pair per
/// language. Per language the entries are shuffled with a fork of `rng`
/// keyed on the language label, the first K spread one-per-set, the rest
/// dropped and counted.
pub fn partition_test_sets(
    entries: &[TestEntry],
    k: usize,
    rng: &Rng,
) -> Result<Partition, RewardError> {
    if k == 0 {
        return Err(RewardError::ZeroK);
    }
    if entries.is_empty() {
        return Err(RewardError::EmptyTestSet);
    }
    let mut by_lang: BTreeMap<&str, Vec<&TestEntry>> = BTreeMap::new();
    for e in entries {
        by_lang.entry(&e.lang_pair).or_default().push(e);
    }
    for (lang, group) in &by_lang {
        if group.len() < k {
            return Err(RewardError::LanguageTooSmall {
                lang_pair: lang.to_string(),
                have: group.len(),
                need: k,
            });
        }
    }
    let mut sets = vec![Vec::with_capacity(by_lang.len()); k];
    let mut dropped = 0;
    for (lang, mut group) in by_lang {
        rng.fork(lang).shuffle(&mut group);
        dropped += group.len() - k;
        for (i, e) in group.into_iter().take(k).enumerate() {
            sets[i].push(e.clone());
        }
    }
    Ok(Partition { sets, dropped })
}

/// Mean absolute critic-score gap for the entries of one language pair.
pub fn per_language_reward(
    entries: &[TestEntry],
    gen: &Generator,
    critic: &Critic,
    max_len: usize,
) -> Result<f64, NmtError> {
    if entries.is_empty() {
        return Err(RewardError::EmptyLanguage.into());
    }
    debug_assert!(entries.iter().all(|e| e.lang_pair == entries[0].lang_pair));
    let mut scores = Vec::with_capacity(entries.len());
    for e in entries {
        let t_gen = gen.translate_or_unk(&e.source, max_len)?;
        let s_gen = critic.score(gen, &e.source, &t_gen)?;
        let s_ref = critic.score(gen, &e.source, &e.reference)?;
        scores.push((s_gen, s_ref));
    }
    Ok(reward_from_scores(&scores))
}

/// Mean |generated − reference| over precomputed score pairs.
pub fn reward_from_scores(pairs: &[(f64, f64)]) -> f64 {
    debug_assert!(!pairs.is_empty());
    pairs.iter().map(|(g, r)| (g - r).abs()).sum::<f64>() / pairs.len() as f64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardReport {
    pub r_per_lang: BTreeMap<String, f64>,
    pub r_mmt: f64,
    /// Total number of partition sets.
    pub k: usize,
    /// Pairs (= language pairs) in the evaluated set.
    pub n: usize,
    /// Index of the set this report evaluated.
    pub set_index: usize,
    pub unix_secs: u64,
    pub checkpoint_id: String,
}

impl RewardReport {
    /// Append this report as one JSON line.
    pub fn append_jsonl(&self, path: &Path) -> Result<(), RewardError> {
        let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
        writeln!(f, "{}", serde_json::to_string(self)?)?;
        Ok(())
    }
}

/// Evaluate one set: per-language rewards plus their arithmetic mean.
pub fn multilingual_reward(
    set: &[TestEntry],
    gen: &Generator,
    critic: &Critic,
    max_len: usize,
    k: usize,
    set_index: usize,
    checkpoint_id: &str,
) -> Result<RewardReport, NmtError> {
    if set.is_empty() {
        return Err(RewardError::EmptyTestSet.into());
    }
    let mut by_lang: BTreeMap<String, Vec<TestEntry>> = BTreeMap::new();
    for e in set {
        by_lang.entry(e.lang_pair.clone()).or_default().push(e.clone());
    }
    let mut r_per_lang = BTreeMap::new();
    for (lang, group) in by_lang {
        let r = per_language_reward(&group, gen, critic, max_len)?;
        r_per_lang.insert(lang, r);
    }
    let n = r_per_lang.len();
    let r_mmt = r_per_lang.values().sum::<f64>() / n as f64;
    let unix_secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Ok(RewardReport {
        r_per_lang,
        r_mmt,
        k,
        n,
        set_index,
        unix_secs,
        checkpoint_id: checkpoint_id.to_string(),
    })
}

/// Holds the K partition sets and walks them round-robin, one per
/// evaluation call.
#[derive(Debug, Clone)]
pub struct RewardEvaluator {
    pub partition: Partition,
    cursor: usize,
}

impl RewardEvaluator {
    pub fn new(entries: &[TestEntry], k: usize, rng: &Rng) -> Result<Self, RewardError> {
        Ok(RewardEvaluator { partition: partition_test_sets(entries, k, rng)?, cursor: 0 })
    }

    pub fn k(&self) -> usize {
        self.partition.sets.len()
    }

    /// Index of the set the next `evaluate` call will use.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// Evaluate the current set and advance the cursor.
    pub fn evaluate(
        &mut self,
        gen: &Generator,
        critic: &Critic,
        max_len: usize,
        checkpoint_id: &str,
    ) -> Result<RewardReport, NmtError> {
        let k = self.k();
        if k == 0 {
            return Err(RewardError::NoSets.into());
        }
        let idx = self.cursor;
        self.cursor = (self.cursor + 1) % k;
        multilingual_reward(
            &self.partition.sets[idx],
            gen,
            critic,
            max_len,
            k,
            idx,
            checkpoint_id,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nmt::NmtConfig;
    use crate::textpipe::{tag_source, Vocabulary};

    fn entry(src: &str, refr: &str, lang_pair: &str) -> TestEntry {
        let (sl, tl) = lang_pair.split_once('-').unwrap();
        TestEntry {
            source: Sentence::from_text(src, sl),
            reference: Sentence::from_text(refr, tl),
            lang_pair: lang_pair.to_string(),
        }
    }

    fn toy_models(seed: u64) -> (Generator, Critic) {
        let vocab = Vocabulary::build(
            ["ka ru mi to na se po ga du be"].into_iter(),
            &["l1", "l2"],
        )
        .unwrap();
        let cfg = NmtConfig { emb_dim: 6, hidden: 8, filters: 3, ..NmtConfig::default() };
        let mut rng = Rng::new(seed);
        let gen = Generator::new(vocab, &cfg, &mut rng);
        let critic = Critic::new(cfg.emb_dim, cfg.filters, &mut rng);
        (gen, critic)
    }

    fn tagged_entry(gen: &Generator, src: &str, refr: &str, lang_pair: &str) -> TestEntry {
        let mut e = entry(src, refr, lang_pair);
        let tgt_lang = lang_pair.split_once('-').unwrap().1;
        e.source = tag_source(&e.source, tgt_lang, &gen.vocab).unwrap();
        e
    }

    #[test]
    fn round_robin_two_languages_two_sets() {
        let entries = vec![
            entry("a b", "c d", "gu-hi"),
            entry("e f", "g h", "gu-hi"),
            entry("i j", "k l", "ne-hi"),
            entry("m n", "o p", "ne-hi"),
        ];
        let p = partition_test_sets(&entries, 2, &Rng::new(7)).unwrap();
        assert_eq!(p.sets.len(), 2);
        assert_eq!(p.dropped, 0);
        for set in &p.sets {
            assert_eq!(set.len(), 2);
            let langs: Vec<&str> = set.iter().map(|e| e.lang_pair.as_str()).collect();
            assert!(langs.contains(&"gu-hi") && langs.contains(&"ne-hi"));
        }
    }

    #[test]
    fn k1_keeps_one_example_per_language() {
        let entries = vec![
            entry("a", "b", "l1-l3"),
            entry("c", "d", "l1-l3"),
            entry("e", "f", "l2-l3"),
        ];
        let p = partition_test_sets(&entries, 1, &Rng::new(1)).unwrap();
        assert_eq!(p.sets.len(), 1);
        assert_eq!(p.sets[0].len(), 2);
        assert_eq!(p.dropped, 1);
    }

    #[test]
    fn partition_is_deterministic_across_reruns() {
        let entries: Vec<TestEntry> = (0..10)
            .map(|i| entry(&format!("s{i}"), &format!("t{i}"), &format!("l{}-hub", i % 5)))
            .collect();
        let a = partition_test_sets(&entries, 2, &Rng::new(7)).unwrap();
        let b = partition_test_sets(&entries, 2, &Rng::new(7)).unwrap();
        assert_eq!(a.sets, b.sets);
        let c = partition_test_sets(&entries, 2, &Rng::new(8)).unwrap();
        assert_eq!(c.sets.len(), 2);
    }

    #[test]
    fn partition_exhaustiveness() {
        let entries: Vec<TestEntry> = (0..13)
            .map(|i| entry(&format!("s{i}"), &format!("t{i}"), &format!("l{}-hub", i % 3)))
            .collect();
        let p = partition_test_sets(&entries, 3, &Rng::new(2)).unwrap();
        let kept: usize = p.sets.iter().map(Vec::len).sum();
        assert_eq!(kept + p.dropped, entries.len());
        // Every kept entry is one of the inputs, with no entry in two sets.
        let mut seen = Vec::new();
        for set in &p.sets {
            for e in set {
                assert!(entries.contains(e));
                assert!(!seen.contains(&e.source.surface()));
                seen.push(e.source.surface());
            }
        }
    }

    #[test]
    fn partition_rejects_scarce_language_and_zero_k() {
        let entries = vec![entry("a", "b", "l1-l3"), entry("c", "d", "l2-l3")];
        assert!(matches!(
            partition_test_sets(&entries, 2, &Rng::new(0)),
            Err(RewardError::LanguageTooSmall { have: 1, need: 2, .. })
        ));
        assert!(matches!(
            partition_test_sets(&entries, 0, &Rng::new(0)),
            Err(RewardError::ZeroK)
        ));
        assert!(matches!(
            partition_test_sets(&[], 1, &Rng::new(0)),
            Err(RewardError::EmptyTestSet)
        ));
    }

    #[test]
    fn score_pair_arithmetic() {
        assert_eq!(reward_from_scores(&[(1.0, 3.0), (2.0, 2.0)]), 1.0);
        assert_eq!(reward_from_scores(&[(5.0, 5.0)]), 0.0);
    }

    #[test]
    fn identical_generation_and_reference_give_zero() {
        let (gen, critic) = toy_models(11);
        let src = Sentence::from_text("ka ru mi", "l1");
        let tagged = tag_source(&src, "l2", &gen.vocab).unwrap();
        let own = gen.translate_or_unk(&tagged, 10).unwrap();
        let e = TestEntry { source: tagged, reference: own, lang_pair: "l1-l2".into() };
        let r = per_language_reward(&[e], &gen, &critic, 10).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn empty_entry_list_is_an_error() {
        let (gen, critic) = toy_models(12);
        assert!(matches!(
            per_language_reward(&[], &gen, &critic, 10),
            Err(NmtError::Reward(RewardError::EmptyLanguage))
        ));
    }

    #[test]
    fn report_mean_is_bit_exact_and_nonnegative() {
        let (gen, critic) = toy_models(13);
        let set = vec![
            tagged_entry(&gen, "ka ru", "mi to", "l1-l2"),
            tagged_entry(&gen, "na se po", "ga du", "l2-l1"),
        ];
        let report = multilingual_reward(&set, &gen, &critic, 10, 1, 0, "ck-0").unwrap();
        assert_eq!(report.n, 2);
        let recomputed = report.r_per_lang.values().sum::<f64>() / report.n as f64;
        assert_eq!(recomputed.to_bits(), report.r_mmt.to_bits());
        for &r in report.r_per_lang.values() {
            assert!(r >= 0.0);
        }
    }

    #[test]
    fn r_mmt_is_permutation_invariant_in_language_order() {
        let (gen, critic) = toy_models(14);
        let set = vec![
            tagged_entry(&gen, "ka ru", "mi to", "l1-l2"),
            tagged_entry(&gen, "na se po", "ga du", "l2-l1"),
        ];
        let fwd = multilingual_reward(&set, &gen, &critic, 10, 1, 0, "ck").unwrap();
        let rev: Vec<TestEntry> = set.into_iter().rev().collect();
        let bwd = multilingual_reward(&rev, &gen, &critic, 10, 1, 0, "ck").unwrap();
        assert_eq!(fwd.r_mmt.to_bits(), bwd.r_mmt.to_bits());
    }

    #[test]
    fn singleton_set_reward_equals_its_language_reward() {
        let (gen, critic) = toy_models(15);
        let set = vec![tagged_entry(&gen, "ka ru mi", "to na", "l1-l2")];
        let report = multilingual_reward(&set, &gen, &critic, 10, 1, 0, "ck").unwrap();
        assert_eq!(report.n, 1);
        assert_eq!(report.r_mmt.to_bits(), report.r_per_lang["l1-l2"].to_bits());
    }

    #[test]
    fn evaluator_walks_sets_round_robin() {
        let (gen, critic) = toy_models(16);
        let entries = vec![
            tagged_entry(&gen, "ka ru", "mi", "l1-l2"),
            tagged_entry(&gen, "to na", "se", "l1-l2"),
            tagged_entry(&gen, "po ga", "du", "l2-l1"),
            tagged_entry(&gen, "be ka", "ru", "l2-l1"),
        ];
        let mut ev = RewardEvaluator::new(&entries, 2, &Rng::new(3)).unwrap();
        let order: Vec<usize> = (0..5)
            .map(|_| ev.evaluate(&gen, &critic, 10, "ck").unwrap().set_index)
            .collect();
        assert_eq!(order, vec![0, 1, 0, 1, 0]);
    }

    #[test]
    fn jsonl_appends_one_record_per_report() {
        let (gen, critic) = toy_models(17);
        let set = vec![tagged_entry(&gen, "ka ru", "mi to", "l1-l2")];
        let report = multilingual_reward(&set, &gen, &critic, 10, 1, 0, "ck").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rewards.jsonl");
        report.append_jsonl(&path).unwrap();
        report.append_jsonl(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let parsed: RewardReport = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(parsed.r_mmt.to_bits(), report.r_mmt.to_bits());
    }

    /// Exact 1-D optimal transport between equal-size score samples:
    /// match sorted order, average the absolute gaps.
    fn ot_1d(a: &[f64], b: &[f64]) -> f64 {
        assert_eq!(a.len(), b.len());
        let mut sa = a.to_vec();
        let mut sb = b.to_vec();
        sa.sort_by(f64::total_cmp);
        sb.sort_by(f64::total_cmp);
        sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
    }

    #[test]
    fn paired_gap_upper_bounds_exact_transport() {
        // The paired estimator fixes the coupling (each generation against
        // its own reference), so it can never beat the optimal coupling.
        let mut rng = Rng::new(18);
        for _ in 0..200 {
            let n = 1 + rng.below(6);
            let pairs: Vec<(f64, f64)> =
                (0..n).map(|_| (rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0))).collect();
            let paired = reward_from_scores(&pairs);
            let gen_scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let ref_scores: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let exact = ot_1d(&gen_scores, &ref_scores);
            assert!(paired >= exact - 1e-12, "paired {paired} < exact {exact}");
        }
        // Monotone couplings meet the bound exactly.
        let sorted_pairs = [(0.1, 0.3), (0.5, 0.6), (1.0, 1.4)];
        let paired = reward_from_scores(&sorted_pairs);
        let exact = ot_1d(&[0.1, 0.5, 1.0], &[0.3, 0.6, 1.4]);
        assert!((paired - exact).abs() < 1e-15);
    }
}
