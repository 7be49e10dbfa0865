//! Latent-space sentence interpolation and the merged synthetic corpus.
//!
//! Candidates decode from convex combinations of two sentences' latent
//! codes; the best one per side is kept when it scores high enough against
//! its anchor, and accepted pairs are merged with the originals.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::daae::{DaaeError, DaaeModel};
use crate::metrics::chrf2;
use crate::textpipe::{ParallelCorpus, Sentence, TextError};

#[derive(Debug, thiserror::Error)]
pub enum InterpError {
    #[error("alpha grid is empty")]
    EmptyGrid,
    #[error("alpha {0} outside [0, 1]")]
    BadAlpha(f64),
    #[error("tau {0} outside [0, 1]")]
    BadTau(f64),
    #[error("latent dimensions differ: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },
    #[error(transparent)]
    Daae(#[from] DaaeError),
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct InterpolationConfig {
    /// Mixing weights tried per pair, each in [0, 1].
    pub alpha_grid: Vec<f64>,
    /// Minimum chrF2 against the anchor for a candidate to be accepted.
    pub tau: f64,
    pub max_len: usize,
}

impl Default for InterpolationConfig {
    fn default() -> Self {
        InterpolationConfig {
            alpha_grid: (1..=9).map(|i| i as f64 / 10.0).collect(),
            tau: 0.5,
            max_len: 30,
        }
    }
}

impl InterpolationConfig {
    pub fn validate(&self) -> Result<(), InterpError> {
        if self.alpha_grid.is_empty() {
            return Err(InterpError::EmptyGrid);
        }
        for &a in &self.alpha_grid {
            if !(0.0..=1.0).contains(&a) || a.is_nan() {
                return Err(InterpError::BadAlpha(a));
            }
        }
        if !(0.0..=1.0).contains(&self.tau) || self.tau.is_nan() {
            return Err(InterpError::BadTau(self.tau));
        }
        Ok(())
    }
}

/// Componentwise convex combination. The endpoints return the argument
/// itself, bit for bit.
pub fn interpolate_latent(z_s: &[f64], z_t: &[f64], alpha: f64) -> Result<Vec<f64>, InterpError> {
    if z_s.len() != z_t.len() {
        return Err(InterpError::DimMismatch { left: z_s.len(), right: z_t.len() });
    }
    if !(0.0..=1.0).contains(&alpha) || alpha.is_nan() {
        return Err(InterpError::BadAlpha(alpha));
    }
    if alpha == 1.0 {
        return Ok(z_s.to_vec());
    }
    if alpha == 0.0 {
        return Ok(z_t.to_vec());
    }
    Ok(z_s
        .iter()
        .zip(z_t)
        .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
        .collect())
}

/// One decoded interpolation, tagged with the weight that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub alpha: f64,
    pub sentence: Sentence,
}

/// Greedy decodes of αz_s + (1−α)z_t over the grid, deduplicated by surface
/// (the smallest α wins a collision). Candidates inherit the language of `s`.
pub fn generate_candidates(
    s: &Sentence,
    t: &Sentence,
    daae: &DaaeModel,
    cfg: &InterpolationConfig,
) -> Result<Vec<Candidate>, InterpError> {
    cfg.validate()?;
    let z_s = daae.encode(s)?;
    let z_t = daae.encode(t)?;
    let mut grid = cfg.alpha_grid.clone();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("validated alphas"));
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for alpha in grid {
        let z = interpolate_latent(&z_s, &z_t, alpha)?;
        let cand = daae.decode(&z, &s.language, cfg.max_len)?;
        if seen.insert(cand.surface()) {
            out.push(Candidate { alpha, sentence: cand });
        }
    }
    Ok(out)
}

/// Highest-chrF2 candidate against the anchor, if it reaches `tau`. Ties go
/// to the smaller alpha; the ascending-alpha candidate order makes that the
/// first of the tied scores.
pub fn select_best(candidates: &[Candidate], anchor: &Sentence, tau: f64) -> Option<Candidate> {
    let anchor_surface = anchor.surface();
    let mut best: Option<(f64, &Candidate)> = None;
    for cand in candidates {
        let score = chrf2(&cand.sentence.surface(), &anchor_surface);
        let better = match &best {
            None => true,
            Some((s, b)) => score > *s || (score == *s && cand.alpha < b.alpha),
        };
        if better {
            best = Some((score, cand));
        }
    }
    match best {
        Some((score, cand)) if score >= tau => Some(cand.clone()),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Provenance {
    Original,
    SrcInterp,
    TgtInterp,
    BothInterp,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Provenance::Original => "original",
            Provenance::SrcInterp => "src-interp",
            Provenance::TgtInterp => "tgt-interp",
            Provenance::BothInterp => "both-interp",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticPair {
    pub source: Sentence,
    pub target: Sentence,
    pub provenance: Provenance,
    pub alpha_src: Option<f64>,
    pub alpha_tgt: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct SyntheticCorpus {
    pub pairs: Vec<SyntheticPair>,
    pub rejected_src: usize,
    pub rejected_tgt: usize,
    pub duplicates_dropped: usize,
}

impl SyntheticCorpus {
    pub fn histogram(&self) -> BTreeMap<Provenance, usize> {
        let mut h = BTreeMap::new();
        for p in &self.pairs {
            *h.entry(p.provenance).or_insert(0) += 1;
        }
        h
    }

    /// Write `{prefix}.src`, `{prefix}.tgt` and a `{prefix}.prov.tsv`
    /// sidecar with one line per pair.
    pub fn save(&self, prefix: &Path) -> Result<(), InterpError> {
        let stem = prefix.to_string_lossy();
        let mut src = String::new();
        let mut tgt = String::new();
        let mut prov = String::from("line\tprovenance\talpha_src\talpha_tgt\n");
        for (i, p) in self.pairs.iter().enumerate() {
            src.push_str(&p.source.surface());
            src.push('\n');
            tgt.push_str(&p.target.surface());
            tgt.push('\n');
            let fmt_alpha =
                |a: Option<f64>| a.map(|v| format!("{v}")).unwrap_or_else(|| "-".into());
            prov.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                i,
                p.provenance,
                fmt_alpha(p.alpha_src),
                fmt_alpha(p.alpha_tgt)
            ));
        }
        fs::File::create(format!("{stem}.src"))?.write_all(src.as_bytes())?;
        fs::File::create(format!("{stem}.tgt"))?.write_all(tgt.as_bytes())?;
        fs::File::create(format!("{stem}.prov.tsv"))?.write_all(prov.as_bytes())?;
        Ok(())
    }
}

/// The three derived combinations of a pair, in merge order. Components
/// whose interpolation was rejected are omitted.
fn derived_combos(
    s: &Sentence,
    t: &Sentence,
    s_prime: Option<&Candidate>,
    t_prime: Option<&Candidate>,
) -> Vec<SyntheticPair> {
    let mut out = Vec::new();
    if let Some(sp) = s_prime {
        out.push(SyntheticPair {
            source: sp.sentence.clone(),
            target: t.clone(),
            provenance: Provenance::SrcInterp,
            alpha_src: Some(sp.alpha),
            alpha_tgt: None,
        });
    }
    if let Some(tp) = t_prime {
        out.push(SyntheticPair {
            source: s.clone(),
            target: tp.sentence.clone(),
            provenance: Provenance::TgtInterp,
            alpha_src: None,
            alpha_tgt: Some(tp.alpha),
        });
    }
    if let (Some(sp), Some(tp)) = (s_prime, t_prime) {
        out.push(SyntheticPair {
            source: sp.sentence.clone(),
            target: tp.sentence.clone(),
            provenance: Provenance::BothInterp,
            alpha_src: Some(sp.alpha),
            alpha_tgt: Some(tp.alpha),
        });
    }
    out
}

/// Merge originals with per-side interpolations. Originals are inserted
/// first so deduplication can never evict them; derived pairs that collide
/// with anything already present are dropped and counted.
pub fn build_synthetic_corpus(
    parallel: &ParallelCorpus,
    daae_src: &DaaeModel,
    daae_tgt: &DaaeModel,
    cfg: &InterpolationConfig,
) -> Result<SyntheticCorpus, InterpError> {
    cfg.validate()?;
    let mut corpus = SyntheticCorpus::default();
    let mut seen: HashSet<(String, String)> = HashSet::new();

    for (s, t) in &parallel.pairs {
        if seen.insert((s.surface(), t.surface())) {
            corpus.pairs.push(SyntheticPair {
                source: s.clone(),
                target: t.clone(),
                provenance: Provenance::Original,
                alpha_src: None,
                alpha_tgt: None,
            });
        } else {
            corpus.duplicates_dropped += 1;
        }
    }

    for (s, t) in &parallel.pairs {
        let s_cands = generate_candidates(s, t, daae_src, cfg)?;
        let s_prime = select_best(&s_cands, s, cfg.tau).filter(|c| !c.sentence.is_empty());
        if s_prime.is_none() {
            corpus.rejected_src += 1;
        }
        let t_cands = generate_candidates(t, s, daae_tgt, cfg)?;
        let t_prime = select_best(&t_cands, t, cfg.tau).filter(|c| !c.sentence.is_empty());
        if t_prime.is_none() {
            corpus.rejected_tgt += 1;
        }
        for pair in derived_combos(s, t, s_prime.as_ref(), t_prime.as_ref()) {
            if seen.insert((pair.source.surface(), pair.target.surface())) {
                corpus.pairs.push(pair);
            } else {
                corpus.duplicates_dropped += 1;
            }
        }
    }
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::daae::{train_daae, DaaeConfig};
    use crate::engine::Rng;
    use crate::textpipe::{NoiseSpec, Split, Vocabulary};

    fn untrained_model(seed: u64) -> DaaeModel {
        let vocab = Vocabulary::build(
            ["ka ru mi to na se po ga du be li ho"].into_iter(),
            &[],
        )
        .unwrap();
        let mut rng = Rng::new(seed);
        DaaeModel::new(vocab, 8, 6, &mut rng)
    }

    fn toy_corpus(n: usize, seed: u64) -> Vec<Sentence> {
        let types = ["ka", "ru", "mi", "to", "na", "se", "po", "ga", "du", "be"];
        let mut rng = Rng::new(seed);
        let mut out = Vec::new();
        while out.len() < n {
            let len = 3 + rng.below(3);
            let toks: Vec<String> =
                (0..len).map(|_| types[rng.below(types.len())].to_string()).collect();
            let s = Sentence::from_tokens(toks, "l1");
            if !out.contains(&s) {
                out.push(s);
            }
        }
        out
    }

    fn trained_model(n: usize, seed: u64) -> (DaaeModel, Vec<Sentence>) {
        let corpus = toy_corpus(n, seed);
        let cfg = DaaeConfig {
            lambda: 1.0,
            lr: 1e-2,
            lr_adv: 5e-4,
            lr_decay: 0.98,
            batch_size: 10,
            max_epochs: 120,
            latent_dim: 20,
            emb_dim: 20,
            noise: NoiseSpec { p_delete: 0.02, p_substitute: 0.02, p_swap: 0.02, seed: 0 },
            seed,
            ..DaaeConfig::default()
        };
        let (model, _) = train_daae(&corpus, &cfg).unwrap();
        (model, corpus)
    }

    #[test]
    fn interpolate_endpoints_are_bitwise_exact() {
        let z_s = vec![0.1 + 0.2, 3.0_f64.sqrt(), -7.25];
        let z_t = vec![9.0, -2.5, 0.3333333333333333];
        let one = interpolate_latent(&z_s, &z_t, 1.0).unwrap();
        let zero = interpolate_latent(&z_s, &z_t, 0.0).unwrap();
        for i in 0..3 {
            assert_eq!(one[i].to_bits(), z_s[i].to_bits());
            assert_eq!(zero[i].to_bits(), z_t[i].to_bits());
        }
    }

    #[test]
    fn interpolate_midpoint() {
        let mid = interpolate_latent(&[0.0, 0.0], &[2.0, 4.0], 0.5).unwrap();
        assert_eq!(mid, vec![1.0, 2.0]);
    }

    #[test]
    fn interpolate_rejects_bad_inputs() {
        assert!(matches!(
            interpolate_latent(&[1.0], &[1.0, 2.0], 0.5),
            Err(InterpError::DimMismatch { left: 1, right: 2 })
        ));
        assert!(matches!(
            interpolate_latent(&[1.0], &[2.0], 1.5),
            Err(InterpError::BadAlpha(_))
        ));
        assert!(matches!(
            interpolate_latent(&[1.0], &[2.0], f64::NAN),
            Err(InterpError::BadAlpha(_))
        ));
    }

    #[test]
    fn config_validation() {
        assert!(InterpolationConfig::default().validate().is_ok());
        let bad = InterpolationConfig { alpha_grid: vec![], ..Default::default() };
        assert!(matches!(bad.validate(), Err(InterpError::EmptyGrid)));
        let bad = InterpolationConfig { alpha_grid: vec![1.2], ..Default::default() };
        assert!(matches!(bad.validate(), Err(InterpError::BadAlpha(_))));
        let bad = InterpolationConfig { tau: -0.1, ..Default::default() };
        assert!(matches!(bad.validate(), Err(InterpError::BadTau(_))));
    }

    #[test]
    fn grid_of_one_equals_reconstruction() {
        let model = untrained_model(3);
        let s = Sentence::from_text("ka ru mi", "l1");
        let t = Sentence::from_text("to na se", "l1");
        let cfg = InterpolationConfig { alpha_grid: vec![1.0], ..Default::default() };
        let cands = generate_candidates(&s, &t, &model, &cfg).unwrap();
        assert_eq!(cands.len(), 1);
        let recon = model.reconstruct(&s, cfg.max_len).unwrap();
        assert_eq!(cands[0].sentence.tokens, recon.tokens);
        // The zero endpoint reduces to the other sentence's reconstruction.
        let cfg = InterpolationConfig { alpha_grid: vec![0.0], ..Default::default() };
        let cands = generate_candidates(&s, &t, &model, &cfg).unwrap();
        let recon_t = model.reconstruct(&t, cfg.max_len).unwrap();
        assert_eq!(cands[0].sentence.tokens, recon_t.tokens);
    }

    #[test]
    fn candidates_are_deduplicated_and_bounded() {
        let model = untrained_model(4);
        let s = Sentence::from_text("ka ru mi to", "l1");
        let t = Sentence::from_text("na se po", "l1");
        let cfg = InterpolationConfig::default();
        let cands = generate_candidates(&s, &t, &model, &cfg).unwrap();
        assert!(cands.len() <= cfg.alpha_grid.len());
        let surfaces: HashSet<String> =
            cands.iter().map(|c| c.sentence.surface()).collect();
        assert_eq!(surfaces.len(), cands.len());
        // Ascending alpha order is what select_best's tie-break relies on.
        for w in cands.windows(2) {
            assert!(w[0].alpha < w[1].alpha);
        }
    }

    #[test]
    fn empty_grid_is_an_error() {
        let model = untrained_model(5);
        let s = Sentence::from_text("ka ru", "l1");
        let cfg = InterpolationConfig { alpha_grid: vec![], ..Default::default() };
        assert!(matches!(
            generate_candidates(&s, &s, &model, &cfg),
            Err(InterpError::EmptyGrid)
        ));
    }

    #[test]
    fn select_best_prefers_anchor_and_applies_threshold() {
        let anchor = Sentence::from_text("ka ru mi", "l1");
        let cands = vec![
            Candidate { alpha: 0.1, sentence: Sentence::from_text("zz qq ww", "l1") },
            Candidate { alpha: 0.5, sentence: anchor.clone() },
        ];
        let best = select_best(&cands, &anchor, 0.5).unwrap();
        assert_eq!(best.sentence, anchor);
        // Nothing reaches a tau of 1.0 except an exact match.
        let only_garbage = &cands[..1];
        assert!(select_best(only_garbage, &anchor, 0.5).is_none());
        assert!(select_best(&[], &anchor, 0.0).is_none());
    }

    #[test]
    fn select_best_matches_brute_force_oracle() {
        // Independent chrF2: plain nested loops over character n-grams.
        fn ngrams(s: &str, n: usize) -> Vec<String> {
            let cs: Vec<char> = s.chars().filter(|c| !c.is_whitespace()).collect();
            if cs.len() < n {
                return Vec::new();
            }
            (0..=cs.len() - n).map(|i| cs[i..i + n].iter().collect()).collect()
        }
        fn brute_chrf2(hyp: &str, reference: &str) -> f64 {
            let mut p_sum = 0.0;
            let mut r_sum = 0.0;
            let mut orders = 0.0;
            for n in 1..=6 {
                let h = ngrams(hyp, n);
                let r = ngrams(reference, n);
                if h.is_empty() && r.is_empty() {
                    continue;
                }
                orders += 1.0;
                let mut r_left = r.clone();
                let mut matched = 0usize;
                for g in &h {
                    if let Some(pos) = r_left.iter().position(|x| x == g) {
                        r_left.remove(pos);
                        matched += 1;
                    }
                }
                if !h.is_empty() {
                    p_sum += matched as f64 / h.len() as f64;
                }
                if !r.is_empty() {
                    r_sum += matched as f64 / r.len() as f64;
                }
            }
            if orders == 0.0 {
                return 1.0;
            }
            let p = p_sum / orders;
            let r = r_sum / orders;
            if p + r == 0.0 {
                return 0.0;
            }
            5.0 * p * r / (4.0 * p + r)
        }

        let anchor = Sentence::from_text("ka ru mi to", "l1");
        let cands = vec![
            Candidate { alpha: 0.1, sentence: Sentence::from_text("ka ru", "l1") },
            Candidate { alpha: 0.5, sentence: Sentence::from_text("ka ru mi na", "l1") },
            Candidate { alpha: 0.9, sentence: Sentence::from_text("mi to", "l1") },
        ];
        let scored: Vec<f64> = cands
            .iter()
            .map(|c| brute_chrf2(&c.sentence.surface(), &anchor.surface()))
            .collect();
        let oracle_best = scored
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let best = select_best(&cands, &anchor, 0.0).unwrap();
        assert_eq!(best.sentence, cands[oracle_best].sentence);
        for (c, s) in cands.iter().zip(&scored) {
            assert!((chrf2(&c.sentence.surface(), &anchor.surface()) - s).abs() < 1e-12);
        }
    }

    #[test]
    fn select_best_ties_break_to_smaller_alpha() {
        // "ax" and "xb" score identically against "ab" by symmetry.
        let anchor = Sentence::from_text("ab", "l1");
        let hi = Candidate { alpha: 0.7, sentence: Sentence::from_text("xb", "l1") };
        let lo = Candidate { alpha: 0.3, sentence: Sentence::from_text("ax", "l1") };
        let a = chrf2("ax", "ab");
        let b = chrf2("xb", "ab");
        assert_eq!(a, b);
        let best = select_best(&[hi.clone(), lo.clone()], &anchor, 0.0).unwrap();
        assert_eq!(best.alpha, 0.3);
        let best = select_best(&[lo, hi], &anchor, 0.0).unwrap();
        assert_eq!(best.alpha, 0.3);
    }

    #[test]
    fn selected_candidate_meets_threshold_property() {
        let (model, corpus) = trained_model(20, 31);
        let cfg = InterpolationConfig::default();
        for pair in corpus.chunks(2) {
            let (s, t) = (&pair[0], &pair[1]);
            let cands = generate_candidates(s, t, &model, &cfg).unwrap();
            if let Some(best) = select_best(&cands, s, cfg.tau) {
                assert!(chrf2(&best.sentence.surface(), &s.surface()) >= cfg.tau);
            }
        }
    }

    #[test]
    fn derived_combo_arity() {
        let s = Sentence::from_text("ka ru", "l1");
        let t = Sentence::from_text("mi to", "l2");
        let sp = Candidate { alpha: 0.9, sentence: Sentence::from_text("ka na", "l1") };
        let tp = Candidate { alpha: 0.8, sentence: Sentence::from_text("mi se", "l2") };
        let all = derived_combos(&s, &t, Some(&sp), Some(&tp));
        assert_eq!(all.len(), 3);
        assert_eq!(all[0].provenance, Provenance::SrcInterp);
        assert_eq!(all[1].provenance, Provenance::TgtInterp);
        assert_eq!(all[2].provenance, Provenance::BothInterp);
        assert_eq!(derived_combos(&s, &t, Some(&sp), None).len(), 1);
        assert_eq!(derived_combos(&s, &t, None, None).len(), 0);
    }

    fn toy_parallel(n: usize, seed: u64) -> ParallelCorpus {
        let src = toy_corpus(2 * n, seed);
        let pairs = src[..n]
            .iter()
            .zip(&src[n..])
            .map(|(a, b)| {
                let mut b = b.clone();
                b.language = "l2".into();
                (a.clone(), b)
            })
            .collect();
        ParallelCorpus { pairs, split: Split::Train, dropped: 0 }
    }

    #[test]
    fn all_rejected_falls_back_to_original_corpus() {
        let parallel = toy_parallel(6, 41);
        let model = untrained_model(9);
        let cfg = InterpolationConfig { tau: 1.0, ..Default::default() };
        let out = build_synthetic_corpus(&parallel, &model, &model, &cfg).unwrap();
        assert_eq!(out.pairs.len(), parallel.pairs.len());
        assert!(out.pairs.iter().all(|p| p.provenance == Provenance::Original));
        assert_eq!(out.rejected_src, 6);
        assert_eq!(out.rejected_tgt, 6);
    }

    #[test]
    fn originals_always_survive_and_size_is_bounded() {
        let parallel = toy_parallel(8, 43);
        let model = untrained_model(10);
        let cfg = InterpolationConfig { tau: 0.0, ..Default::default() };
        let out = build_synthetic_corpus(&parallel, &model, &model, &cfg).unwrap();
        assert!(out.pairs.len() <= 4 * parallel.pairs.len());
        let surfaces: HashSet<(String, String)> = out
            .pairs
            .iter()
            .map(|p| (p.source.surface(), p.target.surface()))
            .collect();
        assert_eq!(surfaces.len(), out.pairs.len(), "duplicate pair leaked");
        for (s, t) in &parallel.pairs {
            assert!(surfaces.contains(&(s.surface(), t.surface())));
        }
        for p in &out.pairs {
            assert!(!p.source.is_empty() && !p.target.is_empty());
        }
    }

    #[test]
    fn save_writes_aligned_files_and_sidecar() {
        let parallel = toy_parallel(4, 47);
        let model = untrained_model(11);
        let cfg = InterpolationConfig { tau: 0.0, ..Default::default() };
        let out = build_synthetic_corpus(&parallel, &model, &model, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let prefix = dir.path().join("syn");
        out.save(&prefix).unwrap();
        let src = fs::read_to_string(dir.path().join("syn.src")).unwrap();
        let tgt = fs::read_to_string(dir.path().join("syn.tgt")).unwrap();
        let prov = fs::read_to_string(dir.path().join("syn.prov.tsv")).unwrap();
        assert_eq!(src.lines().count(), out.pairs.len());
        assert_eq!(tgt.lines().count(), out.pairs.len());
        assert_eq!(prov.lines().count(), out.pairs.len() + 1);
        assert!(prov.starts_with("line\tprovenance\talpha_src\talpha_tgt"));
    }
}
