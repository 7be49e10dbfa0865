//! Run reports: a serializable record of everything a pipeline run
//! produced, plus emission as TSV files, aligned text tables and a
//! source/reference/hypothesis example dump.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use daasi_core::nmt::{DaasiLog, PretrainLog};
use daasi_core::reward::RewardReport;

use crate::config::hex;
use crate::error::{CliError, Stage};

pub const SCORES_HEADER: &str =
    "pair\tsrc\ttgt\tsplit\tzero_shot\tn\tbleu\tchrf2\trandom_baseline_chrf2\tcheckpoint";
pub const CORPUS_HEADER: &str = "language\tsentences\ttokens\ttypes\tentropy\tttr";
pub const SYNTH_HEADER: &str = "pair\toriginals\tsrc_interp\ttgt_interp\tboth_interp\t\
rejected_src\trejected_tgt\tduplicates_dropped\ttotal";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairScore {
    /// Direction label, `src->tgt`.
    pub pair: String,
    pub src_lang: String,
    pub tgt_lang: String,
    pub split: String,
    pub zero_shot: bool,
    /// Sentence pairs scored.
    pub n: usize,
    pub bleu: f64,
    pub chrf2: f64,
    /// chrF2 of a never-trained model on the same pair; zero-shot rows only.
    pub random_baseline_chrf2: Option<f64>,
    pub checkpoint_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LangStats {
    pub language: String,
    pub sentences: usize,
    pub tokens: usize,
    pub types: usize,
    pub entropy: f64,
    pub ttr: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerplexityMatrix {
    pub names: Vec<String>,
    /// rows[i][j] = perplexity of corpus j under the model of corpus i.
    pub rows: Vec<Vec<f64>>,
}

impl PerplexityMatrix {
    /// Per row, whether the diagonal entry is the strict row minimum.
    /// Recomputed from the stored scores rather than trusted.
    pub fn diagonal_flags(&self) -> Vec<bool> {
        self.rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter().enumerate().all(|(j, &v)| j == i || row[i] < v)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SynthCounters {
    pub originals: usize,
    pub src_interp: usize,
    pub tgt_interp: usize,
    pub both_interp: usize,
    pub rejected_src: usize,
    pub rejected_tgt: usize,
    pub duplicates_dropped: usize,
    pub total: usize,
    /// Fingerprint of the config the corpus was built under.
    pub config: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DaaeSummary {
    pub language: String,
    pub epochs_run: usize,
    pub converged: bool,
    pub final_rec_loss: Option<f64>,
    pub final_val_loss: Option<f64>,
    pub checkpoint_id: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Example {
    pub pair: String,
    pub source: String,
    pub reference: String,
    pub hypothesis: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: u32,
    /// daasi, daae-nmt, mle, or an explicit flag combination.
    pub system: String,
    pub profile: String,
    pub config_hash: String,
    pub seed: u64,
    pub data_dir: String,
    pub manifest_hash: String,
    pub pair_scores: Vec<PairScore>,
    /// One entry per reward evaluation during adversarial training.
    pub reward_trajectory: Vec<RewardReport>,
    pub corpus_stats: Vec<LangStats>,
    pub perplexity: PerplexityMatrix,
    /// Per-pair synthetic-data provenance; absent when interpolation was
    /// skipped.
    pub synthetic: Option<BTreeMap<String, SynthCounters>>,
    pub daae: Vec<DaaeSummary>,
    pub pretrain: Option<PretrainLog>,
    pub daasi: Option<DaasiLog>,
    /// Embedding rows seeded from the autoencoders before pretraining.
    pub transferred_embeddings: usize,
    /// Artifact file name to checkpoint id.
    pub checkpoints: BTreeMap<String, String>,
    /// Wall-clock seconds per stage; excluded from the score digest.
    pub stage_seconds: BTreeMap<String, f64>,
    /// A few source/reference/hypothesis triples per direction.
    pub examples: Vec<Example>,
}

impl RunReport {
    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::new(Stage::Report, e.to_string()))?;
        fs::write(path, text)
            .map_err(|e| CliError::new(Stage::Report, format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::new(Stage::Report, format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::new(Stage::Report, e.to_string()))
    }

    /// Digest over every score-bearing field, bit-exact on the floats.
    /// Wall-clock times and reward timestamps are excluded, so two runs of
    /// the same configuration must agree on this value.
    pub fn score_digest(&self) -> String {
        let mut h = Sha256::new();
        let mut feed = |s: &str| {
            h.update(s.as_bytes());
            h.update([0u8]);
        };
        feed(&self.system);
        feed(&self.config_hash);
        feed(&self.manifest_hash);
        for p in &self.pair_scores {
            feed(&p.pair);
            feed(&p.n.to_string());
            feed(&format!("{:016x}", p.bleu.to_bits()));
            feed(&format!("{:016x}", p.chrf2.to_bits()));
            if let Some(r) = p.random_baseline_chrf2 {
                feed(&format!("{:016x}", r.to_bits()));
            }
            feed(&p.checkpoint_id);
        }
        for r in &self.reward_trajectory {
            feed(&r.checkpoint_id);
            feed(&format!("{:016x}", r.r_mmt.to_bits()));
            for (lang, v) in &r.r_per_lang {
                feed(lang);
                feed(&format!("{:016x}", v.to_bits()));
            }
        }
        for row in &self.perplexity.rows {
            for v in row {
                feed(&format!("{:016x}", v.to_bits()));
            }
        }
        for s in &self.corpus_stats {
            feed(&s.language);
            feed(&format!("{:016x}", s.entropy.to_bits()));
            feed(&format!("{:016x}", s.ttr.to_bits()));
        }
        for (name, id) in &self.checkpoints {
            feed(name);
            feed(id);
        }
        hex(&h.finalize())
    }

    /// Mean test chrF2 over the trained (non-zero-shot) directions.
    pub fn mean_trained_chrf2(&self) -> f64 {
        let scores: Vec<f64> = self
            .pair_scores
            .iter()
            .filter(|p| !p.zero_shot)
            .map(|p| p.chrf2)
            .collect();
        if scores.is_empty() {
            return 0.0;
        }
        scores.iter().sum::<f64>() / scores.len() as f64
    }
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    fs::write(dir.join(name), content)
        .map_err(|e| CliError::new(Stage::Report, format!("{name}: {e}")))
}

/// Emit the TSV files, the aligned-table summary and the example dump into
/// `dir`. Everything is derived from the report alone, so `report --run`
/// can regenerate the set from `report.json`.
pub fn emit(report: &RunReport, dir: &Path) -> Result<(), CliError> {
    write_file(dir, "scores.tsv", &scores_tsv(report))?;
    write_file(dir, "perplexity.tsv", &perplexity_tsv(&report.perplexity))?;
    write_file(dir, "corpus.tsv", &corpus_tsv(&report.corpus_stats))?;
    write_file(dir, "rewards.tsv", &rewards_tsv(&report.reward_trajectory))?;
    if let Some(synth) = &report.synthetic {
        write_file(dir, "synthetic.tsv", &synthetic_tsv(synth))?;
    }
    write_file(dir, "report.txt", &text_tables(report))?;
    write_file(dir, "examples.txt", &example_dump(report))?;
    Ok(())
}

pub fn scores_tsv(report: &RunReport) -> String {
    let mut out = String::from(SCORES_HEADER);
    out.push('\n');
    for p in &report.pair_scores {
        let rnd = p
            .random_baseline_chrf2
            .map(|v| format!("{v:.6}"))
            .unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{}\t{}",
            p.pair, p.src_lang, p.tgt_lang, p.split, p.zero_shot, p.n, p.bleu, p.chrf2, rnd,
            p.checkpoint_id
        );
    }
    out
}

pub fn perplexity_tsv(m: &PerplexityMatrix) -> String {
    let mut out = String::from("corpus");
    for n in &m.names {
        let _ = write!(out, "\t{n}");
    }
    out.push('\n');
    for (name, row) in m.names.iter().zip(&m.rows) {
        let _ = write!(out, "{name}");
        for v in row {
            let _ = write!(out, "\t{v:.4}");
        }
        out.push('\n');
    }
    out
}

pub fn corpus_tsv(stats: &[LangStats]) -> String {
    let mut out = String::from(CORPUS_HEADER);
    out.push('\n');
    for s in stats {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{:.6}\t{:.6}",
            s.language, s.sentences, s.tokens, s.types, s.entropy, s.ttr
        );
    }
    out
}

pub fn rewards_tsv(rewards: &[RewardReport]) -> String {
    let mut langs: Vec<String> = Vec::new();
    for r in rewards {
        for k in r.r_per_lang.keys() {
            if !langs.contains(k) {
                langs.push(k.clone());
            }
        }
    }
    langs.sort();
    let mut out = String::from("eval\tcheckpoint\tset\tr_mmt");
    for l in &langs {
        let _ = write!(out, "\t{l}");
    }
    out.push('\n');
    for (i, r) in rewards.iter().enumerate() {
        let _ = write!(out, "{i}\t{}\t{}\t{:.8}", r.checkpoint_id, r.set_index, r.r_mmt);
        for l in &langs {
            match r.r_per_lang.get(l) {
                Some(v) => {
                    let _ = write!(out, "\t{v:.8}");
                }
                None => out.push_str("\t-"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn synthetic_tsv(synth: &BTreeMap<String, SynthCounters>) -> String {
    let mut out = String::from(SYNTH_HEADER);
    out.push('\n');
    for (pair, c) in synth {
        let _ = writeln!(
            out,
            "{pair}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            c.originals,
            c.src_interp,
            c.tgt_interp,
            c.both_interp,
            c.rejected_src,
            c.rejected_tgt,
            c.duplicates_dropped,
            c.total
        );
    }
    out
}

fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let fmt_row = |cells: &[String], widths: &[usize], out: &mut String| {
        for (i, cell) in cells.iter().enumerate() {
            let _ = write!(out, "{:<w$}", cell, w = widths[i] + 2);
        }
        while out.ends_with(' ') {
            out.pop();
        }
        out.push('\n');
    };
    let head: Vec<String> = header.iter().map(|h| h.to_string()).collect();
    fmt_row(&head, &widths, &mut out);
    let rule: Vec<String> = widths.iter().map(|w| "-".repeat(*w)).collect();
    fmt_row(&rule, &widths, &mut out);
    for row in rows {
        fmt_row(row, &widths, &mut out);
    }
    out
}

pub fn text_tables(report: &RunReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "system: {}", report.system);
    let _ = writeln!(out, "profile: {}", report.profile);
    let _ = writeln!(out, "seed: {}", report.seed);
    let _ = writeln!(out, "config: {}", report.config_hash);
    let _ = writeln!(out, "bundle: {} ({})", report.data_dir, report.manifest_hash);
    let _ = writeln!(out, "mean trained chrF2: {:.4}", report.mean_trained_chrf2());
    out.push('\n');

    out.push_str("Translation scores\n");
    let rows: Vec<Vec<String>> = report
        .pair_scores
        .iter()
        .map(|p| {
            vec![
                p.pair.clone(),
                p.split.clone(),
                if p.zero_shot { "yes".into() } else { "no".into() },
                p.n.to_string(),
                format!("{:.4}", p.bleu),
                format!("{:.4}", p.chrf2),
                p.random_baseline_chrf2
                    .map(|v| format!("{v:.4}"))
                    .unwrap_or_else(|| "-".into()),
                p.checkpoint_id.clone(),
            ]
        })
        .collect();
    out.push_str(&table(
        &["pair", "split", "zero-shot", "n", "BLEU", "chrF2", "random", "checkpoint"],
        &rows,
    ));
    out.push('\n');

    out.push_str("Cross-perplexity (rows: model corpus, columns: evaluated corpus).\n");
    out.push_str("A `*` marks a diagonal entry that is the strict row minimum.\n");
    let flags = report.perplexity.diagonal_flags();
    let mut header: Vec<&str> = vec!["corpus"];
    for n in &report.perplexity.names {
        header.push(n);
    }
    let rows: Vec<Vec<String>> = report
        .perplexity
        .names
        .iter()
        .zip(&report.perplexity.rows)
        .enumerate()
        .map(|(i, (name, row))| {
            let mut cells = vec![name.clone()];
            for (j, v) in row.iter().enumerate() {
                let mark = if i == j && flags[i] { "*" } else { "" };
                cells.push(format!("{v:.2}{mark}"));
            }
            cells
        })
        .collect();
    out.push_str(&table(&header, &rows));
    out.push('\n');

    out.push_str("Corpus statistics\n");
    let rows: Vec<Vec<String>> = report
        .corpus_stats
        .iter()
        .map(|s| {
            vec![
                s.language.clone(),
                s.sentences.to_string(),
                s.tokens.to_string(),
                s.types.to_string(),
                format!("{:.4}", s.entropy),
                format!("{:.4}", s.ttr),
            ]
        })
        .collect();
    out.push_str(&table(
        &["language", "sentences", "tokens", "types", "entropy", "TTR"],
        &rows,
    ));
    out.push('\n');

    if let Some(synth) = &report.synthetic {
        out.push_str("Synthetic data provenance\n");
        let rows: Vec<Vec<String>> = synth
            .iter()
            .map(|(pair, c)| {
                vec![
                    pair.clone(),
                    c.originals.to_string(),
                    c.src_interp.to_string(),
                    c.tgt_interp.to_string(),
                    c.both_interp.to_string(),
                    c.rejected_src.to_string(),
                    c.rejected_tgt.to_string(),
                    c.duplicates_dropped.to_string(),
                    c.total.to_string(),
                ]
            })
            .collect();
        out.push_str(&table(
            &[
                "pair",
                "original",
                "src-interp",
                "tgt-interp",
                "both-interp",
                "rej-src",
                "rej-tgt",
                "dups",
                "total",
            ],
            &rows,
        ));
        out.push('\n');
    }

    if !report.reward_trajectory.is_empty() {
        let first = report.reward_trajectory.first().map(|r| r.r_mmt).unwrap_or(0.0);
        let last = report.reward_trajectory.last().map(|r| r.r_mmt).unwrap_or(0.0);
        let _ = writeln!(
            out,
            "Reward trajectory: {} evaluations, R_MMT {:.6} -> {:.6} (full trace in rewards.tsv)",
            report.reward_trajectory.len(),
            first,
            last
        );
        out.push('\n');
    }

    if !report.daae.is_empty() {
        out.push_str("Autoencoders\n");
        let rows: Vec<Vec<String>> = report
            .daae
            .iter()
            .map(|d| {
                vec![
                    d.language.clone(),
                    d.epochs_run.to_string(),
                    if d.converged { "yes".into() } else { "no".into() },
                    d.final_rec_loss.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
                    d.final_val_loss.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
                    d.checkpoint_id.clone(),
                ]
            })
            .collect();
        out.push_str(&table(
            &["language", "epochs", "converged", "rec loss", "val loss", "checkpoint"],
            &rows,
        ));
        out.push('\n');
    }

    let _ = writeln!(out, "Embedding rows transferred: {}", report.transferred_embeddings);
    if !report.stage_seconds.is_empty() {
        let total: f64 = report.stage_seconds.values().sum();
        let per: Vec<String> = report
            .stage_seconds
            .iter()
            .map(|(k, v)| format!("{k} {v:.1}s"))
            .collect();
        let _ = writeln!(out, "Stage wall time: {} (total {total:.1}s)", per.join(", "));
    }
    out
}

pub fn example_dump(report: &RunReport) -> String {
    let mut out = String::new();
    let mut current = "";
    for e in &report.examples {
        if e.pair != current {
            if !out.is_empty() {
                out.push('\n');
            }
            let _ = writeln!(out, "== {} ==", e.pair);
            current = &e.pair;
        }
        let _ = writeln!(out, "src: {}", e.source);
        let _ = writeln!(out, "ref: {}", e.reference);
        let _ = writeln!(out, "hyp: {}", e.hypothesis);
        out.push('\n');
    }
    out
}

/// Serialize any value as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::new(Stage::Report, e.to_string()))?;
    fs::write(path, text)
        .map_err(|e| CliError::new(Stage::Report, format!("{}: {e}", path.display())))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::new(Stage::Report, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::new(Stage::Report, format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_report() -> RunReport {
        RunReport {
            schema: 1,
            system: "daasi".into(),
            profile: "desk".into(),
            config_hash: "cafe".into(),
            seed: 7,
            data_dir: "bundle".into(),
            manifest_hash: "beef".into(),
            pair_scores: vec![PairScore {
                pair: "lga->piv".into(),
                src_lang: "lga".into(),
                tgt_lang: "piv".into(),
                split: "test".into(),
                zero_shot: false,
                n: 10,
                bleu: 0.25,
                chrf2: 0.5,
                random_baseline_chrf2: None,
                checkpoint_id: "abc".into(),
            }],
            reward_trajectory: vec![],
            corpus_stats: vec![],
            perplexity: PerplexityMatrix {
                names: vec!["a".into(), "b".into()],
                rows: vec![vec![1.0, 3.0], vec![2.5, 2.0]],
            },
            synthetic: None,
            daae: vec![],
            pretrain: None,
            daasi: None,
            transferred_embeddings: 0,
            checkpoints: BTreeMap::new(),
            stage_seconds: BTreeMap::new(),
            examples: vec![Example {
                pair: "lga->piv".into(),
                source: "ka ru".into(),
                reference: "ka ru".into(),
                hypothesis: "ka".into(),
            }],
        }
    }

    #[test]
    fn scores_header_is_stable() {
        let tsv = scores_tsv(&toy_report());
        assert!(tsv.starts_with(SCORES_HEADER));
        assert!(tsv.contains("lga->piv\tlga\tpiv\ttest\tfalse\t10\t0.250000\t0.500000\t-\tabc"));
    }

    #[test]
    fn diagonal_flags_recompute_from_scores() {
        let r = toy_report();
        assert_eq!(r.perplexity.diagonal_flags(), vec![true, true]);
        let mut bad = r.perplexity.clone();
        bad.rows[0][0] = 5.0;
        assert_eq!(bad.diagonal_flags(), vec![false, true]);
    }

    #[test]
    fn digest_ignores_wall_time_but_sees_scores() {
        let a = toy_report();
        let mut b = a.clone();
        b.stage_seconds.insert("daae".into(), 123.0);
        assert_eq!(a.score_digest(), b.score_digest());
        let mut c = a.clone();
        c.pair_scores[0].chrf2 += 1e-15;
        assert_ne!(a.score_digest(), c.score_digest());
    }

    #[test]
    fn example_dump_groups_by_pair() {
        let text = example_dump(&toy_report());
        assert!(text.contains("== lga->piv =="));
        assert!(text.contains("hyp: ka"));
    }

    #[test]
    fn json_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let r = toy_report();
        r.save(&path).unwrap();
        let loaded = RunReport::load(&path).unwrap();
        assert_eq!(loaded.score_digest(), r.score_digest());
    }
}
