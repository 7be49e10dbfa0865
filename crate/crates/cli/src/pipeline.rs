//! The staged experiment behind `run`: per-language autoencoders,
//! latent interpolation, translator pretraining, adversarial refinement,
//! evaluation, report. Every stage leaves its artifacts in the run
//! directory; a rerun picks up after the last one whose files exist and
//! carry the same configuration fingerprint.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use daasi_core::daae::{train_daae, DaaeModel, TrainLog};
use daasi_core::engine::Rng;
use daasi_core::interpolation::SyntheticCorpus;
use daasi_core::interpolation::{build_synthetic_corpus, Provenance};
use daasi_core::metrics::{bleu, chrf2_corpus, cross_perplexity_matrix, entropy, ttr};
use daasi_core::nmt::{build_vocab, pretrain_with, train_daasi, Critic, Generator};
use daasi_core::reward::TestEntry;
use daasi_core::reward::RewardEvaluator;
use daasi_core::synthlang::ExperimentManifest;
use daasi_core::textpipe::{load_lines, tag_source, ParallelCorpus, Sentence, Split};

use crate::ckpt::{self, MetaFields};
use crate::config::{file_hash, ExperimentConfig};
use crate::error::{at, CliError, Stage};
use crate::report::{
    self, read_json, write_json, DaaeSummary, Example, LangStats, PairScore, PerplexityMatrix,
    RunReport, SynthCounters,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Mle,
    Wgan,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Mle => "mle",
            Mode::Wgan => "wgan",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mle" => Ok(Mode::Mle),
            "wgan" => Ok(Mode::Wgan),
            other => Err(format!("unknown mode `{other}` (expected mle or wgan)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub skip_daae: bool,
    pub skip_interpolation: bool,
    pub mode: Mode,
    /// Stop once this stage's artifacts are on disk; used to exercise
    /// resumption.
    pub stop_after: Option<Stage>,
    pub quiet: bool,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunOptions {
            out_dir: out_dir.into(),
            skip_daae: false,
            skip_interpolation: false,
            mode: Mode::Wgan,
            stop_after: None,
            quiet: false,
        }
    }

    /// Human name for the flag combination. The three supported recipes
    /// get short names; anything else spells the flags out.
    pub fn system(&self) -> String {
        match (self.skip_daae, self.skip_interpolation, self.mode) {
            (false, false, Mode::Wgan) => "daasi".into(),
            (false, true, Mode::Wgan) => "daae-nmt".into(),
            (true, true, Mode::Mle) => "mle".into(),
            (d, i, m) => format!("daae={},interp={},mode={}", !d, !i, m.as_str()),
        }
    }
}

#[derive(Debug)]
pub enum PipelineOutcome {
    Completed(Box<RunReport>),
    /// `--stop-after` hit; artifacts up to and including the stage exist.
    Stopped(Stage),
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    opts: &'a RunOptions,
    manifest_hash: String,
    /// Non-holdout, non-pivot languages in manifest order.
    train_langs: Vec<String>,
    holdouts: Vec<String>,
    pivot: String,
    checkpoints: BTreeMap<String, String>,
    stage_seconds: BTreeMap<String, f64>,
    last_ckpt: Option<PathBuf>,
}

impl Ctx<'_> {
    fn info(&self, msg: impl AsRef<str>) {
        if !self.opts.quiet {
            eprintln!("[{}] {}", self.opts.system(), msg.as_ref());
        }
    }

    fn fail(&self, stage: Stage) -> impl Fn(String) -> CliError + '_ {
        let last = self.last_ckpt.clone();
        move |msg| CliError::new(stage, msg).with_checkpoint(last.clone())
    }

    fn out(&self, name: &str) -> PathBuf {
        self.opts.out_dir.join(name)
    }

    fn data(&self, name: &str) -> PathBuf {
        self.cfg.data_dir.join(name)
    }
}

fn cap_vec<T>(v: &mut Vec<T>, cap: usize) {
    if cap > 0 && v.len() > cap {
        v.truncate(cap);
    }
}

/// Train-split pair files for `lang`-pivot, capped, sources untagged.
fn load_train_pairs(ctx: &Ctx, lang: &str, split: Split) -> Result<ParallelCorpus, CliError> {
    let stem = format!("{lang}-{}", ctx.pivot);
    let src = ctx.data(&format!("{stem}.{}.{lang}", split.as_str()));
    let tgt = ctx.data(&format!("{stem}.{}.{}", split.as_str(), ctx.pivot));
    let mut corpus = ParallelCorpus::load(&src, &tgt, lang, &ctx.pivot, split)
        .map_err(|e| CliError::new(Stage::Config, format!("{}: {e}", src.display())))?;
    let cap = match split {
        Split::Train => ctx.cfg.caps.train_pairs,
        Split::Valid => ctx.cfg.caps.reward_pairs,
        Split::Test => ctx.cfg.caps.eval_sentences,
    };
    cap_vec(&mut corpus.pairs, cap);
    Ok(corpus)
}

fn stage_daae(ctx: &mut Ctx) -> Result<(BTreeMap<String, DaaeModel>, Vec<DaaeSummary>), CliError> {
    let t0 = Instant::now();
    let mut models = BTreeMap::new();
    let mut summaries = Vec::new();
    let mut langs = ctx.train_langs.clone();
    langs.push(ctx.pivot.clone());
    for lang in &langs {
        let path = ctx.out(&format!("daae-{lang}.ckpt"));
        let log_path = ctx.out(&format!("daae-{lang}.log.json"));
        let (model, id, log) = if path.exists() && log_path.exists() {
            let (model, id) = ckpt::load_daae(&path, Some(ctx.cfg.hash()))?;
            let log: TrainLog = read_json(&log_path)?;
            ctx.info(format!("daae {lang}: reusing {}", path.display()));
            (model, id, log)
        } else {
            let corpus_path = ctx.data(&format!("mono.{lang}"));
            let mut corpus = load_lines(&corpus_path, lang)
                .map_err(|e| ctx.fail(Stage::Daae)(format!("{}: {e}", corpus_path.display())))?;
            cap_vec(&mut corpus, ctx.cfg.caps.mono_sentences);
            let mut dcfg = ctx.cfg.daae.clone();
            dcfg.seed = ctx.cfg.stage_seed("daae", lang);
            ctx.info(format!("daae {lang}: training on {} sentences", corpus.len()));
            let (model, log) = train_daae(&corpus, &dcfg)
                .map_err(|e| ctx.fail(Stage::Daae)(format!("language {lang}: {e}")))?;
            let corpus_desc = format!("mono.{lang}[..{}]", corpus.len());
            let meta = MetaFields {
                config_hash: ctx.cfg.hash(),
                stage: "daae",
                corpus: &corpus_desc,
                extra: &[("lang", lang.clone())],
            };
            let id = ckpt::save_daae(&model, &path, &meta)?;
            write_json(&log_path, &log)?;
            (model, id, log)
        };
        ctx.checkpoints.insert(format!("daae-{lang}.ckpt"), id.clone());
        ctx.last_ckpt = Some(path);
        summaries.push(DaaeSummary {
            language: lang.clone(),
            epochs_run: log.epochs_run,
            converged: log.converged,
            final_rec_loss: log.rec_loss.last().copied(),
            final_val_loss: log.val_rec_loss.last().copied(),
            checkpoint_id: id,
        });
        models.insert(lang.clone(), model);
    }
    ctx.stage_seconds.insert("daae".into(), t0.elapsed().as_secs_f64());
    Ok((models, summaries))
}

fn counters_of(c: &SyntheticCorpus, config_hash: &str) -> SynthCounters {
    let hist = c.histogram();
    let n = |p: Provenance| hist.get(&p).copied().unwrap_or(0);
    SynthCounters {
        originals: n(Provenance::Original),
        src_interp: n(Provenance::SrcInterp),
        tgt_interp: n(Provenance::TgtInterp),
        both_interp: n(Provenance::BothInterp),
        rejected_src: c.rejected_src,
        rejected_tgt: c.rejected_tgt,
        duplicates_dropped: c.duplicates_dropped,
        total: c.pairs.len(),
        config: config_hash.to_string(),
    }
}

/// One synthetic corpus per training language, lang->pivot direction.
fn stage_interpolate(
    ctx: &mut Ctx,
    daaes: &BTreeMap<String, DaaeModel>,
) -> Result<(BTreeMap<String, Vec<(Sentence, Sentence)>>, BTreeMap<String, SynthCounters>), CliError>
{
    let t0 = Instant::now();
    let mut corpora = BTreeMap::new();
    let mut stats = BTreeMap::new();
    for lang in ctx.train_langs.clone() {
        let prefix = ctx.out(&format!("synth-{lang}"));
        let src_path = ctx.out(&format!("synth-{lang}.src"));
        let tgt_path = ctx.out(&format!("synth-{lang}.tgt"));
        let stats_path = ctx.out(&format!("synth-{lang}.stats.json"));
        let reusable = src_path.exists() && tgt_path.exists() && stats_path.exists();
        let counters: SynthCounters = if reusable {
            let c: SynthCounters = read_json(&stats_path)?;
            if c.config != ctx.cfg.hash() {
                return Err(ctx.fail(Stage::Interpolate)(format!(
                    "{}: config fingerprint mismatch: refusing to resume under a different \
                     configuration",
                    stats_path.display()
                )));
            }
            ctx.info(format!("interpolate {lang}: reusing {}", src_path.display()));
            c
        } else {
            let parallel = load_train_pairs(ctx, &lang, Split::Train)?;
            let da = daaes
                .get(&lang)
                .ok_or_else(|| ctx.fail(Stage::Interpolate)(format!("no autoencoder for {lang}")))?;
            let db = daaes.get(&ctx.pivot).ok_or_else(|| {
                ctx.fail(Stage::Interpolate)(format!("no autoencoder for {}", ctx.pivot))
            })?;
            ctx.info(format!(
                "interpolate {lang}: {} parallel pairs",
                parallel.pairs.len()
            ));
            let corpus = build_synthetic_corpus(&parallel, da, db, &ctx.cfg.interp)
                .map_err(|e| ctx.fail(Stage::Interpolate)(format!("pair {lang}: {e}")))?;
            corpus
                .save(&prefix)
                .map_err(|e| ctx.fail(Stage::Interpolate)(format!("saving {lang}: {e}")))?;
            let counters = counters_of(&corpus, ctx.cfg.hash());
            write_json(&stats_path, &counters)?;
            counters
        };
        // Reload from disk in both branches so a fresh run and a resumed
        // run hand the trainer byte-identical pairs.
        let corpus =
            ParallelCorpus::load(&src_path, &tgt_path, &lang, &ctx.pivot, Split::Train)
                .map_err(|e| ctx.fail(Stage::Interpolate)(format!("{}: {e}", src_path.display())))?;
        stats.insert(format!("{lang}->{}", ctx.pivot), counters);
        corpora.insert(lang.clone(), corpus.pairs);
    }
    ctx.stage_seconds.insert("interpolate".into(), t0.elapsed().as_secs_f64());
    Ok((corpora, stats))
}

/// Both directions for every training language: synthetic pairs when
/// interpolation ran, the plain parallel data otherwise. The reverse
/// direction reuses the forward set with sides swapped, which is exactly
/// what interpolating in the other direction would produce.
fn assemble_training_pairs(
    ctx: &Ctx,
    synth: Option<&BTreeMap<String, Vec<(Sentence, Sentence)>>>,
) -> Result<Vec<(Sentence, Sentence)>, CliError> {
    let mut out = Vec::new();
    for lang in &ctx.train_langs {
        let fwd: Vec<(Sentence, Sentence)> = match synth {
            Some(map) => map
                .get(lang)
                .ok_or_else(|| {
                    CliError::new(Stage::Pretrain, format!("no synthetic corpus for {lang}"))
                })?
                .clone(),
            None => load_train_pairs(ctx, lang, Split::Train)?.pairs,
        };
        for (s, t) in &fwd {
            out.push((s.clone(), t.clone()));
        }
        for (s, t) in &fwd {
            out.push((t.clone(), s.clone()));
        }
    }
    if out.is_empty() {
        return Err(CliError::new(Stage::Pretrain, "no training pairs assembled"));
    }
    Ok(out)
}

/// Seed the generator's embedding rows from the autoencoders: each content
/// token present in at least one DAAE vocabulary gets the mean of those
/// models' rows. Returns how many rows were replaced.
pub fn transfer_embeddings(
    gen: &mut Generator,
    daaes: &BTreeMap<String, DaaeModel>,
) -> Result<usize, CliError> {
    let d = gen.emb_dim;
    let tokens: Vec<(usize, String)> = (gen.vocab.content_start()..gen.vocab.size())
        .map(|id| (id, gen.vocab.token_of(id).to_string()))
        .collect();
    let mut moved = 0;
    for (id, tok) in tokens {
        let mut acc = vec![0.0; d];
        let mut n = 0usize;
        for model in daaes.values() {
            if !model.vocab.contains(&tok) {
                continue;
            }
            let emb = model.params.get("emb").map_err(at(Stage::Pretrain))?;
            let row = &emb.values()[model.vocab.id_of(&tok) * d..][..d];
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += v;
            }
            n += 1;
        }
        if n > 0 {
            let emb = gen.params.get_mut("emb").map_err(at(Stage::Pretrain))?;
            let row = &mut emb.values_mut()[id * d..][..d];
            for (r, a) in row.iter_mut().zip(&acc) {
                *r = a / n as f64;
            }
            moved += 1;
        }
    }
    Ok(moved)
}

fn check_variant(ctx: &Ctx, path: &Path, stage: Stage) -> Result<(), CliError> {
    let stored = ckpt::peek_meta(path, "system")?.unwrap_or_default();
    if stored != ctx.opts.system() {
        return Err(CliError::new(
            stage,
            format!(
                "{}: was written by system `{stored}`, this run is `{}`; use a fresh --out \
                 directory",
                path.display(),
                ctx.opts.system()
            ),
        ));
    }
    Ok(())
}

fn stage_pretrain(
    ctx: &mut Ctx,
    train_pairs: &[(Sentence, Sentence)],
    daaes: &BTreeMap<String, DaaeModel>,
) -> Result<(Generator, String, daasi_core::nmt::PretrainLog, usize), CliError> {
    let t0 = Instant::now();
    let path = ctx.out("pretrain.ckpt");
    let log_path = ctx.out("pretrain.log.json");
    let result = if path.exists() && log_path.exists() {
        let (gen, id) = ckpt::load_generator(&path, Some(ctx.cfg.hash()))?;
        check_variant(ctx, &path, Stage::Pretrain)?;
        let log = read_json(&log_path)?;
        let transferred = ckpt::peek_meta(&path, "transferred")?
            .and_then(|s| s.parse().ok())
            .unwrap_or(0);
        ctx.info(format!("pretrain: reusing {}", path.display()));
        (gen, id, log, transferred)
    } else {
        let mut ncfg = ctx.cfg.nmt.clone();
        ncfg.seed = ctx.cfg.stage_seed("nmt", "train");
        let vocab = build_vocab(train_pairs).map_err(|e| ctx.fail(Stage::Pretrain)(e.to_string()))?;
        let mut init_rng = Rng::new(ncfg.seed).fork("pretrain").fork("init");
        let mut gen = Generator::new(vocab, &ncfg, &mut init_rng);
        let transferred = if daaes.is_empty() { 0 } else { transfer_embeddings(&mut gen, daaes)? };
        ctx.info(format!(
            "pretrain: {} pairs, vocab {}, {} embedding rows transferred",
            train_pairs.len(),
            gen.vocab.size(),
            transferred
        ));
        let (gen, log) = pretrain_with(gen, train_pairs, &ncfg)
            .map_err(|e| ctx.fail(Stage::Pretrain)(e.to_string()))?;
        let corpus_desc = format!("train[{} pairs]", train_pairs.len());
        let meta = MetaFields {
            config_hash: ctx.cfg.hash(),
            stage: "pretrain",
            corpus: &corpus_desc,
            extra: &[
                ("system", ctx.opts.system()),
                ("transferred", transferred.to_string()),
            ],
        };
        let id = ckpt::save_generator(&gen, &path, &meta)?;
        write_json(&log_path, &log)?;
        (gen, id, log, transferred)
    };
    ctx.checkpoints.insert("pretrain.ckpt".into(), result.1.clone());
    ctx.last_ckpt = Some(path);
    ctx.stage_seconds.insert("pretrain".into(), t0.elapsed().as_secs_f64());
    Ok(result)
}

/// Reward entries come from the validation split so the reward signal never
/// sees test data. Sources are tagged here because the evaluator translates
/// them as-is.
fn reward_entries(ctx: &Ctx, gen: &Generator) -> Result<Vec<TestEntry>, CliError> {
    let mut entries = Vec::new();
    for lang in &ctx.train_langs {
        let corpus = load_train_pairs(ctx, lang, Split::Valid)?;
        for (s, t) in &corpus.pairs {
            entries.push(TestEntry {
                source: tag_source(s, &t.language, &gen.vocab)
                    .map_err(|e| CliError::new(Stage::Adversarial, e.to_string()))?,
                reference: t.clone(),
                lang_pair: format!("{lang}->{}", ctx.pivot),
            });
            entries.push(TestEntry {
                source: tag_source(t, &s.language, &gen.vocab)
                    .map_err(|e| CliError::new(Stage::Adversarial, e.to_string()))?,
                reference: s.clone(),
                lang_pair: format!("{}->{lang}", ctx.pivot),
            });
        }
    }
    Ok(entries)
}

#[allow(clippy::type_complexity)]
fn stage_adversarial(
    ctx: &mut Ctx,
    gen: Generator,
    train_pairs: &[(Sentence, Sentence)],
) -> Result<(Generator, String, Option<daasi_core::nmt::DaasiLog>), CliError> {
    let t0 = Instant::now();
    let gen_path = ctx.out("nmt-final.ckpt");
    let critic_path = ctx.out("critic-final.ckpt");
    let log_path = ctx.out("daasi.log.json");
    let result = if gen_path.exists() && critic_path.exists() && log_path.exists() {
        let (gen, gen_id) = ckpt::load_generator(&gen_path, Some(ctx.cfg.hash()))?;
        check_variant(ctx, &gen_path, Stage::Adversarial)?;
        let (_critic, critic_id) = ckpt::load_critic(&critic_path, Some(ctx.cfg.hash()))?;
        let log = read_json(&log_path)?;
        ctx.info(format!("adversarial: reusing {}", gen_path.display()));
        ctx.checkpoints.insert("critic-final.ckpt".into(), critic_id);
        (gen, gen_id, Some(log))
    } else {
        let mut crng = Rng::new(ctx.cfg.stage_seed("critic", "init"));
        let critic = Critic::new(ctx.cfg.nmt.emb_dim, ctx.cfg.nmt.filters, &mut crng);
        let entries = reward_entries(ctx, &gen)?;
        let partition_rng = Rng::new(ctx.cfg.stage_seed("reward", "partition"));
        let mut evaluator = RewardEvaluator::new(&entries, ctx.cfg.reward_k, &partition_rng)
            .map_err(|e| ctx.fail(Stage::Adversarial)(e.to_string()))?;
        let mut acfg = ctx.cfg.nmt.clone();
        acfg.seed = ctx.cfg.stage_seed("nmt", "adversarial");
        ctx.info(format!(
            "adversarial: {} pairs, {} reward entries in {} sets",
            train_pairs.len(),
            entries.len(),
            evaluator.k()
        ));
        let (gen, critic, log) = train_daasi(gen, critic, train_pairs, &mut evaluator, &acfg)
            .map_err(|e| ctx.fail(Stage::Adversarial)(e.to_string()))?;
        let corpus_desc = format!("train[{} pairs]", train_pairs.len());
        let meta = MetaFields {
            config_hash: ctx.cfg.hash(),
            stage: "adversarial",
            corpus: &corpus_desc,
            extra: &[("system", ctx.opts.system())],
        };
        let gen_id = ckpt::save_generator(&gen, &gen_path, &meta)?;
        let critic_id = ckpt::save_critic(&critic, &critic_path, &meta)?;
        write_json(&log_path, &log)?;
        ctx.checkpoints.insert("critic-final.ckpt".into(), critic_id);
        (gen, gen_id, Some(log))
    };
    ctx.checkpoints.insert("nmt-final.ckpt".into(), result.1.clone());
    ctx.last_ckpt = Some(gen_path);
    ctx.stage_seconds.insert("adversarial".into(), t0.elapsed().as_secs_f64());
    Ok(result)
}

/// Translate the source side and score against the references.
/// Returns corpus BLEU, corpus chrF2, and the hypothesis surfaces.
pub fn score_pair(
    gen: &Generator,
    pairs: &[(Sentence, Sentence)],
    tgt_lang: &str,
    max_len: usize,
) -> Result<(f64, f64, Vec<String>), CliError> {
    let mut hyps = Vec::with_capacity(pairs.len());
    let mut refs = Vec::with_capacity(pairs.len());
    for (s, t) in pairs {
        let tagged = tag_source(s, tgt_lang, &gen.vocab).map_err(at(Stage::Evaluate))?;
        let hyp = gen
            .translate_or_unk(&tagged, max_len)
            .map_err(at(Stage::Evaluate))?;
        hyps.push(hyp.surface());
        refs.push(t.surface());
    }
    let hyp_refs: Vec<(&str, &str)> = hyps
        .iter()
        .map(String::as_str)
        .zip(refs.iter().map(String::as_str))
        .collect();
    let b = bleu(
        &hyps.iter().map(String::as_str).collect::<Vec<_>>(),
        &refs.iter().map(String::as_str).collect::<Vec<_>>(),
    )
    .map_err(at(Stage::Evaluate))?;
    let c = chrf2_corpus(hyp_refs);
    Ok((b, c, hyps))
}

pub fn corpus_stats_for(name: &str, corpus: &[Sentence]) -> Result<LangStats, CliError> {
    let tokens: usize = corpus.iter().map(|s| s.tokens.len()).sum();
    let types: BTreeSet<&str> = corpus
        .iter()
        .flat_map(|s| s.tokens.iter().map(String::as_str))
        .collect();
    Ok(LangStats {
        language: name.to_string(),
        sentences: corpus.len(),
        tokens,
        types: types.len(),
        entropy: entropy(corpus).map_err(at(Stage::Evaluate))?,
        ttr: ttr(corpus).map_err(at(Stage::Evaluate))?,
    })
}

fn stage_evaluate(
    ctx: &mut Ctx,
    gen: &Generator,
    final_id: &str,
) -> Result<(Vec<PairScore>, Vec<Example>, Vec<LangStats>, PerplexityMatrix), CliError> {
    let t0 = Instant::now();
    let max_len = ctx.cfg.nmt.max_decode_len;

    let mut directions: Vec<(String, String, bool)> = Vec::new();
    for l in &ctx.train_langs {
        directions.push((l.clone(), ctx.pivot.clone(), false));
        directions.push((ctx.pivot.clone(), l.clone(), false));
    }
    for h in &ctx.holdouts {
        directions.push((h.clone(), ctx.pivot.clone(), true));
    }

    // An untrained model with the same vocabulary, the floor a zero-shot
    // score is compared against.
    let random_gen = {
        let mut r = Rng::new(ctx.cfg.stage_seed("random-baseline", "init"));
        Generator::new(gen.vocab.clone(), &ctx.cfg.nmt, &mut r)
    };

    let mut scores = Vec::new();
    let mut examples = Vec::new();
    for (src_lang, tgt_lang, zero_shot) in directions {
        let other = if src_lang == ctx.pivot { &tgt_lang } else { &src_lang };
        let stem = format!("{other}-{}", ctx.pivot);
        let src_file = ctx.data(&format!("{stem}.test.{src_lang}"));
        let tgt_file = ctx.data(&format!("{stem}.test.{tgt_lang}"));
        let mut corpus =
            ParallelCorpus::load(&src_file, &tgt_file, &src_lang, &tgt_lang, Split::Test)
                .map_err(|e| ctx.fail(Stage::Evaluate)(format!("{}: {e}", src_file.display())))?;
        cap_vec(&mut corpus.pairs, ctx.cfg.caps.eval_sentences);
        let (b, c, hyps) = score_pair(gen, &corpus.pairs, &tgt_lang, max_len)?;
        let random_baseline_chrf2 = if zero_shot {
            let (_, rc, _) = score_pair(&random_gen, &corpus.pairs, &tgt_lang, max_len)?;
            Some(rc)
        } else {
            None
        };
        let pair = format!("{src_lang}->{tgt_lang}");
        ctx.info(format!(
            "evaluate {pair}: BLEU {b:.4} chrF2 {c:.4} over {} pairs",
            corpus.pairs.len()
        ));
        for ((s, t), h) in corpus.pairs.iter().zip(&hyps).take(ctx.cfg.caps.examples_per_pair) {
            examples.push(Example {
                pair: pair.clone(),
                source: s.surface(),
                reference: t.surface(),
                hypothesis: h.clone(),
            });
        }
        scores.push(PairScore {
            pair,
            src_lang,
            tgt_lang,
            split: Split::Test.as_str().to_string(),
            zero_shot,
            n: corpus.pairs.len(),
            bleu: b,
            chrf2: c,
            random_baseline_chrf2,
            checkpoint_id: final_id.to_string(),
        });
    }

    let mut corpora: Vec<(String, Vec<Sentence>)> = Vec::new();
    for lang in ctx.train_langs.iter().chain([&ctx.pivot]) {
        let path = ctx.data(&format!("mono.{lang}"));
        let lines = load_lines(&path, lang)
            .map_err(|e| ctx.fail(Stage::Evaluate)(format!("{}: {e}", path.display())))?;
        corpora.push((lang.clone(), lines));
    }
    for h in &ctx.holdouts {
        let path = ctx.data(&format!("{h}-{}.test.{h}", ctx.pivot));
        let lines = load_lines(&path, h)
            .map_err(|e| ctx.fail(Stage::Evaluate)(format!("{}: {e}", path.display())))?;
        corpora.push((h.clone(), lines));
    }
    let mut stats = Vec::new();
    for (name, corpus) in &corpora {
        stats.push(corpus_stats_for(name, corpus)?);
    }
    let (names, rows) = cross_perplexity_matrix(&corpora).map_err(at(Stage::Evaluate))?;
    let matrix = PerplexityMatrix { names, rows };

    ctx.stage_seconds.insert("evaluate".into(), t0.elapsed().as_secs_f64());
    Ok((scores, examples, stats, matrix))
}

pub fn run_pipeline(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
) -> Result<PipelineOutcome, CliError> {
    cfg.validate_for_run()?;
    if opts.skip_daae && !opts.skip_interpolation {
        return Err(CliError::new(
            Stage::Config,
            "interpolation needs the autoencoders; --skip-daae implies --skip-interpolation",
        ));
    }
    if !opts.skip_daae && cfg.daae.emb_dim != cfg.nmt.emb_dim {
        return Err(CliError::new(
            Stage::Config,
            format!(
                "daae.emb_dim ({}) must equal nmt.emb_dim ({}) so embeddings can transfer",
                cfg.daae.emb_dim, cfg.nmt.emb_dim
            ),
        ));
    }
    fs::create_dir_all(&opts.out_dir)
        .map_err(|e| CliError::new(Stage::Config, format!("{}: {e}", opts.out_dir.display())))?;

    let manifest_path = cfg.data_dir.join("manifest.json");
    let manifest = ExperimentManifest::load(&manifest_path)
        .map_err(|e| CliError::new(Stage::Config, format!("{}: {e}", manifest_path.display())))?;
    let manifest_hash = file_hash(&manifest_path)?;

    let report_path = opts.out_dir.join("report.json");
    if report_path.exists() {
        let report = RunReport::load(&report_path)?;
        if report.config_hash == cfg.hash() && report.system == opts.system() {
            report::emit(&report, &opts.out_dir)?;
            return Ok(PipelineOutcome::Completed(Box::new(report)));
        }
        return Err(CliError::new(
            Stage::Config,
            format!(
                "{}: belongs to system `{}` under config {}; use a fresh --out directory",
                report_path.display(),
                report.system,
                &report.config_hash[..12.min(report.config_hash.len())]
            ),
        ));
    }

    let mut ctx = Ctx {
        cfg,
        opts,
        train_langs: manifest
            .languages
            .iter()
            .filter(|l| !l.holdout && l.code != manifest.pivot)
            .map(|l| l.code.clone())
            .collect(),
        holdouts: manifest
            .languages
            .iter()
            .filter(|l| l.holdout)
            .map(|l| l.code.clone())
            .collect(),
        pivot: manifest.pivot.clone(),
        manifest_hash,
        checkpoints: BTreeMap::new(),
        stage_seconds: BTreeMap::new(),
        last_ckpt: None,
    };
    if ctx.train_langs.is_empty() {
        return Err(CliError::new(Stage::Config, "bundle has no training languages"));
    }

    let (daaes, daae_summaries) = if opts.skip_daae {
        (BTreeMap::new(), Vec::new())
    } else {
        stage_daae(&mut ctx)?
    };
    if opts.stop_after == Some(Stage::Daae) {
        return Ok(PipelineOutcome::Stopped(Stage::Daae));
    }

    let (synth, synth_stats) = if opts.skip_interpolation {
        (None, None)
    } else {
        let (corpora, stats) = stage_interpolate(&mut ctx, &daaes)?;
        (Some(corpora), Some(stats))
    };
    if opts.stop_after == Some(Stage::Interpolate) {
        return Ok(PipelineOutcome::Stopped(Stage::Interpolate));
    }

    let train_pairs = assemble_training_pairs(&ctx, synth.as_ref())?;
    let (gen, pre_id, pretrain_log, transferred) =
        stage_pretrain(&mut ctx, &train_pairs, &daaes)?;
    if opts.stop_after == Some(Stage::Pretrain) {
        return Ok(PipelineOutcome::Stopped(Stage::Pretrain));
    }

    let (final_gen, final_id, daasi_log) = match opts.mode {
        Mode::Mle => (gen, pre_id, None),
        Mode::Wgan => stage_adversarial(&mut ctx, gen, &train_pairs)?,
    };
    if opts.stop_after == Some(Stage::Adversarial) {
        return Ok(PipelineOutcome::Stopped(Stage::Adversarial));
    }

    let (pair_scores, examples, corpus_stats, perplexity) =
        stage_evaluate(&mut ctx, &final_gen, &final_id)?;

    let report = RunReport {
        schema: 1,
        system: opts.system(),
        profile: cfg.profile.as_str().to_string(),
        config_hash: cfg.hash().to_string(),
        seed: cfg.seed,
        data_dir: cfg.data_dir.display().to_string(),
        manifest_hash: ctx.manifest_hash.clone(),
        pair_scores,
        reward_trajectory: daasi_log
            .as_ref()
            .map(|l| l.rewards.clone())
            .unwrap_or_default(),
        corpus_stats,
        perplexity,
        synthetic: synth_stats,
        daae: daae_summaries,
        pretrain: Some(pretrain_log),
        daasi: daasi_log,
        transferred_embeddings: transferred,
        checkpoints: ctx.checkpoints.clone(),
        stage_seconds: ctx.stage_seconds.clone(),
        examples,
    };
    report.save(&report_path)?;
    report::emit(&report, &opts.out_dir)?;
    ctx.info(format!(
        "done: mean trained chrF2 {:.4}, report at {}",
        report.mean_trained_chrf2(),
        report_path.display()
    ));
    Ok(PipelineOutcome::Completed(Box::new(report)))
}
