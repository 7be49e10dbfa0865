//! `daasi`: corpus generation, the individual pipeline tools, and the
//! end-to-end `run`/`report` harness. Every failure is tagged with the
//! stage it came from and mapped to a stable exit code.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use daasi_core::daae::train_daae;
use daasi_core::engine::Rng;
use daasi_core::interpolation::build_synthetic_corpus;
use daasi_core::metrics::{bleu, chrf2_corpus, cross_perplexity_matrix};
use daasi_core::nmt::{build_vocab, pretrain_with, train_daasi, Critic, Generator};
use daasi_core::reward::{RewardEvaluator, TestEntry};
use daasi_core::synthlang::{make_experiment, BundleSpec, ExperimentManifest};
use daasi_core::textpipe::{
    load_lines, parse_tag, perturb_with, save_lines, tag_source, NoiseSpec, ParallelCorpus,
    Sentence, Split, TransliterationTable, Vocabulary,
};

use daasi_cli::ckpt::{self, MetaFields};
use daasi_cli::error::{at, CliError, Stage};
use daasi_cli::pipeline::{self, run_pipeline, Mode, PipelineOutcome, RunOptions};
use daasi_cli::report::{self, RunReport};
use daasi_cli::ExperimentConfig;

#[derive(Parser)]
#[command(name = "daasi", version, about = "Multilingual low-resource MT laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic language bundle from a JSON spec.
    SynthGen {
        /// Bundle spec; built-in defaults when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a two-column transliteration table line by line.
    Translit {
        #[arg(long)]
        table: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Map in the reverse direction.
        #[arg(long)]
        reverse: bool,
    },
    /// Corrupt a corpus with seeded deletion/substitution/swap noise.
    Perturb {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        p_delete: f64,
        #[arg(long, default_value_t = 0.1)]
        p_substitute: f64,
        #[arg(long, default_value_t = 0.1)]
        p_swap: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value = "und")]
        lang: String,
    },
    /// Train a denoising adversarial autoencoder on monolingual text.
    TrainDaae {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        lang: String,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a synthetic parallel corpus by latent interpolation.
    Interpolate {
        /// Source and target sides of the parallel corpus.
        #[arg(long, num_args = 2, value_names = ["SRC", "TGT"])]
        parallel: Vec<PathBuf>,
        #[arg(long)]
        daae_src: PathBuf,
        #[arg(long)]
        daae_tgt: PathBuf,
        /// Output prefix; writes PREFIX.src, PREFIX.tgt, PREFIX.prov.tsv.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "src")]
        src_lang: String,
        #[arg(long, default_value = "tgt")]
        tgt_lang: String,
    },
    /// Train a translator on a PREFIX.src/PREFIX.tgt pair file.
    TrainNmt {
        /// Corpus prefix as written by `interpolate`.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        daae_src: Option<PathBuf>,
        #[arg(long)]
        daae_tgt: Option<PathBuf>,
        #[arg(long, default_value = "wgan")]
        mode: Mode,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "src")]
        src_lang: String,
        #[arg(long, default_value = "tgt")]
        tgt_lang: String,
    },
    /// Translate a file of untagged sentences into a target language.
    Translate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        to: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 24)]
        max_len: usize,
    },
    /// Score a model against a parallel test set.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        src: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        to: String,
        #[arg(long, default_value_t = 24)]
        max_len: usize,
    },
    /// Corpus-level BLEU and chrF2 between two sentence files.
    Metrics {
        #[arg(long)]
        hyp: PathBuf,
        #[arg(long = "ref")]
        reference: PathBuf,
    },
    /// Cross-perplexity matrix plus entropy/TTR rows for a bundle.
    Analyze {
        #[arg(long)]
        corpora: PathBuf,
        /// Also write perplexity.tsv and corpus.tsv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the full pipeline under a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Random translator initialization instead of autoencoder transfer.
        #[arg(long)]
        skip_daae: bool,
        /// Train on the plain parallel data, no synthetic pairs.
        #[arg(long)]
        skip_interpolation: bool,
        #[arg(long, default_value = "wgan")]
        mode: Mode,
        /// Stop once this stage's artifacts exist (daae, interpolate,
        /// pretrain, adversarial).
        #[arg(long)]
        stop_after: Option<String>,
        #[arg(long)]
        quiet: bool,
    },
    /// Re-emit every report artifact from a run directory's report.json.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

fn retag(stage: Stage) -> impl Fn(CliError) -> CliError {
    move |e| CliError { stage, ..e }
}

fn read_text(path: &Path, stage: Stage) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::new(stage, format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str, stage: Stage) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::new(stage, format!("{}: {e}", path.display())))
}

fn suffixed(prefix: &Path, ext: &str) -> PathBuf {
    PathBuf::from(format!("{}.{ext}", prefix.display()))
}

fn cmd_synth_gen(spec: Option<PathBuf>, out: PathBuf) -> Result<(), CliError> {
    let spec = match spec {
        Some(path) => {
            let text = read_text(&path, Stage::SynthGen)?;
            serde_json::from_str::<BundleSpec>(&text)
                .map_err(|e| CliError::new(Stage::SynthGen, format!("{}: {e}", path.display())))?
        }
        None => BundleSpec::default(),
    };
    let manifest = make_experiment(&spec, &out).map_err(at(Stage::SynthGen))?;
    let langs: Vec<&str> = manifest.languages.iter().map(|l| l.code.as_str()).collect();
    println!(
        "bundle at {}: languages {}, manifest {}",
        out.display(),
        langs.join(" "),
        out.join("manifest.json").display()
    );
    Ok(())
}

fn cmd_translit(
    table: PathBuf,
    input: PathBuf,
    out: PathBuf,
    reverse: bool,
) -> Result<(), CliError> {
    let table = TransliterationTable::load(&table).map_err(at(Stage::Translit))?;
    let text = read_text(&input, Stage::Translit)?;
    let (mapped_text, cov) = if reverse {
        table.detransliterate_text(&text)
    } else {
        table.transliterate_text(&text)
    };
    write_text(&out, &mapped_text, Stage::Translit)?;
    println!("mapped {} tokens, passed through {}", cov.mapped, cov.passed_through);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_perturb(
    input: PathBuf,
    out: PathBuf,
    p_delete: f64,
    p_substitute: f64,
    p_swap: f64,
    seed: u64,
    lang: String,
) -> Result<(), CliError> {
    let spec = NoiseSpec { p_delete, p_substitute, p_swap, seed };
    spec.validate().map_err(at(Stage::Perturb))?;
    let corpus = load_lines(&input, &lang).map_err(at(Stage::Perturb))?;
    let surfaces: Vec<String> = corpus.iter().map(|s| s.surface()).collect();
    let vocab = Vocabulary::build(surfaces.iter().map(String::as_str), &[])
        .map_err(at(Stage::Perturb))?;
    let mut rng = Rng::new(spec.seed);
    let mut noisy = Vec::with_capacity(corpus.len());
    for s in &corpus {
        noisy.push(perturb_with(s, &spec, &vocab, &mut rng).map_err(at(Stage::Perturb))?);
    }
    save_lines(&out, &noisy).map_err(at(Stage::Perturb))?;
    println!("perturbed {} sentences into {}", noisy.len(), out.display());
    Ok(())
}

fn cmd_train_daae(
    corpus: PathBuf,
    lang: String,
    config: PathBuf,
    out: PathBuf,
) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(&config)?;
    let sentences = load_lines(&corpus, &lang).map_err(at(Stage::Daae))?;
    let mut dcfg = cfg.daae.clone();
    dcfg.seed = cfg.stage_seed("daae", &lang);
    let (model, log) = train_daae(&sentences, &dcfg).map_err(at(Stage::Daae))?;
    let corpus_desc = format!("{}[{}]", corpus.display(), sentences.len());
    let meta = MetaFields {
        config_hash: cfg.hash(),
        stage: "daae",
        corpus: &corpus_desc,
        extra: &[("lang", lang.clone())],
    };
    let id = ckpt::save_daae(&model, &out, &meta)?;
    report::write_json(&out.with_extension("log.json"), &log).map_err(retag(Stage::Daae))?;
    println!(
        "daae {lang}: {} epochs, converged {}, rec loss {:.4}, checkpoint {id}",
        log.epochs_run,
        log.converged,
        log.rec_loss.last().copied().unwrap_or(f64::NAN)
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_interpolate(
    parallel: Vec<PathBuf>,
    daae_src: PathBuf,
    daae_tgt: PathBuf,
    out: PathBuf,
    config: Option<PathBuf>,
    src_lang: String,
    tgt_lang: String,
) -> Result<(), CliError> {
    let cfg = match config {
        Some(p) => ExperimentConfig::load(&p)?,
        None => ExperimentConfig::parse("")?,
    };
    let (da, _) = ckpt::load_daae(&daae_src, None).map_err(retag(Stage::Interpolate))?;
    let (db, _) = ckpt::load_daae(&daae_tgt, None).map_err(retag(Stage::Interpolate))?;
    let corpus = ParallelCorpus::load(&parallel[0], &parallel[1], &src_lang, &tgt_lang, Split::Train)
        .map_err(at(Stage::Interpolate))?;
    let synth = build_synthetic_corpus(&corpus, &da, &db, &cfg.interp)
        .map_err(at(Stage::Interpolate))?;
    synth.save(&out).map_err(at(Stage::Interpolate))?;
    let hist = synth.histogram();
    let breakdown: Vec<String> = hist.iter().map(|(p, n)| format!("{p} {n}")).collect();
    println!(
        "{} pairs ({}), rejected src {} tgt {}, duplicates dropped {}",
        synth.pairs.len(),
        breakdown.join(", "),
        synth.rejected_src,
        synth.rejected_tgt,
        synth.duplicates_dropped
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_train_nmt(
    corpus: PathBuf,
    daae_src: Option<PathBuf>,
    daae_tgt: Option<PathBuf>,
    mode: Mode,
    config: PathBuf,
    out: PathBuf,
    src_lang: String,
    tgt_lang: String,
) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(&config)?;
    let src_path = suffixed(&corpus, "src");
    let tgt_path = suffixed(&corpus, "tgt");
    let parallel = ParallelCorpus::load(&src_path, &tgt_path, &src_lang, &tgt_lang, Split::Train)
        .map_err(at(Stage::Pretrain))?;
    let pairs = parallel.pairs;
    if pairs.is_empty() {
        return Err(CliError::new(Stage::Pretrain, "corpus has no usable pairs"));
    }

    let mut ncfg = cfg.nmt.clone();
    ncfg.seed = cfg.stage_seed("nmt", "train");
    let vocab = build_vocab(&pairs).map_err(at(Stage::Pretrain))?;
    let mut init_rng = Rng::new(ncfg.seed).fork("pretrain").fork("init");
    let mut gen = Generator::new(vocab, &ncfg, &mut init_rng);

    let mut daaes = BTreeMap::new();
    if let Some(p) = &daae_src {
        let (m, _) = ckpt::load_daae(p, None).map_err(retag(Stage::Pretrain))?;
        daaes.insert(src_lang.clone(), m);
    }
    if let Some(p) = &daae_tgt {
        let (m, _) = ckpt::load_daae(p, None).map_err(retag(Stage::Pretrain))?;
        daaes.insert(tgt_lang.clone(), m);
    }
    let transferred = if daaes.is_empty() {
        0
    } else {
        if cfg.daae.emb_dim != ncfg.emb_dim {
            return Err(CliError::new(
                Stage::Pretrain,
                format!(
                    "daae.emb_dim ({}) must equal nmt.emb_dim ({}) so embeddings can transfer",
                    cfg.daae.emb_dim, ncfg.emb_dim
                ),
            ));
        }
        pipeline::transfer_embeddings(&mut gen, &daaes)?
    };

    let (gen, log) = pretrain_with(gen, &pairs, &ncfg).map_err(at(Stage::Pretrain))?;
    report::write_json(&out.with_extension("pretrain.log.json"), &log)
        .map_err(retag(Stage::Pretrain))?;

    let corpus_desc = format!("{}[{}]", corpus.display(), pairs.len());
    let final_gen = match mode {
        Mode::Mle => gen,
        Mode::Wgan => {
            let mut crng = Rng::new(cfg.stage_seed("critic", "init"));
            let critic = Critic::new(ncfg.emb_dim, ncfg.filters, &mut crng);
            let mut entries = Vec::new();
            for (s, t) in &pairs {
                entries.push(TestEntry {
                    source: tag_source(s, &t.language, &gen.vocab)
                        .map_err(at(Stage::Adversarial))?,
                    reference: t.clone(),
                    lang_pair: format!("{src_lang}->{tgt_lang}"),
                });
            }
            entries.truncate(cfg.caps.reward_pairs.max(cfg.reward_k));
            let partition_rng = Rng::new(cfg.stage_seed("reward", "partition"));
            let mut evaluator = RewardEvaluator::new(&entries, cfg.reward_k, &partition_rng)
                .map_err(at(Stage::Adversarial))?;
            let mut acfg = ncfg.clone();
            acfg.seed = cfg.stage_seed("nmt", "adversarial");
            let (gen, critic, log) = train_daasi(gen, critic, &pairs, &mut evaluator, &acfg)
                .map_err(at(Stage::Adversarial))?;
            let meta = MetaFields {
                config_hash: cfg.hash(),
                stage: "adversarial",
                corpus: &corpus_desc,
                extra: &[],
            };
            ckpt::save_critic(&critic, &out.with_extension("critic.ckpt"), &meta)?;
            report::write_json(&out.with_extension("daasi.log.json"), &log)
                .map_err(retag(Stage::Adversarial))?;
            gen
        }
    };
    let meta = MetaFields {
        config_hash: cfg.hash(),
        stage: if mode == Mode::Mle { "pretrain" } else { "adversarial" },
        corpus: &corpus_desc,
        extra: &[],
    };
    let id = ckpt::save_generator(&final_gen, &out, &meta)?;
    println!(
        "model at {} (checkpoint {id}, mode {}, {transferred} embedding rows transferred)",
        out.display(),
        mode.as_str()
    );
    Ok(())
}

fn cmd_translate(
    model: PathBuf,
    input: PathBuf,
    to: String,
    out: PathBuf,
    max_len: usize,
) -> Result<(), CliError> {
    let (gen, _) = ckpt::load_generator(&model, None).map_err(retag(Stage::Translate))?;
    let text = read_text(&input, Stage::Translate)?;
    let mut lines = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            lines.push(String::new());
            continue;
        }
        let s = Sentence::from_text(line, "src");
        let tagged = if s.tokens.first().map(|t| parse_tag(t).is_some()).unwrap_or(false) {
            s
        } else {
            tag_source(&s, &to, &gen.vocab).map_err(at(Stage::Translate))?
        };
        let hyp = gen.translate_or_unk(&tagged, max_len).map_err(at(Stage::Translate))?;
        lines.push(hyp.surface());
    }
    write_text(&out, &(lines.join("\n") + "\n"), Stage::Translate)?;
    println!("translated {} lines into {}", lines.len(), out.display());
    Ok(())
}

fn cmd_evaluate(
    model: PathBuf,
    src: PathBuf,
    reference: PathBuf,
    to: String,
    max_len: usize,
) -> Result<(), CliError> {
    let (gen, id) = ckpt::load_generator(&model, None).map_err(retag(Stage::Evaluate))?;
    let corpus = ParallelCorpus::load(&src, &reference, "src", &to, Split::Test)
        .map_err(at(Stage::Evaluate))?;
    let (b, c, _) = pipeline::score_pair(&gen, &corpus.pairs, &to, max_len)?;
    println!("n\t{}", corpus.pairs.len());
    println!("bleu\t{b:.6}");
    println!("chrf2\t{c:.6}");
    println!("checkpoint\t{id}");
    Ok(())
}

fn cmd_metrics(hyp: PathBuf, reference: PathBuf) -> Result<(), CliError> {
    let hyp_text = read_text(&hyp, Stage::Metrics)?;
    let ref_text = read_text(&reference, Stage::Metrics)?;
    let hyps: Vec<&str> = hyp_text.lines().collect();
    let refs: Vec<&str> = ref_text.lines().collect();
    if hyps.len() != refs.len() {
        return Err(CliError::new(
            Stage::Metrics,
            format!("line counts differ: {} hypotheses vs {} references", hyps.len(), refs.len()),
        ));
    }
    let b = bleu(&hyps, &refs).map_err(at(Stage::Metrics))?;
    let c = chrf2_corpus(hyps.iter().copied().zip(refs.iter().copied()));
    println!("n\t{}", hyps.len());
    println!("bleu\t{b:.6}");
    println!("chrf2\t{c:.6}");
    Ok(())
}

/// Corpora for `analyze`: manifest-aware when the directory is a bundle,
/// otherwise every `mono.<lang>` file in it.
fn analyze_corpora(dir: &Path) -> Result<Vec<(String, Vec<Sentence>)>, CliError> {
    let manifest_path = dir.join("manifest.json");
    let mut out = Vec::new();
    if manifest_path.exists() {
        let manifest = ExperimentManifest::load(&manifest_path).map_err(at(Stage::Analyze))?;
        for entry in &manifest.languages {
            let path = if entry.holdout {
                dir.join(format!("{}-{}.test.{}", entry.code, manifest.pivot, entry.code))
            } else {
                dir.join(format!("mono.{}", entry.code))
            };
            let lines = load_lines(&path, &entry.code)
                .map_err(|e| CliError::new(Stage::Analyze, format!("{}: {e}", path.display())))?;
            out.push((entry.code.clone(), lines));
        }
        return Ok(out);
    }
    let mut names = Vec::new();
    let entries = fs::read_dir(dir)
        .map_err(|e| CliError::new(Stage::Analyze, format!("{}: {e}", dir.display())))?;
    for entry in entries {
        let entry = entry.map_err(at(Stage::Analyze))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if let Some(lang) = name.strip_prefix("mono.") {
            names.push((lang.to_string(), entry.path()));
        }
    }
    names.sort();
    for (lang, path) in names {
        let lines = load_lines(&path, &lang)
            .map_err(|e| CliError::new(Stage::Analyze, format!("{}: {e}", path.display())))?;
        out.push((lang, lines));
    }
    if out.is_empty() {
        return Err(CliError::new(
            Stage::Analyze,
            format!("{}: no manifest.json and no mono.* files", dir.display()),
        ));
    }
    Ok(out)
}

fn cmd_analyze(dir: PathBuf, out: Option<PathBuf>) -> Result<(), CliError> {
    let corpora = analyze_corpora(&dir)?;
    let mut stats = Vec::new();
    for (name, corpus) in &corpora {
        stats.push(pipeline::corpus_stats_for(name, corpus).map_err(retag(Stage::Analyze))?);
    }
    let (names, rows) = cross_perplexity_matrix(&corpora).map_err(at(Stage::Analyze))?;
    let matrix = report::PerplexityMatrix { names, rows };
    let ppl_tsv = report::perplexity_tsv(&matrix);
    let corpus_tsv = report::corpus_tsv(&stats);
    print!("{ppl_tsv}");
    println!();
    print!("{corpus_tsv}");
    if let Some(out_dir) = out {
        fs::create_dir_all(&out_dir)
            .map_err(|e| CliError::new(Stage::Analyze, format!("{}: {e}", out_dir.display())))?;
        write_text(&out_dir.join("perplexity.tsv"), &ppl_tsv, Stage::Analyze)?;
        write_text(&out_dir.join("corpus.tsv"), &corpus_tsv, Stage::Analyze)?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_run(
    config: PathBuf,
    out: PathBuf,
    skip_daae: bool,
    skip_interpolation: bool,
    mode: Mode,
    stop_after: Option<String>,
    quiet: bool,
) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(&config)?;
    let stop_after = match stop_after {
        Some(name) => Some(Stage::from_name(&name).ok_or_else(|| {
            CliError::new(Stage::Config, format!("unknown stage `{name}` for --stop-after"))
        })?),
        None => None,
    };
    let opts = RunOptions {
        out_dir: out.clone(),
        skip_daae,
        skip_interpolation,
        mode,
        stop_after,
        quiet,
    };
    match run_pipeline(&cfg, &opts)? {
        PipelineOutcome::Completed(report) => {
            println!(
                "{} run complete: mean trained chrF2 {:.4}, report at {}",
                report.system,
                report.mean_trained_chrf2(),
                out.join("report.json").display()
            );
        }
        PipelineOutcome::Stopped(stage) => {
            println!("stopped after stage {}", stage.name());
        }
    }
    Ok(())
}

fn cmd_report(run: PathBuf) -> Result<(), CliError> {
    let report = RunReport::load(&run.join("report.json"))?;
    report::emit(&report, &run)?;
    print!("{}", report::text_tables(&report));
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::SynthGen { spec, out } => cmd_synth_gen(spec, out),
        Command::Translit { table, input, out, reverse } => {
            cmd_translit(table, input, out, reverse)
        }
        Command::Perturb { input, out, p_delete, p_substitute, p_swap, seed, lang } => {
            cmd_perturb(input, out, p_delete, p_substitute, p_swap, seed, lang)
        }
        Command::TrainDaae { corpus, lang, config, out } => {
            cmd_train_daae(corpus, lang, config, out)
        }
        Command::Interpolate {
            parallel,
            daae_src,
            daae_tgt,
            out,
            config,
            src_lang,
            tgt_lang,
        } => cmd_interpolate(parallel, daae_src, daae_tgt, out, config, src_lang, tgt_lang),
        Command::TrainNmt {
            corpus,
            daae_src,
            daae_tgt,
            mode,
            config,
            out,
            src_lang,
            tgt_lang,
        } => cmd_train_nmt(corpus, daae_src, daae_tgt, mode, config, out, src_lang, tgt_lang),
        Command::Translate { model, input, to, out, max_len } => {
            cmd_translate(model, input, to, out, max_len)
        }
        Command::Evaluate { model, src, reference, to, max_len } => {
            cmd_evaluate(model, src, reference, to, max_len)
        }
        Command::Metrics { hyp, reference } => cmd_metrics(hyp, reference),
        Command::Analyze { corpora, out } => cmd_analyze(corpora, out),
        Command::Run { config, out, skip_daae, skip_interpolation, mode, stop_after, quiet } => {
            cmd_run(config, out, skip_daae, skip_interpolation, mode, stop_after, quiet)
        }
        Command::Report { run } => cmd_report(run),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("{e}");
        std::process::exit(e.stage.exit_code());
    }
}
