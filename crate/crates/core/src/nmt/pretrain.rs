//! Maximum-likelihood pretraining of the translation generator.
//!
//! Teacher forcing with label smoothing, dropout on the decoder state and
//! L2 weight decay. Every tenth pair is held out; training stops once the
//! held-out likelihood fails to improve for `patience` epochs and the best
//! checkpoint is restored.

use std::collections::BTreeMap;

use crate::engine::optim::adam_step;
use crate::engine::{AdamState, ParameterSet, Rng, Tape};
use crate::textpipe::{tag_source, Sentence, TextError, Vocabulary};

use super::generator::{Generator, NmtConfig};
use super::NmtError;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.98;
const ADAM_EPS: f64 = 1e-8;
/// Below this many pairs the holdout split is skipped and validation runs
/// on the training data itself.
const MIN_PAIRS_FOR_HOLDOUT: usize = 20;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PretrainLog {
    pub epochs_run: usize,
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

use super::daasi::IdPair;

/// Group pair indices into batches of identical (source, target) length so
/// each batch fits one rectangular graph. Batch order is shuffled.
fn length_batches(
    rows: &[IdPair],
    idx: &[usize],
    batch_size: usize,
    rng: &mut Rng,
) -> Vec<Vec<usize>> {
    let mut order = idx.to_vec();
    rng.shuffle(&mut order);
    let mut buckets: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for i in order {
        buckets.entry((rows[i].0.len(), rows[i].1.len())).or_default().push(i);
    }
    let mut batches = Vec::new();
    for group in buckets.into_values() {
        for chunk in group.chunks(batch_size) {
            batches.push(chunk.to_vec());
        }
    }
    rng.shuffle(&mut batches);
    batches
}

/// Plain per-token negative log likelihood of `idx` pairs, tapeless
/// settings: no dropout, no smoothing.
fn validation_nll(gen: &Generator, rows: &[IdPair], idx: &[usize]) -> Result<f64, NmtError> {
    let mut total = 0.0;
    let mut tokens = 0usize;
    let mut rng = Rng::new(0);
    for &i in idx {
        let (src, tgt) = &rows[i];
        let mut tape = Tape::new();
        let loss = gen.mle_loss_graph(
            &mut tape,
            std::slice::from_ref(src),
            std::slice::from_ref(tgt),
            0.0,
            0.0,
            &mut rng,
        );
        total += tape.scalar_value(loss);
        tokens += tgt.len() + 1;
    }
    Ok(total / tokens as f64)
}

/// Vocabulary over both sides of `pairs` plus one tag per target language.
pub fn build_vocab(pairs: &[(Sentence, Sentence)]) -> Result<Vocabulary, NmtError> {
    if pairs.is_empty() {
        return Err(NmtError::EmptyBatch);
    }
    if pairs.iter().any(|(s, t)| s.is_empty() || t.is_empty()) {
        return Err(NmtError::EmptySentence);
    }
    let mut tag_langs: Vec<&str> = pairs.iter().map(|(_, t)| t.language.as_str()).collect();
    tag_langs.sort_unstable();
    tag_langs.dedup();
    let surfaces: Vec<String> =
        pairs.iter().flat_map(|(s, t)| [s.surface(), t.surface()]).collect();
    Ok(Vocabulary::build(surfaces.iter().map(String::as_str), &tag_langs)?)
}

/// Train a fresh generator on (source, target) sentence pairs. Sources
/// arrive untagged; the target-language tag is prepended here, so the
/// vocabulary registers every target language in `pairs`.
pub fn pretrain_generator(
    pairs: &[(Sentence, Sentence)],
    cfg: &NmtConfig,
) -> Result<(Generator, PretrainLog), NmtError> {
    cfg.validate()?;
    let vocab = build_vocab(pairs)?;
    let mut init_rng = Rng::new(cfg.seed).fork("pretrain").fork("init");
    let gen = Generator::new(vocab, cfg, &mut init_rng);
    pretrain_with(gen, pairs, cfg)
}

/// Train an existing generator, fresh or warm-started, on `pairs`. Every
/// target language must already be registered in the generator's
/// vocabulary.
pub fn pretrain_with(
    mut gen: Generator,
    pairs: &[(Sentence, Sentence)],
    cfg: &NmtConfig,
) -> Result<(Generator, PretrainLog), NmtError> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(NmtError::EmptyBatch);
    }
    if pairs.iter().any(|(s, t)| s.is_empty() || t.is_empty()) {
        return Err(NmtError::EmptySentence);
    }
    let vocab = &gen.vocab;
    let rows: Vec<IdPair> = pairs
        .iter()
        .map(|(s, t)| {
            let tagged = tag_source(s, &t.language, vocab)?;
            Ok((vocab.encode(&tagged), vocab.encode(t)))
        })
        .collect::<Result<_, TextError>>()?;
    let (train_idx, val_idx): (Vec<usize>, Vec<usize>) = if rows.len() >= MIN_PAIRS_FOR_HOLDOUT {
        ((0..rows.len()).filter(|i| i % 10 != 0).collect(),
         (0..rows.len()).filter(|i| i % 10 == 0).collect())
    } else {
        ((0..rows.len()).collect(), (0..rows.len()).collect())
    };

    let base_rng = Rng::new(cfg.seed).fork("pretrain");
    let mut opt = AdamState::new(ADAM_BETA1, ADAM_BETA2, ADAM_EPS);

    let mut log = PretrainLog {
        epochs_run: 0,
        train_loss: Vec::new(),
        val_loss: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };
    let mut best_val = f64::INFINITY;
    let mut best_params: Option<ParameterSet> = None;
    let mut since_best = 0usize;

    for epoch in 0..cfg.max_epochs {
        let mut erng = base_rng.fork_idx("epoch", epoch as u64);
        let lr = cfg.lr * cfg.lr_decay.powi(epoch as i32);
        let mut loss_sum = 0.0;
        let mut token_sum = 0usize;
        for batch in length_batches(&rows, &train_idx, cfg.batch_size, &mut erng) {
            let srcs: Vec<Vec<usize>> = batch.iter().map(|&i| rows[i].0.clone()).collect();
            let tgts: Vec<Vec<usize>> = batch.iter().map(|&i| rows[i].1.clone()).collect();
            let tokens = srcs.len() * (tgts[0].len() + 1);
            let mut tape = Tape::new();
            let sum = gen.mle_loss_graph(
                &mut tape,
                &srcs,
                &tgts,
                cfg.label_smoothing,
                cfg.dropout,
                &mut erng,
            );
            let loss = tape.affine(sum, 1.0 / tokens as f64, 0.0);
            loss_sum += tape.scalar_value(sum);
            token_sum += tokens;
            let grads = tape.backward(loss)?;
            adam_step(&mut gen.params, &grads, &mut opt, lr, cfg.weight_decay)?;
        }
        let train_loss = loss_sum / token_sum as f64;
        let val = validation_nll(&gen, &rows, &val_idx)?;
        if !train_loss.is_finite() || !val.is_finite() {
            return Err(NmtError::Diverged {
                context: format!("pretrain epoch {epoch}: train {train_loss}, val {val}"),
            });
        }
        log.train_loss.push(train_loss);
        log.val_loss.push(val);
        log.epochs_run = epoch + 1;
        if val < best_val {
            best_val = val;
            log.best_epoch = epoch;
            best_params = Some(gen.params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    if let Some(p) = best_params {
        gen.params = p;
    }
    Ok((gen, log))
}
