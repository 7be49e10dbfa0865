//! Alternating-phase DAAE training.
//!
//! Each batch runs two updates. Phase (a) moves the encoder and decoder
//! along the reconstruction gradient while the discriminator stays frozen.
//! Phase (b) moves the discriminator down the adversarial loss and the
//! encoder up it (scaled by lambda) while the decoder stays frozen.

use std::collections::BTreeMap;

use crate::engine::optim::{adam_step, AdamState};
use crate::engine::{Gradients, Rng, Tape, Tensor};
use crate::textpipe::{perturb_with, NoiseSpec, Sentence, Vocabulary};

use super::model::{DaaeModel, DECODER_PARAMS, DISC_PARAMS, ENCODER_PARAMS};
use super::DaaeError;

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.98;
const ADAM_EPS: f64 = 1e-8;
/// Every n-th sentence is held out for the convergence check.
const VALID_EVERY: usize = 20;

#[derive(Debug, Clone)]
pub struct DaaeConfig {
    /// Adversarial weight. Zero disables the encoder's adversarial update.
    pub lambda: f64,
    pub lr: f64,
    /// Learning rate of the adversarial phase. Adam normalizes gradient
    /// scale away, so lambda alone cannot keep the regularizer gentle; this
    /// stays well below `lr`.
    pub lr_adv: f64,
    /// Multiplicative per-epoch decay applied to both learning rates.
    pub lr_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub latent_dim: usize,
    pub emb_dim: usize,
    pub noise: NoiseSpec,
    pub seed: u64,
    /// Stop when validation reconstruction loss improves by less than
    /// `convergence_tol` (relative) over this many epochs.
    pub convergence_window: usize,
    pub convergence_tol: f64,
    pub max_decode_len: usize,
}

impl Default for DaaeConfig {
    fn default() -> Self {
        DaaeConfig {
            lambda: 1.0,
            lr: 3e-3,
            lr_adv: 3e-4,
            lr_decay: 1.0,
            batch_size: 16,
            max_epochs: 300,
            latent_dim: 32,
            emb_dim: 32,
            noise: NoiseSpec::default(),
            seed: 7,
            convergence_window: 10,
            convergence_tol: 1e-4,
            max_decode_len: 30,
        }
    }
}

impl DaaeConfig {
    pub fn validate(&self) -> Result<(), DaaeError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(DaaeError::BadConfig(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(DaaeError::BadConfig(format!("lr must be > 0, got {}", self.lr)));
        }
        if !(self.lr_adv > 0.0 && self.lr_adv.is_finite()) {
            return Err(DaaeError::BadConfig(format!("lr_adv must be > 0, got {}", self.lr_adv)));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(DaaeError::BadConfig(format!(
                "lr_decay must be in (0, 1], got {}",
                self.lr_decay
            )));
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return Err(DaaeError::BadConfig("batch_size and max_epochs must be > 0".into()));
        }
        if self.latent_dim == 0 || self.emb_dim == 0 {
            return Err(DaaeError::BadConfig("latent_dim and emb_dim must be > 0".into()));
        }
        if self.convergence_window == 0 {
            return Err(DaaeError::BadConfig("convergence_window must be > 0".into()));
        }
        self.noise.validate().map_err(DaaeError::Text)
    }
}

#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct TrainLog {
    pub epochs_run: usize,
    pub converged: bool,
    pub rec_loss: Vec<f64>,
    pub adv_loss: Vec<f64>,
    pub val_rec_loss: Vec<f64>,
}

/// Train a DAAE on monolingual sentences. The vocabulary is built from the
/// corpus itself. Returns the model plus per-epoch loss traces.
pub fn train_daae(
    corpus: &[Sentence],
    config: &DaaeConfig,
) -> Result<(DaaeModel, TrainLog), DaaeError> {
    config.validate()?;
    let sentences: Vec<&Sentence> = corpus.iter().filter(|s| !s.is_empty()).collect();
    if sentences.is_empty() {
        return Err(DaaeError::EmptyBatch);
    }

    let surfaces: Vec<String> = sentences.iter().map(|s| s.surface()).collect();
    let vocab = Vocabulary::build(surfaces.iter().map(String::as_str), &[])?;

    let mut rng = Rng::new(config.seed);
    let mut model = DaaeModel::new(vocab, config.latent_dim, config.emb_dim, &mut rng);

    // Convergence is tracked on a fixed subset under one fixed corruption.
    // The subset stays in training: the criterion detects a plateau, it is
    // not a generalization estimate.
    let train: Vec<&Sentence> = sentences.clone();
    let valid: Vec<&Sentence> = if sentences.len() >= 2 * VALID_EVERY {
        sentences.iter().skip(VALID_EVERY - 1).step_by(VALID_EVERY).copied().collect()
    } else {
        sentences.clone()
    };

    // Validation pairs use one fixed corruption so the convergence signal is
    // not re-randomized every epoch.
    let mut val_rng = rng.fork("val-noise");
    let val_pairs: Vec<(Sentence, Sentence)> = valid
        .iter()
        .map(|m| Ok(((*m).clone(), corrupted(m, &config.noise, &model.vocab, &mut val_rng)?)))
        .collect::<Result<_, DaaeError>>()?;

    let mut opt_rec = AdamState::new(ADAM_BETA1, ADAM_BETA2, ADAM_EPS);
    let mut opt_adv = AdamState::new(ADAM_BETA1, ADAM_BETA2, ADAM_EPS);
    let mut log = TrainLog::default();

    for epoch in 0..config.max_epochs {
        let mut epoch_rng = rng.fork_idx("epoch", epoch as u64);
        let pairs: Vec<(Sentence, Sentence)> = train
            .iter()
            .map(|m| {
                Ok(((*m).clone(), corrupted(m, &config.noise, &model.vocab, &mut epoch_rng)?))
            })
            .collect::<Result<_, DaaeError>>()?;

        let batches = length_batches(&pairs, config.batch_size, &mut epoch_rng);
        let decay = config.lr_decay.powi(epoch as i32);
        let mut rec_sum = 0.0;
        let mut adv_sum = 0.0;
        for batch in &batches {
            let rec =
                phase_a(&mut model, &pairs, batch, &mut opt_rec, config.lr * decay)?;
            let adv = phase_b(
                &mut model,
                &pairs,
                batch,
                &mut opt_adv,
                config,
                config.lr_adv * decay,
                &mut epoch_rng,
            )?;
            rec_sum += rec;
            adv_sum += adv;
        }
        log.rec_loss.push(rec_sum / batches.len() as f64);
        log.adv_loss.push(adv_sum / batches.len() as f64);

        let val = super::model::rec_loss(&model, &val_pairs)?;
        if !val.is_finite() {
            return Err(DaaeError::Diverged { context: format!("epoch {epoch} validation") });
        }
        log.val_rec_loss.push(val);
        log.epochs_run = epoch + 1;

        let w = config.convergence_window;
        if log.val_rec_loss.len() > w {
            let past = log.val_rec_loss[log.val_rec_loss.len() - 1 - w];
            let rel = (past - val) / past.abs().max(1e-12);
            if rel < config.convergence_tol {
                log.converged = true;
                break;
            }
        }
    }
    Ok((model, log))
}

fn corrupted(
    m: &Sentence,
    noise: &NoiseSpec,
    vocab: &Vocabulary,
    rng: &mut Rng,
) -> Result<Sentence, DaaeError> {
    let m_e = perturb_with(m, noise, vocab, rng)?;
    // Corruption can delete a whole short sentence; fall back to the clean
    // form so the pair stays encodable.
    Ok(if m_e.is_empty() { m.clone() } else { m_e })
}

/// Shuffle pair indices, then emit batches whose clean sentences share one
/// length (teacher forcing needs aligned targets).
fn length_batches(
    pairs: &[(Sentence, Sentence)],
    batch_size: usize,
    rng: &mut Rng,
) -> Vec<Vec<usize>> {
    let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    rng.shuffle(&mut order);
    for idx in order {
        by_len.entry(pairs[idx].0.len()).or_default().push(idx);
    }
    let mut batches = Vec::new();
    for bucket in by_len.values() {
        for chunk in bucket.chunks(batch_size) {
            batches.push(chunk.to_vec());
        }
    }
    rng.shuffle(&mut batches);
    batches
}

/// Reconstruction step: update encoder and decoder, discriminator frozen.
/// Returns the mean per-token loss of the batch.
pub fn phase_a(
    model: &mut DaaeModel,
    pairs: &[(Sentence, Sentence)],
    batch: &[usize],
    opt: &mut AdamState,
    lr: f64,
) -> Result<f64, DaaeError> {
    #[cfg(debug_assertions)]
    let disc_before = snapshot(&model.params, &DISC_PARAMS);

    let enc_rows: Vec<Vec<usize>> =
        batch.iter().map(|&i| model.vocab.encode(&pairs[i].1)).collect();
    let targets: Vec<Vec<usize>> =
        batch.iter().map(|&i| model.vocab.encode(&pairs[i].0)).collect();
    let tokens = batch.len() * (targets[0].len() + 1);

    let mut tape = Tape::new();
    let emb = tape.param("emb", model.params.get("emb")?);
    let z = model.encode_graph(&mut tape, emb, &enc_rows);
    let sum = model.decode_loss_graph(&mut tape, emb, z, &targets);
    let loss = tape.affine(sum, 1.0 / tokens as f64, 0.0);
    let value = tape.scalar_value(loss);
    if !value.is_finite() {
        return Err(DaaeError::Diverged { context: "reconstruction loss".into() });
    }
    let grads = tape.backward(loss)?;
    adam_step(&mut model.params, &grads, opt, lr, 0.0)?;

    #[cfg(debug_assertions)]
    debug_assert!(
        snapshot(&model.params, &DISC_PARAMS)
            .iter()
            .zip(&disc_before)
            .all(|(a, b)| a.bits_eq(b)),
        "discriminator moved during the reconstruction phase"
    );
    Ok(value)
}

/// Adversarial step: discriminator descends, encoder ascends scaled by
/// lambda, decoder frozen. Returns the per-pair loss of the batch.
pub fn phase_b(
    model: &mut DaaeModel,
    pairs: &[(Sentence, Sentence)],
    batch: &[usize],
    opt: &mut AdamState,
    config: &DaaeConfig,
    lr: f64,
    rng: &mut Rng,
) -> Result<f64, DaaeError> {
    #[cfg(debug_assertions)]
    let dec_before = snapshot(&model.params, &DECODER_PARAMS);

    let b = batch.len();
    let enc_rows: Vec<Vec<usize>> =
        batch.iter().map(|&i| model.vocab.encode(&pairs[i].1)).collect();
    let prior: Vec<f64> = (0..b * model.latent_dim).map(|_| rng.gaussian()).collect();

    let mut tape = Tape::new();
    let emb = tape.param("emb", model.params.get("emb")?);
    let z_enc = model.encode_graph(&mut tape, emb, &enc_rows);
    let z_prior = tape.constant_from(&[b, model.latent_dim], prior);
    let all = tape.concat_rows(z_prior, z_enc);
    let logits = model.disc_logits_graph(&mut tape, all);
    let sum = tape.bce_logits_split(logits, b);
    let loss = tape.affine(sum, 1.0 / b as f64, 0.0);
    let value = tape.scalar_value(loss);
    if !value.is_finite() {
        return Err(DaaeError::Diverged { context: "adversarial loss".into() });
    }
    let grads = tape.backward(loss)?;

    // The discriminator minimizes the loss; the encoder maximizes it, so its
    // gradient enters with factor -lambda. Lambda zero drops the encoder
    // entries entirely, leaving its parameters untouched.
    let mut update: Gradients = BTreeMap::new();
    for name in DISC_PARAMS {
        update.insert(name.to_string(), grads[name].clone());
    }
    if config.lambda > 0.0 {
        for name in ENCODER_PARAMS {
            let mut g = grads[name].clone();
            for v in g.values_mut() {
                *v *= -config.lambda;
            }
            update.insert(name.to_string(), g);
        }
    }
    adam_step(&mut model.params, &update, opt, lr, 0.0)?;

    #[cfg(debug_assertions)]
    debug_assert!(
        snapshot(&model.params, &DECODER_PARAMS)
            .iter()
            .zip(&dec_before)
            .all(|(a, b)| a.bits_eq(b)),
        "decoder moved during the adversarial phase"
    );
    Ok(value)
}

#[cfg(debug_assertions)]
fn snapshot(params: &crate::engine::ParameterSet, names: &[&str]) -> Vec<Tensor> {
    names.iter().map(|n| params.get(n).expect("known param").clone()).collect()
}
