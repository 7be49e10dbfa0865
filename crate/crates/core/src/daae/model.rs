//! DAAE model: parameters, taped training graphs and tapeless inference.

use crate::engine::blocks::{gru_step_infer, gru_step_masked, GATES};
use crate::engine::{kernels, Rng, Tape, Tensor, Var};
use crate::engine::ParameterSet;
use crate::textpipe::{Sentence, Vocabulary};

use super::DaaeError;

/// Parameter names, grouped by the roles Algorithm-style alternation needs.
pub const ENCODER_PARAMS: [&str; 4] = ["emb", "enc.b", "enc.wh", "enc.wx"];
pub const DECODER_PARAMS: [&str; 5] = ["dec.b", "dec.wh", "dec.wx", "out.b", "out.w"];
pub const DISC_PARAMS: [&str; 4] = ["disc.b1", "disc.b2", "disc.w1", "disc.w2"];

#[derive(Debug, Clone)]
pub struct DaaeModel {
    pub params: ParameterSet,
    pub vocab: Vocabulary,
    pub latent_dim: usize,
    pub emb_dim: usize,
}

impl DaaeModel {
    pub fn new(vocab: Vocabulary, latent_dim: usize, emb_dim: usize, rng: &mut Rng) -> Self {
        let v = vocab.size();
        let h = latent_dim;
        let mut params = ParameterSet::new();
        let mut r = rng.fork("daae-init");
        params.insert("emb", Tensor::xavier(v, emb_dim, &mut r));
        params.insert("enc.wx", Tensor::xavier(emb_dim, GATES * h, &mut r));
        params.insert("enc.wh", Tensor::xavier(h, GATES * h, &mut r));
        params.insert("enc.b", Tensor::zeros(vec![GATES * h]));
        params.insert("dec.wx", Tensor::xavier(emb_dim + h, GATES * h, &mut r));
        params.insert("dec.wh", Tensor::xavier(h, GATES * h, &mut r));
        params.insert("dec.b", Tensor::zeros(vec![GATES * h]));
        params.insert("out.w", Tensor::xavier(h, v, &mut r));
        params.insert("out.b", Tensor::zeros(vec![v]));
        params.insert("disc.w1", Tensor::xavier(h, h, &mut r));
        params.insert("disc.b1", Tensor::zeros(vec![h]));
        params.insert("disc.w2", Tensor::xavier(h, 1, &mut r));
        params.insert("disc.b2", Tensor::zeros(vec![1]));
        DaaeModel { params, vocab, latent_dim, emb_dim }
    }

    /// Deterministic latent code of a sentence: the encoder's final hidden
    /// state over the token embeddings.
    pub fn encode(&self, m: &Sentence) -> Result<Vec<f64>, DaaeError> {
        if m.is_empty() {
            return Err(DaaeError::EmptySentence);
        }
        let emb = self.params.get("emb")?;
        let wx = self.params.get("enc.wx")?;
        let wh = self.params.get("enc.wh")?;
        let b = self.params.get("enc.b")?;
        let d = self.emb_dim;
        let mut h = vec![0.0; self.latent_dim];
        for &id in &self.vocab.encode(m) {
            let x = &emb.values()[id * d..(id + 1) * d];
            gru_step_infer(x, &mut h, wx, wh, b);
        }
        Ok(h)
    }

    /// Greedy autoregressive decode from a latent code.
    pub fn decode(&self, z: &[f64], language: &str, max_len: usize) -> Result<Sentence, DaaeError> {
        if z.len() != self.latent_dim {
            return Err(DaaeError::LatentDim { expected: self.latent_dim, got: z.len() });
        }
        let emb = self.params.get("emb")?;
        let wx = self.params.get("dec.wx")?;
        let wh = self.params.get("dec.wh")?;
        let b = self.params.get("dec.b")?;
        let out_w = self.params.get("out.w")?;
        let out_b = self.params.get("out.b")?;
        let d = self.emb_dim;
        let v = self.vocab.size();

        let mut h = z.to_vec();
        let mut tok = self.vocab.bos_id();
        let mut ids = Vec::new();
        for _ in 0..max_len {
            let mut x = Vec::with_capacity(d + self.latent_dim);
            x.extend_from_slice(&emb.values()[tok * d..(tok + 1) * d]);
            x.extend_from_slice(z);
            gru_step_infer(&x, &mut h, wx, wh, b);
            let mut logits = out_b.values().to_vec();
            kernels::matmul_acc(&mut logits, &h, out_w.values(), 1, self.latent_dim, v);
            tok = greedy_pick(&logits, &self.vocab);
            if tok == self.vocab.eos_id() {
                break;
            }
            ids.push(tok);
        }
        Ok(self.vocab.decode(&ids, language))
    }

    pub fn reconstruct(&self, m: &Sentence, max_len: usize) -> Result<Sentence, DaaeError> {
        let z = self.encode(m)?;
        self.decode(&z, &m.language, max_len)
    }

    /// Encoder graph over a padded batch. `rows` are same-or-shorter token id
    /// sequences; returns the (B x latent) final-state node.
    pub fn encode_graph(&self, tape: &mut Tape, emb: Var, rows: &[Vec<usize>]) -> Var {
        let batch = rows.len();
        let max_len = rows.iter().map(Vec::len).max().unwrap_or(0);
        let wx = tape.param("enc.wx", self.params.get("enc.wx").expect("enc.wx"));
        let wh = tape.param("enc.wh", self.params.get("enc.wh").expect("enc.wh"));
        let b = tape.param("enc.b", self.params.get("enc.b").expect("enc.b"));
        let zeros = Tensor::zeros(vec![batch, self.latent_dim]);
        let mut h = tape.constant(&zeros);
        let pad = self.vocab.pad_id();
        for s in 0..max_len {
            let ids: Vec<usize> =
                rows.iter().map(|r| r.get(s).copied().unwrap_or(pad)).collect();
            let x = tape.gather_rows(emb, &ids);
            if rows.iter().all(|r| s < r.len()) {
                h = crate::engine::blocks::gru_step(tape, x, h, wx, wh, b);
            } else {
                let mask_vals: Vec<f64> = rows
                    .iter()
                    .flat_map(|r| {
                        let on = if s < r.len() { 1.0 } else { 0.0 };
                        std::iter::repeat(on).take(self.latent_dim)
                    })
                    .collect();
                let mask = tape.constant_from(&[batch, self.latent_dim], mask_vals);
                h = gru_step_masked(tape, x, h, wx, wh, b, mask);
            }
        }
        h
    }

    /// Teacher-forced decoder graph. All target rows must share one length.
    /// Returns the summed token cross-entropy node.
    pub fn decode_loss_graph(
        &self,
        tape: &mut Tape,
        emb: Var,
        z: Var,
        targets: &[Vec<usize>],
    ) -> Var {
        let batch = targets.len();
        let len = targets[0].len();
        debug_assert!(targets.iter().all(|t| t.len() == len));
        let wx = tape.param("dec.wx", self.params.get("dec.wx").expect("dec.wx"));
        let wh = tape.param("dec.wh", self.params.get("dec.wh").expect("dec.wh"));
        let b = tape.param("dec.b", self.params.get("dec.b").expect("dec.b"));
        let out_w = tape.param("out.w", self.params.get("out.w").expect("out.w"));
        let out_b = tape.param("out.b", self.params.get("out.b").expect("out.b"));

        let bos = self.vocab.bos_id();
        let eos = self.vocab.eos_id();
        let mut h = z;
        let mut loss: Option<Var> = None;
        for s in 0..=len {
            let inputs: Vec<usize> = if s == 0 {
                vec![bos; batch]
            } else {
                targets.iter().map(|t| t[s - 1]).collect()
            };
            let x_tok = tape.gather_rows(emb, &inputs);
            let x = tape.concat_cols(x_tok, z);
            h = crate::engine::blocks::gru_step(tape, x, h, wx, wh, b);
            let proj = tape.matmul(h, out_w);
            let logits = tape.add_bias(proj, out_b);
            let gold: Vec<usize> = if s == len {
                vec![eos; batch]
            } else {
                targets.iter().map(|t| t[s]).collect()
            };
            let step_loss = tape.ce_loss_sum(logits, &gold, 0.0);
            loss = Some(match loss {
                None => step_loss,
                Some(acc) => tape.add(acc, step_loss),
            });
        }
        loss.expect("at least one decode step")
    }

    /// Discriminator logits (rows x 1) for a (rows x latent) input node.
    pub fn disc_logits_graph(&self, tape: &mut Tape, z: Var) -> Var {
        let w1 = tape.param("disc.w1", self.params.get("disc.w1").expect("disc.w1"));
        let b1 = tape.param("disc.b1", self.params.get("disc.b1").expect("disc.b1"));
        let w2 = tape.param("disc.w2", self.params.get("disc.w2").expect("disc.w2"));
        let b2 = tape.param("disc.b2", self.params.get("disc.b2").expect("disc.b2"));
        let h = tape.matmul(z, w1);
        let h = tape.add_bias(h, b1);
        let h = tape.tanh(h);
        let o = tape.matmul(h, w2);
        tape.add_bias(o, b2)
    }

    /// Discriminator output in [0, 1] for a single latent code.
    pub fn discriminate(&self, z: &[f64]) -> Result<f64, DaaeError> {
        if z.len() != self.latent_dim {
            return Err(DaaeError::LatentDim { expected: self.latent_dim, got: z.len() });
        }
        let w1 = self.params.get("disc.w1")?;
        let b1 = self.params.get("disc.b1")?;
        let w2 = self.params.get("disc.w2")?;
        let b2 = self.params.get("disc.b2")?;
        let h = self.latent_dim;
        let mut hid = b1.values().to_vec();
        kernels::matmul_acc(&mut hid, z, w1.values(), 1, h, h);
        for v in hid.iter_mut() {
            *v = v.tanh();
        }
        let mut o = b2.values().to_vec();
        kernels::matmul_acc(&mut o, &hid, w2.values(), 1, h, 1);
        Ok(kernels::sigmoid(o[0]))
    }
}

/// Greedy argmax over logits, never emitting reserved control tokens
/// (language tags, pad, bos, unk). Eos stays eligible so decoding can halt.
pub(crate) fn greedy_pick(logits: &[f64], vocab: &Vocabulary) -> usize {
    let mut best = vocab.eos_id();
    let mut best_val = f64::NEG_INFINITY;
    for (id, &v) in logits.iter().enumerate() {
        if vocab.is_tag_id(id) || id == vocab.pad_id() || id == vocab.bos_id()
            || id == vocab.unk_id()
        {
            continue;
        }
        if v > best_val {
            best_val = v;
            best = id;
        }
    }
    best
}

/// Mean token negative log-likelihood of clean sentences given encodings of
/// their corrupted versions. Pairs are (clean m, corrupted m_e); mixed
/// lengths are fine (each pair is scored on its own graph).
pub fn rec_loss(model: &DaaeModel, batch: &[(Sentence, Sentence)]) -> Result<f64, DaaeError> {
    if batch.is_empty() {
        return Err(DaaeError::EmptyBatch);
    }
    let mut total = 0.0;
    let mut tokens = 0usize;
    for (m, m_e) in batch {
        if m.is_empty() || m_e.is_empty() {
            return Err(DaaeError::EmptySentence);
        }
        let mut tape = Tape::new();
        let emb = tape.param("emb", model.params.get("emb")?);
        let enc_rows = vec![model.vocab.encode(m_e)];
        let z = model.encode_graph(&mut tape, emb, &enc_rows);
        let targets = vec![model.vocab.encode(m)];
        let loss = model.decode_loss_graph(&mut tape, emb, z, &targets);
        total += tape.scalar_value(loss);
        tokens += m.len() + 1;
    }
    Ok(total / tokens as f64)
}

/// Discriminator cross-entropy between prior samples and encodings of the
/// corrupted batch, normalized per pair.
pub fn adv_loss(model: &DaaeModel, batch_me: &[Sentence], rng: &mut Rng) -> Result<f64, DaaeError> {
    if batch_me.is_empty() {
        return Err(DaaeError::EmptyBatch);
    }
    let b = batch_me.len();
    let mut prior = Vec::with_capacity(b * model.latent_dim);
    for _ in 0..b * model.latent_dim {
        prior.push(rng.gaussian());
    }
    let mut tape = Tape::new();
    let emb = tape.param("emb", model.params.get("emb")?);
    let rows: Vec<Vec<usize>> = batch_me.iter().map(|s| model.vocab.encode(s)).collect();
    if rows.iter().any(|r| r.is_empty()) {
        return Err(DaaeError::EmptySentence);
    }
    let z_enc = model.encode_graph(&mut tape, emb, &rows);
    let z_prior = tape.constant_from(&[b, model.latent_dim], prior);
    let all = tape.concat_rows(z_prior, z_enc);
    let logits = model.disc_logits_graph(&mut tape, all);
    let loss = tape.bce_logits_split(logits, b);
    Ok(tape.scalar_value(loss) / b as f64)
}
