//! Attention seq2seq generator over a shared multilingual vocabulary.

use crate::engine::blocks::{gru_step, gru_step_infer, GATES};
use crate::engine::{kernels, Rng, Tape, Tensor, Var};
use crate::engine::ParameterSet;
use crate::textpipe::{parse_tag, Sentence, Vocabulary};

use super::NmtError;

pub const GEN_PARAMS: [&str; 12] = [
    "att.u", "att.v", "att.w", "dec.b", "dec.wh", "dec.wx", "emb", "enc.b", "enc.wh", "enc.wx",
    "out.b", "out.w",
];

#[derive(Debug, Clone)]
pub struct NmtConfig {
    pub emb_dim: usize,
    pub hidden: usize,
    /// Critic feature (filter) count.
    pub filters: usize,
    pub lr: f64,
    pub lr_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Early-stopping patience, in epochs without validation improvement.
    pub patience: usize,
    pub label_smoothing: f64,
    pub dropout: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub max_decode_len: usize,
    /// Adversarial loop: RMSProp rate, clip bound, critic steps per
    /// generator step, outer iteration cap, early-return warm-up.
    pub rho: f64,
    pub clip: f64,
    pub n_critic: usize,
    pub max_outer: usize,
    pub warmup_outer: usize,
    /// Honor the first reward non-decrease even inside the warm-up.
    pub raw_early_return: bool,
    pub critic_pretrain_steps: usize,
}

impl Default for NmtConfig {
    fn default() -> Self {
        NmtConfig {
            emb_dim: 32,
            hidden: 64,
            filters: 8,
            lr: 1e-3,
            lr_decay: 1.0,
            batch_size: 16,
            max_epochs: 30,
            patience: 10,
            label_smoothing: 0.2,
            dropout: 0.4,
            weight_decay: 1e-4,
            seed: 7,
            max_decode_len: 30,
            rho: 5e-5,
            clip: 0.01,
            n_critic: 5,
            max_outer: 30,
            warmup_outer: 10,
            raw_early_return: false,
            critic_pretrain_steps: 25,
        }
    }
}

impl NmtConfig {
    pub fn validate(&self) -> Result<(), NmtError> {
        if self.emb_dim == 0 || self.hidden == 0 || self.filters == 0 {
            return Err(NmtError::BadConfig("dimensions must be > 0".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(NmtError::BadConfig("learning rates must be > 0".into()));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(NmtError::BadConfig("lr_decay must be in (0, 1]".into()));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.max_decode_len == 0 {
            return Err(NmtError::BadConfig("sizes must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(NmtError::BadConfig("label_smoothing must be in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(NmtError::BadConfig("dropout must be in [0, 1)".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(NmtError::BadConfig("weight_decay must be >= 0".into()));
        }
        if self.clip <= 0.0 || self.n_critic == 0 || self.max_outer == 0 {
            return Err(NmtError::BadConfig("adversarial loop settings must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Generator {
    pub params: ParameterSet,
    pub vocab: Vocabulary,
    pub emb_dim: usize,
    pub hidden: usize,
}

impl Generator {
    pub fn new(vocab: Vocabulary, cfg: &NmtConfig, rng: &mut Rng) -> Self {
        let v = vocab.size();
        let d = cfg.emb_dim;
        let h = cfg.hidden;
        let mut r = rng.fork("gen-init");
        let mut params = ParameterSet::new();
        params.insert("emb", Tensor::xavier(v, d, &mut r));
        params.insert("enc.wx", Tensor::xavier(d, GATES * h, &mut r));
        params.insert("enc.wh", Tensor::xavier(h, GATES * h, &mut r));
        params.insert("enc.b", Tensor::zeros(vec![GATES * h]));
        params.insert("dec.wx", Tensor::xavier(d + h, GATES * h, &mut r));
        params.insert("dec.wh", Tensor::xavier(h, GATES * h, &mut r));
        params.insert("dec.b", Tensor::zeros(vec![GATES * h]));
        params.insert("att.w", Tensor::xavier(h, h, &mut r));
        params.insert("att.u", Tensor::xavier(h, h, &mut r));
        params.insert("att.v", Tensor::xavier(h, 1, &mut r));
        params.insert("out.w", Tensor::xavier(h, v, &mut r));
        params.insert("out.b", Tensor::zeros(vec![v]));
        Generator { params, vocab, emb_dim: d, hidden: h }
    }

    /// Per-step encoder hidden states of a sentence (tapeless).
    pub(crate) fn encode_states(&self, s: &Sentence) -> Result<Vec<Vec<f64>>, NmtError> {
        if s.is_empty() {
            return Err(NmtError::EmptySentence);
        }
        let emb = self.params.get("emb")?;
        let wx = self.params.get("enc.wx")?;
        let wh = self.params.get("enc.wh")?;
        let b = self.params.get("enc.b")?;
        let d = self.emb_dim;
        let mut h = vec![0.0; self.hidden];
        let mut states = Vec::with_capacity(s.len());
        for &id in &self.vocab.encode(s) {
            let x = &emb.values()[id * d..(id + 1) * d];
            gru_step_infer(x, &mut h, wx, wh, b);
            states.push(h.clone());
        }
        Ok(states)
    }

    /// Additive-attention context vector for decoder state `h` (tapeless).
    fn attend(&self, enc_states: &[Vec<f64>], h: &[f64]) -> Vec<f64> {
        let hid = self.hidden;
        let att_w = self.params.get("att.w").expect("att.w").values();
        let att_u = self.params.get("att.u").expect("att.u").values();
        let att_v = self.params.get("att.v").expect("att.v").values();
        let mut dec_proj = vec![0.0; hid];
        kernels::matmul_acc(&mut dec_proj, h, att_u, 1, hid, hid);
        let mut scores: Vec<f64> = enc_states
            .iter()
            .map(|s| {
                let mut pre = dec_proj.clone();
                kernels::matmul_acc(&mut pre, s, att_w, 1, hid, hid);
                pre.iter().zip(att_v).map(|(p, v)| p.tanh() * v).sum()
            })
            .collect();
        kernels::softmax_row(&mut scores);
        let mut ctx = vec![0.0; hid];
        for (w, s) in scores.iter().zip(enc_states) {
            for k in 0..hid {
                ctx[k] += w * s[k];
            }
        }
        ctx
    }

    /// Greedy translation of a tagged source sentence. The output carries
    /// the tag's language and never contains reserved tokens.
    pub fn translate(&self, s: &Sentence, max_len: usize) -> Result<Sentence, NmtError> {
        let target_lang = s
            .tokens
            .first()
            .and_then(|t| parse_tag(t))
            .filter(|_| self.vocab.is_tag_token(&s.tokens[0]))
            .ok_or(NmtError::UntaggedInput)?
            .to_string();
        let enc_states = self.encode_states(s)?;
        let emb = self.params.get("emb")?;
        let wx = self.params.get("dec.wx")?;
        let wh = self.params.get("dec.wh")?;
        let b = self.params.get("dec.b")?;
        let out_w = self.params.get("out.w")?;
        let out_b = self.params.get("out.b")?;
        let d = self.emb_dim;
        let v = self.vocab.size();

        let mut h = enc_states.last().expect("nonempty").clone();
        let mut tok = self.vocab.bos_id();
        let mut ids = Vec::new();
        for _ in 0..max_len {
            let ctx = self.attend(&enc_states, &h);
            let mut x = Vec::with_capacity(d + self.hidden);
            x.extend_from_slice(&emb.values()[tok * d..(tok + 1) * d]);
            x.extend_from_slice(&ctx);
            gru_step_infer(&x, &mut h, wx, wh, b);
            let mut logits = out_b.values().to_vec();
            kernels::matmul_acc(&mut logits, &h, out_w.values(), 1, self.hidden, v);
            tok = crate::daae::model::greedy_pick(&logits, &self.vocab);
            if tok == self.vocab.eos_id() {
                break;
            }
            ids.push(tok);
        }
        Ok(self.vocab.decode(&ids, &target_lang))
    }

    /// Translate, substituting a single unk token when generation comes out
    /// empty so downstream scoring always sees a non-empty sentence.
    pub fn translate_or_unk(&self, s: &Sentence, max_len: usize) -> Result<Sentence, NmtError> {
        let t = self.translate(s, max_len)?;
        if t.is_empty() {
            return Ok(self.vocab.decode(&[self.vocab.unk_id()], &t.language));
        }
        Ok(t)
    }

    /// Put every generator weight on the tape once as a trainable leaf.
    pub fn register_params(&self, tape: &mut Tape) -> GenVars {
        let p =
            |tape: &mut Tape, name: &str| tape.param(name, self.params.get(name).expect(name));
        GenVars {
            emb: p(tape, "emb"),
            enc_wx: p(tape, "enc.wx"),
            enc_wh: p(tape, "enc.wh"),
            enc_b: p(tape, "enc.b"),
            dec_wx: p(tape, "dec.wx"),
            dec_wh: p(tape, "dec.wh"),
            dec_b: p(tape, "dec.b"),
            att_w: p(tape, "att.w"),
            att_u: p(tape, "att.u"),
            att_v: p(tape, "att.v"),
            out_w: p(tape, "out.w"),
            out_b: p(tape, "out.b"),
        }
    }

    /// Batched encoder graph over same-length source rows. Returns the
    /// per-step state list plus the step-major stack used by attention.
    pub fn encode_graph(
        &self,
        tape: &mut Tape,
        vars: &GenVars,
        rows: &[Vec<usize>],
    ) -> (Vec<Var>, Var) {
        let batch = rows.len();
        let s_len = rows[0].len();
        debug_assert!(rows.iter().all(|r| r.len() == s_len));
        let zeros = Tensor::zeros(vec![batch, self.hidden]);
        let mut h = tape.constant(&zeros);
        let mut states = Vec::with_capacity(s_len);
        for s in 0..s_len {
            let ids: Vec<usize> = rows.iter().map(|r| r[s]).collect();
            let x = tape.gather_rows(vars.emb, &ids);
            h = gru_step(tape, x, h, vars.enc_wx, vars.enc_wh, vars.enc_b);
            states.push(h);
        }
        let mut stack = states[0];
        for &st in &states[1..] {
            stack = tape.concat_rows(stack, st);
        }
        (states, stack)
    }

    /// One attended decoder step on the tape. Returns the new state.
    pub fn decoder_step_graph(
        &self,
        tape: &mut Tape,
        vars: &GenVars,
        x_tok: Var,
        h: Var,
        enc_proj: &[Var],
        enc_stack: Var,
    ) -> Var {
        let dec_proj = tape.matmul(h, vars.att_u);
        let mut cols: Option<Var> = None;
        for &ep in enc_proj {
            let pre = tape.add(ep, dec_proj);
            let act = tape.tanh(pre);
            let score = tape.matmul(act, vars.att_v);
            cols = Some(match cols {
                None => score,
                Some(c) => tape.concat_cols(c, score),
            });
        }
        let weights = tape.row_softmax(cols.expect("nonempty source"));
        let ctx = tape.attn_context(weights, enc_stack);
        let x = tape.concat_cols(x_tok, ctx);
        gru_step(tape, x, h, vars.dec_wx, vars.dec_wh, vars.dec_b)
    }

    /// Teacher-forced batch loss graph. All sources share one length, all
    /// targets share one length. Registers the parameters itself, so build
    /// at most one per tape. Returns the ce sum node.
    pub fn mle_loss_graph(
        &self,
        tape: &mut Tape,
        src_rows: &[Vec<usize>],
        tgt_rows: &[Vec<usize>],
        smoothing: f64,
        dropout: f64,
        rng: &mut Rng,
    ) -> Var {
        let batch = src_rows.len();
        let t_len = tgt_rows[0].len();
        let vars = self.register_params(tape);
        let (enc_states, enc_stack) = self.encode_graph(tape, &vars, src_rows);
        let enc_proj: Vec<Var> =
            enc_states.iter().map(|&s| tape.matmul(s, vars.att_w)).collect();

        let bos = self.vocab.bos_id();
        let eos = self.vocab.eos_id();
        let mut h = *enc_states.last().expect("nonempty");
        let mut loss: Option<Var> = None;
        for t in 0..=t_len {
            let prev: Vec<usize> = if t == 0 {
                vec![bos; batch]
            } else {
                tgt_rows.iter().map(|r| r[t - 1]).collect()
            };
            let x_tok = tape.gather_rows(vars.emb, &prev);
            h = self.decoder_step_graph(tape, &vars, x_tok, h, &enc_proj, enc_stack);
            let h_used = if dropout > 0.0 {
                let mask = dropout_mask(batch * self.hidden, dropout, rng);
                tape.dropout_mask(h, mask)
            } else {
                h
            };
            let proj = tape.matmul(h_used, vars.out_w);
            let logits = tape.add_bias(proj, vars.out_b);
            let gold: Vec<usize> = if t == t_len {
                vec![eos; batch]
            } else {
                tgt_rows.iter().map(|r| r[t]).collect()
            };
            let step = tape.ce_loss_sum(logits, &gold, smoothing);
            loss = Some(match loss {
                None => step,
                Some(acc) => tape.add(acc, step),
            });
        }
        loss.expect("at least one step")
    }

    /// Soft generation of `steps` target embedding rows for one source
    /// sentence. Each row is the probability-weighted mixture of embedding
    /// rows, so the whole path stays differentiable. Callable repeatedly on
    /// one tape with shared `vars`. Returns (steps x d).
    pub fn soft_generate_graph(
        &self,
        tape: &mut Tape,
        vars: &GenVars,
        src_row: &[usize],
        steps: usize,
    ) -> Var {
        let rows = vec![src_row.to_vec()];
        let (enc_states, enc_stack) = self.encode_graph(tape, vars, &rows);
        let enc_proj: Vec<Var> =
            enc_states.iter().map(|&s| tape.matmul(s, vars.att_w)).collect();

        let mut h = *enc_states.last().expect("nonempty");
        let mut x_tok = tape.gather_rows(vars.emb, &[self.vocab.bos_id()]);
        let mut soft_rows: Option<Var> = None;
        for _ in 0..steps {
            h = self.decoder_step_graph(tape, vars, x_tok, h, &enc_proj, enc_stack);
            let proj = tape.matmul(h, vars.out_w);
            let logits = tape.add_bias(proj, vars.out_b);
            let probs = tape.row_softmax(logits);
            let soft = tape.matmul(probs, vars.emb);
            soft_rows = Some(match soft_rows {
                None => soft,
                Some(acc) => tape.concat_rows(acc, soft),
            });
            x_tok = soft;
        }
        soft_rows.expect("at least one step")
    }
}

/// Tape handles for the generator weights.
#[derive(Debug, Clone, Copy)]
pub struct GenVars {
    pub emb: Var,
    pub enc_wx: Var,
    pub enc_wh: Var,
    pub enc_b: Var,
    pub dec_wx: Var,
    pub dec_wh: Var,
    pub dec_b: Var,
    pub att_w: Var,
    pub att_u: Var,
    pub att_v: Var,
    pub out_w: Var,
    pub out_b: Var,
}

pub(crate) fn dropout_mask(n: usize, p: f64, rng: &mut Rng) -> Vec<f64> {
    let keep = 1.0 - p;
    (0..n)
        .map(|_| if rng.unit() < p { 0.0 } else { 1.0 / keep })
        .collect()
}
