//! Convolutional critic scoring source/translation pairs.
//!
//! A pair is rendered as an (S x T x 2d) grid whose cell (i, j) is the
//! concatenation of source embedding i and target embedding j. One 3x3
//! sigmoid convolution, ceil-mode 2x2 max pooling and a channel mean feed a
//! linear readout. No nonlinearity on the output: scores are unbounded.

use crate::engine::{kernels, ParameterSet, Rng, Tape, Tensor, Var};
use crate::textpipe::Sentence;

use super::generator::Generator;
use super::NmtError;

pub const CRITIC_PARAMS: [&str; 4] = ["conv.b", "conv.w", "ro.b", "ro.w"];
const INIT_BOUND: f64 = 0.01;

/// Pairwise grid of concatenated embedding rows: u (S x d) and v (T x d)
/// become (S x T x 2d) with cell (i, j) = [u_i ; v_j].
pub fn feature_map(u: &Tensor, v: &Tensor) -> Tensor {
    let (s, d) = (u.shape()[0], u.shape()[1]);
    let (t, d2) = (v.shape()[0], v.shape()[1]);
    assert_eq!(d, d2, "embedding width mismatch");
    let mut out = Tensor::zeros(vec![s, t, 2 * d]);
    let vals = out.values_mut();
    for i in 0..s {
        for j in 0..t {
            let base = (i * t + j) * 2 * d;
            vals[base..base + d].copy_from_slice(&u.values()[i * d..(i + 1) * d]);
            vals[base + d..base + 2 * d].copy_from_slice(&v.values()[j * d..(j + 1) * d]);
        }
    }
    out
}

/// Zero-padded 3x3 convolution plus logistic activation over an
/// (S x T x C) grid. `w` is (F x 9C), `b` is (F).
pub fn conv_layer(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let (s, t, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let f = b.numel();
    let mut out = Tensor::zeros(vec![s, t, f]);
    kernels::conv3x3_sigmoid(out.values_mut(), x.values(), w.values(), b.values(), s, t, c, f);
    out
}

/// Ceil-mode non-overlapping 2x2 max pooling over (S x T x F).
pub fn pool_layer(x: &Tensor) -> Tensor {
    let (s, t, f) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (so, to) = (s.div_ceil(2), t.div_ceil(2));
    let mut out = Tensor::zeros(vec![so, to, f]);
    let mut arg = vec![0usize; so * to * f];
    kernels::maxpool2x2(out.values_mut(), &mut arg, x.values(), s, t, f);
    out
}

/// Wasserstein-style objective value: mean real score minus mean fake score.
pub fn critic_loss_value(real: &[f64], fake: &[f64]) -> f64 {
    debug_assert!(!real.is_empty() && !fake.is_empty());
    let mr = real.iter().sum::<f64>() / real.len() as f64;
    let mf = fake.iter().sum::<f64>() / fake.len() as f64;
    mr - mf
}

#[derive(Debug, Clone)]
pub struct Critic {
    pub params: ParameterSet,
    pub emb_dim: usize,
    pub filters: usize,
}

impl Critic {
    pub fn new(emb_dim: usize, filters: usize, rng: &mut Rng) -> Self {
        let mut r = rng.fork("critic-init");
        let mut params = ParameterSet::new();
        params.insert("conv.w", Tensor::uniform(vec![filters, 9 * 2 * emb_dim], INIT_BOUND, &mut r));
        params.insert("conv.b", Tensor::uniform(vec![filters], INIT_BOUND, &mut r));
        params.insert("ro.w", Tensor::uniform(vec![filters, 1], INIT_BOUND, &mut r));
        params.insert("ro.b", Tensor::uniform(vec![1], INIT_BOUND, &mut r));
        Critic { params, emb_dim, filters }
    }

    /// Clamp every parameter entry into [-bound, bound].
    pub fn clip(&mut self, bound: f64) {
        for (_, t) in self.params.iter_mut() {
            for v in t.values_mut() {
                *v = v.clamp(-bound, bound);
            }
        }
    }

    /// Tapeless score of a pair given as vocabulary ids into `emb`.
    pub fn score_ids(&self, emb: &Tensor, src: &[usize], tgt: &[usize]) -> f64 {
        let d = self.emb_dim;
        let gather = |ids: &[usize]| {
            let mut t = Tensor::zeros(vec![ids.len(), d]);
            for (row, &id) in ids.iter().enumerate() {
                t.values_mut()[row * d..(row + 1) * d]
                    .copy_from_slice(&emb.values()[id * d..(id + 1) * d]);
            }
            t
        };
        let u = gather(src);
        let v = gather(tgt);
        let grid = feature_map(&u, &v);
        let conv_w = self.params.get("conv.w").expect("conv.w");
        let conv_b = self.params.get("conv.b").expect("conv.b");
        let feat = conv_layer(&grid, conv_w, conv_b);
        let pooled = pool_layer(&feat);
        let f = self.filters;
        let cells = pooled.numel() / f;
        let ro_w = self.params.get("ro.w").expect("ro.w").values();
        let ro_b = self.params.get("ro.b").expect("ro.b").values()[0];
        let mut score = ro_b;
        for fi in 0..f {
            let mut m = 0.0;
            for cell in 0..cells {
                m += pooled.values()[cell * f + fi];
            }
            score += m / cells as f64 * ro_w[fi];
        }
        score
    }

    /// Score a sentence pair using the generator's embedding table.
    pub fn score(&self, gen: &Generator, src: &Sentence, tgt: &Sentence) -> Result<f64, NmtError> {
        if src.is_empty() || tgt.is_empty() {
            return Err(NmtError::EmptySentence);
        }
        let emb = gen.params.get("emb")?;
        Ok(self.score_ids(emb, &gen.vocab.encode(src), &gen.vocab.encode(tgt)))
    }

    /// Put the critic weights on a tape exactly once. With `trainable` they
    /// join as parameters; otherwise as constants so gradients stop there.
    pub fn register(&self, tape: &mut Tape, trainable: bool) -> CriticVars {
        let reg = |tape: &mut Tape, name: &str| {
            let t = self.params.get(name).expect(name);
            if trainable {
                tape.param(name, t)
            } else {
                tape.constant(t)
            }
        };
        CriticVars {
            conv_w: reg(tape, "conv.w"),
            conv_b: reg(tape, "conv.b"),
            ro_w: reg(tape, "ro.w"),
            ro_b: reg(tape, "ro.b"),
        }
    }

    /// Taped score of embedding-row matrices u (S x d) and v (T x d) from
    /// already-registered weights; call repeatedly to score many pairs on
    /// one tape.
    pub fn score_graph_with(tape: &mut Tape, vars: CriticVars, u: Var, v: Var) -> Var {
        let grid = tape.pair_grid(u, v);
        let feat = tape.conv3x3_sigmoid(grid, vars.conv_w, vars.conv_b);
        let pooled = tape.maxpool2x2(feat);
        let mean = tape.channel_mean(pooled);
        let proj = tape.matmul(mean, vars.ro_w);
        tape.add_bias(proj, vars.ro_b)
    }

    /// Single-pair convenience: register then score.
    pub fn score_graph(&self, tape: &mut Tape, u: Var, v: Var, trainable: bool) -> Var {
        let vars = self.register(tape, trainable);
        Self::score_graph_with(tape, vars, u, v)
    }
}

/// Tape handles for the critic weights.
#[derive(Debug, Clone, Copy)]
pub struct CriticVars {
    pub conv_w: Var,
    pub conv_b: Var,
    pub ro_w: Var,
    pub ro_b: Var,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{gradcheck, GradCheckSettings};

    fn rand_tensor(shape: Vec<usize>, rng: &mut Rng) -> Tensor {
        Tensor::uniform(shape, 1.0, rng)
    }

    #[test]
    fn feature_map_concatenates_embedding_rows() {
        let u = Tensor::new(vec![3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let v = Tensor::new(vec![1, 2], vec![10.0, 20.0]).unwrap();
        let grid = feature_map(&u, &v);
        assert_eq!(grid.shape(), &[3, 1, 4]);
        assert_eq!(
            grid.values(),
            &[1.0, 2.0, 10.0, 20.0, 3.0, 4.0, 10.0, 20.0, 5.0, 6.0, 10.0, 20.0]
        );
    }

    #[test]
    fn feature_map_shape_and_block_independence() {
        let mut rng = Rng::new(3);
        let u = rand_tensor(vec![3, 8], &mut rng);
        let v1 = rand_tensor(vec![5, 8], &mut rng);
        let v2 = rand_tensor(vec![5, 8], &mut rng);
        let g1 = feature_map(&u, &v1);
        let g2 = feature_map(&u, &v2);
        assert_eq!(g1.shape(), &[3, 5, 16]);
        for i in 0..3 {
            for j in 0..5 {
                let base = (i * 5 + j) * 16;
                assert_eq!(&g1.values()[base..base + 8], &g2.values()[base..base + 8]);
            }
        }
    }

    #[test]
    fn conv_zero_weights_give_half() {
        let mut rng = Rng::new(4);
        let x = rand_tensor(vec![4, 3, 5], &mut rng);
        let w = Tensor::zeros(vec![2, 45]);
        let b = Tensor::zeros(vec![2]);
        let out = conv_layer(&x, &w, &b);
        assert_eq!(out.shape(), &[4, 3, 2]);
        for &v in out.values() {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn conv_single_pixel_sees_only_center_tap() {
        // A 1x1 grid zero-pads all eight neighbors away, so only the center
        // tap (di = 1, dj = 1) matters. Garbage in the other taps must be
        // ignored.
        let x = Tensor::new(vec![1, 1, 2], vec![3.0, -1.0]).unwrap();
        let mut w = Tensor::filled(vec![1, 18], 100.0);
        let center = (1 * 3 + 1) * 2;
        w.values_mut()[center] = 0.5;
        w.values_mut()[center + 1] = 0.25;
        let b = Tensor::new(vec![1], vec![0.75]).unwrap();
        let out = conv_layer(&x, &w, &b);
        let expect = kernels::sigmoid(0.75 + 0.5 * 3.0 + 0.25 * (-1.0));
        assert!((out.values()[0] - expect).abs() < 1e-15);
    }

    #[test]
    fn pool_ceil_mode_keeps_odd_edges() {
        let x = Tensor::new(
            vec![3, 3, 1],
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
        )
        .unwrap();
        let out = pool_layer(&x);
        assert_eq!(out.shape(), &[2, 2, 1]);
        assert_eq!(out.values(), &[5.0, 6.0, 8.0, 9.0]);
    }

    #[test]
    fn gap_value_arithmetic() {
        assert!((critic_loss_value(&[2.0, 4.0], &[1.0, 1.0, 1.0]) - 2.0).abs() < 1e-15);
        assert!((critic_loss_value(&[1.5], &[1.5]) - 0.0).abs() < 1e-15);
    }

    #[test]
    fn zero_readout_scores_zero() {
        let mut rng = Rng::new(5);
        let mut c = Critic::new(4, 3, &mut rng);
        *c.params.get_mut("ro.w").unwrap() = Tensor::zeros(vec![3, 1]);
        *c.params.get_mut("ro.b").unwrap() = Tensor::zeros(vec![1]);
        let emb = rand_tensor(vec![6, 4], &mut rng);
        assert_eq!(c.score_ids(&emb, &[0, 1, 2], &[3, 4]), 0.0);
    }

    #[test]
    fn score_is_finite_across_lengths() {
        let mut rng = Rng::new(6);
        let c = Critic::new(3, 2, &mut rng);
        let emb = rand_tensor(vec![10, 3], &mut rng);
        for s in 1..8 {
            for t in 1..8 {
                let src: Vec<usize> = (0..s).map(|i| i % 10).collect();
                let tgt: Vec<usize> = (0..t).map(|i| (i + 3) % 10).collect();
                assert!(c.score_ids(&emb, &src, &tgt).is_finite());
            }
        }
    }

    #[test]
    fn taped_score_matches_inference() {
        let mut rng = Rng::new(7);
        let c = Critic::new(4, 3, &mut rng);
        let emb = rand_tensor(vec![9, 4], &mut rng);
        let src = [0usize, 2, 4, 6, 8];
        let tgt = [1usize, 3, 5];
        let plain = c.score_ids(&emb, &src, &tgt);
        let mut tape = Tape::new();
        let emb_var = tape.constant(&emb);
        let u = tape.gather_rows(emb_var, &src);
        let v = tape.gather_rows(emb_var, &tgt);
        let score = c.score_graph(&mut tape, u, v, true);
        assert!((tape.scalar_value(score) - plain).abs() < 1e-12);
    }

    #[test]
    fn non_trainable_graph_exposes_no_critic_params() {
        let mut rng = Rng::new(8);
        let c = Critic::new(3, 2, &mut rng);
        let emb = rand_tensor(vec![5, 3], &mut rng);
        let mut tape = Tape::new();
        let emb_var = tape.param("emb", &emb);
        let u = tape.gather_rows(emb_var, &[0, 1]);
        let v = tape.gather_rows(emb_var, &[2, 3, 4]);
        let score = c.score_graph(&mut tape, u, v, false);
        let grads = tape.backward(score).unwrap();
        assert!(grads.contains_key("emb"));
        for name in CRITIC_PARAMS {
            assert!(!grads.contains_key(name), "{name} leaked into gradients");
        }
        assert!(grads["emb"].values().iter().any(|&g| g != 0.0));
    }

    #[test]
    fn score_graph_gradients_pass_finite_difference_check() {
        let mut rng = Rng::new(9);
        let c = Critic::new(3, 2, &mut rng);
        let emb = rand_tensor(vec![7, 3], &mut rng);
        let src = vec![0usize, 1, 2, 3];
        let tgt = vec![4usize, 5, 6];
        let report = gradcheck(
            &c.params,
            &GradCheckSettings { tol: 1e-5, ..GradCheckSettings::default() },
            |params, tape| {
                let model = Critic { params: params.clone(), emb_dim: 3, filters: 2 };
                let emb_var = tape.constant(&emb);
                let u = tape.gather_rows(emb_var, &src);
                let v = tape.gather_rows(emb_var, &tgt);
                model.score_graph(tape, u, v, true)
            },
        )
        .unwrap();
        assert!(report.pass, "worst {} at {}", report.worst_rel, report.worst_param);
    }

    #[test]
    fn clip_clamps_every_entry() {
        let mut rng = Rng::new(10);
        let mut c = Critic::new(3, 2, &mut rng);
        c.params.get_mut("conv.w").unwrap().values_mut()[0] = 5.0;
        c.params.get_mut("ro.b").unwrap().values_mut()[0] = -5.0;
        c.clip(0.01);
        for (_, t) in c.params.iter() {
            for &v in t.values() {
                assert!(v.abs() <= 0.01);
            }
        }
        assert_eq!(c.params.get("conv.w").unwrap().values()[0], 0.01);
        assert_eq!(c.params.get("ro.b").unwrap().values()[0], -0.01);
    }
}
