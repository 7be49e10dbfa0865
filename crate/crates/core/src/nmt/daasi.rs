//! Adversarial refinement of a pretrained generator against the
//! convolutional critic.
//!
//! Each outer iteration runs `n_critic` critic steps followed by one
//! generator step. A critic step samples a real batch and a batch of
//! detached greedy translations, climbs the gap between their mean scores
//! under RMSProp, then clips every critic weight into [-c, c]. Before the
//! pending update is applied, the round-robin reward is evaluated; once the
//! warm-up has passed, a reward that stops decreasing ends training and the
//! current generator is returned. The generator step regenerates sampled
//! sources through the soft-embedding path and climbs the mean critic score
//! with the critic held constant.

use serde::{Deserialize, Serialize};

use crate::engine::optim::{rmsprop_step, Direction};
use crate::engine::{RmsPropState, Rng, Tape, Var};
use crate::reward::{RewardEvaluator, RewardReport};
use crate::textpipe::{tag_source, Sentence, TextError};

use super::critic::Critic;
use super::generator::{Generator, NmtConfig};
use super::NmtError;

const RMSPROP_DECAY: f64 = 0.99;
const RMSPROP_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DaasiLog {
    pub outer_iters: usize,
    pub critic_pretrain_updates: usize,
    pub critic_updates: usize,
    pub generator_updates: usize,
    pub early_returned: bool,
    /// One report per reward evaluation, in evaluation order.
    pub rewards: Vec<RewardReport>,
    /// Critic objective (mean real minus mean fake) at each critic update.
    pub critic_gap: Vec<f64>,
    /// Generator objective (mean critic score) at each generator update.
    pub gen_objective: Vec<f64>,
}

/// Encoded (source, target) token id rows.
pub type IdPair = (Vec<usize>, Vec<usize>);

/// Critic objective graph over id batches: mean real score minus mean fake
/// score. Embeddings enter as constants so only critic weights learn.
pub fn critic_gap_graph(
    critic: &Critic,
    gen: &Generator,
    tape: &mut Tape,
    real: &[IdPair],
    fake: &[IdPair],
) -> Result<Var, NmtError> {
    if real.is_empty() || fake.is_empty() {
        return Err(NmtError::EmptyBatch);
    }
    let emb = tape.constant(gen.params.get("emb")?);
    let vars = critic.register(tape, true);
    let mean_of = |tape: &mut Tape, batch: &[IdPair]| {
        let mut acc: Option<Var> = None;
        for (src, tgt) in batch {
            let u = tape.gather_rows(emb, src);
            let v = tape.gather_rows(emb, tgt);
            let s = Critic::score_graph_with(tape, vars, u, v);
            acc = Some(match acc {
                None => s,
                Some(a) => tape.add(a, s),
            });
        }
        let sum = acc.expect("nonempty batch");
        tape.affine(sum, 1.0 / batch.len() as f64, 0.0)
    };
    let real_mean = mean_of(tape, real);
    let fake_mean = mean_of(tape, fake);
    let neg_fake = tape.affine(fake_mean, -1.0, 0.0);
    Ok(tape.add(real_mean, neg_fake))
}

/// Generator objective graph: mean critic score of soft regenerations of
/// the given sources, each rolled out for its reference length. Critic
/// weights enter as constants so only the generator learns.
pub fn generator_objective_graph(
    critic: &Critic,
    gen: &Generator,
    tape: &mut Tape,
    batch: &[IdPair],
) -> Result<Var, NmtError> {
    if batch.is_empty() {
        return Err(NmtError::EmptyBatch);
    }
    let gvars = gen.register_params(tape);
    let cvars = critic.register(tape, false);
    let mut acc: Option<Var> = None;
    for (src, tgt) in batch {
        let steps = tgt.len().max(1);
        let soft = gen.soft_generate_graph(tape, &gvars, src, steps);
        let u = tape.gather_rows(gvars.emb, src);
        let s = Critic::score_graph_with(tape, cvars, u, soft);
        acc = Some(match acc {
            None => s,
            Some(a) => tape.add(a, s),
        });
    }
    let sum = acc.expect("nonempty batch");
    Ok(tape.affine(sum, 1.0 / batch.len() as f64, 0.0))
}

fn sample_batch(rows: &[IdPair], size: usize, rng: &mut Rng) -> Vec<IdPair> {
    (0..size).map(|_| rows[rng.below(rows.len())].clone()).collect()
}

/// Swap each sampled real target for the generator's own greedy translation
/// of the source, detached from any tape.
fn fake_batch(
    gen: &Generator,
    rows: &[IdPair],
    srcs: &[Sentence],
    size: usize,
    max_len: usize,
    rng: &mut Rng,
) -> Result<Vec<IdPair>, NmtError> {
    let mut out = Vec::with_capacity(size);
    for _ in 0..size {
        let i = rng.below(rows.len());
        let t = gen.translate_or_unk(&srcs[i], max_len)?;
        out.push((rows[i].0.clone(), gen.vocab.encode(&t)));
    }
    Ok(out)
}

/// One critic update: build the gap graph, step RMSProp uphill, clip.
/// Returns the gap value before the update.
pub fn critic_step(
    critic: &mut Critic,
    gen: &Generator,
    real: &[IdPair],
    fake: &[IdPair],
    state: &mut RmsPropState,
    cfg: &NmtConfig,
) -> Result<f64, NmtError> {
    let mut tape = Tape::new();
    let gap = critic_gap_graph(critic, gen, &mut tape, real, fake)?;
    let value = tape.scalar_value(gap);
    let grads = tape.backward(gap)?;
    rmsprop_step(&mut critic.params, &grads, state, cfg.rho, Direction::Maximize)?;
    critic.clip(cfg.clip);
    Ok(value)
}

/// Adversarial training loop over a pretrained generator and critic.
/// `pairs` carries untagged sources with their targets; tags are prepended
/// from each target's language, which must already be registered in the
/// generator's vocabulary.
pub fn train_daasi(
    mut gen: Generator,
    mut critic: Critic,
    pairs: &[(Sentence, Sentence)],
    evaluator: &mut RewardEvaluator,
    cfg: &NmtConfig,
) -> Result<(Generator, Critic, DaasiLog), NmtError> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(NmtError::EmptyBatch);
    }
    if pairs.iter().any(|(s, t)| s.is_empty() || t.is_empty()) {
        return Err(NmtError::EmptySentence);
    }
    let tagged_srcs: Vec<Sentence> = pairs
        .iter()
        .map(|(s, t)| tag_source(s, &t.language, &gen.vocab))
        .collect::<Result<_, TextError>>()?;
    let rows: Vec<IdPair> = pairs
        .iter()
        .zip(&tagged_srcs)
        .map(|((_, t), ts)| (gen.vocab.encode(ts), gen.vocab.encode(t)))
        .collect();

    let base_rng = Rng::new(cfg.seed).fork("daasi");
    let mut critic_state = RmsPropState::new(RMSPROP_DECAY, RMSPROP_EPS);
    let mut gen_state = RmsPropState::new(RMSPROP_DECAY, RMSPROP_EPS);
    let mut log = DaasiLog {
        outer_iters: 0,
        critic_pretrain_updates: 0,
        critic_updates: 0,
        generator_updates: 0,
        early_returned: false,
        rewards: Vec::new(),
        critic_gap: Vec::new(),
        gen_objective: Vec::new(),
    };

    let mut warm_rng = base_rng.fork("critic-pretrain");
    for _ in 0..cfg.critic_pretrain_steps {
        let real = sample_batch(&rows, cfg.batch_size, &mut warm_rng);
        let fake = fake_batch(
            &gen,
            &rows,
            &tagged_srcs,
            cfg.batch_size,
            cfg.max_decode_len,
            &mut warm_rng,
        )?;
        critic_step(&mut critic, &gen, &real, &fake, &mut critic_state, cfg)?;
        log.critic_pretrain_updates += 1;
    }

    let mut prev_reward: Option<f64> = None;
    'outer: for outer in 0..cfg.max_outer {
        let mut orng = base_rng.fork_idx("outer", outer as u64);
        log.outer_iters = outer + 1;
        for _ in 0..cfg.n_critic {
            let real = sample_batch(&rows, cfg.batch_size, &mut orng);
            let fake = fake_batch(
                &gen,
                &rows,
                &tagged_srcs,
                cfg.batch_size,
                cfg.max_decode_len,
                &mut orng,
            )?;
            let mut tape = Tape::new();
            let gap = critic_gap_graph(&critic, &gen, &mut tape, &real, &fake)?;
            let gap_value = tape.scalar_value(gap);
            if !gap_value.is_finite() {
                return Err(NmtError::Diverged {
                    context: format!("critic gap at outer {outer}"),
                });
            }
            let grads = tape.backward(gap)?;

            let checkpoint = format!("outer-{outer}");
            let report =
                evaluator.evaluate(&gen, &critic, cfg.max_decode_len, &checkpoint)?;
            let r_mmt = report.r_mmt;
            log.rewards.push(report);
            let stalled = prev_reward.is_some_and(|p| r_mmt >= p);
            prev_reward = Some(r_mmt);
            if stalled && (cfg.raw_early_return || outer >= cfg.warmup_outer) {
                log.early_returned = true;
                break 'outer;
            }

            rmsprop_step(&mut critic.params, &grads, &mut critic_state, cfg.rho, Direction::Maximize)?;
            critic.clip(cfg.clip);
            log.critic_updates += 1;
            log.critic_gap.push(gap_value);
        }

        let batch = sample_batch(&rows, cfg.batch_size, &mut orng);
        let mut tape = Tape::new();
        let objective = generator_objective_graph(&critic, &gen, &mut tape, &batch)?;
        let value = tape.scalar_value(objective);
        if !value.is_finite() {
            return Err(NmtError::Diverged {
                context: format!("generator objective at outer {outer}"),
            });
        }
        let grads = tape.backward(objective)?;
        rmsprop_step(&mut gen.params, &grads, &mut gen_state, cfg.rho, Direction::Maximize)?;
        log.generator_updates += 1;
        log.gen_objective.push(value);
    }
    Ok((gen, critic, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Tensor;
    use crate::reward::TestEntry;
    use crate::textpipe::Vocabulary;

    fn toy_cfg() -> NmtConfig {
        NmtConfig {
            emb_dim: 6,
            hidden: 8,
            filters: 2,
            batch_size: 4,
            max_decode_len: 8,
            critic_pretrain_steps: 2,
            ..NmtConfig::default()
        }
    }

    fn toy_setup(seed: u64) -> (Generator, Critic, Vec<(Sentence, Sentence)>) {
        let cfg = toy_cfg();
        let vocab = Vocabulary::build(
            ["ka ru mi to na se po ga du be"].into_iter(),
            &["l1", "l2"],
        )
        .unwrap();
        let mut rng = Rng::new(seed);
        let gen = Generator::new(vocab, &cfg, &mut rng);
        let critic = Critic::new(cfg.emb_dim, cfg.filters, &mut rng);
        let words = ["ka", "ru", "mi", "to", "na", "se", "po", "ga"];
        let mut prng = Rng::new(77);
        let pairs = (0..12)
            .map(|_| {
                let pick = |r: &mut Rng, n: usize| {
                    (0..n).map(|_| words[r.below(words.len())]).collect::<Vec<_>>().join(" ")
                };
                let len = 2 + prng.below(3);
                (
                    Sentence::from_text(&pick(&mut prng, len), "l1"),
                    Sentence::from_text(&pick(&mut prng, len), "l2"),
                )
            })
            .collect();
        (gen, critic, pairs)
    }

    fn toy_evaluator(gen: &Generator, pairs: &[(Sentence, Sentence)], k: usize) -> RewardEvaluator {
        let entries: Vec<TestEntry> = pairs
            .iter()
            .map(|(s, t)| TestEntry {
                source: tag_source(s, &t.language, &gen.vocab).unwrap(),
                reference: t.clone(),
                lang_pair: format!("{}-{}", s.language, t.language),
            })
            .collect();
        RewardEvaluator::new(&entries, k, &Rng::new(5)).unwrap()
    }

    #[test]
    fn five_critic_updates_per_generator_update() {
        let (gen, critic, pairs) = toy_setup(1);
        let mut ev = toy_evaluator(&gen, &pairs, 2);
        let cfg = NmtConfig {
            n_critic: 5,
            max_outer: 3,
            warmup_outer: 50,
            critic_pretrain_steps: 0,
            ..toy_cfg()
        };
        let (_, _, log) = train_daasi(gen, critic, &pairs, &mut ev, &cfg).unwrap();
        assert!(!log.early_returned);
        assert_eq!(log.generator_updates, 3);
        assert_eq!(log.critic_updates, 5 * log.generator_updates);
        assert_eq!(log.rewards.len(), 15);
    }

    #[test]
    fn critic_weights_stay_clipped_after_every_update() {
        let (gen, critic, pairs) = toy_setup(2);
        let mut ev = toy_evaluator(&gen, &pairs, 1);
        let cfg = NmtConfig {
            max_outer: 2,
            warmup_outer: 50,
            rho: 0.05,
            ..toy_cfg()
        };
        let (_, critic, log) = train_daasi(gen, critic, &pairs, &mut ev, &cfg).unwrap();
        assert!(log.critic_updates > 0);
        for (_, t) in critic.params.iter() {
            for &v in t.values() {
                assert!(v.abs() <= cfg.clip + 1e-15, "weight {v} escaped the clip");
            }
        }
    }

    #[test]
    fn fixed_seed_runs_are_bit_identical() {
        let cfg = NmtConfig { max_outer: 4, warmup_outer: 50, ..toy_cfg() };
        let run = || {
            let (gen, critic, pairs) = toy_setup(3);
            let mut ev = toy_evaluator(&gen, &pairs, 2);
            train_daasi(gen, critic, &pairs, &mut ev, &cfg).unwrap()
        };
        let (g1, c1, l1) = run();
        let (g2, c2, l2) = run();
        assert!(g1.params.bits_eq(&g2.params));
        assert!(c1.params.bits_eq(&c2.params));
        assert_eq!(l1.critic_gap, l2.critic_gap);
        assert_eq!(l1.gen_objective, l2.gen_objective);
    }

    #[test]
    fn raw_early_return_fires_on_first_stall() {
        // References set to the generator's own translations pin the reward
        // to exactly zero, so the second evaluation already fails to
        // decrease and the raw check returns right there.
        let (gen, critic, pairs) = toy_setup(4);
        let cfg = NmtConfig {
            max_outer: 10,
            raw_early_return: true,
            critic_pretrain_steps: 0,
            ..toy_cfg()
        };
        let self_pairs: Vec<(Sentence, Sentence)> = pairs
            .iter()
            .map(|(s, t)| {
                let tagged = tag_source(s, &t.language, &gen.vocab).unwrap();
                (s.clone(), gen.translate_or_unk(&tagged, cfg.max_decode_len).unwrap())
            })
            .collect();
        let mut ev = toy_evaluator(&gen, &self_pairs, 1);
        let (_, _, log) = train_daasi(gen, critic, &pairs, &mut ev, &cfg).unwrap();
        assert!(log.early_returned);
        assert_eq!(log.rewards.len(), 2, "raw return must fire on the second evaluation");
        assert_eq!(log.rewards[0].r_mmt, 0.0);
    }

    #[test]
    fn warmup_blocks_early_return() {
        let (gen, critic, pairs) = toy_setup(4);
        let mut ev = toy_evaluator(&gen, &pairs, 1);
        let cfg = NmtConfig {
            max_outer: 3,
            warmup_outer: 50,
            raw_early_return: false,
            rho: 1e-12,
            critic_pretrain_steps: 0,
            ..toy_cfg()
        };
        let (_, _, log) = train_daasi(gen, critic, &pairs, &mut ev, &cfg).unwrap();
        assert!(!log.early_returned);
        assert_eq!(log.outer_iters, 3);
    }

    #[test]
    fn critic_only_training_separates_disjoint_distributions() {
        // Fixed real and fake batches drawn from disjoint token ranges.
        let (gen, mut critic, _) = toy_setup(5);
        let v0 = gen.vocab.content_start();
        let real: Vec<IdPair> = (0..4)
            .map(|i| (vec![v0, v0 + 1, v0 + 2], vec![v0 + (i % 3), v0 + 1]))
            .collect();
        let fake: Vec<IdPair> = (0..4)
            .map(|i| (vec![v0, v0 + 1, v0 + 2], vec![v0 + 4 + (i % 3), v0 + 5]))
            .collect();
        let cfg = NmtConfig { rho: 5e-3, ..toy_cfg() };
        let mut state = RmsPropState::new(0.99, 1e-8);
        let mut last_gap = f64::NEG_INFINITY;
        for _ in 0..200 {
            last_gap = critic_step(&mut critic, &gen, &real, &fake, &mut state, &cfg).unwrap();
        }
        assert!(last_gap > 0.0, "critic failed to separate: gap {last_gap}");

        // A trained critic is order-sensitive: permuting target tokens moves
        // the score on nearly every sampled pair.
        let emb = gen.params.get("emb").unwrap();
        let mut rng = Rng::new(9);
        let mut changed = 0;
        let total = 100;
        for _ in 0..total {
            let len = 4 + rng.below(3);
            let tgt: Vec<usize> = (0..len).map(|_| v0 + rng.below(8)).collect();
            let mut perm = tgt.clone();
            perm.reverse();
            if perm == tgt {
                changed += 1;
                continue;
            }
            let src = vec![v0, v0 + 1, v0 + 2];
            let a = critic.score_ids(emb, &src, &tgt);
            let b = critic.score_ids(emb, &src, &perm);
            if a != b {
                changed += 1;
            }
        }
        assert!(changed >= 90, "only {changed}/{total} permutations moved the score");
    }

    #[test]
    fn gap_graph_matches_value_helper() {
        let (gen, critic, _) = toy_setup(6);
        let v0 = gen.vocab.content_start();
        let real: Vec<IdPair> = vec![(vec![v0, v0 + 1], vec![v0 + 2, v0 + 3])];
        let fake: Vec<IdPair> = vec![
            (vec![v0, v0 + 1], vec![v0 + 4]),
            (vec![v0 + 2], vec![v0 + 5, v0 + 6]),
        ];
        let emb = gen.params.get("emb").unwrap();
        let score = |pair: &IdPair| critic.score_ids(emb, &pair.0, &pair.1);
        let expect = super::super::critic::critic_loss_value(
            &real.iter().map(score).collect::<Vec<_>>(),
            &fake.iter().map(score).collect::<Vec<_>>(),
        );
        let mut tape = Tape::new();
        let gap = critic_gap_graph(&critic, &gen, &mut tape, &real, &fake).unwrap();
        assert!((tape.scalar_value(gap) - expect).abs() < 1e-12);
    }

    #[test]
    fn zero_readout_gives_zero_objective_and_zero_gradient() {
        let (gen, mut critic, _) = toy_setup(7);
        *critic.params.get_mut("ro.w").unwrap() = Tensor::zeros(vec![2, 1]);
        *critic.params.get_mut("ro.b").unwrap() = Tensor::zeros(vec![1]);
        let v0 = gen.vocab.content_start();
        let batch: Vec<IdPair> = vec![(vec![v0, v0 + 1, v0 + 2], vec![v0 + 3, v0 + 4])];
        let mut tape = Tape::new();
        let obj = generator_objective_graph(&critic, &gen, &mut tape, &batch).unwrap();
        assert_eq!(tape.scalar_value(obj), 0.0);
        let grads = tape.backward(obj).unwrap();
        for (name, g) in &grads {
            assert!(
                g.values().iter().all(|&v| v == 0.0),
                "nonzero gradient reached {name}"
            );
        }
    }

    #[test]
    fn objective_equals_mean_of_singleton_objectives() {
        let (gen, critic, _) = toy_setup(8);
        let v0 = gen.vocab.content_start();
        let batch: Vec<IdPair> = vec![
            (vec![v0, v0 + 1], vec![v0 + 2, v0 + 3]),
            (vec![v0 + 4, v0 + 5, v0 + 6], vec![v0 + 7]),
        ];
        let mut tape = Tape::new();
        let obj = generator_objective_graph(&critic, &gen, &mut tape, &batch).unwrap();
        let batched = tape.scalar_value(obj);
        let mut mean = 0.0;
        for pair in &batch {
            let mut t = Tape::new();
            let o = generator_objective_graph(&critic, &gen, &mut t, std::slice::from_ref(pair))
                .unwrap();
            mean += t.scalar_value(o);
        }
        mean /= batch.len() as f64;
        assert!((batched - mean).abs() < 1e-12);
    }

    #[test]
    fn ascent_step_on_channel_mass_critic_increases_objective() {
        // Hand-built critic: filter 0 reads the first target-embedding
        // channel at the window center; readout passes it through. The
        // objective then rewards raw channel mass, so one small uphill step
        // must increase it.
        let (gen, mut critic, _) = toy_setup(9);
        let d = gen.emb_dim;
        let mut conv_w = Tensor::zeros(vec![2, 9 * 2 * d]);
        let center_target_c0 = (1 * 3 + 1) * 2 * d + d;
        conv_w.values_mut()[center_target_c0] = 1.0;
        *critic.params.get_mut("conv.w").unwrap() = conv_w;
        *critic.params.get_mut("conv.b").unwrap() = Tensor::zeros(vec![2]);
        let mut ro_w = Tensor::zeros(vec![2, 1]);
        ro_w.values_mut()[0] = 1.0;
        *critic.params.get_mut("ro.w").unwrap() = ro_w;
        *critic.params.get_mut("ro.b").unwrap() = Tensor::zeros(vec![1]);

        let v0 = gen.vocab.content_start();
        let batch: Vec<IdPair> = vec![(vec![v0, v0 + 1, v0 + 2], vec![v0 + 3, v0 + 4])];
        let value = |g: &Generator| {
            let mut tape = Tape::new();
            let o = generator_objective_graph(&critic, g, &mut tape, &batch).unwrap();
            tape.scalar_value(o)
        };
        let before = value(&gen);
        let mut gen = gen;
        let mut tape = Tape::new();
        let obj = generator_objective_graph(&critic, &gen, &mut tape, &batch).unwrap();
        let grads = tape.backward(obj).unwrap();
        let mut state = RmsPropState::new(0.99, 1e-8);
        rmsprop_step(&mut gen.params, &grads, &mut state, 1e-4, Direction::Maximize).unwrap();
        let after = value(&gen);
        assert!(after > before, "objective fell from {before} to {after}");
    }

    #[test]
    fn soft_path_gradients_match_finite_differences() {
        use crate::engine::{gradcheck, GradCheckSettings};
        let (gen, critic, _) = toy_setup(10);
        let v0 = gen.vocab.content_start();
        let batch: Vec<IdPair> = vec![(vec![v0, v0 + 1], vec![v0 + 2, v0 + 3])];
        let vocab = gen.vocab.clone();
        let (emb_dim, hidden) = (gen.emb_dim, gen.hidden);
        let report = gradcheck(
            &gen.params,
            &GradCheckSettings { tol: 1e-3, max_per_tensor: 4, ..GradCheckSettings::default() },
            |params, tape| {
                let model = Generator {
                    params: params.clone(),
                    vocab: vocab.clone(),
                    emb_dim,
                    hidden,
                };
                generator_objective_graph(&critic, &model, tape, &batch).unwrap()
            },
        )
        .unwrap();
        assert!(report.pass, "worst {} at {}", report.worst_rel, report.worst_param);
    }

    #[test]
    fn rejects_empty_batches() {
        let (gen, critic, _) = toy_setup(11);
        let mut tape = Tape::new();
        assert!(matches!(
            critic_gap_graph(&critic, &gen, &mut tape, &[], &[]),
            Err(NmtError::EmptyBatch)
        ));
        let mut tape = Tape::new();
        assert!(matches!(
            generator_objective_graph(&critic, &gen, &mut tape, &[]),
            Err(NmtError::EmptyBatch)
        ));
    }
}
