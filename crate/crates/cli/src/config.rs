//! Flat key=value experiment configuration.
//!
//! One `key = value` pair per line; `#` starts a comment; blank lines are
//! skipped. Unknown and duplicate keys are errors. Every key has a default,
//! and the sha-256 fingerprint is computed over the fully resolved, typed
//! configuration, so two files that resolve to the same settings hash
//! identically no matter how they are laid out.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use daasi_core::daae::DaaeConfig;
use daasi_core::engine::Rng;
use daasi_core::interpolation::InterpolationConfig;
use daasi_core::nmt::NmtConfig;
use daasi_core::textpipe::NoiseSpec;

use crate::error::{CliError, Stage};

/// Reference hyperparameters recorded under the `paper` scale profile:
/// layers, model/ffn widths and heads of the full-scale transformer setup
/// plus its regularization. The desk architecture cannot honor them, so
/// `run` refuses the profile; they are carried for documentation and reports.
pub const PAPER_REFERENCE: [(&str, &str); 8] = [
    ("layers", "5"),
    ("model_dim", "512"),
    ("ffn_dim", "2048"),
    ("heads", "2"),
    ("dropout", "0.4"),
    ("label_smoothing", "0.2"),
    ("weight_decay", "0.0001"),
    ("patience", "10"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    Desk,
    Paper,
}

impl Profile {
    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Paper => "paper",
        }
    }

    /// The stored full-scale reference values; empty for `desk`.
    pub fn reference(self) -> &'static [(&'static str, &'static str)] {
        match self {
            Profile::Desk => &[],
            Profile::Paper => &PAPER_REFERENCE,
        }
    }
}

/// Working-set ceilings applied by the pipeline. Zero means unlimited.
#[derive(Debug, Clone)]
pub struct Caps {
    /// Parallel training pairs kept per language pair and direction.
    pub train_pairs: usize,
    /// Monolingual sentences per language for autoencoder training.
    pub mono_sentences: usize,
    /// Test sentences scored per direction.
    pub eval_sentences: usize,
    /// Validation pairs per direction feeding the reward partition.
    pub reward_pairs: usize,
    /// Source/reference/hypothesis triples dumped per direction.
    pub examples_per_pair: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub profile: Profile,
    /// Master seed; every stage forks its own stream from it.
    pub seed: u64,
    /// Directory holding a corpus bundle with its `manifest.json`.
    pub data_dir: PathBuf,
    pub daae: DaaeConfig,
    pub interp: InterpolationConfig,
    pub nmt: NmtConfig,
    /// Number of reward partition sets (one entry per language pair each).
    pub reward_k: usize,
    pub caps: Caps,
    hash: String,
}

fn err(msg: impl Into<String>) -> CliError {
    CliError::new(Stage::Config, msg)
}

/// The documented schema: every key, its type and its default, in one
/// place. `parse` rejects anything not listed here.
const SCHEMA: &[(&str, &str)] = &[
    ("profile", "desk"),
    ("seed", "7"),
    ("data_dir", ""),
    ("daae.lambda", "1"),
    ("daae.lr", "0.01"),
    ("daae.lr_adv", "0.0005"),
    ("daae.lr_decay", "0.99"),
    ("daae.batch_size", "20"),
    ("daae.max_epochs", "60"),
    ("daae.latent_dim", "32"),
    ("daae.emb_dim", "32"),
    ("daae.noise.p_delete", "0.1"),
    ("daae.noise.p_substitute", "0.1"),
    ("daae.noise.p_swap", "0.1"),
    ("daae.convergence_window", "8"),
    ("daae.convergence_tol", "0.001"),
    ("daae.max_decode_len", "24"),
    ("interp.alpha_grid", "0.2,0.35,0.5,0.65,0.8"),
    ("interp.tau", "0.35"),
    ("interp.max_len", "24"),
    ("nmt.emb_dim", "32"),
    ("nmt.hidden", "64"),
    ("nmt.filters", "8"),
    ("nmt.lr", "0.002"),
    ("nmt.lr_decay", "0.97"),
    ("nmt.batch_size", "16"),
    ("nmt.max_epochs", "14"),
    ("nmt.patience", "5"),
    ("nmt.label_smoothing", "0.1"),
    ("nmt.dropout", "0.1"),
    ("nmt.weight_decay", "0.00001"),
    ("nmt.max_decode_len", "24"),
    ("nmt.rho", "0.00005"),
    ("nmt.clip", "0.01"),
    ("nmt.n_critic", "5"),
    ("nmt.max_outer", "8"),
    ("nmt.warmup_outer", "4"),
    ("nmt.raw_early_return", "false"),
    ("nmt.critic_pretrain_steps", "15"),
    ("reward.k", "4"),
    ("cap.train_pairs", "400"),
    ("cap.mono_sentences", "600"),
    ("cap.eval_sentences", "150"),
    ("cap.reward_pairs", "40"),
    ("cap.examples_per_pair", "5"),
];

struct Resolved(BTreeMap<String, String>);

impl Resolved {
    fn str(&self, key: &str) -> &str {
        self.0.get(key).map(String::as_str).expect("schema key")
    }

    fn u64(&self, key: &str) -> Result<u64, CliError> {
        self.str(key)
            .parse()
            .map_err(|_| err(format!("key `{key}`: expected an integer, got `{}`", self.str(key))))
    }

    fn usize(&self, key: &str) -> Result<usize, CliError> {
        Ok(self.u64(key)? as usize)
    }

    fn f64(&self, key: &str) -> Result<f64, CliError> {
        self.str(key)
            .parse()
            .map_err(|_| err(format!("key `{key}`: expected a number, got `{}`", self.str(key))))
    }

    fn bool(&self, key: &str) -> Result<bool, CliError> {
        match self.str(key) {
            "true" => Ok(true),
            "false" => Ok(false),
            other => Err(err(format!("key `{key}`: expected true or false, got `{other}`"))),
        }
    }

    fn f64_list(&self, key: &str) -> Result<Vec<f64>, CliError> {
        self.str(key)
            .split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| err(format!("key `{key}`: `{p}` is not a number")))
            })
            .collect()
    }
}

impl ExperimentConfig {
    /// Parse a config file. Relative `data_dir` is resolved against the
    /// file's own directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        if !cfg.data_dir.as_os_str().is_empty() && cfg.data_dir.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.data_dir = dir.join(&cfg.data_dir);
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut resolved: BTreeMap<String, String> =
            SCHEMA.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim();
            let value = value.trim();
            let slot = resolved
                .get_mut(key)
                .ok_or_else(|| err(format!("line {}: unknown key `{key}`", lineno + 1)))?;
            if let Some(first) = seen.insert(key.to_string(), lineno + 1) {
                return Err(err(format!(
                    "line {}: key `{key}` already set on line {first}",
                    lineno + 1
                )));
            }
            *slot = value.to_string();
        }
        Self::from_resolved(Resolved(resolved))
    }

    fn from_resolved(r: Resolved) -> Result<Self, CliError> {
        let profile = match r.str("profile") {
            "desk" => Profile::Desk,
            "paper" => Profile::Paper,
            other => return Err(err(format!("profile must be desk or paper, got `{other}`"))),
        };
        let seed = r.u64("seed")?;

        let daae = DaaeConfig {
            lambda: r.f64("daae.lambda")?,
            lr: r.f64("daae.lr")?,
            lr_adv: r.f64("daae.lr_adv")?,
            lr_decay: r.f64("daae.lr_decay")?,
            batch_size: r.usize("daae.batch_size")?,
            max_epochs: r.usize("daae.max_epochs")?,
            latent_dim: r.usize("daae.latent_dim")?,
            emb_dim: r.usize("daae.emb_dim")?,
            noise: NoiseSpec {
                p_delete: r.f64("daae.noise.p_delete")?,
                p_substitute: r.f64("daae.noise.p_substitute")?,
                p_swap: r.f64("daae.noise.p_swap")?,
                seed,
            },
            seed,
            convergence_window: r.usize("daae.convergence_window")?,
            convergence_tol: r.f64("daae.convergence_tol")?,
            max_decode_len: r.usize("daae.max_decode_len")?,
        };
        let interp = InterpolationConfig {
            alpha_grid: r.f64_list("interp.alpha_grid")?,
            tau: r.f64("interp.tau")?,
            max_len: r.usize("interp.max_len")?,
        };
        let nmt = NmtConfig {
            emb_dim: r.usize("nmt.emb_dim")?,
            hidden: r.usize("nmt.hidden")?,
            filters: r.usize("nmt.filters")?,
            lr: r.f64("nmt.lr")?,
            lr_decay: r.f64("nmt.lr_decay")?,
            batch_size: r.usize("nmt.batch_size")?,
            max_epochs: r.usize("nmt.max_epochs")?,
            patience: r.usize("nmt.patience")?,
            label_smoothing: r.f64("nmt.label_smoothing")?,
            dropout: r.f64("nmt.dropout")?,
            weight_decay: r.f64("nmt.weight_decay")?,
            seed,
            max_decode_len: r.usize("nmt.max_decode_len")?,
            rho: r.f64("nmt.rho")?,
            clip: r.f64("nmt.clip")?,
            n_critic: r.usize("nmt.n_critic")?,
            max_outer: r.usize("nmt.max_outer")?,
            warmup_outer: r.usize("nmt.warmup_outer")?,
            raw_early_return: r.bool("nmt.raw_early_return")?,
            critic_pretrain_steps: r.usize("nmt.critic_pretrain_steps")?,
        };
        let caps = Caps {
            train_pairs: r.usize("cap.train_pairs")?,
            mono_sentences: r.usize("cap.mono_sentences")?,
            eval_sentences: r.usize("cap.eval_sentences")?,
            reward_pairs: r.usize("cap.reward_pairs")?,
            examples_per_pair: r.usize("cap.examples_per_pair")?,
        };
        let mut cfg = ExperimentConfig {
            profile,
            seed,
            data_dir: PathBuf::from(r.str("data_dir")),
            daae,
            interp,
            nmt,
            reward_k: r.usize("reward.k")?,
            caps,
            hash: String::new(),
        };
        daasi_core::daae::DaaeConfig::validate(&cfg.daae).map_err(|e| err(e.to_string()))?;
        cfg.interp.validate().map_err(|e| err(e.to_string()))?;
        cfg.nmt.validate().map_err(|e| err(e.to_string()))?;
        if cfg.reward_k == 0 {
            return Err(err("reward.k must be > 0"));
        }
        cfg.hash = hex(&Sha256::digest(cfg.canonical().as_bytes()));
        Ok(cfg)
    }

    /// The resolved configuration re-serialized in schema order; the basis
    /// of the fingerprint embedded in checkpoints and reports.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        let grid = self
            .interp
            .alpha_grid
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(",");
        let pairs: Vec<(&str, String)> = vec![
            ("profile", self.profile.as_str().to_string()),
            ("seed", self.seed.to_string()),
            ("data_dir", self.data_dir.to_string_lossy().into_owned()),
            ("daae.lambda", self.daae.lambda.to_string()),
            ("daae.lr", self.daae.lr.to_string()),
            ("daae.lr_adv", self.daae.lr_adv.to_string()),
            ("daae.lr_decay", self.daae.lr_decay.to_string()),
            ("daae.batch_size", self.daae.batch_size.to_string()),
            ("daae.max_epochs", self.daae.max_epochs.to_string()),
            ("daae.latent_dim", self.daae.latent_dim.to_string()),
            ("daae.emb_dim", self.daae.emb_dim.to_string()),
            ("daae.noise.p_delete", self.daae.noise.p_delete.to_string()),
            ("daae.noise.p_substitute", self.daae.noise.p_substitute.to_string()),
            ("daae.noise.p_swap", self.daae.noise.p_swap.to_string()),
            ("daae.convergence_window", self.daae.convergence_window.to_string()),
            ("daae.convergence_tol", self.daae.convergence_tol.to_string()),
            ("daae.max_decode_len", self.daae.max_decode_len.to_string()),
            ("interp.alpha_grid", grid),
            ("interp.tau", self.interp.tau.to_string()),
            ("interp.max_len", self.interp.max_len.to_string()),
            ("nmt.emb_dim", self.nmt.emb_dim.to_string()),
            ("nmt.hidden", self.nmt.hidden.to_string()),
            ("nmt.filters", self.nmt.filters.to_string()),
            ("nmt.lr", self.nmt.lr.to_string()),
            ("nmt.lr_decay", self.nmt.lr_decay.to_string()),
            ("nmt.batch_size", self.nmt.batch_size.to_string()),
            ("nmt.max_epochs", self.nmt.max_epochs.to_string()),
            ("nmt.patience", self.nmt.patience.to_string()),
            ("nmt.label_smoothing", self.nmt.label_smoothing.to_string()),
            ("nmt.dropout", self.nmt.dropout.to_string()),
            ("nmt.weight_decay", self.nmt.weight_decay.to_string()),
            ("nmt.max_decode_len", self.nmt.max_decode_len.to_string()),
            ("nmt.rho", self.nmt.rho.to_string()),
            ("nmt.clip", self.nmt.clip.to_string()),
            ("nmt.n_critic", self.nmt.n_critic.to_string()),
            ("nmt.max_outer", self.nmt.max_outer.to_string()),
            ("nmt.warmup_outer", self.nmt.warmup_outer.to_string()),
            ("nmt.raw_early_return", self.nmt.raw_early_return.to_string()),
            ("nmt.critic_pretrain_steps", self.nmt.critic_pretrain_steps.to_string()),
            ("reward.k", self.reward_k.to_string()),
            ("cap.train_pairs", self.caps.train_pairs.to_string()),
            ("cap.mono_sentences", self.caps.mono_sentences.to_string()),
            ("cap.eval_sentences", self.caps.eval_sentences.to_string()),
            ("cap.reward_pairs", self.caps.reward_pairs.to_string()),
            ("cap.examples_per_pair", self.caps.examples_per_pair.to_string()),
        ];
        for (k, v) in pairs {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    /// Hex sha-256 of the canonical form.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// Deterministic per-stage seed derived from the master seed.
    pub fn stage_seed(&self, stage: &str, label: &str) -> u64 {
        Rng::new(self.seed).fork(stage).fork(label).seed()
    }

    /// Checks made before the pipeline may run.
    pub fn validate_for_run(&self) -> Result<(), CliError> {
        if self.profile == Profile::Paper {
            let vals = PAPER_REFERENCE
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(", ");
            return Err(err(format!(
                "profile `paper` records the full-scale reference setup ({vals}) and is not \
                 runnable at desk scale; use profile `desk`"
            )));
        }
        if self.data_dir.as_os_str().is_empty() {
            return Err(err("data_dir is required to run the pipeline"));
        }
        let manifest = self.data_dir.join("manifest.json");
        if !manifest.exists() {
            return Err(err(format!(
                "no corpus bundle at {} (missing manifest.json; generate one with synth-gen)",
                self.data_dir.display()
            )));
        }
        Ok(())
    }
}

pub fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Hex sha-256 of a file's raw bytes.
pub fn file_hash(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| err(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_hash() {
        let a = ExperimentConfig::parse("").unwrap();
        let b = ExperimentConfig::parse("# only a comment\n\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.profile, Profile::Desk);
        assert_eq!(a.nmt.n_critic, 5);
    }

    #[test]
    fn formatting_does_not_change_hash() {
        let a = ExperimentConfig::parse("nmt.lr = 0.5").unwrap();
        let b = ExperimentConfig::parse("nmt.lr=0.50  # same value").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = ExperimentConfig::parse("nmt.lr = 0.25").unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn unknown_and_duplicate_keys_rejected() {
        assert!(ExperimentConfig::parse("nmt.learning_rate = 1").is_err());
        assert!(ExperimentConfig::parse("seed = 1\nseed = 2").is_err());
        assert!(ExperimentConfig::parse("just a line").is_err());
    }

    #[test]
    fn typed_values_are_checked() {
        assert!(ExperimentConfig::parse("seed = seven").is_err());
        assert!(ExperimentConfig::parse("nmt.raw_early_return = yes").is_err());
        assert!(ExperimentConfig::parse("interp.alpha_grid = 0.2,spam").is_err());
        assert!(ExperimentConfig::parse("interp.tau = 1.5").is_err());
    }

    #[test]
    fn paper_profile_parses_but_refuses_to_run() {
        let cfg = ExperimentConfig::parse("profile = paper").unwrap();
        assert_eq!(cfg.profile.reference().len(), 8);
        let msg = cfg.validate_for_run().unwrap_err().to_string();
        assert!(msg.contains("model_dim=512"), "{msg}");
        assert!(msg.contains("layers=5"), "{msg}");
    }

    #[test]
    fn stage_seeds_differ_and_are_stable() {
        let cfg = ExperimentConfig::parse("seed = 11").unwrap();
        assert_eq!(cfg.stage_seed("daae", "lga"), cfg.stage_seed("daae", "lga"));
        assert_ne!(cfg.stage_seed("daae", "lga"), cfg.stage_seed("daae", "lgb"));
        assert_ne!(cfg.stage_seed("daae", "lga"), cfg.stage_seed("nmt", "lga"));
    }
}
