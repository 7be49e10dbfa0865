//! Bridges between in-memory models and the versioned checkpoint
//! container. Each file carries the parameters, enough metadata to rebuild
//! the surrounding model (vocabulary, dimensions), the configuration
//! fingerprint it was produced under and a content-derived checkpoint id.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use daasi_core::daae::DaaeModel;
use daasi_core::engine::checkpoint::Checkpoint;
use daasi_core::engine::ParameterSet;
use daasi_core::nmt::{Critic, Generator};
use daasi_core::textpipe::Vocabulary;

use crate::config::hex;
use crate::error::{CliError, Stage};

pub const KIND_DAAE: &str = "daae";
pub const KIND_GENERATOR: &str = "generator";
pub const KIND_CRITIC: &str = "critic";

/// Short content id over the parameter tensors: name, shape and exact bits.
pub fn param_id(params: &ParameterSet) -> String {
    let mut h = Sha256::new();
    for (name, t) in params.iter() {
        h.update(name.as_bytes());
        h.update([0u8]);
        for &d in t.shape() {
            h.update((d as u64).to_le_bytes());
        }
        for &v in t.values() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex(&h.finalize())[..12].to_string()
}

fn io_err(stage: Stage, path: &Path) -> impl Fn(daasi_core::EngineError) -> CliError + '_ {
    move |e| CliError::new(stage, format!("{}: {e}", path.display()))
}

/// Common descriptive fields stamped on every checkpoint.
pub struct MetaFields<'a> {
    pub config_hash: &'a str,
    pub stage: &'a str,
    /// `corpus` names the data the model saw, e.g. `mono.lga[..600]`.
    pub corpus: &'a str,
    pub extra: &'a [(&'a str, String)],
}

fn base_checkpoint(params: ParameterSet, kind: &str, m: &MetaFields) -> Checkpoint {
    let id = param_id(&params);
    let mut ckpt = Checkpoint::new(params)
        .with_meta("kind", kind)
        .with_meta("id", &id)
        .with_meta("config", m.config_hash)
        .with_meta("stage", m.stage)
        .with_meta("corpus", m.corpus);
    for (k, v) in m.extra {
        ckpt = ckpt.with_meta(k, v);
    }
    ckpt
}

fn load_kind(
    path: &Path,
    kind: &str,
    expect_config: Option<&str>,
    stage: Stage,
) -> Result<Checkpoint, CliError> {
    let ckpt = Checkpoint::load(path).map_err(io_err(stage, path))?;
    let found = ckpt.meta.get("kind").map(String::as_str).unwrap_or("?");
    if found != kind {
        return Err(CliError::new(
            stage,
            format!("{}: expected a {kind} checkpoint, found `{found}`", path.display()),
        ));
    }
    if let Some(expect) = expect_config {
        let stored = ckpt.meta.get("config").map(String::as_str).unwrap_or("");
        if stored != expect {
            return Err(CliError::new(
                stage,
                format!(
                    "{}: config fingerprint mismatch (checkpoint {}.., current {}..); \
                     refusing to resume under a different configuration",
                    path.display(),
                    &stored.get(..12).unwrap_or(stored).to_string(),
                    &expect[..12.min(expect.len())]
                ),
            ));
        }
    }
    Ok(ckpt)
}

fn meta_usize(ckpt: &Checkpoint, key: &str, path: &Path, stage: Stage) -> Result<usize, CliError> {
    ckpt.meta
        .get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| {
            CliError::new(stage, format!("{}: missing or bad `{key}` field", path.display()))
        })
}

fn meta_vocab(ckpt: &Checkpoint, path: &Path, stage: Stage) -> Result<Vocabulary, CliError> {
    let tokens = ckpt
        .meta
        .get("vocab")
        .ok_or_else(|| CliError::new(stage, format!("{}: missing vocabulary", path.display())))?;
    let n_tags = meta_usize(ckpt, "n_tags", path, stage)?;
    Vocabulary::from_parts(tokens.split(' ').map(str::to_string).collect(), n_tags)
        .map_err(|e| CliError::new(stage, format!("{}: {e}", path.display())))
}

pub fn save_daae(model: &DaaeModel, path: &Path, m: &MetaFields) -> Result<String, CliError> {
    let (tokens, n_tags) = model.vocab.to_parts();
    let mut extra = vec![
        ("vocab", tokens),
        ("n_tags", n_tags.to_string()),
        ("latent_dim", model.latent_dim.to_string()),
        ("emb_dim", model.emb_dim.to_string()),
    ];
    extra.extend(m.extra.iter().cloned());
    let fields = MetaFields { extra: &extra, ..*m };
    let ckpt = base_checkpoint(model.params.clone(), KIND_DAAE, &fields);
    let id = ckpt.meta["id"].clone();
    ckpt.save(path).map_err(io_err(Stage::Daae, path))?;
    Ok(id)
}

pub fn load_daae(
    path: &Path,
    expect_config: Option<&str>,
) -> Result<(DaaeModel, String), CliError> {
    let ckpt = load_kind(path, KIND_DAAE, expect_config, Stage::Daae)?;
    let vocab = meta_vocab(&ckpt, path, Stage::Daae)?;
    let model = DaaeModel {
        params: ckpt.params.clone(),
        vocab,
        latent_dim: meta_usize(&ckpt, "latent_dim", path, Stage::Daae)?,
        emb_dim: meta_usize(&ckpt, "emb_dim", path, Stage::Daae)?,
    };
    Ok((model, ckpt.meta["id"].clone()))
}

pub fn save_generator(gen: &Generator, path: &Path, m: &MetaFields) -> Result<String, CliError> {
    let (tokens, n_tags) = gen.vocab.to_parts();
    let mut extra = vec![
        ("vocab", tokens),
        ("n_tags", n_tags.to_string()),
        ("emb_dim", gen.emb_dim.to_string()),
        ("hidden", gen.hidden.to_string()),
    ];
    extra.extend(m.extra.iter().cloned());
    let fields = MetaFields { extra: &extra, ..*m };
    let ckpt = base_checkpoint(gen.params.clone(), KIND_GENERATOR, &fields);
    let id = ckpt.meta["id"].clone();
    ckpt.save(path).map_err(io_err(Stage::Pretrain, path))?;
    Ok(id)
}

pub fn load_generator(
    path: &Path,
    expect_config: Option<&str>,
) -> Result<(Generator, String), CliError> {
    let ckpt = load_kind(path, KIND_GENERATOR, expect_config, Stage::Pretrain)?;
    let vocab = meta_vocab(&ckpt, path, Stage::Pretrain)?;
    let gen = Generator {
        params: ckpt.params.clone(),
        vocab,
        emb_dim: meta_usize(&ckpt, "emb_dim", path, Stage::Pretrain)?,
        hidden: meta_usize(&ckpt, "hidden", path, Stage::Pretrain)?,
    };
    Ok((gen, ckpt.meta["id"].clone()))
}

pub fn save_critic(critic: &Critic, path: &Path, m: &MetaFields) -> Result<String, CliError> {
    let mut extra = vec![
        ("emb_dim", critic.emb_dim.to_string()),
        ("filters", critic.filters.to_string()),
    ];
    extra.extend(m.extra.iter().cloned());
    let fields = MetaFields { extra: &extra, ..*m };
    let ckpt = base_checkpoint(critic.params.clone(), KIND_CRITIC, &fields);
    let id = ckpt.meta["id"].clone();
    ckpt.save(path).map_err(io_err(Stage::Adversarial, path))?;
    Ok(id)
}

pub fn load_critic(
    path: &Path,
    expect_config: Option<&str>,
) -> Result<(Critic, String), CliError> {
    let ckpt = load_kind(path, KIND_CRITIC, expect_config, Stage::Adversarial)?;
    let critic = Critic {
        params: ckpt.params.clone(),
        emb_dim: meta_usize(&ckpt, "emb_dim", path, Stage::Adversarial)?,
        filters: meta_usize(&ckpt, "filters", path, Stage::Adversarial)?,
    };
    Ok((critic, ckpt.meta["id"].clone()))
}

/// Read one metadata field from any checkpoint kind.
pub fn peek_meta(path: &Path, key: &str) -> Result<Option<String>, CliError> {
    let ckpt = Checkpoint::load(path).map_err(io_err(Stage::Report, path))?;
    Ok(ckpt.meta.get(key).cloned())
}

/// `Some(path)` if the file exists, for last-checkpoint diagnostics.
pub fn existing(path: &Path) -> Option<PathBuf> {
    path.exists().then(|| path.to_path_buf())
}
