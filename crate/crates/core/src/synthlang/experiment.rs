//! Bundle generation: corpora, splits and the manifest.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::engine::rng::{label_hash, mix64};
use crate::engine::Rng;
use crate::textpipe::{save_lines, Sentence};

use super::family::{derive_language, LanguageSpec};
use super::grammar::Grammar;
use super::SynthError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleSpec {
    pub family_seed: u64,
    /// Pivot language code; every parallel pair targets the pivot.
    pub pivot: String,
    /// Training languages as (code, divergence).
    pub languages: Vec<(String, f64)>,
    /// Zero-shot holdouts, evaluated but never trained on.
    pub holdouts: Vec<(String, f64)>,
    pub train_size: usize,
    pub valid_size: usize,
    pub test_size: usize,
    /// Monolingual sentences per language for autoencoder training.
    pub mono_size: usize,
}

impl Default for BundleSpec {
    fn default() -> Self {
        BundleSpec {
            family_seed: 2024,
            pivot: "piv".into(),
            languages: vec![
                ("lga".into(), 0.15),
                ("lgb".into(), 0.30),
                ("lgc".into(), 0.45),
            ],
            holdouts: vec![("hld".into(), 0.25)],
            train_size: 5000,
            valid_size: 500,
            test_size: 500,
            mono_size: 2000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LanguageEntry {
    pub code: String,
    pub divergence: f64,
    pub corpus_seed: u64,
    pub holdout: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub family_seed: u64,
    pub pivot: String,
    pub languages: Vec<LanguageEntry>,
    pub train_size: usize,
    pub valid_size: usize,
    pub test_size: usize,
    pub mono_size: usize,
    pub grammar_types: usize,
    pub files: Vec<String>,
}

impl ExperimentManifest {
    pub fn load(path: &Path) -> Result<Self, SynthError> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), SynthError> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Sample `n` pairwise-distinct sentences.
fn distinct_corpus(grammar: &Grammar, n: usize, seed: u64) -> Result<Vec<Sentence>, SynthError> {
    if n == 0 {
        return Err(SynthError::EmptyRequest);
    }
    let mut rng = Rng::new(seed).fork("distinct-corpus");
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        attempts += 1;
        if attempts > 200 * n {
            return Err(SynthError::BadSpec(format!(
                "grammar cannot produce {n} distinct sentences"
            )));
        }
        let s = grammar.sample_sentence(&mut rng);
        if seen.insert(s.surface()) {
            out.push(s);
        }
    }
    Ok(out)
}

fn corpus_seed(family_seed: u64, code: &str) -> u64 {
    mix64(family_seed ^ label_hash(code).rotate_left(23))
}

/// Generate all corpora and the manifest under `out_dir`.
///
/// Files written, one sentence per line:
///   `<lang>-<pivot>.<split>.<lang|pivot>` for each training pair and split,
///   `<hold>-<pivot>.test.<hold|pivot>` for each holdout,
///   `mono.<lang>` per-language monolingual data, and `manifest.json`.
pub fn make_experiment(
    spec: &BundleSpec,
    out_dir: &Path,
) -> Result<ExperimentManifest, SynthError> {
    if spec.languages.len() < 2 {
        return Err(SynthError::BadSpec("need at least 2 training languages".into()));
    }
    let mut codes: BTreeSet<&str> = BTreeSet::new();
    codes.insert(&spec.pivot);
    for (code, _) in spec.languages.iter().chain(&spec.holdouts) {
        if !codes.insert(code) {
            return Err(SynthError::BadSpec(format!("language code `{code}` reused")));
        }
    }
    fs::create_dir_all(out_dir)?;

    let grammar = Grammar::standard(spec.family_seed);
    let mut files: Vec<String> = Vec::new();
    let mut languages: Vec<LanguageEntry> = Vec::new();

    let mut write = |name: String, sentences: &[Sentence]| -> Result<(), SynthError> {
        let path: PathBuf = out_dir.join(&name);
        save_lines(&path, sentences)?;
        files.push(name);
        Ok(())
    };

    let splits = [
        ("train", 0, spec.train_size),
        ("valid", spec.train_size, spec.valid_size),
        ("test", spec.train_size + spec.valid_size, spec.test_size),
    ];
    let total = spec.train_size + spec.valid_size + spec.test_size;

    for (code, divergence, holdout) in spec
        .languages
        .iter()
        .map(|(c, d)| (c, *d, false))
        .chain(spec.holdouts.iter().map(|(c, d)| (c, *d, true)))
    {
        let seed = corpus_seed(spec.family_seed, code);
        let lang_spec =
            LanguageSpec { code: code.clone(), divergence, seed: spec.family_seed };
        let base = distinct_corpus(&grammar, total, seed)?;
        let derived = derive_language(&base, &lang_spec)?;
        for (split, offset, len) in splits {
            if holdout && split != "test" {
                continue;
            }
            let pair = format!("{code}-{}", spec.pivot);
            write(format!("{pair}.{split}.{code}"), &derived[offset..offset + len])?;
            write(format!("{pair}.{split}.{}", spec.pivot), &base[offset..offset + len])?;
        }
        languages.push(LanguageEntry {
            code: code.clone(),
            divergence,
            corpus_seed: seed,
            holdout,
        });
        if !holdout {
            let mono_seed = mix64(seed ^ 0x6d6f_6e6f);
            let mono = distinct_corpus(&grammar, spec.mono_size, mono_seed)?;
            let mono = derive_language(&mono, &lang_spec)?;
            write(format!("mono.{code}"), &mono)?;
        }
    }

    // Pivot monolingual data from its own base draw (divergence 0).
    let pivot_seed = corpus_seed(spec.family_seed, &spec.pivot);
    let mono = distinct_corpus(&grammar, spec.mono_size, mix64(pivot_seed ^ 0x6d6f_6e6f))?;
    write(format!("mono.{}", spec.pivot), &mono)?;
    languages.push(LanguageEntry {
        code: spec.pivot.clone(),
        divergence: 0.0,
        corpus_seed: pivot_seed,
        holdout: false,
    });

    let manifest = ExperimentManifest {
        family_seed: spec.family_seed,
        pivot: spec.pivot.clone(),
        languages,
        train_size: spec.train_size,
        valid_size: spec.valid_size,
        test_size: spec.test_size,
        mono_size: spec.mono_size,
        grammar_types: grammar.type_count(),
        files,
    };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> BundleSpec {
        BundleSpec {
            train_size: 60,
            valid_size: 10,
            test_size: 10,
            mono_size: 20,
            ..BundleSpec::default()
        }
    }

    #[test]
    fn bundle_layout_and_combinatorics() {
        let dir = tempfile::tempdir().unwrap();
        let m = make_experiment(&small_spec(), dir.path()).unwrap();
        // 3 training pairs x 3 splits x 2 sides + 1 holdout pair x 1 split x 2
        // sides + 4 mono files.
        assert_eq!(m.files.len(), 3 * 3 * 2 + 2 + 4);
        assert!(dir.path().join("lga-piv.train.lga").exists());
        assert!(dir.path().join("hld-piv.test.hld").exists());
        assert!(!dir.path().join("hld-piv.train.hld").exists());
        assert!(dir.path().join("mono.piv").exists());
        assert_eq!(m.languages.len(), 5);
    }

    #[test]
    fn rerun_reproduces_bundle_byte_for_byte() {
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let m1 = make_experiment(&small_spec(), d1.path()).unwrap();
        let m2 = make_experiment(&small_spec(), d2.path()).unwrap();
        assert_eq!(m1.files, m2.files);
        for f in &m1.files {
            let a = fs::read(d1.path().join(f)).unwrap();
            let b = fs::read(d2.path().join(f)).unwrap();
            assert_eq!(a, b, "file {f} differs across reruns");
        }
    }

    #[test]
    fn overlapping_holdout_rejected() {
        let mut spec = small_spec();
        spec.holdouts = vec![("lga".into(), 0.2)];
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            make_experiment(&spec, dir.path()),
            Err(SynthError::BadSpec(_))
        ));
    }

    #[test]
    fn parallel_files_stay_aligned() {
        let dir = tempfile::tempdir().unwrap();
        make_experiment(&small_spec(), dir.path()).unwrap();
        for split in ["train", "valid", "test"] {
            let src =
                fs::read_to_string(dir.path().join(format!("lgb-piv.{split}.lgb"))).unwrap();
            let tgt =
                fs::read_to_string(dir.path().join(format!("lgb-piv.{split}.piv"))).unwrap();
            assert_eq!(src.lines().count(), tgt.lines().count());
            for (s, t) in src.lines().zip(tgt.lines()) {
                assert_eq!(
                    s.split_whitespace().count(),
                    t.split_whitespace().count(),
                    "word-aligned by construction"
                );
            }
        }
    }

    #[test]
    fn sentence_length_cap_exported() {
        assert!(super::super::grammar::TEMPLATE_MAX_LEN >= 7);
    }
}
