//! Probabilistic template grammar over a CV-syllable lexicon.

use crate::engine::Rng;
use crate::textpipe::Sentence;

use super::SynthError;

pub const CONSONANTS: [char; 12] = ['k', 'r', 'm', 't', 'n', 's', 'p', 'g', 'd', 'b', 'l', 'h'];
pub const VOWELS: [char; 5] = ['a', 'e', 'i', 'o', 'u'];

/// Longest sentence any template can produce.
pub const TEMPLATE_MAX_LEN: usize = 7;

#[derive(Debug, Clone, Copy)]
enum Slot {
    Det,
    Noun,
    Verb,
    Adj,
    Adv,
    Marker,
}

/// Sentence templates, 4 to 7 tokens each.
const TEMPLATES: [&[Slot]; 5] = [
    &[Slot::Det, Slot::Noun, Slot::Verb, Slot::Adv],
    &[Slot::Det, Slot::Noun, Slot::Verb, Slot::Det, Slot::Noun],
    &[Slot::Det, Slot::Adj, Slot::Noun, Slot::Verb, Slot::Det, Slot::Noun],
    &[Slot::Det, Slot::Noun, Slot::Marker, Slot::Verb, Slot::Det, Slot::Adj, Slot::Noun],
    &[Slot::Noun, Slot::Marker, Slot::Verb, Slot::Adv],
];

#[derive(Debug, Clone)]
pub struct Grammar {
    pub nouns: Vec<String>,
    pub verbs: Vec<String>,
    pub adjs: Vec<String>,
    pub advs: Vec<String>,
    pub dets: Vec<String>,
    pub markers: Vec<String>,
}

impl Grammar {
    /// Deterministic inventory: two-syllable content words drawn without
    /// replacement from the CV syllabary, one-syllable function words.
    pub fn standard(seed: u64) -> Grammar {
        let mut rng = Rng::new(seed).fork("grammar");
        let mut syllables: Vec<String> = CONSONANTS
            .iter()
            .flat_map(|&c| VOWELS.iter().map(move |&v| format!("{c}{v}")))
            .collect();
        rng.shuffle(&mut syllables);

        let mut pairs: Vec<(usize, usize)> = (0..syllables.len())
            .flat_map(|i| (0..syllables.len()).map(move |j| (i, j)))
            .filter(|(i, j)| i != j)
            .collect();
        rng.shuffle(&mut pairs);
        let mut next = pairs.into_iter();
        let mut take = |n: usize| -> Vec<String> {
            (0..n)
                .map(|_| {
                    let (i, j) = next.next().expect("syllable pair pool exhausted");
                    format!("{}{}", syllables[i], syllables[j])
                })
                .collect()
        };

        let nouns = take(60);
        let verbs = take(30);
        let adjs = take(20);
        let advs = take(10);
        let dets = syllables[..2].to_vec();
        let markers = syllables[2..4].to_vec();
        Grammar { nouns, verbs, adjs, advs, dets, markers }
    }

    pub fn type_count(&self) -> usize {
        self.nouns.len()
            + self.verbs.len()
            + self.adjs.len()
            + self.advs.len()
            + self.dets.len()
            + self.markers.len()
    }

    pub fn sample_sentence(&self, rng: &mut Rng) -> Sentence {
        let template = TEMPLATES[rng.below(TEMPLATES.len())];
        let tokens = template
            .iter()
            .map(|slot| {
                let list = match slot {
                    Slot::Det => &self.dets,
                    Slot::Noun => &self.nouns,
                    Slot::Verb => &self.verbs,
                    Slot::Adj => &self.adjs,
                    Slot::Adv => &self.advs,
                    Slot::Marker => &self.markers,
                };
                list[rng.below(list.len())].clone()
            })
            .collect();
        Sentence::from_tokens(tokens, "base")
    }
}

/// Generate `n` sentences from the grammar under a fixed seed.
pub fn gen_base_corpus(grammar: &Grammar, n: usize, seed: u64) -> Result<Vec<Sentence>, SynthError> {
    if n == 0 {
        return Err(SynthError::EmptyRequest);
    }
    let mut rng = Rng::new(seed).fork("base-corpus");
    Ok((0..n).map(|_| grammar.sample_sentence(&mut rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn n_zero_rejected() {
        let g = Grammar::standard(1);
        assert!(matches!(gen_base_corpus(&g, 0, 1), Err(SynthError::EmptyRequest)));
    }

    #[test]
    fn same_seed_same_corpus() {
        let g = Grammar::standard(5);
        let a = gen_base_corpus(&g, 100, 9).unwrap();
        let b = gen_base_corpus(&g, 100, 9).unwrap();
        assert_eq!(a, b);
        let c = gen_base_corpus(&g, 100, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn type_budget_holds_at_ten_thousand_sentences() {
        let g = Grammar::standard(2);
        assert!(g.type_count() <= 200);
        let corpus = gen_base_corpus(&g, 10_000, 3).unwrap();
        let types: BTreeSet<&String> =
            corpus.iter().flat_map(|s| s.tokens.iter()).collect();
        assert!(types.len() <= 200, "saw {} types", types.len());
    }

    #[test]
    fn sentence_lengths_in_template_range() {
        let g = Grammar::standard(4);
        for s in gen_base_corpus(&g, 500, 8).unwrap() {
            assert!((4..=7).contains(&s.len()), "length {}", s.len());
        }
    }

    #[test]
    fn inventory_words_are_distinct() {
        let g = Grammar::standard(7);
        let all: Vec<&String> = g
            .nouns
            .iter()
            .chain(&g.verbs)
            .chain(&g.adjs)
            .chain(&g.advs)
            .chain(&g.dets)
            .chain(&g.markers)
            .collect();
        let set: BTreeSet<&&String> = all.iter().collect();
        assert_eq!(set.len(), all.len());
    }
}
