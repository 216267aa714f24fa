//! Class LM prefix probabilities from the flat entry lists.
//!
//! A word sequence is split into segments: single words predicted by the
//! tagged n-gram, complete class entries, and a trailing partial entry. No
//! prefix tree is involved.

use fnt_core::classlm::{ClassDefinitions, ClassModel};
use fnt_core::lm::TokenId;
use fnt_core::ngram::NgramModel;

/// Word-piece entries of one class with their weights.
type Entries = Vec<(Vec<TokenId>, f64)>;

pub struct FlatClm<'a> {
    ngram: &'a NgramModel,
    bos: TokenId,
    classes: Vec<(TokenId, Entries)>,
}

impl<'a> FlatClm<'a> {
    pub fn new(clm: &'a ClassModel, defs: &ClassDefinitions) -> Self {
        let words = clm.words();
        let tagged = clm.tagged_vocab();
        let classes = defs
            .iter()
            .filter_map(|(tag, entries)| {
                let id = tagged.get(tag)?;
                let entries = entries
                    .iter()
                    .map(|(pieces, w)| (pieces.iter().map(|p| words.id(p).unwrap()).collect(), *w))
                    .collect();
                Some((id, entries))
            })
            .collect();
        FlatClm {
            ngram: clm.ngram().model(),
            bos: words.bos().unwrap(),
            classes,
        }
    }

    fn p(&self, w: TokenId, history: &[TokenId]) -> f64 {
        self.ngram.logprob(w, history).unwrap().exp()
    }

    /// Total probability of all derivations whose output starts with `words`.
    pub fn prefix_mass(&self, words: &[TokenId]) -> f64 {
        self.mass(&[self.bos], words)
    }

    fn mass(&self, history: &[TokenId], rest: &[TokenId]) -> f64 {
        if rest.is_empty() {
            return 1.0;
        }
        let extend = |t: TokenId| {
            let mut h = history.to_vec();
            h.push(t);
            h
        };
        let mut total = self.p(rest[0], history) * self.mass(&extend(rest[0]), &rest[1..]);
        for (tag, entries) in &self.classes {
            let pc = self.p(*tag, history);
            let norm: f64 = entries.iter().map(|e| e.1).sum();
            let mut through = 0.0;
            for (entry, weight) in entries {
                if entry.len() < rest.len() && rest.starts_with(entry) {
                    total += pc * weight / norm * self.mass(&extend(*tag), &rest[entry.len()..]);
                }
                if entry.starts_with(rest) {
                    through += weight;
                }
            }
            total += pc * through / norm;
        }
        total
    }
}
