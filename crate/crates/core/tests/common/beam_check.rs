//! Randomized beam search versus exhaustive enumeration.

use std::sync::Arc;

use fnt_core::decoder::{beam_search, DecoderConfig, ExternalLms};
use fnt_core::fusion::{FusionConfig, FusionMethod};
use fnt_core::lm::ExternalLm;
use fnt_core::sim::FntScorer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::exhaustive::{External, Problem};
use super::fixtures;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attachment {
    None,
    Cli,
    Clm,
}

pub struct Outcome {
    pub paths: usize,
    pub beam_score: f64,
    pub oracle_score: f64,
    pub same_tokens: bool,
}

impl Outcome {
    pub fn ok(&self, tol: f64) -> bool {
        self.same_tokens && (self.beam_score - self.oracle_score).abs() <= tol
    }
}

const PATH_BOUND: f64 = 150_000.0;

/// Runs one random instance with a beam wide enough never to prune.
pub fn run(seed: u64, attach: Attachment) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (words, frames, max_symbols) = loop {
        let words = rng.random_range(2..=3);
        let frames = rng.random_range(1..=4);
        let max_symbols = rng.random_range(1..=3);
        let width = if attach == Attachment::Clm { 2 * words } else { words } as f64;
        let per_frame: f64 = (0..=max_symbols).map(|k| width.powi(k as i32)).sum();
        if per_frame.powi(frames as i32) <= PATH_BOUND {
            break (words, frames, max_symbols);
        }
    };
    let vocab = fixtures::vocab(words);
    let pred_order = rng.random_range(2..=3);
    let predictor = Arc::new(fixtures::kn(&mut rng, &vocab, pred_order));
    let enc = fixtures::encoder(&mut rng, vocab.len(), frames);
    let gamma = rng.random_range(0.0..3.0);
    let alpha = rng.random_range(0.05..0.95);
    let rank_r = rng.random_range(1..=vocab.len() + 1);
    let rank_rprime = rng.random_range(1..=vocab.len());
    let lexical = Arc::new(fixtures::kn(&mut rng, &vocab, 2));
    let (classes, clm_order) = (rng.random_range(1..=2), rng.random_range(2..=3));
    let clm = Arc::new(fixtures::clm(&mut rng, &vocab, classes, clm_order));

    let mut fusion = match attach {
        Attachment::None => FusionConfig::default(),
        Attachment::Cli => FusionConfig::new(FusionMethod::Cli, alpha),
        Attachment::Clm => FusionConfig::new(FusionMethod::Clm, alpha),
    };
    fusion.rank_r = rank_r;
    let config = DecoderConfig {
        beam: 1 << 20,
        nbest: 1,
        fusion,
        rank_rprime,
        max_symbols,
        ..Default::default()
    };
    let lms = ExternalLms {
        lexical: Some(lexical.clone() as Arc<dyn ExternalLm>),
        clm: Some(clm.clone()),
    };
    let scorer = FntScorer::new(predictor.clone(), gamma);
    let out = beam_search(&enc, &scorer, &config, &lms).unwrap();

    let external = match attach {
        Attachment::None => External::None,
        Attachment::Cli => External::Cli(&lexical, alpha, rank_r),
        Attachment::Clm => External::Clm(&clm, alpha, rank_r, rank_rprime),
    };
    let problem = Problem {
        enc: &enc,
        predictor: &predictor,
        gamma,
        max_symbols,
        external,
    };
    let (tokens, score, paths) = problem.solve();
    let best = &out.nbest[0];
    Outcome {
        paths,
        beam_score: best.log_score,
        oracle_score: score,
        same_tokens: best.tokens == tokens,
    }
}
