use std::fmt;
use std::hint::black_box;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use super::decode_corpus;
use crate::decoder::{beam_search, DecoderConfig, ExternalLms};
use crate::lm::{TokenId, Vocabulary};
use crate::ngram::{train_kneser_ney, NgramModel};
use crate::sim::{EncoderOutput, FntScorer};
use crate::Result;

/// Trains a KN model on seeded Zipf-distributed text with first-order structure.
///
/// The n-gram count grows roughly linearly with `tokens`.
pub fn synthetic_ngram(vocab: Arc<Vocabulary>, tokens: usize, order: usize, seed: u64) -> Result<NgramModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = 2u32;
    let words = vocab.len() as u32 - first;
    let zipf = Zipf::new(words as f64, 1.1).expect("valid Zipf");
    let mut corpus = Vec::new();
    let mut made = 0;
    while made < tokens {
        let len = rng.random_range(5..=20);
        let mut s = Vec::with_capacity(len);
        let mut prev = 0u32;
        for _ in 0..len {
            let rank = zipf.sample(&mut rng) as u32 - 1;
            let w = (rank + prev.wrapping_mul(2654435761) % words) % words;
            s.push(first + w);
            prev = w;
        }
        made += len;
        corpus.push(s);
    }
    train_kneser_ney(&corpus, vocab, order)
}

/// Query histories: alternately a stored context of the model and
/// `order - 1` random non-special tokens.
pub fn random_histories(model: &NgramModel, count: usize, seed: u64) -> Vec<Vec<TokenId>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = model.vocab().len() as TokenId;
    (0..count)
        .map(|i| {
            if i % 2 == 0 {
                model.context_tokens(rng.random_range(0..model.num_nodes()) as _)
            } else {
                (1..model.order()).map(|_| rng.random_range(2..v)).collect()
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopRBench {
    pub ngrams: usize,
    pub r: usize,
    pub queries: usize,
    pub mean_ns: f64,
}

impl fmt::Display for TopRBench {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "BENCH_TOPR ngrams={} r={} queries={} mean_ns={:.1}",
            self.ngrams, self.r, self.queries, self.mean_ns
        )
    }
}

/// Uncached top_r latency, best of `repeats` passes over `histories`.
pub fn bench_topr(model: &NgramModel, histories: &[Vec<TokenId>], r: usize, repeats: usize) -> Result<TopRBench> {
    Ok(bench_topr_interleaved(&[(model, histories)], r, repeats)?.remove(0))
}

/// Like [`bench_topr`] for several models, with their passes alternated so
/// that slow drift of the machine affects all of them alike.
pub fn bench_topr_interleaved(
    models: &[(&NgramModel, &[Vec<TokenId>])],
    r: usize,
    repeats: usize,
) -> Result<Vec<TopRBench>> {
    let mut best = vec![Duration::MAX; models.len()];
    for _ in 0..repeats.max(1) {
        for (b, (model, histories)) in best.iter_mut().zip(models) {
            let start = Instant::now();
            for h in *histories {
                black_box(model.top_r(black_box(h), r)?);
            }
            *b = (*b).min(start.elapsed());
        }
    }
    Ok(models
        .iter()
        .zip(best)
        .map(|((model, histories), b)| TopRBench {
            ngrams: model.num_ngrams(),
            r,
            queries: histories.len(),
            mean_ns: b.as_nanos() as f64 / histories.len().max(1) as f64,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slowdown {
    pub base_ms: f64,
    pub fused_ms: f64,
}

impl Slowdown {
    pub fn ratio(&self) -> f64 {
        self.fused_ms / self.base_ms - 1.0
    }
}

impl fmt::Display for Slowdown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "BENCH_DECODE base_ms={:.3} fused_ms={:.3} slowdown={:.4}",
            self.base_ms,
            self.fused_ms,
            self.ratio()
        )
    }
}

/// Single-threaded decode time of `fused` relative to `base`.
///
/// After one untimed warm-up pass of each configuration, every utterance is
/// decoded `repeats` times with both configurations back to back; the sum of
/// per-utterance minima is reported, which keeps scheduler noise out.
pub fn decode_slowdown(
    encoders: &[&EncoderOutput],
    scorer: &FntScorer,
    base: &DecoderConfig,
    fused: &DecoderConfig,
    lms: &ExternalLms,
    repeats: usize,
) -> Result<Slowdown> {
    decode_corpus(encoders, scorer, base, lms, false)?;
    decode_corpus(encoders, scorer, fused, lms, false)?;
    let time = |enc: &EncoderOutput, config: &DecoderConfig| -> Result<Duration> {
        let start = Instant::now();
        black_box(beam_search(enc, scorer, config, lms)?);
        Ok(start.elapsed())
    };
    let (mut base_total, mut fused_total) = (Duration::ZERO, Duration::ZERO);
    for enc in encoders {
        let (mut b, mut f) = (Duration::MAX, Duration::MAX);
        for _ in 0..repeats.max(1) {
            b = b.min(time(enc, base)?);
            f = f.min(time(enc, fused)?);
        }
        base_total += b;
        fused_total += f;
    }
    Ok(Slowdown {
        base_ms: base_total.as_secs_f64() * 1e3,
        fused_ms: fused_total.as_secs_f64() * 1e3,
    })
}
