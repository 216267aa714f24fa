//! Corpus decoding, WER scoring, weight sweeps and latency benchmarks.

mod bench;
mod sweep;
mod wer;

use std::fmt;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::classlm::ClassModel;
use crate::decoder::{beam_search, DecodeOutput, DecodeStats, DecoderConfig, ExternalLms};
use crate::lm::{ExternalLm, TokenId, Vocabulary};
use crate::ngram::{train_kneser_ney, CachedNgram};
use crate::sim::{EncoderOutput, FntScorer, Reference, Scenario};
use crate::{Error, Result};

pub use bench::{
    bench_topr, bench_topr_interleaved, decode_slowdown, random_histories, synthetic_ngram, Slowdown, TopRBench,
};
pub use sweep::{sweep, SweepCell, SweepCorpus, SweepRow, SweepTable, ALPHA_GRID, SF_MAX_ALPHA};
pub use wer::{align, counts, flagged_errors, wer, AlignOp, EditCounts};

/// The models a scenario needs: predictor, lexical adaptation LM and class LM.
#[derive(Clone)]
pub struct Models {
    pub predictor: Arc<CachedNgram>,
    pub lexical: Arc<CachedNgram>,
    pub clm: Arc<ClassModel>,
}

/// n-gram orders used by [`Models::train`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Orders {
    pub predictor: usize,
    pub lexical: usize,
    pub clm: usize,
}

impl Default for Orders {
    fn default() -> Self {
        Orders {
            predictor: 3,
            lexical: 4,
            clm: 4,
        }
    }
}

impl Models {
    pub fn train(scenario: &Scenario, orders: Orders) -> Result<Self> {
        let vocab = scenario.vocab.clone();
        let predictor = train_kneser_ney(&scenario.background, vocab.clone(), orders.predictor)?;
        let lexical = train_kneser_ney(&scenario.adaptation, vocab.clone(), orders.lexical)?;
        let clm = ClassModel::train(vocab, &scenario.tagged, &scenario.classes, orders.clm)?;
        Ok(Models {
            predictor: Arc::new(CachedNgram::new(Arc::new(predictor))),
            lexical: Arc::new(CachedNgram::new(Arc::new(lexical))),
            clm: Arc::new(clm),
        })
    }

    pub fn scorer(&self, gamma: f64) -> FntScorer {
        FntScorer::new(self.predictor.clone() as Arc<dyn ExternalLm>, gamma)
    }

    pub fn external(&self) -> ExternalLms {
        ExternalLms {
            lexical: Some(self.lexical.clone() as Arc<dyn ExternalLm>),
            clm: Some(self.clm.clone()),
        }
    }

    /// Drops memoized n-gram queries so timings start cold.
    pub fn clear_caches(&self) {
        self.predictor.clear();
        self.lexical.clear();
        self.clm.ngram().clear();
    }
}

#[derive(Debug, Clone)]
pub struct Decoded {
    pub output: DecodeOutput,
    pub elapsed: Duration,
}

impl Decoded {
    pub fn best(&self) -> &[TokenId] {
        self.output.nbest.first().map(|h| h.tokens.as_slice()).unwrap_or(&[])
    }
}

/// Decodes every utterance; results keep the input order.
pub fn decode_corpus(
    encoders: &[&EncoderOutput],
    scorer: &FntScorer,
    config: &DecoderConfig,
    lms: &ExternalLms,
    parallel: bool,
) -> Result<Vec<Decoded>> {
    let one = |enc: &&EncoderOutput| {
        let start = Instant::now();
        let output = beam_search(enc, scorer, config, lms)?;
        Ok(Decoded {
            output,
            elapsed: start.elapsed(),
        })
    };
    if parallel {
        encoders.par_iter().map(one).collect()
    } else {
        encoders.iter().map(one).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceScore {
    pub id: String,
    pub counts: EditCounts,
    pub entity_words: usize,
    pub entity_errors: usize,
}

/// Corpus-level scores of one decoding configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub name: String,
    pub utterances: Vec<UtteranceScore>,
    pub totals: EditCounts,
    pub wer: f64,
    pub entity_words: usize,
    pub entity_errors: usize,
    pub entity_error_rate: f64,
    pub mean_decode_ms: f64,
    pub mean_augmented_width: f64,
    pub expansions_per_frame: f64,
    pub exhausted: usize,
    /// Baseline name and WERR against it.
    pub werr: Option<(String, f64)>,
}

impl EvalReport {
    /// Scores word-level hypotheses, one per reference in the same order.
    /// Decoder statistics are left at zero.
    pub fn from_words(name: &str, refs: &[Reference], hyps: &[Vec<String>], vocab: &Vocabulary) -> Result<Self> {
        if refs.len() != hyps.len() {
            return Err(Error::InvalidArgument(format!(
                "{} references for {} hypotheses",
                refs.len(),
                hyps.len()
            )));
        }
        let mut utterances = Vec::with_capacity(refs.len());
        let mut totals = EditCounts::default();
        let (mut entity_words, mut entity_errors) = (0, 0);
        for (r, hyp_words) in refs.iter().zip(hyps) {
            let ref_words = vocab.detokenize(&r.tokens);
            if ref_words.is_empty() {
                return Err(Error::InvalidArgument(format!("empty reference for {}", r.id)));
            }
            let ops = align(&ref_words, hyp_words);
            let c = counts(&ops);
            let (ew, ee) = flagged_errors(&ops, &r.entity_words);
            totals += c;
            entity_words += ew;
            entity_errors += ee;
            utterances.push(UtteranceScore {
                id: r.id.clone(),
                counts: c,
                entity_words: ew,
                entity_errors: ee,
            });
        }
        Ok(EvalReport {
            name: name.to_string(),
            utterances,
            wer: totals.wer(),
            totals,
            entity_words,
            entity_errors,
            entity_error_rate: if entity_words == 0 {
                0.0
            } else {
                entity_errors as f64 / entity_words as f64
            },
            mean_decode_ms: 0.0,
            mean_augmented_width: 0.0,
            expansions_per_frame: 0.0,
            exhausted: 0,
            werr: None,
        })
    }

    pub fn new(name: &str, refs: &[Reference], decoded: &[Decoded], vocab: &Vocabulary) -> Result<Self> {
        let hyps: Vec<Vec<String>> = decoded.iter().map(|d| vocab.detokenize(d.best())).collect();
        let mut report = Self::from_words(name, refs, &hyps, vocab)?;
        let mut stats = DecodeStats::default();
        let mut elapsed = Duration::ZERO;
        for d in decoded {
            stats.absorb(&d.output.stats);
            report.exhausted += usize::from(d.output.stats.exhausted);
            elapsed += d.elapsed;
        }
        report.mean_decode_ms = elapsed.as_secs_f64() * 1e3 / decoded.len().max(1) as f64;
        report.mean_augmented_width = stats.mean_augmented_width();
        report.expansions_per_frame = stats.expansions_per_frame();
        Ok(report)
    }

    pub fn with_baseline(mut self, base: &EvalReport) -> Self {
        self.werr = Some((base.name.clone(), werr(base.wer, self.wer)));
        self
    }

    /// One `key=value` line for scripted checks.
    pub fn machine_line(&self) -> String {
        let mut line = format!(
            "REPORT name={} utts={} n={} sub={} ins={} del={} wer={:.6} entity_err={:.6} ms={:.3} width={:.3} exp_per_frame={:.3} exhausted={}",
            self.name,
            self.utterances.len(),
            self.totals.n,
            self.totals.sub,
            self.totals.ins,
            self.totals.del,
            self.wer,
            self.entity_error_rate,
            self.mean_decode_ms,
            self.mean_augmented_width,
            self.expansions_per_frame,
            self.exhausted,
        );
        if let Some((base, w)) = &self.werr {
            line.push_str(&format!(" baseline={base} werr={w:.6}"));
        }
        line
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.name)?;
        writeln!(
            f,
            "  WER            {:6.2}%  (S {} I {} D {} / N {})",
            100.0 * self.wer,
            self.totals.sub,
            self.totals.ins,
            self.totals.del,
            self.totals.n
        )?;
        if let Some((base, w)) = &self.werr {
            writeln!(f, "  WERR           {:6.2}%  vs {base}", 100.0 * w)?;
        }
        writeln!(
            f,
            "  entity errors  {:6.2}%  ({} / {})",
            100.0 * self.entity_error_rate,
            self.entity_errors,
            self.entity_words
        )?;
        writeln!(f, "  decode         {:.3} ms/utt", self.mean_decode_ms)?;
        writeln!(f, "  expansions     {:.2} /frame", self.expansions_per_frame)?;
        write!(f, "  augmented      {:.2} mean width", self.mean_augmented_width)
    }
}

/// Relative WER reduction; 0 when the baseline is already perfect.
pub fn werr(base: f64, adapted: f64) -> f64 {
    if base == 0.0 {
        0.0
    } else {
        (base - adapted) / base
    }
}

impl Scenario {
    pub fn references(&self) -> Vec<Reference> {
        self.test
            .iter()
            .map(|u| Reference {
                id: u.id.clone(),
                tokens: u.reference.clone(),
                entity_words: u.entity_words.clone(),
            })
            .collect()
    }

    pub fn encoders(&self) -> Vec<&EncoderOutput> {
        self.test.iter().map(|u| &u.encoder).collect()
    }
}

/// Decodes a scenario's test set and scores it.
pub fn evaluate_scenario(
    name: &str,
    scenario: &Scenario,
    models: &Models,
    config: &DecoderConfig,
) -> Result<EvalReport> {
    let decoded = decode_corpus(
        &scenario.encoders(),
        &models.scorer(scenario.gamma),
        config,
        &models.external(),
        true,
    )?;
    EvalReport::new(name, &scenario.references(), &decoded, &scenario.vocab)
}
