//! Time-synchronous transducer beam search with external LM fusion.

mod augmented;
mod search;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use augmented::{build_augmented, AugmentedScores};
pub use search::beam_search;

use crate::classlm::{Category, ClassModel, ClmState};
use crate::fusion::FusionConfig;
use crate::lm::{log_sum_exp, ExternalLm, LmState, ScoreVector, TokenId, LOG_ZERO};
use crate::{Error, Result};

pub const DEFAULT_RANK_RPRIME: usize = 16;
pub const DEFAULT_MAX_SYMBOLS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ExitRule {
    #[default]
    Standard,
    /// Keep expanding until a top hypothesis can leave its class.
    RequireCat1,
}

impl std::str::FromStr for ExitRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Ok(ExitRule::Standard),
            "require-cat1" | "cat1" => Ok(ExitRule::RequireCat1),
            _ => Err(Error::Config(format!("unknown exit rule {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecoderConfig {
    pub beam: usize,
    pub nbest: usize,
    pub fusion: FusionConfig,
    /// Encoder rank gate for class entry and continuation words.
    pub rank_rprime: usize,
    pub exit_rule: ExitRule,
    /// Cap on emissions within one frame.
    pub max_symbols: usize,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        DecoderConfig {
            beam: 8,
            nbest: 1,
            fusion: FusionConfig::default(),
            rank_rprime: DEFAULT_RANK_RPRIME,
            exit_rule: ExitRule::Standard,
            max_symbols: DEFAULT_MAX_SYMBOLS,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam == 0 {
            return Err(Error::Config("beam must be at least 1".into()));
        }
        if self.nbest == 0 || self.nbest > self.beam {
            return Err(Error::Config(format!(
                "n-best {} must be in 1..={}",
                self.nbest, self.beam
            )));
        }
        if self.max_symbols == 0 {
            return Err(Error::Config("max symbols per frame must be at least 1".into()));
        }
        if self.rank_rprime == 0 {
            return Err(Error::Config("rank limit r′ must be at least 1".into()));
        }
        self.fusion.validate()
    }
}

/// External models available to the search. Which ones are used is decided
/// by the fusion configuration.
#[derive(Clone, Default)]
pub struct ExternalLms {
    pub lexical: Option<Arc<dyn ExternalLm>>,
    pub clm: Option<Arc<ClassModel>>,
}

impl std::fmt::Debug for ExternalLms {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExternalLms")
            .field("lexical", &self.lexical.is_some())
            .field("clm", &self.clm.is_some())
            .finish()
    }
}

/// One emission on the best path into a hypothesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub frame: usize,
    pub token: TokenId,
    pub category: Option<Category>,
    /// Log posterior of the emission after the final softmax.
    pub log_prob: f64,
}

#[derive(Debug, Clone)]
pub struct Hypothesis {
    pub tokens: Vec<TokenId>,
    pub log_score: f64,
    pub pred_state: LmState,
    pub lex_state: Option<LmState>,
    pub clm_state: Option<ClmState>,
    /// Emissions of the highest-scoring path merged into this hypothesis.
    pub steps: Vec<StepRecord>,
    cache: Option<Arc<search::PredScores>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DecodeStats {
    pub frames: usize,
    /// Hypotheses scored, summed over frames.
    pub expansions: u64,
    /// Expansions made only to satisfy [`ExitRule::RequireCat1`].
    pub extra_expansions: u64,
    pub augmented_width: u64,
    pub augmented_calls: u64,
    pub blank_fallbacks: u64,
    /// No surviving hypothesis could leave its class.
    pub exhausted: bool,
}

impl DecodeStats {
    pub fn expansions_per_frame(&self) -> f64 {
        self.expansions as f64 / self.frames.max(1) as f64
    }

    pub fn mean_augmented_width(&self) -> f64 {
        self.augmented_width as f64 / self.augmented_calls.max(1) as f64
    }

    pub fn absorb(&mut self, other: &DecodeStats) {
        self.frames += other.frames;
        self.expansions += other.expansions;
        self.extra_expansions += other.extra_expansions;
        self.augmented_width += other.augmented_width;
        self.augmented_calls += other.augmented_calls;
        self.blank_fallbacks += other.blank_fallbacks;
        self.exhausted |= other.exhausted;
    }
}

#[derive(Debug, Clone)]
pub struct DecodeOutput {
    /// Best first, one entry per token sequence.
    pub nbest: Vec<Hypothesis>,
    pub stats: DecodeStats,
}

/// Final softmax over `[z_t + z_u; z_blank]`; the blank is the last entry.
pub fn joint_step(z_t: &ScoreVector, z_u: &ScoreVector, z_blank: f64) -> Result<ScoreVector> {
    if z_t.support() != z_u.support() || z_t.len() != z_u.len() {
        return Err(Error::SupportMismatch(
            "encoder and predictor scores differ in support".into(),
        ));
    }
    let mut joint: Vec<f64> = z_t.values().iter().zip(z_u.values()).map(|(a, b)| a + b).collect();
    joint.push(z_blank);
    let norm = log_sum_exp(&joint)?;
    if norm == LOG_ZERO {
        return Err(Error::NoFiniteValue);
    }
    joint.iter_mut().for_each(|v| *v -= norm);
    ScoreVector::full(joint, true)
}

/// Blank log-probability from the original, uninterpolated scores.
pub fn blank_fallback(z_t: &[f64], z_u: &[f64], z_blank: f64) -> f64 {
    let mut joint: Vec<f64> = z_t.iter().zip(z_u).map(|(a, b)| a + b).collect();
    joint.push(z_blank);
    match log_sum_exp(&joint) {
        Ok(norm) if norm > LOG_ZERO => z_blank - norm,
        _ => LOG_ZERO,
    }
}

/// Writes `utt-id TAB rank TAB logscore TAB text` lines.
pub fn format_nbest(utt_id: &str, nbest: &[Hypothesis], vocab: &crate::lm::Vocabulary) -> String {
    let mut out = String::new();
    for (rank, h) in nbest.iter().enumerate() {
        let text = vocab.detokenize(&h.tokens).join(" ");
        out.push_str(&format!("{utt_id}\t{}\t{:.6}\t{text}\n", rank + 1, h.log_score));
    }
    out
}
