use std::fmt;
use std::sync::Arc;

use super::{decode_corpus, werr, EvalReport};
use crate::decoder::{DecoderConfig, ExternalLms};
use crate::fusion::{FusionConfig, FusionMethod};
use crate::lm::Vocabulary;
use crate::sim::{EncoderOutput, FntScorer, Reference};
use crate::Result;

pub const ALPHA_GRID: [f64; 6] = [0.01, 0.05, 0.1, 0.25, 0.5, 0.9];

/// Shallow fusion is only swept up to this weight.
pub const SF_MAX_ALPHA: f64 = 0.25;

/// One test set with the models used to decode it.
pub struct SweepCorpus<'a> {
    pub name: String,
    pub encoders: Vec<&'a EncoderOutput>,
    pub refs: Vec<Reference>,
    pub vocab: Arc<Vocabulary>,
    pub scorer: FntScorer,
    pub lms: ExternalLms,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub method: FusionMethod,
    pub alpha: f64,
    pub corpus: usize,
    pub wer: f64,
    pub werr: f64,
    pub entity_error_rate: f64,
}

/// Best weights of one method: per corpus (α*) and shared across corpora (α⁰).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub method: FusionMethod,
    pub alpha_star: Vec<f64>,
    /// Utterance-weighted mean of the per-corpus best WERR.
    pub werr_star: f64,
    pub alpha_zero: f64,
    /// Utterance-weighted WERR at the single best shared weight.
    pub werr_zero: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub corpora: Vec<String>,
    pub baselines: Vec<EvalReport>,
    pub cells: Vec<SweepCell>,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn cell(&self, method: FusionMethod, alpha: f64, corpus: usize) -> Option<&SweepCell> {
        self.cells
            .iter()
            .find(|c| c.method == method && c.alpha == alpha && c.corpus == corpus)
    }

    pub fn row(&self, method: FusionMethod) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn machine_lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, b) in self.corpora.iter().zip(&self.baselines) {
            out.push(format!(
                "SWEEP_BASE corpus={name} utts={} wer={:.6} entity_err={:.6}",
                b.utterances.len(),
                b.wer,
                b.entity_error_rate
            ));
        }
        for c in &self.cells {
            out.push(format!(
                "SWEEP method={} alpha={} corpus={} wer={:.6} werr={:.6} entity_err={:.6}",
                c.method, c.alpha, self.corpora[c.corpus], c.wer, c.werr, c.entity_error_rate
            ));
        }
        for r in &self.rows {
            let stars: Vec<String> = r.alpha_star.iter().map(|a| a.to_string()).collect();
            out.push(format!(
                "SWEEP_BEST method={} alpha_star={} werr_star={:.6} alpha_zero={} werr_zero={:.6} weighting=utterances",
                r.method,
                stars.join(","),
                r.werr_star,
                r.alpha_zero,
                r.werr_zero
            ));
        }
        out
    }
}

impl fmt::Display for SweepTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (name, b) in self.corpora.iter().zip(&self.baselines) {
            writeln!(
                f,
                "baseline {name}: WER {:.2}% ({} utts)",
                100.0 * b.wer,
                b.utterances.len()
            )?;
        }
        writeln!(f)?;
        write!(f, "{:<8}", "WERR")?;
        for a in ALPHA_GRID {
            write!(f, "{:>9}", format!("α={a}"))?;
        }
        writeln!(f)?;
        for r in &self.rows {
            write!(f, "{:<8}", r.method.to_string())?;
            for a in ALPHA_GRID {
                let cells: Vec<&SweepCell> = self
                    .cells
                    .iter()
                    .filter(|c| c.method == r.method && c.alpha == a)
                    .collect();
                if cells.is_empty() {
                    write!(f, "{:>9}", "-")?;
                } else {
                    write!(
                        f,
                        "{:>8.2}%",
                        100.0 * weighted(&self.baselines, cells.iter().map(|c| (c.corpus, c.werr)))
                    )?;
                }
            }
            writeln!(f)?;
        }
        writeln!(f)?;
        writeln!(f, "{:<8}{:>14}{:>10}{:>8}{:>10}", "method", "α*", "WERR", "α⁰", "WERR")?;
        for r in &self.rows {
            let stars: Vec<String> = r.alpha_star.iter().map(|a| a.to_string()).collect();
            writeln!(
                f,
                "{:<8}{:>14}{:>9.2}%{:>8}{:>9.2}%",
                r.method.to_string(),
                stars.join(","),
                100.0 * r.werr_star,
                r.alpha_zero,
                100.0 * r.werr_zero
            )?;
        }
        write!(f, "(aggregates weighted by utterance count)")
    }
}

fn weighted(baselines: &[EvalReport], values: impl Iterator<Item = (usize, f64)>) -> f64 {
    let total: usize = baselines.iter().map(|b| b.utterances.len()).sum();
    values
        .map(|(c, v)| v * baselines[c].utterances.len() as f64 / total as f64)
        .sum()
}

/// Weights swept for `method`: SF skips the large ones.
pub fn grid_for(method: FusionMethod, grid: &[f64]) -> Vec<f64> {
    grid.iter()
        .copied()
        .filter(|&a| method != FusionMethod::Sf || a <= SF_MAX_ALPHA)
        .collect()
}

/// Decodes every corpus at every (method, α) point and reports WERR against
/// each corpus' no-fusion baseline.
pub fn sweep(
    corpora: &[SweepCorpus],
    methods: &[FusionMethod],
    grid: &[f64],
    base: &DecoderConfig,
) -> Result<SweepTable> {
    let plain = DecoderConfig {
        fusion: FusionConfig {
            rank_r: base.fusion.rank_r,
            ..FusionConfig::default()
        },
        ..*base
    };
    let mut baselines = Vec::with_capacity(corpora.len());
    for c in corpora {
        let d = decode_corpus(&c.encoders, &c.scorer, &plain, &c.lms, true)?;
        baselines.push(EvalReport::new(&format!("{}/baseline", c.name), &c.refs, &d, &c.vocab)?);
    }

    let mut cells = Vec::new();
    let mut rows = Vec::new();
    for &method in methods {
        let alphas = grid_for(method, grid);
        for &alpha in &alphas {
            let config = DecoderConfig {
                fusion: FusionConfig {
                    rank_r: base.fusion.rank_r,
                    ..FusionConfig::new(method, alpha)
                },
                ..*base
            };
            for (k, c) in corpora.iter().enumerate() {
                let d = decode_corpus(&c.encoders, &c.scorer, &config, &c.lms, true)?;
                let r = EvalReport::new(&format!("{}/{method}@{alpha}", c.name), &c.refs, &d, &c.vocab)?;
                cells.push(SweepCell {
                    method,
                    alpha,
                    corpus: k,
                    wer: r.wer,
                    werr: werr(baselines[k].wer, r.wer),
                    entity_error_rate: r.entity_error_rate,
                });
            }
        }
        if alphas.is_empty() {
            continue;
        }
        let mine: Vec<&SweepCell> = cells.iter().filter(|c| c.method == method).collect();
        let mut alpha_star = Vec::with_capacity(corpora.len());
        let mut best_per_corpus = Vec::with_capacity(corpora.len());
        for k in 0..corpora.len() {
            let best = mine
                .iter()
                .filter(|c| c.corpus == k)
                .fold(None::<&SweepCell>, |b, c| match b {
                    Some(b) if b.werr >= c.werr => Some(b),
                    _ => Some(c),
                })
                .expect("non-empty grid");
            alpha_star.push(best.alpha);
            best_per_corpus.push((k, best.werr));
        }
        let werr_star = weighted(&baselines, best_per_corpus.into_iter());
        let (mut alpha_zero, mut werr_zero) = (alphas[0], f64::NEG_INFINITY);
        for &a in &alphas {
            let w = weighted(
                &baselines,
                mine.iter().filter(|c| c.alpha == a).map(|c| (c.corpus, c.werr)),
            );
            if w > werr_zero {
                alpha_zero = a;
                werr_zero = w;
            }
        }
        rows.push(SweepRow {
            method,
            alpha_star,
            werr_star,
            alpha_zero,
            werr_zero,
        });
    }
    Ok(SweepTable {
        corpora: corpora.iter().map(|c| c.name.clone()).collect(),
        baselines,
        cells,
        rows,
    })
}
