use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use super::{
    blank_fallback, build_augmented, DecodeOutput, DecodeStats, DecoderConfig, ExitRule, ExternalLms, Hypothesis,
    StepRecord,
};
use crate::classlm::{ClassModel, ClmState, RankGate, Transition};
use crate::fusion::{conditional_linear_interp_scores, linear_interp, lli, loglinear_interp, FusionMethod};
use crate::lm::{log_add, log_sum_exp, ExternalLm, LmState, ScoreVector, TokenId, LOG_ZERO};
use crate::sim::{EncoderOutput, FntScorer};
use crate::{Error, Result};

type PredKey = (LmState, Option<LmState>);

/// Frame-independent predictor-side scores of a hypothesis.
#[derive(Debug)]
pub(super) struct PredScores {
    raw: ScoreVector,
    fused: Option<ScoreVector>,
    shallow: Option<Arc<[f64]>>,
}

impl PredScores {
    fn z_u(&self) -> &ScoreVector {
        self.fused.as_ref().unwrap_or(&self.raw)
    }
}

#[derive(Clone, Copy)]
enum Stage {
    Li,
    Lli,
    Cli,
}

struct Search<'a> {
    enc: &'a EncoderOutput,
    scorer: &'a FntScorer,
    config: &'a DecoderConfig,
    lexical: Option<&'a dyn ExternalLm>,
    stage: Option<(Stage, f64)>,
    shallow: Option<f64>,
    clm: Option<(&'a ClassModel, f64)>,
    /// Predictor-side scores by (predictor state, lexical state).
    memo: RefCell<HashMap<PredKey, Arc<PredScores>>>,
}

struct Expansion {
    blank: f64,
    words: Vec<(f64, TokenId, Option<Transition>)>,
}

type Key = (Vec<TokenId>, Option<ClmState>);

/// Hypotheses with identical token and class-state keys summed together.
#[derive(Default)]
struct Merged {
    hyps: Vec<Hypothesis>,
    index: HashMap<Key, usize>,
}

impl Merged {
    fn insert(&mut self, h: Hypothesis) {
        let key = (h.tokens.clone(), h.clm_state.clone());
        match self.index.get(&key) {
            Some(&i) => {
                let old = &mut self.hyps[i];
                if h.log_score > old.log_score {
                    old.steps = h.steps;
                }
                old.log_score = log_add(old.log_score, h.log_score);
            }
            None => {
                self.index.insert(key, self.hyps.len());
                self.hyps.push(h);
            }
        }
    }

    fn count_above(&self, score: f64) -> usize {
        self.hyps.iter().filter(|h| h.log_score > score).count()
    }

    fn top_has_cat1(&self, n: usize, clm: &ClassModel) -> bool {
        let mut scores: Vec<(f64, usize)> = self.hyps.iter().enumerate().map(|(i, h)| (h.log_score, i)).collect();
        scores.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        scores
            .iter()
            .take(n)
            .any(|&(_, i)| self.hyps[i].clm_state.as_ref().is_some_and(|s| clm.cat1_available(s)))
    }

    fn into_sorted(self) -> Vec<Hypothesis> {
        let mut hyps = self.hyps;
        hyps.sort_by(|a, b| b.log_score.total_cmp(&a.log_score));
        hyps
    }
}

/// Top `n` finite entries by descending value, ties by position.
fn top_n(values: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).filter(|&i| values[i] > LOG_ZERO).collect();
    let cmp = |a: &usize, b: &usize| values[*b].total_cmp(&values[*a]).then(a.cmp(b));
    if idx.len() > n {
        idx.select_nth_unstable_by(n - 1, cmp);
        idx.truncate(n);
    }
    idx.sort_unstable_by(cmp);
    idx
}

impl<'a> Search<'a> {
    fn new(
        enc: &'a EncoderOutput,
        scorer: &'a FntScorer,
        config: &'a DecoderConfig,
        lms: &'a ExternalLms,
    ) -> Result<Self> {
        config.validate()?;
        let v = scorer.vocab_size();
        if enc.vocab_size() != v {
            return Err(Error::SupportMismatch(format!(
                "encoder covers {} tokens, predictor {v}",
                enc.vocab_size()
            )));
        }
        let fusion = &config.fusion;
        let mut search = Search {
            enc,
            scorer,
            config,
            lexical: None,
            stage: None,
            shallow: None,
            clm: None,
            memo: RefCell::default(),
        };
        let need_lexical = || {
            lms.lexical
                .as_deref()
                .ok_or_else(|| Error::Config(format!("{} needs a lexical LM", fusion.method)))
        };
        match fusion.first_active() {
            None | Some(FusionMethod::None) | Some(FusionMethod::Clm) => {}
            Some(FusionMethod::Sf) => search.shallow = Some(fusion.alpha),
            Some(FusionMethod::Li) => search.stage = Some((Stage::Li, fusion.alpha)),
            Some(FusionMethod::Lli) => search.stage = Some((Stage::Lli, fusion.alpha)),
            Some(FusionMethod::Cli) => search.stage = Some((Stage::Cli, fusion.alpha)),
        }
        if search.stage.is_some() || search.shallow.is_some() {
            let lex = need_lexical()?;
            if lex.vocab_size() != v {
                return Err(Error::SupportMismatch(format!(
                    "lexical LM covers {} tokens, predictor {v}",
                    lex.vocab_size()
                )));
            }
            search.lexical = Some(lex);
        }
        if let Some(alpha) = fusion.clm_alpha() {
            let clm = lms
                .clm
                .as_deref()
                .ok_or_else(|| Error::Config("class LM fusion needs a class model".into()))?;
            if clm.words().len() != v {
                return Err(Error::SupportMismatch(format!(
                    "class LM covers {} words, predictor {v}",
                    clm.words().len()
                )));
            }
            search.clm = Some((clm, alpha));
        }
        Ok(search)
    }

    fn initial(&self) -> Hypothesis {
        Hypothesis {
            tokens: Vec::new(),
            log_score: 0.0,
            pred_state: self.scorer.initial_state(),
            lex_state: self.lexical.map(|l| l.initial_state()),
            clm_state: self.clm.map(|(c, _)| c.initial_state()),
            steps: Vec::new(),
            cache: None,
        }
    }

    fn pred_scores(&self, h: &Hypothesis) -> Result<PredScores> {
        let raw = self.scorer.predictor_scores(&h.pred_state);
        let lex_state = || h.lex_state.as_ref().expect("lexical state tracked");
        let fused = match (self.stage, self.lexical) {
            (Some((stage, alpha)), Some(lex)) => Some(match stage {
                Stage::Li => linear_interp(&raw, &lex.full_dist(lex_state()), alpha)?,
                Stage::Lli => loglinear_interp(&raw, &lex.full_dist(lex_state()), alpha)?,
                Stage::Cli => {
                    conditional_linear_interp_scores(&raw, &lex.top_r(lex_state(), self.config.fusion.rank_r), alpha)?
                }
            }),
            _ => None,
        };
        let shallow = match (self.shallow, self.lexical) {
            (Some(_), Some(lex)) => Some(lex.full_dist(lex_state()).into_values().into()),
            _ => None,
        };
        Ok(PredScores { raw, fused, shallow })
    }

    fn expand(
        &self,
        h: &mut Hypothesis,
        t: usize,
        k: usize,
        gate: Option<&RankGate>,
        stats: &mut DecodeStats,
    ) -> Result<Expansion> {
        if h.cache.is_none() {
            let key = (h.pred_state.clone(), h.lex_state.clone());
            let hit = self.memo.borrow().get(&key).cloned();
            h.cache = Some(match hit {
                Some(scores) => scores,
                None => {
                    let scores = Arc::new(self.pred_scores(h)?);
                    self.memo.borrow_mut().insert(key, scores.clone());
                    scores
                }
            });
        }
        let scores = h.cache.as_deref().expect("just filled");
        let zt = self.enc.frame(t);
        let blank = self.scorer.blank_logit(self.enc, t, k);
        let width = if k < self.config.max_symbols {
            self.config.beam
        } else {
            0
        };
        if let (Some((clm, alpha)), Some(state), Some(gate)) = (self.clm, h.clm_state.as_ref(), gate) {
            let aug = build_augmented(clm, state, zt, scores.z_u(), alpha, self.config.fusion.rank_r, gate)?;
            stats.augmented_width += aug.width() as u64;
            stats.augmented_calls += 1;
            if aug.is_empty() {
                stats.blank_fallbacks += 1;
                return Ok(Expansion {
                    blank: blank_fallback(zt, scores.raw.values(), blank),
                    words: Vec::new(),
                });
            }
            let (lps, blank_lp) = aug.joint(blank);
            let words = if width == 0 {
                Vec::new()
            } else {
                top_n(&lps, width)
                    .into_iter()
                    .map(|i| {
                        let tr = aug.entries[i].transition;
                        (lps[i], tr.word, Some(tr))
                    })
                    .collect()
            };
            return Ok(Expansion { blank: blank_lp, words });
        }
        let z_u = scores.z_u().values();
        let mut joint: Vec<f64> = zt.iter().zip(z_u).map(|(a, b)| a + b).collect();
        if let (Some(alpha), Some(lex)) = (self.shallow, scores.shallow.as_deref()) {
            for (j, lp) in joint.iter_mut().zip(lex) {
                *j = lli(*j, *lp, alpha);
            }
        }
        joint.push(blank);
        let norm = log_sum_exp(&joint)?;
        if norm == LOG_ZERO {
            return Ok(Expansion {
                blank: LOG_ZERO,
                words: Vec::new(),
            });
        }
        joint.iter_mut().for_each(|v| *v -= norm);
        let blank_lp = joint.pop().unwrap_or(LOG_ZERO);
        let words = if width == 0 {
            Vec::new()
        } else {
            top_n(&joint, width)
                .into_iter()
                .map(|i| (joint[i], i as TokenId, None))
                .collect()
        };
        Ok(Expansion { blank: blank_lp, words })
    }

    fn emit(&self, h: &Hypothesis, t: usize, word: TokenId, lp: f64, tr: Option<Transition>) -> Result<Hypothesis> {
        let mut tokens = h.tokens.clone();
        tokens.push(word);
        let clm_state = match (self.clm, &h.clm_state, &tr) {
            (Some((clm, _)), Some(s), Some(tr)) => Some(clm.advance(s, tr)?),
            (_, s, _) => s.clone(),
        };
        let mut steps = h.steps.clone();
        steps.push(StepRecord {
            frame: t,
            token: word,
            category: tr.map(|t| t.category),
            log_prob: lp,
        });
        Ok(Hypothesis {
            tokens,
            log_score: h.log_score + lp,
            pred_state: self.scorer.predictor().advance(&h.pred_state, word),
            lex_state: match (self.lexical, &h.lex_state) {
                (Some(lex), Some(s)) => Some(lex.advance(s, word)),
                _ => None,
            },
            clm_state,
            steps,
            cache: None,
        })
    }

    fn run(&self) -> Result<DecodeOutput> {
        let beam = self.config.beam;
        let budget = 2 * beam as u64;
        let mut stats = DecodeStats::default();
        let mut current = vec![self.initial()];
        for t in 0..self.enc.num_frames() {
            stats.frames += 1;
            let gate = self
                .clm
                .map(|_| RankGate::new(self.enc.frame(t), self.config.rank_rprime));
            let mut next = Merged::default();
            let mut layer = std::mem::take(&mut current);
            let mut extra = 0u64;
            let mut in_extra = false;
            for k in 0.. {
                let mut children = Merged::default();
                for h in layer.iter_mut() {
                    if in_extra {
                        if extra >= budget {
                            break;
                        }
                        extra += 1;
                    }
                    stats.expansions += 1;
                    let exp = self.expand(h, t, k, gate.as_ref(), &mut stats)?;
                    if exp.blank > LOG_ZERO {
                        let mut b = h.clone();
                        b.log_score += exp.blank;
                        next.insert(b);
                    }
                    for (lp, w, tr) in exp.words {
                        children.insert(self.emit(h, t, w, lp, tr)?);
                    }
                }
                let mut cands = children.into_sorted();
                cands.truncate(beam);
                let Some(best) = cands.first().map(|h| h.log_score) else {
                    break;
                };
                if next.count_above(best) >= beam {
                    let need_cat1 = self.config.exit_rule == ExitRule::RequireCat1
                        && self.clm.is_some_and(|(clm, _)| !next.top_has_cat1(beam, clm));
                    if !need_cat1 || extra >= budget {
                        break;
                    }
                    in_extra = true;
                }
                layer = cands;
            }
            stats.extra_expansions += extra;
            current = next.into_sorted();
            current.truncate(beam);
            if current.is_empty() {
                log::warn!("all hypotheses died at frame {t}");
                break;
            }
        }
        if let Some((clm, _)) = self.clm {
            let alive = current
                .iter()
                .any(|h| h.clm_state.as_ref().is_some_and(|s| clm.cat1_available(s)));
            if !alive {
                log::warn!("no final hypothesis can leave its class");
                stats.exhausted = true;
            }
        }
        if current.is_empty() {
            stats.exhausted = true;
        }
        let mut seen = std::collections::HashSet::new();
        let nbest = current
            .into_iter()
            .filter(|h| seen.insert(h.tokens.clone()))
            .take(self.config.nbest)
            .collect();
        Ok(DecodeOutput { nbest, stats })
    }
}

/// Decodes one utterance. Fusion stages with zero weight are skipped entirely.
pub fn beam_search(
    enc: &EncoderOutput,
    scorer: &FntScorer,
    config: &DecoderConfig,
    lms: &ExternalLms,
) -> Result<DecodeOutput> {
    if enc.num_frames() == 0 {
        return Err(Error::InvalidArgument("encoder output has no frames".into()));
    }
    Search::new(enc, scorer, config, lms)?.run()
}
