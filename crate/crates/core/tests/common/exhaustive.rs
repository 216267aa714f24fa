//! Exhaustive path enumeration for tiny decoding problems.
//!
//! Every alignment of every token sequence is walked depth first. Scores are
//! computed from model queries and scalar formulas only; no search code from
//! the library is used.

use std::collections::HashMap;

use fnt_core::classlm::{ClassModel, PrefixTree};
use fnt_core::lm::{TokenId, LOG_ZERO};
use fnt_core::ngram::NgramModel;
use fnt_core::sim::EncoderOutput;

pub enum External<'a> {
    None,
    /// Lexical n-gram with gated linear interpolation (α, r).
    Cli(&'a NgramModel, f64, usize),
    /// Class LM (α, r, r′).
    Clm(&'a ClassModel, f64, usize, usize),
}

pub struct Problem<'a> {
    pub enc: &'a EncoderOutput,
    pub predictor: &'a NgramModel,
    pub gamma: f64,
    pub max_symbols: usize,
    pub external: External<'a>,
}

/// Class LM state: full tagged history, active class and the path inside it.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
struct ClassState {
    history: Vec<TokenId>,
    class: Option<usize>,
    path: Vec<TokenId>,
}

fn li(z: f64, lp: f64, alpha: f64) -> f64 {
    (alpha * lp.exp() + (1.0 - alpha) * z.exp()).ln()
}

fn lse(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(LOG_ZERO, f64::max);
    if m == LOG_ZERO {
        return LOG_ZERO;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn with_bos(model: &NgramModel, tokens: &[TokenId]) -> Vec<TokenId> {
    let mut h = vec![model.vocab().bos().unwrap()];
    h.extend_from_slice(tokens);
    h
}

fn encoder_rank(zt: &[f64], w: usize) -> usize {
    (0..zt.len())
        .filter(|&u| zt[u] > zt[w] || (zt[u] == zt[w] && u < w))
        .count()
}

type Key = (Vec<TokenId>, Option<(Vec<TokenId>, Option<usize>, Vec<TokenId>)>);

impl<'a> Problem<'a> {
    fn vocab_size(&self) -> usize {
        self.enc.vocab_size()
    }

    fn predictor_scores(&self, tokens: &[TokenId]) -> Vec<f64> {
        let h = with_bos(self.predictor, tokens);
        (0..self.vocab_size() as TokenId)
            .map(|w| self.predictor.logprob(w, &h).unwrap())
            .collect()
    }

    /// Outgoing (word, log posterior, next class state) and the blank log posterior.
    fn step(
        &self,
        tokens: &[TokenId],
        cs: Option<&ClassState>,
        t: usize,
        k: usize,
    ) -> (Vec<(TokenId, f64, Option<ClassState>)>, f64) {
        let zt = self.enc.frame(t);
        let blank = self.enc.blank_logit(t) + self.gamma * k as f64;
        let raw = self.predictor_scores(tokens);
        let mut channels: Vec<(TokenId, f64, Option<ClassState>)> = Vec::new();
        match &self.external {
            External::None => {
                for w in 0..self.vocab_size() {
                    channels.push((w as TokenId, zt[w] + raw[w], None));
                }
            }
            External::Cli(lex, alpha, r) => {
                let h = with_bos(lex, tokens);
                let gated: Vec<TokenId> = lex.top_r(&h, *r).unwrap().entries.iter().map(|e| e.word).collect();
                for w in 0..self.vocab_size() {
                    let mut zu = raw[w];
                    if gated.contains(&(w as TokenId)) {
                        zu = li(zu, lex.logprob(w as TokenId, &h).unwrap(), *alpha);
                    }
                    channels.push((w as TokenId, zt[w] + zu, None));
                }
            }
            External::Clm(clm, alpha, r, rprime) => {
                let cs = cs.unwrap();
                let ng = clm.ngram().model();
                let words = clm.words().len();
                let classes = clm.classes();
                let node = cs.class.map(|c| classes[c].tree.walk(&cs.path).unwrap());
                let exit = match (cs.class, node) {
                    (Some(c), Some(n)) => classes[c].tree.exit_prob(n),
                    _ => 1.0,
                };
                let mut hp = cs.history.clone();
                if let Some(c) = cs.class {
                    hp.push(classes[c].tag_id);
                }
                let gated_word = |w: TokenId| encoder_rank(zt, w as usize) < *rprime;
                if exit > 0.0 {
                    let ranked: Vec<TokenId> = ng.top_r(&hp, *r).unwrap().entries.iter().map(|e| e.word).collect();
                    for w in 0..words as TokenId {
                        let p1 = exit.ln() + ng.logprob(w, &hp).unwrap();
                        let zu = if ranked.contains(&w) {
                            li(raw[w as usize], p1, *alpha)
                        } else {
                            raw[w as usize]
                        };
                        let mut h = hp.clone();
                        h.push(w);
                        let next = ClassState {
                            history: h,
                            class: None,
                            path: vec![],
                        };
                        channels.push((w, zt[w as usize] + zu, Some(next)));
                    }
                    for (ci, class) in classes.iter().enumerate() {
                        let tag = ng.logprob(class.tag_id, &hp).unwrap();
                        for arc in class.tree.children(PrefixTree::ROOT) {
                            if !gated_word(arc.word) {
                                continue;
                            }
                            let p2 = exit.ln() + tag + arc.prob.ln();
                            let next = ClassState {
                                history: hp.clone(),
                                class: Some(ci),
                                path: vec![arc.word],
                            };
                            let w = arc.word as usize;
                            channels.push((arc.word, zt[w] + li(raw[w], p2, *alpha), Some(next)));
                        }
                    }
                }
                if let (Some(c), Some(n)) = (cs.class, node) {
                    for arc in classes[c].tree.children(n) {
                        if !gated_word(arc.word) {
                            continue;
                        }
                        let mut path = cs.path.clone();
                        path.push(arc.word);
                        let next = ClassState {
                            history: cs.history.clone(),
                            class: Some(c),
                            path,
                        };
                        channels.push((arc.word, zt[arc.word as usize] + arc.prob.ln(), Some(next)));
                    }
                }
                if channels.is_empty() {
                    let mut orig: Vec<f64> = (0..self.vocab_size()).map(|w| zt[w] + raw[w]).collect();
                    orig.push(blank);
                    return (vec![], blank - lse(&orig));
                }
            }
        }
        let mut all: Vec<f64> = channels.iter().map(|c| c.1).collect();
        all.push(blank);
        let norm = lse(&all);
        let out = channels
            .into_iter()
            .filter(|c| c.1 > LOG_ZERO)
            .map(|(w, s, n)| (w, s - norm, n))
            .collect();
        (out, blank - norm)
    }

    fn key(&self, tokens: &[TokenId], cs: Option<&ClassState>) -> Key {
        let class_key = cs.map(|s| {
            let keep = match &self.external {
                External::Clm(clm, ..) => clm.order() - 1,
                _ => unreachable!(),
            };
            let h = &s.history[s.history.len().saturating_sub(keep)..];
            (h.to_vec(), s.class, s.path.clone())
        });
        (tokens.to_vec(), class_key)
    }

    #[allow(clippy::too_many_arguments)]
    fn walk(
        &self,
        t: usize,
        k: usize,
        tokens: &mut Vec<TokenId>,
        cs: Option<ClassState>,
        score: f64,
        out: &mut HashMap<Key, (Vec<TokenId>, f64)>,
        paths: &mut usize,
    ) {
        if t == self.enc.num_frames() {
            *paths += 1;
            let e = out
                .entry(self.key(tokens, cs.as_ref()))
                .or_insert((tokens.clone(), LOG_ZERO));
            e.1 = lse(&[e.1, score]);
            return;
        }
        let (words, blank) = self.step(tokens, cs.as_ref(), t, k);
        if blank > LOG_ZERO {
            self.walk(t + 1, 0, tokens, cs.clone(), score + blank, out, paths);
        }
        if k < self.max_symbols {
            for (w, lp, next) in words {
                tokens.push(w);
                self.walk(t, k + 1, tokens, next.or_else(|| cs.clone()), score + lp, out, paths);
                tokens.pop();
            }
        }
    }

    /// Best (token sequence, summed log score) over distinct final states, and the path count.
    pub fn solve(&self) -> (Vec<TokenId>, f64, usize) {
        let init = match &self.external {
            External::Clm(clm, ..) => Some(ClassState {
                history: vec![clm.words().bos().unwrap()],
                class: None,
                path: vec![],
            }),
            _ => None,
        };
        let mut out = HashMap::new();
        let mut paths = 0;
        self.walk(0, 0, &mut Vec::new(), init, 0.0, &mut out, &mut paths);
        let (tokens, score) = out.into_values().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        (tokens, score, paths)
    }
}
