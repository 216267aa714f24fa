use std::collections::HashMap;
use std::sync::Arc;

use super::{NgramEntry, NgramModel, NgramTable};
use crate::lm::{TokenId, Vocabulary, LOG_ZERO};
use crate::{Error, Result};

/// Discount used for every count bucket when counts-of-counts are degenerate.
pub const FALLBACK_DISCOUNT: f64 = 0.75;

/// Modified Kneser-Ney discounts for counts 1, 2 and 3+.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discounts(pub [f64; 3]);

impl Discounts {
    pub const FALLBACK: Discounts = Discounts([FALLBACK_DISCOUNT; 3]);

    /// Estimates from the number of n-grams seen exactly 1..=4 times.
    pub fn estimate(count_of_counts: [u64; 4]) -> Discounts {
        let [n1, n2, n3, n4] = count_of_counts.map(|n| n as f64);
        if n1 == 0.0 || n2 == 0.0 || n3 == 0.0 || n4 == 0.0 {
            return Discounts::FALLBACK;
        }
        let y = n1 / (n1 + 2.0 * n2);
        let d = [
            1.0 - 2.0 * y * n2 / n1,
            2.0 - 3.0 * y * n3 / n2,
            3.0 - 4.0 * y * n4 / n3,
        ];
        let valid = d.iter().enumerate().all(|(k, &dk)| dk > 0.0 && dk < (k + 1) as f64);
        if valid {
            Discounts(d)
        } else {
            Discounts::FALLBACK
        }
    }

    pub fn for_count(&self, count: u64) -> f64 {
        match count {
            0 => 0.0,
            1 => self.0[0],
            2 => self.0[1],
            _ => self.0[2],
        }
    }
}

type Counts = HashMap<Vec<TokenId>, u64>;

#[derive(Default, Clone, Copy)]
struct ContextStats {
    total: u64,
    buckets: [u64; 3],
}

impl ContextStats {
    fn gamma(&self, d: &Discounts) -> f64 {
        let mass: f64 = (0..3).map(|k| d.0[k] * self.buckets[k] as f64).sum();
        mass / self.total as f64
    }
}

/// Trains an interpolated modified Kneser-Ney model without cutoffs or pruning.
///
/// Sentences are wrapped in `<s> … </s>`; `<s>` is context only. Lower orders
/// use continuation counts except for n-grams that start with `<s>`, which
/// keep their raw counts. The resulting backoff weights are the interpolation
/// weights, so the stored model is exact rather than an approximation.
pub fn train_kneser_ney(corpus: &[Vec<TokenId>], vocab: Arc<Vocabulary>, order: usize) -> Result<NgramModel> {
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if order == 0 {
        return Err(Error::InvalidArgument("n-gram order must be at least 1".into()));
    }
    let bos = vocab.bos()?;
    let eos = vocab.eos()?;

    let mut raw: Vec<Counts> = vec![Counts::new(); order];
    let mut padded = Vec::new();
    for sentence in corpus {
        padded.clear();
        padded.push(bos);
        for &t in sentence {
            vocab.check(t)?;
            if t == bos || t == eos {
                return Err(Error::InvalidArgument(
                    "sentence markers must not appear inside sentences".into(),
                ));
            }
            padded.push(t);
        }
        padded.push(eos);
        for end in 1..padded.len() {
            for n in 1..=order.min(end + 1) {
                *raw[n - 1].entry(padded[end + 1 - n..=end].to_vec()).or_default() += 1;
            }
        }
    }

    // adjusted[n-1]: raw counts at the top order and for <s>-initial n-grams,
    // continuation counts elsewhere.
    let mut adjusted: Vec<Counts> = Vec::with_capacity(order);
    for n in 1..=order {
        if n == order {
            adjusted.push(raw[n - 1].clone());
            continue;
        }
        let mut continuation: Counts = HashMap::new();
        for gram in raw[n].keys() {
            *continuation.entry(gram[1..].to_vec()).or_default() += 1;
        }
        let counts = raw[n - 1]
            .iter()
            .map(|(gram, &c)| {
                let a = if gram[0] == bos { c } else { continuation[gram] };
                (gram.clone(), a)
            })
            .collect();
        adjusted.push(counts);
    }

    let discounts: Vec<Discounts> = adjusted
        .iter()
        .map(|counts| {
            let mut coc = [0u64; 4];
            for &a in counts.values() {
                if (1..=4).contains(&a) {
                    coc[a as usize - 1] += 1;
                }
            }
            Discounts::estimate(coc)
        })
        .collect();

    let stats: Vec<HashMap<Vec<TokenId>, ContextStats>> = adjusted
        .iter()
        .map(|counts| {
            let mut stats: HashMap<Vec<TokenId>, ContextStats> = HashMap::new();
            for (gram, &a) in counts {
                let s = stats.entry(gram[..gram.len() - 1].to_vec()).or_default();
                s.total += a;
                s.buckets[(a.min(3) - 1) as usize] += 1;
            }
            stats
        })
        .collect();

    let backoff_of = |gram: &[TokenId]| -> Option<f64> {
        let n = gram.len();
        if n >= order {
            return None;
        }
        stats[n].get(gram).map(|s| s.gamma(&discounts[n]).ln())
    };

    let mut table = NgramTable {
        entries: vec![Vec::new(); order],
    };

    // Unigrams: discounted mass plus the interpolation weight spread uniformly
    // over every predictable token, seen or not.
    let root = stats[0][&Vec::new()];
    let d1 = &discounts[0];
    let gamma0 = root.gamma(d1);
    let predictable = (vocab.len() - 1) as f64;
    let mut probs: HashMap<Vec<TokenId>, f64> = HashMap::new();
    for w in 0..vocab.len() as TokenId {
        let gram = vec![w];
        let p = if w == bos {
            0.0
        } else {
            let a = adjusted[0].get(&gram).copied().unwrap_or(0);
            (a as f64 - d1.for_count(a)) / root.total as f64 + gamma0 / predictable
        };
        table.entries[0].push(NgramEntry {
            log_prob: if p > 0.0 { p.ln() } else { LOG_ZERO },
            backoff: backoff_of(&gram),
            tokens: gram.clone(),
        });
        probs.insert(gram, p);
    }

    for n in 2..=order {
        let d = &discounts[n - 1];
        let mut grams: Vec<(&Vec<TokenId>, &u64)> = adjusted[n - 1].iter().collect();
        grams.sort_unstable();
        let mut next = HashMap::with_capacity(grams.len());
        for (gram, &a) in grams {
            let ctx = &gram[..n - 1];
            let s = stats[n - 1][ctx];
            let lower = probs[&gram[1..]];
            let p = (a as f64 - d.for_count(a)) / s.total as f64 + s.gamma(d) * lower;
            table.entries[n - 1].push(NgramEntry {
                tokens: gram.clone(),
                log_prob: p.ln(),
                backoff: backoff_of(gram),
            });
            next.insert(gram.clone(), p);
        }
        probs.extend(next);
    }

    NgramModel::from_table(vocab, &table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Arc<Vocabulary> {
        Arc::new(Vocabulary::new(["<s>", "</s>", "a", "b", "c", "d", "e"]).unwrap())
    }

    fn corpus(v: &Vocabulary, lines: &[&str]) -> Vec<Vec<TokenId>> {
        lines.iter().map(|l| v.encode(l).unwrap()).collect()
    }

    #[test]
    fn frequency_ordering() {
        let v = vocab();
        let m = train_kneser_ney(&corpus(&v, &["a b", "a b", "a c"]), v.clone(), 2).unwrap();
        let a = v.id("a").unwrap();
        assert!(m.logprob(v.id("b").unwrap(), &[a]).unwrap() > m.logprob(v.id("c").unwrap(), &[a]).unwrap());
    }

    #[test]
    fn normalized_at_root_and_context() {
        let v = vocab();
        let m = train_kneser_ney(&corpus(&v, &["a b", "a b", "a c"]), v.clone(), 2).unwrap();
        for h in [vec![], vec![v.id("a").unwrap()]] {
            let mass: f64 = (0..v.len() as TokenId).map(|w| m.logprob(w, &h).unwrap().exp()).sum();
            assert!((mass - 1.0).abs() < 1e-9, "{mass}");
        }
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(matches!(train_kneser_ney(&[], vocab(), 3), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn markers_inside_sentence_rejected() {
        let v = vocab();
        assert!(train_kneser_ney(&[vec![0, 2]], v, 2).is_err());
    }

    #[test]
    fn discount_estimation() {
        assert_eq!(Discounts::estimate([0, 1, 1, 1]), Discounts::FALLBACK);
        let d = Discounts::estimate([10, 5, 3, 2]);
        let y = 10.0 / 20.0;
        assert!((d.0[0] - (1.0 - 2.0 * y * 5.0 / 10.0)).abs() < 1e-15);
        assert!((d.0[1] - (2.0 - 3.0 * y * 3.0 / 5.0)).abs() < 1e-15);
        assert!((d.0[2] - (3.0 - 4.0 * y * 2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn bos_never_predicted() {
        let v = vocab();
        let m = train_kneser_ney(&corpus(&v, &["a b c", "d e"]), v.clone(), 3).unwrap();
        assert_eq!(m.logprob(0, &[2]).unwrap(), LOG_ZERO);
        assert!(m.check_sorted());
    }
}
