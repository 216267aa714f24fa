//! Brute-force interpolated modified Kneser-Ney.
//!
//! Works directly from count tables and evaluates the interpolation recursion
//! for every query, with no backoff-form conversion and no trie.

use std::collections::HashMap;

pub struct KnOracle {
    order: usize,
    vocab_size: usize,
    bos: u32,
    adjusted: Vec<HashMap<Vec<u32>, f64>>,
    discounts: Vec<[f64; 3]>,
}

impl KnOracle {
    pub fn new(sentences: &[Vec<u32>], vocab_size: usize, bos: u32, eos: u32, order: usize) -> Self {
        // raw[n-1]: every n-gram occurrence whose last token is predicted
        let mut raw: Vec<HashMap<Vec<u32>, f64>> = vec![HashMap::new(); order];
        for s in sentences {
            let mut padded = vec![bos];
            padded.extend_from_slice(s);
            padded.push(eos);
            for n in 1..=order {
                for start in 0..padded.len() {
                    let end = start + n;
                    if end > padded.len() {
                        break;
                    }
                    let gram = &padded[start..end];
                    if gram[n - 1] == bos {
                        continue;
                    }
                    *raw[n - 1].entry(gram.to_vec()).or_insert(0.0) += 1.0;
                }
            }
        }
        let mut adjusted = Vec::new();
        for n in 1..=order {
            let mut table = HashMap::new();
            for (gram, &c) in &raw[n - 1] {
                let a = if n == order || gram[0] == bos {
                    c
                } else {
                    (0..vocab_size as u32)
                        .filter(|&v| {
                            let mut ext = vec![v];
                            ext.extend_from_slice(gram);
                            raw[n].contains_key(&ext)
                        })
                        .count() as f64
                };
                table.insert(gram.clone(), a);
            }
            adjusted.push(table);
        }
        let discounts = adjusted
            .iter()
            .map(|table| {
                let n_k = |k: f64| table.values().filter(|&&a| a == k).count() as f64;
                let (n1, n2, n3, n4) = (n_k(1.0), n_k(2.0), n_k(3.0), n_k(4.0));
                let fallback = [0.75; 3];
                if n1 == 0.0 || n2 == 0.0 || n3 == 0.0 || n4 == 0.0 {
                    return fallback;
                }
                let y = n1 / (n1 + 2.0 * n2);
                let d = [
                    1.0 - 2.0 * y * n2 / n1,
                    2.0 - 3.0 * y * n3 / n2,
                    3.0 - 4.0 * y * n4 / n3,
                ];
                if d[0] > 0.0 && d[0] < 1.0 && d[1] > 0.0 && d[1] < 2.0 && d[2] > 0.0 && d[2] < 3.0 {
                    d
                } else {
                    fallback
                }
            })
            .collect();
        KnOracle {
            order,
            vocab_size,
            bos,
            adjusted,
            discounts,
        }
    }

    /// True when some order estimated its discounts instead of falling back.
    pub fn estimated_any(&self) -> bool {
        self.discounts.iter().any(|d| *d != [0.75; 3])
    }

    fn discount(&self, n: usize, a: f64) -> f64 {
        let d = &self.discounts[n - 1];
        if a == 0.0 {
            0.0
        } else if a == 1.0 {
            d[0]
        } else if a == 2.0 {
            d[1]
        } else {
            d[2]
        }
    }

    /// Linear-domain P(w | history).
    pub fn prob(&self, w: u32, history: &[u32]) -> f64 {
        if w == self.bos {
            return 0.0;
        }
        let keep = self.order - 1;
        let h = &history[history.len().saturating_sub(keep)..];
        self.interp(w, h)
    }

    fn interp(&self, w: u32, h: &[u32]) -> f64 {
        let n = h.len() + 1;
        let table = &self.adjusted[n - 1];
        let mut total = 0.0;
        let mut gamma_mass = 0.0;
        for v in 0..self.vocab_size as u32 {
            let mut gram = h.to_vec();
            gram.push(v);
            if let Some(&a) = table.get(&gram) {
                total += a;
                gamma_mass += self.discount(n, a);
            }
        }
        let lower = if h.is_empty() {
            1.0 / (self.vocab_size - 1) as f64
        } else {
            self.interp(w, &h[1..])
        };
        if total == 0.0 {
            return lower;
        }
        let mut gram = h.to_vec();
        gram.push(w);
        let a = table.get(&gram).copied().unwrap_or(0.0);
        (a - self.discount(n, a)) / total + gamma_mass / total * lower
    }
}
