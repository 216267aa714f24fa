use std::ops::AddAssign;

use crate::{Error, Result};

/// Substitution, insertion and deletion counts against a reference of `n` words.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub sub: usize,
    pub ins: usize,
    pub del: usize,
    pub n: usize,
}

impl EditCounts {
    pub fn errors(&self) -> usize {
        self.sub + self.ins + self.del
    }

    pub fn wer(&self) -> f64 {
        self.errors() as f64 / self.n as f64
    }
}

impl AddAssign for EditCounts {
    fn add_assign(&mut self, o: Self) {
        self.sub += o.sub;
        self.ins += o.ins;
        self.del += o.del;
        self.n += o.n;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignOp {
    Match,
    Sub,
    /// Hypothesis word with no reference counterpart.
    Ins,
    /// Reference word missing from the hypothesis.
    Del,
}

/// Minimum edit distance alignment with unit costs.
///
/// Among alignments with the fewest edits, one with the fewest insertions and
/// deletions is chosen, so substitutions win over ins+del pairs.
pub fn align<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Vec<AlignOp> {
    let (m, n) = (reference.len(), hypothesis.len());
    // (edits, ins + del), compared lexicographically.
    let mut cost = vec![(0usize, 0usize); (m + 1) * (n + 1)];
    let at = |i: usize, j: usize| i * (n + 1) + j;
    for i in 0..=m {
        for j in 0..=n {
            cost[at(i, j)] = match (i, j) {
                (0, 0) => (0, 0),
                (0, _) => (j, j),
                (_, 0) => (i, i),
                _ => {
                    let same = reference[i - 1] == hypothesis[j - 1];
                    let (e, g) = cost[at(i - 1, j - 1)];
                    let diag = (e + usize::from(!same), g);
                    let (e, g) = cost[at(i - 1, j)];
                    let del = (e + 1, g + 1);
                    let (e, g) = cost[at(i, j - 1)];
                    let ins = (e + 1, g + 1);
                    diag.min(del).min(ins)
                }
            };
        }
    }

    let mut ops = Vec::with_capacity(m.max(n));
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        let here = cost[at(i, j)];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            let (e, g) = cost[at(i - 1, j - 1)];
            if (e + usize::from(!same), g) == here {
                ops.push(if same { AlignOp::Match } else { AlignOp::Sub });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 {
            let (e, g) = cost[at(i - 1, j)];
            if (e + 1, g + 1) == here {
                ops.push(AlignOp::Del);
                i -= 1;
                continue;
            }
        }
        ops.push(AlignOp::Ins);
        j -= 1;
    }
    ops.reverse();
    ops
}

pub fn counts(ops: &[AlignOp]) -> EditCounts {
    let mut c = EditCounts::default();
    for op in ops {
        match op {
            AlignOp::Match => c.n += 1,
            AlignOp::Sub => {
                c.sub += 1;
                c.n += 1
            }
            AlignOp::Del => {
                c.del += 1;
                c.n += 1
            }
            AlignOp::Ins => c.ins += 1,
        }
    }
    c
}

/// Word-level edit counts. An empty reference is an error.
pub fn wer<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> Result<EditCounts> {
    if reference.is_empty() {
        return Err(Error::InvalidArgument("WER is undefined for an empty reference".into()));
    }
    Ok(counts(&align(reference, hypothesis)))
}

/// Counts reference words flagged in `mask` that are substituted or deleted.
pub fn flagged_errors(ops: &[AlignOp], mask: &[bool]) -> (usize, usize) {
    let mut i = 0;
    let (mut total, mut wrong) = (0, 0);
    for op in ops {
        if *op == AlignOp::Ins {
            continue;
        }
        if mask.get(i).copied().unwrap_or(false) {
            total += 1;
            if *op != AlignOp::Match {
                wrong += 1;
            }
        }
        i += 1;
    }
    (total, wrong)
}
