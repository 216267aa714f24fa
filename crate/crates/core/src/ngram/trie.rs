use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::Arc;

use super::{NgramEntry, NgramTable, SparseEntry, SparseLmQueryResult};
use crate::lm::{ExternalLm, LmState, ScoreVector, TokenId, Vocabulary, LOG_ZERO};
use crate::{Error, Result};

pub type NodeId = u32;

/// The empty context.
pub const ROOT: NodeId = 0;

const NO_PARENT: NodeId = NodeId::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WordArc {
    pub word: TokenId,
    pub log_prob: f64,
}

#[derive(Debug, Clone, Copy)]
struct ContextNode {
    /// Oldest token of the context; the rest of the context is `parent`.
    left: TokenId,
    parent: NodeId,
    depth: u32,
    backoff: f64,
    arcs: (u32, u32),
    longer: (u32, u32),
}

/// Backoff n-gram model stored as sorted arrays.
///
/// Context nodes form a trie over reversed histories: a node's parent is its
/// context minus the oldest token, which is exactly the backoff step. Word
/// arcs of a node are contiguous and sorted by descending probability (ties by
/// ascending id); a second per-node array sorted by id serves point lookups.
#[derive(Debug)]
pub struct NgramModel {
    vocab: Arc<Vocabulary>,
    order: usize,
    nodes: Vec<ContextNode>,
    arcs: Vec<WordArc>,
    by_word: Vec<(TokenId, u32)>,
    longer: Vec<(TokenId, NodeId)>,
    counts: Vec<usize>,
    traversals: AtomicU64,
}

fn by_prob_desc(a: &WordArc, b: &WordArc) -> Ordering {
    b.log_prob.total_cmp(&a.log_prob).then(a.word.cmp(&b.word))
}

impl NgramModel {
    /// Builds the trie from a per-order table. Missing suffix contexts are
    /// created with a zero (log-one) backoff.
    pub fn from_table(vocab: Arc<Vocabulary>, table: &NgramTable) -> Result<Self> {
        let order = table.order();
        if order == 0 {
            return Err(Error::InvalidArgument("n-gram order must be at least 1".into()));
        }
        let mut seen: HashMap<&[TokenId], ()> = HashMap::new();
        let mut contexts: HashMap<Vec<TokenId>, f64> = HashMap::new();
        contexts.insert(Vec::new(), 0.0);
        for (n, entries) in table.entries.iter().enumerate() {
            for entry in entries {
                if entry.tokens.len() != n + 1 {
                    return Err(Error::InvalidArgument(format!(
                        "{}-gram listed under order {}",
                        entry.tokens.len(),
                        n + 1
                    )));
                }
                if entry.log_prob.is_nan() || entry.backoff.is_some_and(f64::is_nan) {
                    return Err(Error::NanInput);
                }
                for &t in &entry.tokens {
                    vocab.check(t)?;
                }
                if seen.insert(&entry.tokens, ()).is_some() {
                    return Err(Error::InvalidArgument(format!(
                        "duplicate n-gram {:?}",
                        vocab.decode(&entry.tokens)
                    )));
                }
                if n + 1 < order {
                    if let Some(b) = entry.backoff {
                        contexts.insert(entry.tokens.clone(), b);
                    }
                }
            }
        }
        for entries in &table.entries[1..] {
            for entry in entries {
                let ctx = &entry.tokens[..entry.tokens.len() - 1];
                contexts.entry(ctx.to_vec()).or_insert(0.0);
            }
        }
        let explicit: Vec<Vec<TokenId>> = contexts.keys().cloned().collect();
        for ctx in explicit {
            for start in 1..ctx.len() {
                contexts.entry(ctx[start..].to_vec()).or_insert(0.0);
            }
        }

        let mut ordered: Vec<(Vec<TokenId>, f64)> = contexts.into_iter().collect();
        ordered.sort_by(|a, b| a.0.len().cmp(&b.0.len()).then_with(|| a.0.cmp(&b.0)));
        let ids: HashMap<Vec<TokenId>, NodeId> = ordered
            .iter()
            .enumerate()
            .map(|(i, (ctx, _))| (ctx.clone(), i as NodeId))
            .collect();

        let mut node_arcs: Vec<Vec<WordArc>> = vec![Vec::new(); ordered.len()];
        for entries in &table.entries {
            for entry in entries {
                let (ctx, word) = entry.tokens.split_at(entry.tokens.len() - 1);
                node_arcs[ids[ctx] as usize].push(WordArc {
                    word: word[0],
                    log_prob: entry.log_prob,
                });
            }
        }
        let mut node_longer: Vec<Vec<(TokenId, NodeId)>> = vec![Vec::new(); ordered.len()];
        for (i, (ctx, _)) in ordered.iter().enumerate().skip(1) {
            node_longer[ids[&ctx[1..]] as usize].push((ctx[0], i as NodeId));
        }

        let mut nodes = Vec::with_capacity(ordered.len());
        let mut arcs = Vec::new();
        let mut by_word = Vec::new();
        let mut longer = Vec::new();
        for (i, (ctx, backoff)) in ordered.iter().enumerate() {
            let mut node_arc = std::mem::take(&mut node_arcs[i]);
            node_arc.sort_by(by_prob_desc);
            let start = arcs.len() as u32;
            let mut index: Vec<(TokenId, u32)> = node_arc
                .iter()
                .enumerate()
                .map(|(k, a)| (a.word, start + k as u32))
                .collect();
            index.sort_unstable_by_key(|&(w, _)| w);
            arcs.extend(node_arc);
            by_word.extend(index);
            let end = arcs.len() as u32;

            let mut node_long = std::mem::take(&mut node_longer[i]);
            node_long.sort_unstable_by_key(|&(t, _)| t);
            let lstart = longer.len() as u32;
            longer.extend(node_long);

            nodes.push(ContextNode {
                left: ctx.first().copied().unwrap_or(0),
                parent: if ctx.is_empty() { NO_PARENT } else { ids[&ctx[1..]] },
                depth: ctx.len() as u32,
                backoff: *backoff,
                arcs: (start, end),
                longer: (lstart, longer.len() as u32),
            });
        }

        Ok(NgramModel {
            vocab,
            order,
            nodes,
            arcs,
            by_word,
            longer,
            counts: table.entries.iter().map(Vec::len).collect(),
            traversals: AtomicU64::new(0),
        })
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Number of stored n-grams per order.
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_ngrams(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Trie traversals performed so far (node resolutions and arc scans).
    pub fn traversals(&self) -> u64 {
        self.traversals.load(AtomicOrdering::Relaxed)
    }

    fn count_traversal(&self) {
        self.traversals.fetch_add(1, AtomicOrdering::Relaxed);
    }

    /// The last `order - 1` tokens of `history`.
    pub fn truncate<'h>(&self, history: &'h [TokenId]) -> &'h [TokenId] {
        let keep = self.order - 1;
        &history[history.len().saturating_sub(keep)..]
    }

    fn child(&self, node: NodeId, token: TokenId) -> Option<NodeId> {
        let (s, e) = self.nodes[node as usize].longer;
        let slice = &self.longer[s as usize..e as usize];
        slice.binary_search_by_key(&token, |&(t, _)| t).ok().map(|k| slice[k].1)
    }

    /// Node of the longest stored suffix of `history`.
    pub fn find_context(&self, history: &[TokenId]) -> NodeId {
        self.count_traversal();
        let mut node = ROOT;
        for &token in self.truncate(history).iter().rev() {
            match self.child(node, token) {
                Some(next) => node = next,
                None => break,
            }
        }
        node
    }

    /// Node whose context is exactly `context`, if stored.
    pub fn exact_context(&self, context: &[TokenId]) -> Option<NodeId> {
        let mut node = ROOT;
        for &token in context.iter().rev() {
            node = self.child(node, token)?;
        }
        Some(node)
    }

    pub fn context_tokens(&self, mut node: NodeId) -> Vec<TokenId> {
        let mut out = Vec::new();
        while node != ROOT {
            let n = &self.nodes[node as usize];
            out.push(n.left);
            node = n.parent;
        }
        out
    }

    pub fn depth(&self, node: NodeId) -> usize {
        self.nodes[node as usize].depth as usize
    }

    pub fn backoff(&self, node: NodeId) -> f64 {
        self.nodes[node as usize].backoff
    }

    pub fn parent(&self, node: NodeId) -> Option<NodeId> {
        let p = self.nodes[node as usize].parent;
        (p != NO_PARENT).then_some(p)
    }

    /// Explicit arcs of a node, most probable first.
    pub fn arcs(&self, node: NodeId) -> &[WordArc] {
        let (s, e) = self.nodes[node as usize].arcs;
        &self.arcs[s as usize..e as usize]
    }

    fn lookup(&self, node: NodeId, word: TokenId) -> Option<f64> {
        let (s, e) = self.nodes[node as usize].arcs;
        let slice = &self.by_word[s as usize..e as usize];
        slice
            .binary_search_by_key(&word, |&(w, _)| w)
            .ok()
            .map(|k| self.arcs[slice[k].1 as usize].log_prob)
    }

    /// Backoff probability of `word` from a resolved context node.
    pub fn logprob_at(&self, mut node: NodeId, word: TokenId) -> f64 {
        self.count_traversal();
        let mut acc = 0.0;
        loop {
            if let Some(lp) = self.lookup(node, word) {
                return acc + lp;
            }
            match self.parent(node) {
                Some(p) => {
                    acc += self.backoff(node);
                    node = p;
                }
                None => return LOG_ZERO,
            }
        }
    }

    /// `ln P(word | history)` with the standard backoff recursion.
    pub fn logprob(&self, word: TokenId, history: &[TokenId]) -> Result<f64> {
        self.vocab.check(word)?;
        Ok(self.logprob_at(self.find_context(history), word))
    }

    /// Fallback enumeration from a resolved node: explicit arcs of the node in
    /// descending order, then arcs of successively shorter contexts scaled by
    /// the accumulated backoff, skipping words already emitted, until `r`
    /// entries are collected or the unigram level is exhausted.
    pub fn top_r_at(&self, mut node: NodeId, r: usize) -> SparseLmQueryResult {
        self.count_traversal();
        let r = r.min(self.vocab.len());
        let mut seen = vec![0u64; self.vocab.len().div_ceil(64)];
        let mut entries = Vec::with_capacity(r);
        let mut acc = 0.0;
        'levels: loop {
            let order = self.depth(node) as u8 + 1;
            for arc in self.arcs(node) {
                if entries.len() == r {
                    break 'levels;
                }
                let (word_idx, bit) = (arc.word as usize / 64, 1u64 << (arc.word % 64));
                if seen[word_idx] & bit != 0 {
                    continue;
                }
                seen[word_idx] |= bit;
                entries.push(SparseEntry {
                    word: arc.word,
                    log_prob: acc + arc.log_prob,
                    order,
                });
            }
            if entries.len() == r {
                break;
            }
            match self.parent(node) {
                Some(p) => {
                    acc += self.backoff(node);
                    node = p;
                }
                None => break,
            }
        }
        SparseLmQueryResult { entries }
    }

    pub fn top_r(&self, history: &[TokenId], r: usize) -> Result<SparseLmQueryResult> {
        if r == 0 {
            return Err(Error::InvalidArgument("rank limit r must be at least 1".into()));
        }
        Ok(self.top_r_at(self.find_context(history), r))
    }

    /// Dense distribution over the vocabulary, bit-identical to [`Self::logprob_at`].
    pub fn full_dist_at(&self, node: NodeId) -> Vec<f64> {
        let mut dense = vec![LOG_ZERO; self.vocab.len()];
        for e in self.top_r_at(node, self.vocab.len()).entries {
            dense[e.word as usize] = e.log_prob;
        }
        dense
    }

    /// Flattens the trie back into a per-order table sorted by token ids.
    pub fn to_table(&self) -> NgramTable {
        let mut entries: Vec<Vec<NgramEntry>> = vec![Vec::new(); self.order];
        for node in 0..self.nodes.len() as NodeId {
            let ctx = self.context_tokens(node);
            for arc in self.arcs(node) {
                let mut tokens = ctx.clone();
                tokens.push(arc.word);
                let backoff = if tokens.len() < self.order {
                    self.exact_context(&tokens).map(|n| self.backoff(n))
                } else {
                    None
                };
                entries[tokens.len() - 1].push(NgramEntry {
                    tokens,
                    log_prob: arc.log_prob,
                    backoff,
                });
            }
        }
        for list in &mut entries {
            list.sort_by(|a, b| a.tokens.cmp(&b.tokens));
        }
        NgramTable { entries }
    }

    /// Verifies the sorted-node layout. Used by tests and after loading.
    pub fn check_sorted(&self) -> bool {
        (0..self.nodes.len() as NodeId).all(|n| {
            self.arcs(n)
                .windows(2)
                .all(|w| by_prob_desc(&w[0], &w[1]) != Ordering::Greater)
        })
    }
}

impl ExternalLm for NgramModel {
    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn initial_state(&self) -> LmState {
        let history = match self.vocab.bos() {
            Ok(bos) if self.order > 1 => vec![bos],
            _ => Vec::new(),
        };
        LmState::new(history)
    }

    fn advance(&self, state: &LmState, token: TokenId) -> LmState {
        let mut history = state.ids().to_vec();
        history.push(token);
        LmState::new(self.truncate(&history).to_vec())
    }

    fn full_dist(&self, state: &LmState) -> ScoreVector {
        ScoreVector::full_unchecked(self.full_dist_at(self.find_context(state.ids())), true)
    }

    fn top_r(&self, state: &LmState, r: usize) -> ScoreVector {
        self.top_r_at(self.find_context(state.ids()), r.max(1))
            .to_score_vector()
    }
}
