use std::collections::HashMap;
use std::hash::Hash;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use super::{NgramModel, NodeId, SparseLmQueryResult};
use crate::lm::{ExternalLm, LmState, ScoreVector, TokenId};
use crate::{Error, Result};

#[derive(Debug)]
struct Memo<K, V>(RwLock<HashMap<K, V>>);

impl<K: Eq + Hash, V: Clone> Memo<K, V> {
    fn new() -> Self {
        Memo(RwLock::new(HashMap::new()))
    }

    fn get_or_insert_with(&self, key: K, make: impl FnOnce() -> V) -> V {
        if let Some(v) = self.0.read().expect("cache lock poisoned").get(&key) {
            return v.clone();
        }
        let value = make();
        self.0
            .write()
            .expect("cache lock poisoned")
            .entry(key)
            .or_insert(value)
            .clone()
    }

    fn clear(&self) {
        self.0.write().expect("cache lock poisoned").clear();
    }
}

/// Memoizing wrapper around an [`NgramModel`].
///
/// Histories are resolved to context nodes once; rank-limited results are
/// keyed by `(node, r)` and dense distributions by node. Cached answers are
/// identical to uncached ones. Caches grow without bound until [`clear`](Self::clear).
#[derive(Debug)]
pub struct CachedNgram {
    model: Arc<NgramModel>,
    nodes: Memo<Vec<TokenId>, NodeId>,
    ranked: Memo<(NodeId, usize), Arc<SparseLmQueryResult>>,
    dense: Memo<NodeId, Arc<[f64]>>,
    calls: AtomicU64,
}

impl CachedNgram {
    pub fn new(model: Arc<NgramModel>) -> Self {
        CachedNgram {
            model,
            nodes: Memo::new(),
            ranked: Memo::new(),
            dense: Memo::new(),
            calls: AtomicU64::new(0),
        }
    }

    pub fn model(&self) -> &Arc<NgramModel> {
        &self.model
    }

    /// Number of queries answered, cached or not.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn clear(&self) {
        self.nodes.clear();
        self.ranked.clear();
        self.dense.clear();
    }

    pub fn node(&self, history: &[TokenId]) -> NodeId {
        let history = self.model.truncate(history);
        self.nodes
            .get_or_insert_with(history.to_vec(), || self.model.find_context(history))
    }

    pub fn top_r_at(&self, node: NodeId, r: usize) -> Arc<SparseLmQueryResult> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.ranked
            .get_or_insert_with((node, r), || Arc::new(self.model.top_r_at(node, r)))
    }

    pub fn top_r(&self, history: &[TokenId], r: usize) -> Result<Arc<SparseLmQueryResult>> {
        if r == 0 {
            return Err(Error::InvalidArgument("rank limit r must be at least 1".into()));
        }
        Ok(self.top_r_at(self.node(history), r))
    }

    pub fn dense_at(&self, node: NodeId) -> Arc<[f64]> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.dense
            .get_or_insert_with(node, || self.model.full_dist_at(node).into())
    }

    pub fn logprob(&self, word: TokenId, history: &[TokenId]) -> Result<f64> {
        self.model.vocab().check(word)?;
        Ok(self.dense_at(self.node(history))[word as usize])
    }
}

impl ExternalLm for CachedNgram {
    fn vocab_size(&self) -> usize {
        self.model.vocab().len()
    }

    fn initial_state(&self) -> LmState {
        self.model.initial_state()
    }

    fn advance(&self, state: &LmState, token: TokenId) -> LmState {
        self.model.advance(state, token)
    }

    fn full_dist(&self, state: &LmState) -> ScoreVector {
        let dense = self.dense_at(self.node(state.ids()));
        ScoreVector::full_unchecked(dense.to_vec(), true)
    }

    fn top_r(&self, state: &LmState, r: usize) -> ScoreVector {
        self.top_r_at(self.node(state.ids()), r.max(1)).to_score_vector()
    }
}
