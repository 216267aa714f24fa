use std::collections::BTreeMap;

use crate::lm::TokenId;
use crate::{Error, Result};

pub type PtNodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PtArc {
    pub word: TokenId,
    pub child: PtNodeId,
    /// Probability of continuing with `word` from the parent node.
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct PtNode {
    children: Vec<PtArc>,
    exit: f64,
}

/// Trie over the word-piece sequences of one class.
///
/// Every node stores the posterior of each child and of ending the entry
/// there, computed from the weights of the entries passing through the node.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixTree {
    nodes: Vec<PtNode>,
    entries: usize,
}

impl PrefixTree {
    pub const ROOT: PtNodeId = 0;

    /// Builds the tree; duplicate entries have their weights summed.
    pub fn build(entries: &[(Vec<TokenId>, f64)]) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidClass("class has no entries".into()));
        }
        struct Acc {
            children: BTreeMap<TokenId, usize>,
            through: f64,
            ending: f64,
        }
        let new_acc = || Acc {
            children: BTreeMap::new(),
            through: 0.0,
            ending: 0.0,
        };
        let mut acc = vec![new_acc()];
        let mut distinct = std::collections::HashSet::new();
        for (seq, weight) in entries {
            if seq.is_empty() {
                return Err(Error::InvalidClass("empty class entry".into()));
            }
            if !(weight.is_finite() && *weight > 0.0) {
                return Err(Error::InvalidClass(format!("entry weight {weight} is not positive")));
            }
            distinct.insert(seq.clone());
            let mut node = 0;
            acc[node].through += weight;
            for &w in seq {
                let next = match acc[node].children.get(&w) {
                    Some(&c) => c,
                    None => {
                        acc.push(new_acc());
                        let c = acc.len() - 1;
                        acc[node].children.insert(w, c);
                        c
                    }
                };
                node = next;
                acc[node].through += weight;
            }
            acc[node].ending += weight;
        }
        let nodes = acc
            .iter()
            .map(|a| PtNode {
                children: a
                    .children
                    .iter()
                    .map(|(&word, &child)| PtArc {
                        word,
                        child,
                        prob: acc[child].through / a.through,
                    })
                    .collect(),
                exit: a.ending / a.through,
            })
            .collect();
        Ok(PrefixTree {
            nodes,
            entries: distinct.len(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Number of distinct entries.
    pub fn num_entries(&self) -> usize {
        self.entries
    }

    /// Child arcs ordered by word id.
    pub fn children(&self, node: PtNodeId) -> &[PtArc] {
        &self.nodes[node].children
    }

    pub fn child(&self, node: PtNodeId, word: TokenId) -> Option<&PtArc> {
        let children = &self.nodes[node].children;
        children
            .binary_search_by_key(&word, |a| a.word)
            .ok()
            .map(|k| &children[k])
    }

    /// Probability of leaving the class at `node`.
    pub fn exit_prob(&self, node: PtNodeId) -> f64 {
        self.nodes[node].exit
    }

    /// Follows `path` from the root.
    pub fn walk(&self, path: &[TokenId]) -> Option<PtNodeId> {
        path.iter()
            .try_fold(Self::ROOT, |node, &w| self.child(node, w).map(|a| a.child))
    }
}
