//! Class-based n-gram LM with prefix-tree class expansions.
//!
//! The n-gram part runs over word-pieces plus class tags. Tags never reach the
//! decoder: entering a class emits the first word-piece of one of its entries
//! and the tag joins the history only once the class is left.

mod defs;
mod prefix_tree;

use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::Arc;

pub use defs::ClassDefinitions;
pub use prefix_tree::{PrefixTree, PtArc, PtNodeId};

use crate::lm::{is_class_tag, TokenId, Vocabulary, LOG_ZERO};
use crate::ngram::{load_arpa, train_kneser_ney, CachedNgram, NgramModel, NodeId};
use crate::{Error, Result};

#[derive(Debug)]
pub struct ClassDef {
    pub tag: String,
    pub tag_id: TokenId,
    pub tree: PrefixTree,
}

/// Position inside a class expansion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ClassPos {
    pub class: usize,
    pub node: PtNodeId,
}

/// Search state of the class LM.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ClmState {
    /// Tagged-vocabulary history, at most `order - 1` tokens.
    pub history: Vec<TokenId>,
    pub active: Option<ClassPos>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    /// Word from the n-gram part.
    Cat1,
    /// First word of an entry of `class`.
    Cat2 { class: usize },
    /// Next word inside the active class.
    Cat3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub category: Category,
    pub word: TokenId,
    pub log_prob: f64,
}

/// Words whose encoder score ranks below `r′` in the current frame.
#[derive(Debug, Clone)]
pub struct RankGate {
    allowed: Option<Vec<bool>>,
    ids: Vec<TokenId>,
}

impl RankGate {
    /// Ranks by descending score, ties by ascending id.
    pub fn new(scores: &[f64], r: usize) -> Self {
        if r >= scores.len() {
            return Self::open(scores.len());
        }
        let mut order: Vec<TokenId> = (0..scores.len() as TokenId).collect();
        let cmp = |a: &TokenId, b: &TokenId| scores[*b as usize].total_cmp(&scores[*a as usize]).then(a.cmp(b));
        if r > 0 {
            order.select_nth_unstable_by(r - 1, cmp);
        }
        order.truncate(r);
        order.sort_unstable();
        let mut allowed = vec![false; scores.len()];
        for &w in &order {
            allowed[w as usize] = true;
        }
        RankGate {
            allowed: Some(allowed),
            ids: order,
        }
    }

    pub fn open(size: usize) -> Self {
        RankGate {
            allowed: None,
            ids: (0..size as TokenId).collect(),
        }
    }

    pub fn is_open(&self) -> bool {
        self.allowed.is_none()
    }

    pub fn allows(&self, word: TokenId) -> bool {
        match &self.allowed {
            None => true,
            Some(a) => a.get(word as usize).copied().unwrap_or(false),
        }
    }

    /// Allowed ids in ascending order.
    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }
}

/// Outgoing transitions of one state.
///
/// CAT1 covers every word-piece and is kept implicit as the n-gram
/// distribution at `exit_node` shifted by `exit_log_prob`.
#[derive(Debug, Clone)]
pub struct TransitionSets {
    pub exit_log_prob: f64,
    pub exit_history: Vec<TokenId>,
    pub exit_node: NodeId,
    dense: Option<Arc<[f64]>>,
    words: usize,
    pub cat2: Vec<Transition>,
    pub cat3: Vec<Transition>,
}

impl TransitionSets {
    pub fn cat1_available(&self) -> bool {
        self.dense.is_some()
    }

    /// `ln P_ng(w | h′)` over the tagged vocabulary, if CAT1 is available.
    pub fn ngram_dist(&self) -> Option<&Arc<[f64]>> {
        self.dense.as_ref()
    }

    /// CAT1 transitions with non-zero probability, in word order.
    pub fn cat1(&self) -> impl Iterator<Item = Transition> + '_ {
        let exit = self.exit_log_prob;
        self.dense
            .iter()
            .flat_map(move |d| d[..self.words].iter().enumerate())
            .filter(|(_, lp)| **lp > LOG_ZERO)
            .map(move |(w, lp)| Transition {
                category: Category::Cat1,
                word: w as TokenId,
                log_prob: exit + lp,
            })
    }

    pub fn is_empty(&self) -> bool {
        !self.cat1_available() && self.cat2.is_empty() && self.cat3.is_empty()
    }
}

/// Tagged n-gram model plus one prefix tree per class.
#[derive(Debug)]
pub struct ClassModel {
    words: Arc<Vocabulary>,
    ngram: CachedNgram,
    classes: Vec<ClassDef>,
    class_of_tag: HashMap<TokenId, usize>,
}

impl ClassModel {
    /// Combines a tagged n-gram model with class definitions.
    ///
    /// The tagged vocabulary must start with `words` and continue with class
    /// tags only. Definitions for tags the n-gram model does not know are
    /// ignored.
    pub fn new(words: Arc<Vocabulary>, ngram: Arc<NgramModel>, defs: &ClassDefinitions) -> Result<Self> {
        let tagged = ngram.vocab().clone();
        if tagged.len() < words.len() || tagged.tokens()[..words.len()] != *words.tokens() {
            return Err(Error::InvalidClass(
                "tagged vocabulary does not extend the word vocabulary".into(),
            ));
        }
        if let Some(t) = words.tokens().iter().find(|t| is_class_tag(t)) {
            return Err(Error::InvalidClass(format!("word vocabulary contains class tag {t}")));
        }
        let mut classes = Vec::new();
        let mut undefined = Vec::new();
        for (k, tag) in tagged.tokens()[words.len()..].iter().enumerate() {
            if !is_class_tag(tag) {
                return Err(Error::InvalidClass(format!("{tag:?} is not a class tag")));
            }
            let Some(entries) = defs.entries(tag) else {
                undefined.push(tag.clone());
                continue;
            };
            let encoded = entries
                .iter()
                .map(|(pieces, weight)| {
                    let seq = pieces.iter().map(|p| words.id(p)).collect::<Result<Vec<_>>>()?;
                    Ok((seq, *weight))
                })
                .collect::<Result<Vec<_>>>()?;
            classes.push(ClassDef {
                tag: tag.clone(),
                tag_id: (words.len() + k) as TokenId,
                tree: PrefixTree::build(&encoded)?,
            });
        }
        if !undefined.is_empty() {
            return Err(Error::UndefinedClasses(undefined));
        }
        for tag in defs.tags() {
            if tagged.get(tag).is_none() {
                log::warn!("class {tag} does not occur in the tagged n-gram model; ignored");
            }
        }
        let class_of_tag = classes.iter().enumerate().map(|(i, c)| (c.tag_id, i)).collect();
        Ok(ClassModel {
            words,
            ngram: CachedNgram::new(ngram),
            classes,
            class_of_tag,
        })
    }

    /// Trains the tagged n-gram part on whitespace-tokenized sentences.
    pub fn train(
        words: Arc<Vocabulary>,
        corpus: &[Vec<String>],
        defs: &ClassDefinitions,
        order: usize,
    ) -> Result<Self> {
        let mut used = BTreeSet::new();
        for sentence in corpus {
            for token in sentence {
                if is_class_tag(token) {
                    used.insert(token.as_str());
                } else {
                    words.id(token)?;
                }
            }
        }
        let undefined: Vec<String> = used
            .iter()
            .filter(|t| defs.entries(t).is_none())
            .map(|t| t.to_string())
            .collect();
        if !undefined.is_empty() {
            return Err(Error::UndefinedClasses(undefined));
        }
        let tagged = Arc::new(words.extended(defs.tags())?);
        let ids = corpus
            .iter()
            .map(|s| s.iter().map(|t| tagged.id(t)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let ngram = train_kneser_ney(&ids, tagged, order)?;
        Self::new(words, Arc::new(ngram), defs)
    }

    /// Loads a tagged ARPA model and a class definition file.
    pub fn load(words: Arc<Vocabulary>, arpa: impl AsRef<Path>, classes: impl AsRef<Path>) -> Result<Self> {
        let defs = ClassDefinitions::load(classes)?;
        let tagged = Arc::new(words.extended(defs.tags())?);
        let ngram = load_arpa(arpa, Some(tagged))?;
        Self::new(words, Arc::new(ngram), &defs)
    }

    pub fn words(&self) -> &Arc<Vocabulary> {
        &self.words
    }

    pub fn tagged_vocab(&self) -> &Arc<Vocabulary> {
        self.ngram.model().vocab()
    }

    pub fn ngram(&self) -> &CachedNgram {
        &self.ngram
    }

    pub fn order(&self) -> usize {
        self.ngram.model().order()
    }

    pub fn classes(&self) -> &[ClassDef] {
        &self.classes
    }

    pub fn class_of_tag(&self, tag: TokenId) -> Option<usize> {
        self.class_of_tag.get(&tag).copied()
    }

    pub fn initial_state(&self) -> ClmState {
        let history = match self.words.bos() {
            Ok(bos) if self.order() > 1 => vec![bos],
            _ => Vec::new(),
        };
        ClmState { history, active: None }
    }

    fn extend(&self, history: &[TokenId], token: TokenId) -> Vec<TokenId> {
        let mut h = history.to_vec();
        h.push(token);
        self.ngram.model().truncate(&h).to_vec()
    }

    /// Probability of leaving the active class (1 outside classes).
    pub fn exit_prob(&self, state: &ClmState) -> f64 {
        match state.active {
            None => 1.0,
            Some(pos) => self.classes[pos.class].tree.exit_prob(pos.node),
        }
    }

    pub fn cat1_available(&self, state: &ClmState) -> bool {
        self.exit_prob(state) > 0.0
    }

    /// History after leaving the active class.
    pub fn exit_history(&self, state: &ClmState) -> Vec<TokenId> {
        match state.active {
            None => state.history.clone(),
            Some(pos) => self.extend(&state.history, self.classes[pos.class].tag_id),
        }
    }

    /// Enumerates CAT1/2/3 transitions; CAT2 and CAT3 words must pass `gate`.
    pub fn enumerate_transitions(&self, state: &ClmState, gate: &RankGate) -> TransitionSets {
        let mut cat3 = Vec::new();
        if let Some(pos) = state.active {
            for arc in self.classes[pos.class].tree.children(pos.node) {
                if gate.allows(arc.word) {
                    cat3.push(Transition {
                        category: Category::Cat3,
                        word: arc.word,
                        log_prob: arc.prob.ln(),
                    });
                }
            }
        }
        let exit = self.exit_prob(state);
        let exit_history = self.exit_history(state);
        let exit_node = self.ngram.node(&exit_history);
        let mut cat2 = Vec::new();
        let mut dense = None;
        if exit > 0.0 {
            let exit_lp = exit.ln();
            let dist = self.ngram.dense_at(exit_node);
            for (ci, class) in self.classes.iter().enumerate() {
                let tag_lp = dist[class.tag_id as usize];
                if tag_lp == LOG_ZERO {
                    continue;
                }
                let root = class.tree.children(PrefixTree::ROOT);
                let mut push = |arc: &PtArc| {
                    cat2.push(Transition {
                        category: Category::Cat2 { class: ci },
                        word: arc.word,
                        log_prob: exit_lp + tag_lp + arc.prob.ln(),
                    })
                };
                if gate.is_open() || root.len() <= gate.ids().len() {
                    root.iter().filter(|a| gate.allows(a.word)).for_each(&mut push);
                } else {
                    gate.ids()
                        .iter()
                        .filter_map(|&w| class.tree.child(PrefixTree::ROOT, w))
                        .for_each(&mut push);
                }
            }
            dense = Some(dist);
        }
        TransitionSets {
            exit_log_prob: if exit > 0.0 { exit.ln() } else { LOG_ZERO },
            exit_history,
            exit_node,
            dense,
            words: self.words.len(),
            cat2,
            cat3,
        }
    }

    /// Successor state after taking `t` from `state`.
    pub fn advance(&self, state: &ClmState, t: &Transition) -> Result<ClmState> {
        let mismatch = |msg: &str| Error::TransitionMismatch(format!("{:?} word {}: {msg}", t.category, t.word));
        match t.category {
            Category::Cat1 => {
                if t.word as usize >= self.words.len() {
                    return Err(mismatch("not a word-piece"));
                }
                if !self.cat1_available(state) {
                    return Err(mismatch("active class cannot end here"));
                }
                Ok(ClmState {
                    history: self.extend(&self.exit_history(state), t.word),
                    active: None,
                })
            }
            Category::Cat2 { class } => {
                let def = self.classes.get(class).ok_or_else(|| mismatch("no such class"))?;
                if !self.cat1_available(state) {
                    return Err(mismatch("active class cannot end here"));
                }
                let arc = def
                    .tree
                    .child(PrefixTree::ROOT, t.word)
                    .ok_or_else(|| mismatch("word does not start an entry"))?;
                Ok(ClmState {
                    history: self.exit_history(state),
                    active: Some(ClassPos { class, node: arc.child }),
                })
            }
            Category::Cat3 => {
                let pos = state.active.ok_or_else(|| mismatch("no active class"))?;
                let arc = self.classes[pos.class]
                    .tree
                    .child(pos.node, t.word)
                    .ok_or_else(|| mismatch("word does not continue the entry"))?;
                Ok(ClmState {
                    history: state.history.clone(),
                    active: Some(ClassPos {
                        class: pos.class,
                        node: arc.child,
                    }),
                })
            }
        }
    }
}
