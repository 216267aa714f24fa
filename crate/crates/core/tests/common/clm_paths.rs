//! Path sums through the class LM's own transition system.

use fnt_core::classlm::{ClassModel, ClmState, RankGate, Transition};
use fnt_core::lm::TokenId;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Sum over all state paths that emit exactly `words`, with gating disabled.
pub fn path_mass(clm: &ClassModel, words: &[TokenId]) -> f64 {
    let gate = RankGate::open(clm.words().len());
    fn go(clm: &ClassModel, gate: &RankGate, s: &ClmState, rest: &[TokenId]) -> f64 {
        let Some((&w, tail)) = rest.split_first() else {
            return 1.0;
        };
        let sets = clm.enumerate_transitions(s, gate);
        let mut total = 0.0;
        let all = sets
            .cat1()
            .filter(|t| t.word == w)
            .chain(sets.cat2.iter().copied().filter(|t| t.word == w))
            .chain(sets.cat3.iter().copied().filter(|t| t.word == w));
        for t in all {
            let next = clm.advance(s, &t).unwrap();
            total += t.log_prob.exp() * go(clm, gate, &next, tail);
        }
        total
    }
    go(clm, &gate, &clm.initial_state(), words)
}

/// Total outgoing probability of `state` with gating disabled.
pub fn outgoing_mass(clm: &ClassModel, state: &ClmState) -> f64 {
    let sets = clm.enumerate_transitions(state, &RankGate::open(clm.words().len()));
    sets.cat1()
        .chain(sets.cat2.iter().copied())
        .chain(sets.cat3.iter().copied())
        .map(|t| t.log_prob.exp())
        .sum()
}

/// Reachable states by random walks over CAT1/2/3 transitions.
pub fn random_states(clm: &ClassModel, rng: &mut ChaCha8Rng, count: usize) -> Vec<ClmState> {
    let gate = RankGate::open(clm.words().len());
    let mut out = Vec::new();
    while out.len() < count {
        let mut s = clm.initial_state();
        for _ in 0..rng.random_range(0..6) {
            let sets = clm.enumerate_transitions(&s, &gate);
            let mut options: Vec<Transition> = sets.cat1().collect();
            options.extend(sets.cat2.iter().copied());
            options.extend(sets.cat3.iter().copied());
            options.extend(sets.cat2.iter().copied());
            options.extend(sets.cat3.iter().copied());
            let t = options[rng.random_range(0..options.len())];
            s = clm.advance(&s, &t).unwrap();
        }
        out.push(s);
    }
    out
}
