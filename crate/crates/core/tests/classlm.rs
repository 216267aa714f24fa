mod common;

use std::collections::HashMap;
use std::sync::Arc;

use common::clm_oracle::FlatClm;
use common::clm_paths::{outgoing_mass, path_mass, random_states};
use common::fixtures;
use fnt_core::classlm::{ClassDefinitions, ClassModel, PrefixTree, RankGate, Transition};
use fnt_core::lm::{TokenId, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sequences(alphabet: &[TokenId], max_len: usize) -> Vec<Vec<TokenId>> {
    let mut out = vec![vec![]];
    let mut frontier = vec![vec![]];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for s in &frontier {
            for &w in alphabet {
                let mut t: Vec<TokenId> = s.clone();
                t.push(w);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

#[test]
fn path_mass_matches_flattened_oracle() {
    for seed in 0..12 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = fixtures::vocab(3);
        let order = rng.random_range(2..=3);
        let (clm, defs) = fixtures::clm_with_defs(&mut rng, &vocab, 2, order);
        let flat = FlatClm::new(&clm, &defs);
        for seq in sequences(&[2, 3, 4], 4) {
            let got = path_mass(&clm, &seq);
            let want = flat.prefix_mass(&seq);
            assert!((got - want).abs() < 1e-9, "seed {seed} {seq:?}: {got} vs {want}");
        }
    }
}

#[test]
fn prefix_masses_sum_to_one_per_length() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let vocab = fixtures::vocab(2);
    let (clm, _) = fixtures::clm_with_defs(&mut rng, &vocab, 2, 3);
    // Every token, end marker included, so each length partitions the mass.
    for len in 1..=3 {
        let total: f64 = sequences(&[1, 2, 3], len)
            .iter()
            .filter(|s| s.len() == len)
            .map(|s| path_mass(&clm, s))
            .sum();
        assert!((total - 1.0).abs() < 1e-9, "length {len}: {total}");
    }
}

#[test]
fn transition_mass_is_conserved() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for _ in 0..10 {
        let vocab = fixtures::vocab(rng.random_range(2..=5));
        let order = rng.random_range(2..=4);
        let classes = rng.random_range(1..=3);
        let clm = fixtures::clm(&mut rng, &vocab, classes, order);
        for s in random_states(&clm, &mut rng, 25) {
            let m = outgoing_mass(&clm, &s);
            assert!((m - 1.0).abs() < 1e-9, "{s:?}: {m}");
            checked += 1;
        }
    }
    assert!(checked >= 200);
}

#[test]
fn gating_only_removes_transitions() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let vocab = fixtures::vocab(5);
    let clm = fixtures::clm(&mut rng, &vocab, 3, 3);
    for s in random_states(&clm, &mut rng, 50) {
        let scores: Vec<f64> = (0..vocab.len()).map(|_| rng.random_range(-5.0..0.0)).collect();
        let mut last: Option<(Vec<Transition>, Vec<Transition>)> = None;
        for r in 1..=vocab.len() {
            let sets = clm.enumerate_transitions(&s, &RankGate::new(&scores, r));
            if let Some((c2, c3)) = &last {
                assert!(c2.iter().all(|t| sets.cat2.contains(t)));
                assert!(c3.iter().all(|t| sets.cat3.contains(t)));
            }
            last = Some((sets.cat2.clone(), sets.cat3.clone()));
        }
        let open = clm.enumerate_transitions(&s, &RankGate::open(vocab.len()));
        let (c2, c3) = last.unwrap();
        assert_eq!(c2, open.cat2);
        assert_eq!(c3, open.cat3);
    }
}

#[test]
fn prefix_tree_matches_direct_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let entries: Vec<(Vec<TokenId>, f64)> = (0..5)
            .map(|_| {
                let len = rng.random_range(1..=3);
                let seq = (0..len).map(|_| rng.random_range(0..3)).collect();
                (seq, rng.random_range(0.5..3.0))
            })
            .collect();
        let tree = PrefixTree::build(&entries).unwrap();
        let through = |p: &[TokenId]| -> f64 { entries.iter().filter(|e| e.0.starts_with(p)).map(|e| e.1).sum() };
        let ending = |p: &[TokenId]| -> f64 { entries.iter().filter(|e| e.0 == p).map(|e| e.1).sum() };
        let mut prefixes: Vec<Vec<TokenId>> = vec![vec![]];
        for (seq, _) in &entries {
            for k in 1..=seq.len() {
                prefixes.push(seq[..k].to_vec());
            }
        }
        for p in &prefixes {
            let node = tree.walk(p).unwrap();
            let total = through(p);
            assert!((tree.exit_prob(node) - ending(p) / total).abs() < 1e-12);
            let mut sum = tree.exit_prob(node);
            for arc in tree.children(node) {
                let mut q = p.clone();
                q.push(arc.word);
                assert!((arc.prob - through(&q) / total).abs() < 1e-12);
                sum += arc.prob;
            }
            assert!((sum - 1.0).abs() < 1e-9);
            assert_eq!(tree.exit_prob(node) > 0.0, ending(p) > 0.0);
        }
        assert_eq!(tree.exit_prob(PrefixTree::ROOT), 0.0);
    }
}

/// Six classes sized 1212, 121, 8, 8, 7, 4 and 35 tagged sentences.
#[test]
fn large_class_inventory_builds() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let pieces: Vec<String> = (0..300).map(|i| format!("\u{2581}p{i}")).collect();
    let mut tokens = vec!["<s>".to_string(), "</s>".to_string()];
    tokens.extend(pieces.iter().cloned());
    let words = Arc::new(Vocabulary::new(tokens).unwrap());
    let names = ["NAME", "CITY", "TYPE", "DAY", "APP", "UNIT"];
    let sizes = [1212, 121, 8, 8, 7, 4];
    let mut defs = ClassDefinitions::new();
    for (name, &size) in names.iter().zip(&sizes) {
        let tag = format!("\u{27e8}{name}\u{27e9}");
        let mut seen = std::collections::HashSet::new();
        while seen.len() < size {
            let len = rng.random_range(1..=3);
            let entry: Vec<String> = (0..len)
                .map(|_| pieces[rng.random_range(0..pieces.len())].clone())
                .collect();
            if seen.insert(entry.clone()) {
                defs.add(&tag, entry, 1.0).unwrap();
            }
        }
    }
    let corpus: Vec<Vec<String>> = (0..35)
        .map(|i| {
            let mut s: Vec<String> = (0..rng.random_range(2..6))
                .map(|_| pieces[rng.random_range(0..50)].clone())
                .collect();
            s.insert(1, format!("\u{27e8}{}\u{27e9}", names[i % names.len()]));
            s
        })
        .collect();
    let clm = ClassModel::train(words.clone(), &corpus, &defs, 5).unwrap();
    let counts: HashMap<&str, usize> = clm
        .classes()
        .iter()
        .map(|c| (c.tag.as_str(), c.tree.num_entries()))
        .collect();
    for (name, &size) in names.iter().zip(&sizes) {
        assert_eq!(counts[format!("\u{27e8}{name}\u{27e9}").as_str()], size);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for s in random_states(&clm, &mut rng, 40) {
        assert!((outgoing_mass(&clm, &s) - 1.0).abs() < 1e-9);
    }
    // Decoder-visible words never include tags.
    let sets = clm.enumerate_transitions(&clm.initial_state(), &RankGate::open(words.len()));
    assert!(sets.cat1().all(|t| (t.word as usize) < words.len()));
}

#[test]
fn definitions_round_trip_through_files() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let vocab = fixtures::vocab(3);
    let (clm, defs) = fixtures::clm_with_defs(&mut rng, &vocab, 2, 3);
    let dir = tempfile::tempdir().unwrap();
    let arpa = dir.path().join("clm.arpa");
    let tsv = dir.path().join("classes.tsv");
    fnt_core::ngram::save_arpa(clm.ngram().model(), &arpa).unwrap();
    defs.save(&tsv).unwrap();
    let back = ClassModel::load(vocab.clone(), &arpa, &tsv).unwrap();
    for seq in sequences(&[2, 3, 4], 3) {
        assert!((path_mass(&clm, &seq) - path_mass(&back, &seq)).abs() < 1e-9);
    }
}
