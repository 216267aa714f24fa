mod common;

use common::align_oracle;
use fnt_core::decoder::DecoderConfig;
use fnt_core::eval::{
    decode_corpus, evaluate_scenario, sweep, wer, EvalReport, Models, Orders, SweepCorpus, ALPHA_GRID,
};
use fnt_core::fusion::{FusionConfig, FusionMethod};
use fnt_core::sim::{synthesize_scenario, Scenario, ScenarioSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_words(rng: &mut ChaCha8Rng, max: usize) -> Vec<u8> {
    let len = rng.random_range(0..=max);
    (0..len).map(|_| rng.random_range(b'a'..=b'c')).collect()
}

#[test]
fn wer_matches_brute_force_alignment() {
    let crossing = ["a", "b", "c", "d", "e", "f"];
    let hyp = ["b", "a", "c", "x", "f", "e"];
    let c = wer(&crossing, &hyp).unwrap();
    assert_eq!((c.sub, c.ins, c.del), align_oracle::best_counts(&crossing, &hyp));
    assert_eq!(c.errors(), 5);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..400 {
        let r = random_words(&mut rng, 6);
        let h = random_words(&mut rng, 6);
        if r.is_empty() {
            continue;
        }
        let c = wer(&r, &h).unwrap();
        assert_eq!((c.sub, c.ins, c.del), align_oracle::best_counts(&r, &h), "{r:?} {h:?}");
        assert_eq!(c.n, r.len());
    }
}

#[test]
fn swapping_roles_swaps_insertions_and_deletions() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..400 {
        let r = random_words(&mut rng, 7);
        let h = random_words(&mut rng, 7);
        if r.is_empty() || h.is_empty() {
            continue;
        }
        let a = wer(&r, &h).unwrap();
        let b = wer(&h, &r).unwrap();
        assert_eq!((a.sub, a.ins, a.del), (b.sub, b.del, b.ins));
    }
    let a = wer(&["a", "b", "c"], &["b", "c", "d"]).unwrap();
    assert_eq!((a.sub, a.ins, a.del), (0, 1, 1));
}

fn small(seed: u64) -> (Scenario, Models) {
    let mut spec = ScenarioSpec {
        seed,
        background_sentences: 400,
        adaptation_sentences: 200,
        test_utterances: 40,
        ..Default::default()
    };
    spec.classes[0].size = 60;
    spec.classes[1].size = 30;
    let s = synthesize_scenario(&spec).unwrap();
    let m = Models::train(&s, Orders::default()).unwrap();
    (s, m)
}

#[test]
fn report_totals_are_consistent() {
    let (s, m) = small(1);
    let base = evaluate_scenario("base", &s, &m, &DecoderConfig::default()).unwrap();
    let config = DecoderConfig {
        fusion: FusionConfig::new(FusionMethod::Clm, 0.9),
        ..Default::default()
    };
    let clm = evaluate_scenario("clm", &s, &m, &config).unwrap().with_baseline(&base);
    for r in [&base, &clm] {
        let mut sum = fnt_core::eval::EditCounts::default();
        for u in &r.utterances {
            sum += u.counts;
        }
        assert_eq!(sum, r.totals);
        assert_eq!(r.wer, (sum.sub + sum.ins + sum.del) as f64 / sum.n as f64);
        assert!(r.entity_words > 0 && r.entity_errors <= r.entity_words);
    }
    let (name, w) = clm.werr.clone().unwrap();
    assert_eq!(name, "base");
    assert_eq!(w, (base.wer - clm.wer) / base.wer);
    assert!(clm.mean_augmented_width > 0.0);
    assert!(clm.machine_line().starts_with("REPORT name=clm "));
}

#[test]
fn parallel_decoding_keeps_order() {
    let (s, m) = small(2);
    let config = DecoderConfig {
        fusion: FusionConfig::new(FusionMethod::Cli, 0.5),
        ..Default::default()
    };
    let encs = s.encoders();
    let a = decode_corpus(&encs, &m.scorer(s.gamma), &config, &m.external(), true).unwrap();
    let b = decode_corpus(&encs, &m.scorer(s.gamma), &config, &m.external(), false).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.best(), y.best());
        assert_eq!(x.output.nbest[0].log_score, y.output.nbest[0].log_score);
    }
    let refs = s.references();
    let ra = EvalReport::new("a", &refs, &a, &s.vocab).unwrap();
    let rb = EvalReport::new("a", &refs, &b, &s.vocab).unwrap();
    assert_eq!(ra.utterances, rb.utterances);
}

fn corpus<'a>(name: &str, s: &'a Scenario, m: &Models) -> SweepCorpus<'a> {
    SweepCorpus {
        name: name.into(),
        encoders: s.encoders(),
        refs: s.references(),
        vocab: s.vocab.clone(),
        scorer: m.scorer(s.gamma),
        lms: m.external(),
    }
}

#[test]
fn sweep_covers_grid_and_is_deterministic() {
    let (s1, m1) = small(3);
    let (s2, m2) = small(4);
    let methods = [FusionMethod::Sf, FusionMethod::Li, FusionMethod::Cli, FusionMethod::Clm];
    let run = || {
        let corpora = [corpus("a", &s1, &m1), corpus("b", &s2, &m2)];
        sweep(&corpora, &methods, &ALPHA_GRID, &DecoderConfig::default()).unwrap()
    };
    let table = run();
    for &method in &methods {
        let points = if method == FusionMethod::Sf { 4 } else { 6 };
        for (i, &a) in ALPHA_GRID.iter().enumerate() {
            for k in 0..2 {
                assert_eq!(table.cell(method, a, k).is_some(), i < points, "{method} {a}");
            }
        }
        let row = table.row(method).unwrap();
        assert_eq!(row.alpha_star.len(), 2);
        assert!(row.werr_star >= row.werr_zero - 1e-12);
    }
    assert_eq!(table.machine_lines(), run().machine_lines());
    let text = table.to_string();
    assert!(text.contains("α*") && text.contains("α⁰"));

    let corpora = [corpus("a", &s1, &m1)];
    let zero = sweep(&corpora, &[FusionMethod::Li], &[0.0], &DecoderConfig::default()).unwrap();
    let cell = zero.cell(FusionMethod::Li, 0.0, 0).unwrap();
    assert_eq!(cell.wer, zero.baselines[0].wer);
    assert_eq!(cell.werr, 0.0);
}
