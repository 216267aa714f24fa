//! Tiny random models shared by the integration tests.

use std::sync::Arc;

use fnt_core::classlm::{ClassDefinitions, ClassModel};
use fnt_core::lm::{log_softmax, TokenId, Vocabulary, LOG_ZERO};
use fnt_core::ngram::{train_kneser_ney, NgramModel};
use fnt_core::sim::EncoderOutput;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `<s>`, `</s>` and `words` word-pieces `w0 …`.
pub fn vocab(words: usize) -> Arc<Vocabulary> {
    let mut tokens = vec!["<s>".to_string(), "</s>".to_string()];
    tokens.extend((0..words).map(|i| format!("w{i}")));
    Arc::new(Vocabulary::new(tokens).unwrap())
}

pub fn corpus(rng: &mut ChaCha8Rng, words: usize, sentences: usize, max_len: usize) -> Vec<Vec<TokenId>> {
    (0..sentences)
        .map(|_| {
            let len = rng.random_range(1..=max_len);
            (0..len).map(|_| 2 + rng.random_range(0..words) as TokenId).collect()
        })
        .collect()
}

pub fn kn(rng: &mut ChaCha8Rng, vocab: &Arc<Vocabulary>, order: usize) -> NgramModel {
    let words = vocab.len() - 2;
    let sentences = rng.random_range(2..=8);
    let c = corpus(rng, words, sentences, 5);
    train_kneser_ney(&c, vocab.clone(), order).unwrap()
}

pub fn tag(i: usize) -> String {
    format!("\u{27e8}{}\u{27e9}", ["X", "Y", "Z"][i])
}

/// Class model with `classes` classes of 1–3 entries of length 1–2 each.
pub fn clm(rng: &mut ChaCha8Rng, words: &Arc<Vocabulary>, classes: usize, order: usize) -> ClassModel {
    clm_with_defs(rng, words, classes, order).0
}

pub fn clm_with_defs(
    rng: &mut ChaCha8Rng,
    words: &Arc<Vocabulary>,
    classes: usize,
    order: usize,
) -> (ClassModel, ClassDefinitions) {
    let n = words.len() - 2;
    let mut defs = ClassDefinitions::new();
    for c in 0..classes {
        for _ in 0..rng.random_range(1..=3) {
            let len = rng.random_range(1..=2);
            let entry = (0..len).map(|_| format!("w{}", rng.random_range(0..n))).collect();
            let weight = [1.0, 1.0, 2.0, 0.5][rng.random_range(0..4)];
            defs.add(&tag(c), entry, weight).unwrap();
        }
    }
    let sentences: Vec<Vec<String>> = (0..rng.random_range(3..=8))
        .map(|_| {
            (0..rng.random_range(1..=4))
                .map(|_| {
                    if rng.random_bool(0.35) {
                        tag(rng.random_range(0..classes))
                    } else {
                        format!("w{}", rng.random_range(0..n))
                    }
                })
                .collect()
        })
        .collect();
    (
        ClassModel::train(words.clone(), &sentences, &defs, order).unwrap(),
        defs,
    )
}

/// Random frames with `<s>` and `</s>` impossible.
pub fn encoder(rng: &mut ChaCha8Rng, vocab_size: usize, frames: usize) -> EncoderOutput {
    let mut scores = Vec::new();
    let mut blank = Vec::new();
    for _ in 0..frames {
        let mut logits = vec![LOG_ZERO, LOG_ZERO];
        logits.extend((2..vocab_size).map(|_| rng.random_range(-3.0..3.0)));
        scores.extend(log_softmax(&logits).unwrap());
        blank.push(rng.random_range(-3.0..1.0));
    }
    EncoderOutput::new(vocab_size, scores, blank).unwrap()
}
