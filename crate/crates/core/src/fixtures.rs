//! Small deterministic datasets for tests, gradient checks and smoke runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Corpus, Label, LabeledPost, Pipeline, TokenSequence};

const WORDS: [&str; 24] = [
    "vaccine",
    "cure",
    "#covid19",
    "@who",
    "masks",
    "lockdown",
    "cases",
    "testing",
    "hospital",
    "5g",
    "garlic",
    "miracle",
    "deaths",
    "update",
    "study",
    "trial",
    "rumor",
    "viral",
    "claims",
    "official",
    "report",
    "doctors",
    "spread",
    "#stayhome",
];

fn raw(tokens: Vec<String>) -> TokenSequence {
    TokenSequence {
        tokens,
        pipeline: Pipeline::Raw,
    }
}

/// 32 short RAW posts with balanced labels assigned independently of their
/// content, so fitting them requires memorization.
pub fn overfit_suite() -> (Vec<TokenSequence>, Vec<Label>) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut docs = Vec::with_capacity(32);
    let mut labels = Vec::with_capacity(32);
    for i in 0..32 {
        let n = rng.random_range(4..=10);
        let tokens = (0..n)
            .map(|_| WORDS[rng.random_range(0..WORDS.len())].to_string())
            .collect();
        docs.push(raw(tokens));
        labels.push(if i % 2 == 0 { Label::Fake } else { Label::Real });
    }
    (docs, labels)
}

/// Two token-index sequences of lengths 6 and 4 over a vocabulary of `vocab`.
pub fn gradcheck_sequences(vocab: usize) -> (Vec<Vec<usize>>, Vec<Label>) {
    let v = vocab.max(3);
    let a = (0..6).map(|i| 1 + (i * 5 + 2) % (v - 1)).collect();
    let b = (0..4).map(|i| 1 + (i * 3 + 1) % (v - 1)).collect();
    (vec![a, b], vec![Label::Fake, Label::Real])
}

const FAKE_WORDS: [&str; 12] = [
    "miracle",
    "cure",
    "garlic",
    "5g",
    "secret",
    "hoax",
    "bleach",
    "plandemic",
    "exposed",
    "banned",
    "truth",
    "shocking",
];
const REAL_WORDS: [&str; 12] = [
    "reported",
    "ministry",
    "confirmed",
    "testing",
    "hospital",
    "data",
    "guidance",
    "tally",
    "trial",
    "update",
    "vaccination",
    "officials",
];
const SHARED_WORDS: [&str; 16] = [
    "covid", "#covid19", "@who", "virus", "people", "new", "cases", "today", "india", "us", "health", "pandemic",
    "lockdown", "masks", "deaths", "says",
];

/// Noisy synthetic posts: mostly shared words plus a few class-indicative
/// ones, with one post in ten drawing its cue words from the other class.
/// Ids are `{name}-{i}`.
pub fn toy_corpus(name: &str, n: usize, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let posts = (0..n)
        .map(|i| {
            let label = if rng.random_bool(0.5) { Label::Fake } else { Label::Real };
            let swapped = rng.random_bool(0.1);
            let cues: &[&str] = match (label, swapped) {
                (Label::Fake, false) | (Label::Real, true) => &FAKE_WORDS,
                _ => &REAL_WORDS,
            };
            let len = rng.random_range(5..=16);
            let words: Vec<&str> = (0..len)
                .map(|_| {
                    if rng.random_bool(0.3) {
                        cues[rng.random_range(0..cues.len())]
                    } else {
                        SHARED_WORDS[rng.random_range(0..SHARED_WORDS.len())]
                    }
                })
                .collect();
            LabeledPost {
                id: format!("{name}-{i}"),
                text: words.join(" "),
                label,
            }
        })
        .collect();
    Corpus::new(name, posts).expect("ids are unique")
}

/// Linearly separable documents: FAKE posts mention cure words, REAL posts
/// mention reporting words.
pub fn separable_texts() -> Vec<(String, Label)> {
    let fake = [
        "miracle cure garlic kills virus",
        "5g towers spread the virus secretly",
        "drinking bleach cures covid miracle",
        "garlic miracle cure confirmed by nobody",
        "secret 5g plot spreads virus",
        "bleach miracle cure for the virus",
    ];
    let real = [
        "official report shows new cases today",
        "hospital data update on testing numbers",
        "health ministry report on daily cases",
        "testing update from official hospital data",
        "daily cases report from the ministry",
        "new testing numbers in official update",
    ];
    fake.iter()
        .map(|t| (t.to_string(), Label::Fake))
        .chain(real.iter().map(|t| (t.to_string(), Label::Real)))
        .collect()
}
