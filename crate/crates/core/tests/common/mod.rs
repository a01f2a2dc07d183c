#![allow(dead_code)]

use std::fs;
use std::path::Path;

use dactag_core::corpus::{ConversationInput, SentenceInput};
use dactag_core::models::{ModelConfig, Preset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The six transcript rows of the worked example, as CSV lines.
pub const TABLE1_ROWS: [&str; 6] = [
    "sw2005,A,5,2,qy,\"{F Um, } {F uh, } do you live right in the city itself? /\"",
    "sw2005,B,6,1,nn,\"No,  /\"",
    "sw2005,B,6,2,sd,\"I'm more out in the suburbs,  /\"",
    "sw2005,B,6,3,sd,\"{C but } I certainly work near a city. /\"",
    "sw2005,A,7,1,bk,\"Okay,  /\"",
    "sw2005,A,7,2,qy,\"{C so } [ ca-, +\"",
];

pub fn small_config(preset: Preset, vocab: usize, classes: usize, width: usize, seed: u64) -> ModelConfig {
    let mut c = ModelConfig::preset(preset, vocab, classes);
    c.embedding_dim = width;
    c.sentence_hidden = width;
    c.nontextual_hidden = width;
    c.context_hidden = width;
    c.cnn_maps = width.div_ceil(3).max(1);
    c.seed = seed;
    c
}

fn features(index: usize, len: usize) -> [f64; 4] {
    [(index + 1) as f64, 1.0, 1.0, (len as f64 - 3.0) / 1.5]
}

/// Five conversations of ten sentences over a 50-entry vocabulary (48 words
/// plus the two specials), with tags drawn at random.
pub fn memorization_corpus(seed: u64, classes: usize) -> Vec<ConversationInput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..5)
        .map(|c| {
            let sentences: Vec<SentenceInput> = (0..10)
                .map(|i| {
                    let len = rng.gen_range(2..=6);
                    SentenceInput {
                        tokens: (0..len).map(|_| rng.gen_range(0..48)).collect(),
                        features: features(i, len),
                    }
                })
                .collect();
            ConversationInput {
                id: format!("mem{c}"),
                gold: Some((0..10).map(|_| rng.gen_range(0..classes)).collect()),
                sentences,
            }
        })
        .collect()
}

pub const MARKER_FILLERS: usize = 20;
pub const MARKERS: usize = 4;
/// Fillers, markers, then UNK and EMPTY.
pub const MARKER_VOCAB: usize = MARKER_FILLERS + MARKERS + 2;
/// One class per marker plus a class for the opening sentence.
pub const MARKER_CLASSES: usize = MARKERS + 1;

/// Every sentence holds filler words and one marker; its tag is the marker
/// of the previous sentence (the opening sentence gets its own class). A
/// sentence's own words therefore say nothing about its tag.
pub fn marker_corpus(seed: u64, conversations: usize, length: usize) -> Vec<ConversationInput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..conversations)
        .map(|c| {
            let mut prev = None;
            let mut gold = Vec::with_capacity(length);
            let mut sentences = Vec::with_capacity(length);
            for i in 0..length {
                let len = rng.gen_range(3..=6);
                let marker = rng.gen_range(0..MARKERS);
                let mut tokens: Vec<usize> = (0..len - 1).map(|_| rng.gen_range(0..MARKER_FILLERS)).collect();
                let at = rng.gen_range(0..len);
                tokens.insert(at, MARKER_FILLERS + marker);
                gold.push(prev.unwrap_or(MARKERS));
                prev = Some(marker);
                sentences.push(SentenceInput {
                    tokens,
                    features: features(i, len),
                });
            }
            ConversationInput {
                id: format!("mark{c}"),
                sentences,
                gold: Some(gold),
            }
        })
        .collect()
}

/// Writes a small raw corpus (conversation files plus three id lists) whose
/// lines use real tag names, including `+` continuations.
pub fn write_fixture_corpus(dir: &Path, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words = [
        "yeah", "uh-huh", "i", "think", "so", "do", "you", "know", "what", "the", "city", "well", "okay", "right",
        "we", "have", "a", "dog", "it's", "really", "nice", "<laughter>.", "{f", "uh,", "}", "/",
    ];
    let tags = ["sd", "b", "sv", "qy", "aa", "%", "ba", "qw", "ny", "nn", "bk", "fo", "sd^e", "qy^d"];
    let corpus = dir.join("raw");
    fs::create_dir_all(&corpus).unwrap();
    let mut ids = Vec::new();
    for c in 0..12 {
        let id = format!("sw{:04}", 4000 + c);
        let mut out = String::from("conversation_id,caller,utterance_index,sub_utterance_index,act_tag,text\n");
        let mut utt = 0;
        let mut caller = 'B';
        for _ in 0..rng.gen_range(6..12) {
            utt += 1;
            caller = if caller == 'A' { 'B' } else { 'A' };
            for sub in 1..=rng.gen_range(1..=3) {
                let tag = if sub > 1 && rng.gen_bool(0.2) {
                    "+"
                } else {
                    tags[rng.gen_range(0..tags.len())]
                };
                let n = rng.gen_range(1..7);
                let text: Vec<&str> = (0..n).map(|_| words[rng.gen_range(0..words.len())]).collect();
                let text = text.join(" ").replace('"', "\"\"");
                out.push_str(&format!("{id},{caller},{utt},{sub},{tag},\"{text}\"\n"));
            }
        }
        fs::write(corpus.join(format!("{id}.csv")), out).unwrap();
        ids.push(id);
    }
    fs::write(dir.join("train.txt"), ids[..8].join("\n")).unwrap();
    fs::write(dir.join("valid.txt"), ids[8..10].join("\n")).unwrap();
    fs::write(dir.join("test.txt"), ids[10..].join("\n")).unwrap();
}
