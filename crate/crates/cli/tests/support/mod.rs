//! Planted-corpus construction shared by the integration suites.
//!
//! One multi-intent question over 200 single-chunk documents:
//! five planted documents (one per intent, each holding one gold fact),
//! ten lexical distractors stuffed with question words, and five topical
//! clusters of filler text that mention one intent's drug or side effect.
//! Every planted document shares a sentence frame with every intent
//! statement, so each one ranks in the top five of every statement's list
//! while the question itself prefers the distractors.

#![allow(dead_code)]

use std::collections::HashSet;
use std::path::Path;

use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};

use intentrag_core::corpus::{write_jsonl, Document, FactualUnit, GoldAnnotation, QuestionRecord};
use intentrag_core::hypothesis::{decompose_request, hypotheses_request, DEFAULT_MAX_INSTANCES};
use intentrag_core::llm::{write_transcript, TranscriptRecord};

pub const QUESTION: &str =
    "Which Alzheimer medicines help memory loss patients, and what are their brand names and adverse reactions?";
pub const QUESTION_ID: &str = "alz";

const DRUGS: [&str; 5] = [
    "Donepezil",
    "Memantine",
    "Rivastigmine",
    "Galantamine",
    "Lecanemab",
];
const BRANDS: [&str; 5] = ["Aricept", "Namenda", "Exelon", "Razadyne", "Leqembi"];
const EFFECTS: [&str; 5] = ["nausea", "dizziness", "vomiting", "anorexia", "edema"];

pub const CLUSTER_SIZE: usize = 37;
pub const DISTRACTORS: usize = 10;

pub fn statement(i: usize) -> String {
    format!(
        "{} is an Alzheimer drug sold under brand {} causing {}.",
        DRUGS[i], BRANDS[i], EFFECTS[i]
    )
}

pub fn gold_unit(i: usize) -> String {
    format!(
        "{} is an Alzheimer drug sold under brand {}",
        DRUGS[i], BRANDS[i]
    )
}

pub fn planted_doc(i: usize) -> String {
    format!("planted-{i}")
}

pub struct Planted {
    pub documents: Vec<Document>,
    /// The planted question alone.
    pub questions: Vec<QuestionRecord>,
    /// The planted question plus a degraded one and a malformed one.
    pub mixed_questions: Vec<QuestionRecord>,
    pub transcript: Vec<TranscriptRecord>,
}

fn pseudo_word(rng: &mut StdRng) -> String {
    const C: &[u8] = b"bdfgklmnprstvz";
    const V: &[u8] = b"aeiou";
    let syllables = rng.random_range(2..4);
    (0..syllables)
        .flat_map(|_| {
            [
                *C.choose(rng).unwrap() as char,
                *V.choose(rng).unwrap() as char,
            ]
        })
        .collect()
}

fn question_words() -> Vec<String> {
    intentrag_core::text::word_tokens(QUESTION)
        .filter(|w| w != "alzheimer" && w != "brand")
        .collect()
}

pub fn build(seed: u64) -> Planted {
    let mut rng = StdRng::seed_from_u64(seed);
    let mut reserved: HashSet<String> = HashSet::new();
    for i in 0..5 {
        reserved.extend(intentrag_core::text::word_tokens(&statement(i)));
    }
    reserved.extend(intentrag_core::text::word_tokens(QUESTION));
    let mut vocab = Vec::new();
    while vocab.len() < 600 {
        let w = pseudo_word(&mut rng);
        if !reserved.contains(&w) && !vocab.contains(&w) {
            vocab.push(w);
        }
    }
    let filler = |rng: &mut StdRng, n: usize| -> Vec<String> {
        (0..n).map(|_| vocab.choose(rng).unwrap().clone()).collect()
    };

    let mut documents = Vec::new();
    let doc = |id: String, body: String| Document {
        id,
        title: String::new(),
        body,
        source_uri: None,
    };

    let qwords = question_words();
    for d in 0..DISTRACTORS {
        let mut words: Vec<String> = qwords.choose_multiple(&mut rng, 9).cloned().collect();
        words.extend(filler(&mut rng, 3));
        documents.push(doc(format!("distract-{d:02}"), sentence(&words)));
    }
    for i in 0..5 {
        documents.push(doc(planted_doc(i), statement(i)));
    }
    for i in 0..5 {
        for c in 0..CLUSTER_SIZE {
            let mut words = filler(&mut rng, 10);
            let hook = if c % 2 == 0 {
                DRUGS[i].to_lowercase()
            } else {
                EFFECTS[i].to_string()
            };
            let at = rng.random_range(0..=words.len());
            words.insert(at, hook);
            documents.push(doc(format!("topic-{i}-{c:02}"), sentence(&words)));
        }
    }
    assert_eq!(documents.len(), 200);

    let gold = GoldAnnotation {
        gold_answers: DRUGS.iter().map(|d| d.to_string()).collect(),
        factual_units: (0..5)
            .map(|i| FactualUnit {
                id: format!("u{}", i + 1),
                statement: gold_unit(i),
                intent_label: Some(DRUGS[i].to_lowercase()),
            })
            .collect(),
        gold_passage_ids: (0..5).map(planted_doc).collect(),
    };
    let planted = QuestionRecord {
        id: QUESTION_ID.into(),
        domain: "medicine".into(),
        question: QUESTION.into(),
        gold,
    };
    let degraded = QuestionRecord {
        id: "unscripted".into(),
        domain: "medicine".into(),
        question: "Which medicines help memory loss patients?".into(),
        gold: GoldAnnotation {
            gold_answers: vec!["Donepezil".into()],
            factual_units: vec![FactualUnit {
                id: "u1".into(),
                statement: gold_unit(0),
                intent_label: None,
            }],
            gold_passage_ids: vec![planted_doc(0)],
        },
    };
    let malformed = QuestionRecord {
        id: "malformed".into(),
        domain: "medicine".into(),
        question: "  ".into(),
        gold: GoldAnnotation::default(),
    };

    Planted {
        documents,
        questions: vec![planted.clone()],
        mixed_questions: vec![planted, degraded, malformed],
        transcript: transcript(),
    }
}

fn sentence(words: &[String]) -> String {
    let mut s = words.join(" ");
    if let Some(f) = s.get_mut(0..1) {
        f.make_ascii_uppercase();
    }
    s.push('.');
    s
}

/// Scripted LLM exchanges: two hypothetical answers (three and two drugs)
/// and their decompositions into one statement per drug.
pub fn transcript() -> Vec<TranscriptRecord> {
    let h1 = format!(
        "{}, {} and {} are used; they are sold as {}, {} and {} and can cause {}, {} and {}.",
        DRUGS[0],
        DRUGS[1],
        DRUGS[2],
        BRANDS[0],
        BRANDS[1],
        BRANDS[2],
        EFFECTS[0],
        EFFECTS[1],
        EFFECTS[2]
    );
    let h2 = format!(
        "{} ({}) may cause {}, and {} ({}) may cause {}.",
        DRUGS[3], BRANDS[3], EFFECTS[3], DRUGS[4], BRANDS[4], EFFECTS[4]
    );
    let hyp = hypotheses_request(QUESTION_ID, QUESTION, DEFAULT_MAX_INSTANCES, 0.7, 1024);
    let d1 = decompose_request(QUESTION_ID, QUESTION, &h1, 1024);
    let d2 = decompose_request(QUESTION_ID, QUESTION, &h2, 1024);
    let list = |items: &[String]| {
        items
            .iter()
            .enumerate()
            .map(|(i, s)| format!("{}. {s}", i + 1))
            .collect::<Vec<_>>()
            .join("\n")
    };
    vec![
        TranscriptRecord::new(&hyp, list(&[h1.clone(), h2.clone()])),
        TranscriptRecord::new(&d1, list(&[statement(0), statement(1), statement(2)])),
        TranscriptRecord::new(&d2, list(&[statement(3), statement(4)])),
    ]
}

/// Write corpus, datasets and transcript under `dir`.
pub fn write_files(p: &Planted, dir: &Path) {
    write_jsonl(&dir.join("corpus.jsonl"), &p.documents).unwrap();
    write_jsonl(&dir.join("questions.jsonl"), &p.questions).unwrap();
    write_jsonl(&dir.join("mixed.jsonl"), &p.mixed_questions).unwrap();
    write_transcript(&dir.join("script.jsonl"), &p.transcript).unwrap();
}
