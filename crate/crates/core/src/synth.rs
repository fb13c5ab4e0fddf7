//! Seeded synthetic corpus for offline end-to-end runs.
//!
//! Each patient gets several whitelisted notes of routine perioperative
//! filler text inside the 30-day window, plus one stale note and one note
//! of a non-admitted type that ingestion must drop. Positive patients carry
//! one to three complication sentences planted at random positions.
//! A fraction of positives have no documentation of the event, and a
//! fraction of negatives mention a complication term only to rule it out, so
//! neither mode is a perfect classifier.
//!
//! Filler words are restricted to those whose hashed bucket misses every
//! bucket of the retrieval query, so routine text carries no query signal
//! (much as a semantic embedder would treat it) and retrieval quality is
//! decided by the planted sentences alone.

use chrono::{DateTime, Duration, TimeZone, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ClinicalNote, PatientRecord, DEFAULT_NOTE_TYPES};
use crate::embedding::{fnv1a64, DEFAULT_DIM};
use crate::retrieval::DEFAULT_QUERY;

const FILLER: &[&str] = &[
    "patient",
    "tolerated",
    "procedure",
    "well",
    "vitals",
    "stable",
    "afebrile",
    "ambulating",
    "hallway",
    "diet",
    "advanced",
    "clear",
    "liquids",
    "regular",
    "pain",
    "controlled",
    "oral",
    "analgesics",
    "incision",
    "clean",
    "dry",
    "intact",
    "dressing",
    "changed",
    "drain",
    "output",
    "serous",
    "minimal",
    "foley",
    "removed",
    "voiding",
    "spontaneously",
    "lungs",
    "clear",
    "bilaterally",
    "heart",
    "regular",
    "rate",
    "rhythm",
    "abdomen",
    "soft",
    "nondistended",
    "appropriately",
    "tender",
    "bowel",
    "sounds",
    "present",
    "flatus",
    "passed",
    "plan",
    "continue",
    "current",
    "management",
    "discussed",
    "with",
    "family",
    "attending",
    "agrees",
    "labs",
    "reviewed",
    "hemoglobin",
    "creatinine",
    "within",
    "normal",
    "limits",
    "electrolytes",
    "repleted",
    "potassium",
    "magnesium",
    "induction",
    "uneventful",
    "airway",
    "secured",
    "endotracheal",
    "tube",
    "general",
    "anesthesia",
    "maintained",
    "sevoflurane",
    "fentanyl",
    "propofol",
    "antibiotics",
    "given",
    "prior",
    "incision",
    "time",
    "out",
    "performed",
    "consent",
    "signed",
    "positioned",
    "supine",
    "prepped",
    "draped",
    "sterile",
    "fashion",
    "laparoscopic",
    "ports",
    "placed",
    "under",
    "direct",
    "visualization",
    "specimen",
    "retrieved",
    "fascia",
    "closed",
    "skin",
    "approximated",
    "staples",
    "estimated",
    "blood",
    "loss",
    "milliliters",
    "fluids",
    "crystalloid",
    "urine",
    "adequate",
    "transferred",
    "recovery",
    "unit",
    "extubated",
    "awake",
    "following",
    "commands",
    "nursing",
    "assessment",
    "completed",
    "fall",
    "precautions",
    "education",
    "provided",
    "discharge",
    "planning",
    "initiated",
    "physical",
    "therapy",
    "evaluated",
    "cleared",
    "home",
    "medications",
    "reconciled",
    "anticoagulation",
    "prophylaxis",
    "held",
    "resumed",
    "glucose",
    "monitored",
    "insulin",
    "sliding",
    "scale",
    "saturation",
    "room",
    "air",
    "oxygen",
    "weaned",
    "nasal",
    "cannula",
    "telemetry",
    "reviewed",
    "sinus",
    "rhythm",
    "noted",
    "overnight",
    "events",
    "none",
    "reported",
    "morning",
    "rounds",
    "examined",
    "bedside",
    "questions",
    "answered",
];

const PLANTED: &[&str] = &[
    "Postoperative course complicated by anastomotic leak requiring reoperation on day four.",
    "Patient developed surgical site infection with wound dehiscence and pelvic abscess drained by IR.",
    "CT angiogram confirms pulmonary embolism and duplex shows deep vein thrombosis in left leg.",
    "Transferred to ICU with septic shock from intra-abdominal sepsis and started on pressors.",
    "Acute hemorrhage requiring transfusion of four units and return to the operating room today.",
    "New pneumonia with hypoxic respiratory decline requiring reintubation overnight in ICU.",
    "Troponin rise consistent with perioperative myocardial infarction, cardiology consulted emergently.",
];

const RULE_OUTS: &[&str] = &[
    "Contrast study obtained and shows no evidence of anastomotic leak at this time.",
    "Low suspicion for pneumonia, chest film unremarkable, will monitor clinically.",
    "Calf tenderness evaluated, duplex negative for deep vein thrombosis.",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub patients: usize,
    pub positive_fraction: f64,
    /// Filler words across a patient's in-window notes.
    pub words_per_patient: usize,
    pub notes_per_patient: usize,
    /// Positives whose notes never mention the event.
    pub undocumented_rate: f64,
    /// Negatives with a ruled-out complication term.
    pub rule_out_rate: f64,
    pub seed: u64,
    /// Query whose hash buckets the filler avoids; empty disables the filter.
    pub query_text: String,
    pub dim: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            patients: 60,
            positive_fraction: 0.45,
            words_per_patient: 6_000,
            notes_per_patient: 5,
            undocumented_rate: 0.1,
            rule_out_rate: 0.1,
            seed: 7,
            query_text: DEFAULT_QUERY.to_string(),
            dim: DEFAULT_DIM,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthPatient {
    pub record: PatientRecord,
    /// Complication sentences inserted into this patient's notes.
    pub planted: Vec<String>,
}

/// Filler words that cannot collide with the query, in any of the forms
/// they appear in (bare or sentence-final).
fn neutral_filler(query: &str, dim: usize) -> Vec<&'static str> {
    let bucket = |w: &str| (fnv1a64(w.as_bytes()) % dim.max(1) as u64) as usize;
    let taken: std::collections::HashSet<usize> = query.to_lowercase().split_whitespace().map(bucket).collect();
    let mut words: Vec<&'static str> = FILLER
        .iter()
        .copied()
        .filter(|w| !taken.contains(&bucket(w)) && !taken.contains(&bucket(&format!("{w}."))))
        .collect();
    words.sort_unstable();
    words.dedup();
    words
}

fn filler_sentence(rng: &mut ChaCha8Rng, vocab: &[&str]) -> String {
    let len = rng.random_range(8..=16);
    let mut words: Vec<&str> = (0..len).map(|_| *vocab.choose(rng).unwrap()).collect();
    let mut first = words[0].to_string();
    first[..1].make_ascii_uppercase();
    words[0] = &first;
    format!("{}.", words.join(" "))
}

fn note_text(rng: &mut ChaCha8Rng, vocab: &[&str], words: usize, inserts: &[&str]) -> String {
    let mut sentences = Vec::new();
    let mut n = 0;
    while n < words {
        let s = filler_sentence(rng, vocab);
        n += s.split_whitespace().count();
        sentences.push(s);
    }
    for ins in inserts {
        let at = rng.random_range(0..=sentences.len());
        sentences.insert(at, ins.to_string());
    }
    sentences.join(" ")
}

pub fn generate(cfg: &SynthConfig) -> Vec<SynthPatient> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vocab =
        if cfg.query_text.trim().is_empty() { FILLER.to_vec() } else { neutral_filler(&cfg.query_text, cfg.dim) };
    let base: DateTime<Utc> = Utc.with_ymd_and_hms(2022, 1, 10, 7, 30, 0).unwrap();
    let notes_per = cfg.notes_per_patient.max(1);
    let per_note = cfg.words_per_patient.div_ceil(notes_per);
    let positives = (cfg.patients as f64 * cfg.positive_fraction).round() as usize;

    (0..cfg.patients)
        .map(|i| {
            let label = u8::from(i % cfg.patients.max(1) < positives);
            let anchor = base + Duration::days(rng.random_range(0..700)) + Duration::minutes(rng.random_range(0..1440));

            let mut planted: Vec<String> = Vec::new();
            let mut rule_out: Vec<&str> = Vec::new();
            if label == 1 && !rng.random_bool(cfg.undocumented_rate) {
                let k = rng.random_range(1..=3);
                planted = PLANTED.choose_multiple(&mut rng, k).map(|s| s.to_string()).collect();
            } else if label == 0 && rng.random_bool(cfg.rule_out_rate) {
                rule_out.push(RULE_OUTS.choose(&mut rng).unwrap());
            }

            // distribute inserts over the in-window notes
            let mut per_note_inserts: Vec<Vec<&str>> = vec![Vec::new(); notes_per];
            for s in planted.iter().map(String::as_str).chain(rule_out.iter().copied()) {
                per_note_inserts[rng.random_range(0..notes_per)].push(s);
            }

            let mut notes = Vec::with_capacity(notes_per + 2);
            for (k, inserts) in per_note_inserts.iter().enumerate() {
                let offset = Duration::hours(rng.random_range(0..24 * 28));
                let ts = if k == 0 { anchor } else { anchor - offset };
                notes.push(ClinicalNote {
                    note_type: DEFAULT_NOTE_TYPES.choose(&mut rng).unwrap().to_string(),
                    timestamp: ts,
                    text: note_text(&mut rng, &vocab, per_note, inserts),
                });
            }
            notes.push(ClinicalNote {
                note_type: "OR PreOp".into(),
                timestamp: anchor - Duration::days(rng.random_range(45..90)),
                text: note_text(&mut rng, &vocab, 200, &[]),
            });
            notes.push(ClinicalNote {
                note_type: "Discharge Summary".into(),
                timestamp: anchor - Duration::days(1),
                text: note_text(&mut rng, &vocab, 200, &[]),
            });
            // scramble file order; ingestion sorts by timestamp
            for j in (1..notes.len()).rev() {
                let k = rng.random_range(0..=j);
                notes.swap(j, k);
            }

            SynthPatient {
                record: PatientRecord { patient_id: format!("SYN{:05}", i + 1), label, anchor_date: None, notes },
                planted,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{concat_text, window_notes, word_count, NoteWhitelist};

    #[test]
    fn same_seed_same_corpus() {
        let cfg = SynthConfig { patients: 8, words_per_patient: 500, ..Default::default() };
        assert_eq!(generate(&cfg), generate(&cfg));
        let other = generate(&SynthConfig { seed: 8, ..cfg.clone() });
        assert_ne!(other, generate(&cfg));
    }

    #[test]
    fn filler_is_query_neutral() {
        let vocab = neutral_filler(DEFAULT_QUERY, DEFAULT_DIM);
        assert!(vocab.len() > 80, "{}", vocab.len());
        let q = crate::embedding::embed_hashing(DEFAULT_QUERY, DEFAULT_DIM);
        let cfg = SynthConfig { patients: 1, positive_fraction: 0.0, rule_out_rate: 0.0, ..Default::default() };
        let text = generate(&cfg)[0].record.notes[0].text.clone();
        assert_eq!(q.dot(&crate::embedding::embed_hashing(&text, DEFAULT_DIM)), 0.0);
    }

    #[test]
    fn windowed_text_has_requested_size_and_plants() {
        let cfg = SynthConfig { patients: 20, words_per_patient: 2000, undocumented_rate: 0.0, ..Default::default() };
        let wl = NoteWhitelist::default();
        for p in generate(&cfg) {
            let mut r = p.record.clone();
            r.notes.retain(|n| wl.contains(&n.note_type));
            r.notes.sort_by_key(|n| n.timestamp);
            let w = window_notes(&r, 30).unwrap();
            assert_eq!(w.notes.len(), cfg.notes_per_patient);
            let text = concat_text(&w);
            assert!(word_count(&text) >= 2000);
            for s in &p.planted {
                assert!(text.contains(s.as_str()));
            }
            assert_eq!(p.record.label == 1, !p.planted.is_empty());
        }
    }
}
