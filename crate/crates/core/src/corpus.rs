//! Patient record ingestion, note windowing and fixed-size word chunking.
//!
//! A "word" throughout this crate is a maximal run of non-whitespace
//! characters (`char::is_whitespace`), which is also the unit used for
//! context budgets and cost accounting.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_CHUNK_WORDS: usize = 512;
pub const DEFAULT_WINDOW_DAYS: u32 = 30;
pub const NOTE_SEPARATOR: &str = "\n\n";

/// Perioperative note types admitted by default.
pub const DEFAULT_NOTE_TYPES: [&str; 16] = [
    "IP Operative Report",
    "Addendum IP Operative Report",
    "OP Operative Report",
    "Addendum OP Operative Report",
    "Brief Op Note",
    "Perioperative Record",
    "OR PreOp",
    "OR PreOp Anesthesia",
    "Pre-Op Medical Assessment",
    "OR PostOp",
    "Anesthesia Procedure Notes",
    "Anesthesia Preprocedural Evaluation",
    "Anesthesia Postprocedural Evaluation",
    "OR Nursing",
    "Anesthesia Transfer of Care",
    "Anesthesia PACU Discharge",
];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate patient_id {patient_id:?}")]
    DuplicatePatient { line: usize, patient_id: String },
    #[error("window_days must be positive")]
    InvalidWindow,
    #[error("max_words must be at least 1")]
    InvalidChunkSize,
}

impl CorpusError {
    fn io(path: &Path, source: io::Error) -> Self {
        CorpusError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalNote {
    pub note_type: String,
    pub timestamp: DateTime<Utc>,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    /// Ground truth: 1 = complication, 0 = none.
    pub label: u8,
    #[serde(default)]
    pub anchor_date: Option<DateTime<Utc>>,
    #[serde(default)]
    pub notes: Vec<ClinicalNote>,
}

impl PatientRecord {
    /// Records whose notes were all filtered out are kept in the corpus so
    /// cohort counts match the input; they classify from an empty context.
    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }
}

/// A contiguous run of at most `max_words` words from a patient's
/// concatenated note text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub patient_id: String,
    pub position: u32,
    pub word_count: u32,
    pub text: String,
}

/// The set of note types retained at ingestion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NoteWhitelist(HashSet<String>);

impl NoteWhitelist {
    pub fn new<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        NoteWhitelist(names.into_iter().map(Into::into).collect())
    }

    /// One type name per line; blank lines are ignored.
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let raw = fs::read_to_string(path).map_err(|e| CorpusError::io(path, e))?;
        Ok(Self::new(raw.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from)))
    }

    pub fn contains(&self, note_type: &str) -> bool {
        self.0.contains(note_type)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for NoteWhitelist {
    fn default() -> Self {
        Self::new(DEFAULT_NOTE_TYPES)
    }
}

/// Reads a JSONL corpus, keeping only whitelisted non-blank notes, sorted
/// ascending by timestamp.
pub fn load_corpus(path: &Path, whitelist: &NoteWhitelist) -> Result<Vec<PatientRecord>, CorpusError> {
    let file = fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let records = parse_corpus(BufReader::new(file), whitelist).map_err(|e| match e {
        CorpusError::Io { source, .. } => CorpusError::io(path, source),
        other => other,
    })?;
    let empty = records.iter().filter(|r| r.is_empty()).count();
    if empty > 0 {
        log::warn!("{}: {empty} record(s) have no retained notes", path.display());
    }
    Ok(records)
}

pub fn parse_corpus<R: BufRead>(reader: R, whitelist: &NoteWhitelist) -> Result<Vec<PatientRecord>, CorpusError> {
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CorpusError::Io { path: PathBuf::new(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut record: PatientRecord = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Malformed { line: line_no, message: e.to_string() })?;
        if record.label > 1 {
            return Err(CorpusError::Malformed {
                line: line_no,
                message: format!("label must be 0 or 1, got {}", record.label),
            });
        }
        if !seen.insert(record.patient_id.clone()) {
            return Err(CorpusError::DuplicatePatient { line: line_no, patient_id: record.patient_id });
        }
        record.notes.retain(|n| whitelist.contains(&n.note_type) && !n.text.trim().is_empty());
        // stable, so same-timestamp notes keep file order
        record.notes.sort_by_key(|n| n.timestamp);
        records.push(record);
    }
    Ok(records)
}

/// Keeps notes with timestamps in `[anchor - window_days, anchor]`, where the
/// anchor is the record's `anchor_date` or, failing that, its latest note.
pub fn window_notes(record: &PatientRecord, window_days: u32) -> Result<PatientRecord, CorpusError> {
    if window_days == 0 {
        return Err(CorpusError::InvalidWindow);
    }
    let Some(anchor) = record.anchor_date.or_else(|| record.notes.iter().map(|n| n.timestamp).max()) else {
        return Ok(record.clone());
    };
    let start = Duration::try_days(i64::from(window_days)).and_then(|d| anchor.checked_sub_signed(d));
    let mut out = record.clone();
    out.notes.retain(|n| n.timestamp <= anchor && start.map_or(true, |s| n.timestamp >= s));
    Ok(out)
}

/// Note texts joined in stored (timestamp) order with a blank line between.
pub fn concat_text(record: &PatientRecord) -> String {
    let texts: Vec<&str> = record.notes.iter().map(|n| n.text.as_str()).collect();
    texts.join(NOTE_SEPARATOR)
}

/// Byte ranges of every word in `text`.
pub fn word_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, text.len()));
    }
    spans
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Splits `text` into consecutive runs of exactly `max_words` words (the last
/// run may be shorter). Each chunk's text is the source slice from its first
/// word to its last, so intra-chunk line breaks survive.
pub fn chunk_text(patient_id: &str, text: &str, max_words: usize) -> Result<Vec<Chunk>, CorpusError> {
    if max_words == 0 {
        return Err(CorpusError::InvalidChunkSize);
    }
    let spans = word_spans(text);
    Ok(spans
        .chunks(max_words)
        .enumerate()
        .map(|(pos, run)| {
            let (start, _) = run[0];
            let (_, end) = run[run.len() - 1];
            Chunk {
                patient_id: patient_id.to_string(),
                position: pos as u32,
                word_count: run.len() as u32,
                text: text[start..end].to_string(),
            }
        })
        .collect())
}

/// A windowed record together with its chunks: the unit written by ingestion
/// and consumed by index building and retrieval.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkedRecord {
    #[serde(flatten)]
    pub record: PatientRecord,
    pub chunks: Vec<Chunk>,
}

impl ChunkedRecord {
    pub fn new(record: PatientRecord, max_words: usize) -> Result<Self, CorpusError> {
        let chunks = chunk_text(&record.patient_id, &concat_text(&record), max_words)?;
        Ok(ChunkedRecord { record, chunks })
    }

    pub fn total_words(&self) -> usize {
        self.chunks.iter().map(|c| c.word_count as usize).sum()
    }
}

/// Windows and chunks every record.
pub fn prepare_corpus(
    records: Vec<PatientRecord>,
    window_days: u32,
    max_words: usize,
) -> Result<Vec<ChunkedRecord>, CorpusError> {
    records.into_iter().map(|r| ChunkedRecord::new(window_notes(&r, window_days)?, max_words)).collect()
}

/// Reads an ingested (chunked) corpus and checks that every record's chunks
/// are exactly what re-chunking its notes would produce.
pub fn load_chunked(path: &Path) -> Result<Vec<ChunkedRecord>, CorpusError> {
    let file = fs::File::open(path).map_err(|e| CorpusError::io(path, e))?;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| CorpusError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ChunkedRecord = serde_json::from_str(&line)
            .map_err(|e| CorpusError::Malformed { line: line_no, message: e.to_string() })?;
        if !seen.insert(rec.record.patient_id.clone()) {
            return Err(CorpusError::DuplicatePatient { line: line_no, patient_id: rec.record.patient_id });
        }
        let max_words = rec.chunks.first().map_or(DEFAULT_CHUNK_WORDS, |c| c.word_count as usize);
        let expected = chunk_text(&rec.record.patient_id, &concat_text(&rec.record), max_words.max(1))?;
        if expected != rec.chunks {
            return Err(CorpusError::Malformed {
                line: line_no,
                message: format!("chunks of patient {:?} do not match its notes", rec.record.patient_id),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(day: i64) -> DateTime<Utc> {
        DateTime::parse_from_rfc3339("2023-03-01T08:00:00Z").unwrap().with_timezone(&Utc) + Duration::days(day)
    }

    fn note(day: i64, text: &str) -> ClinicalNote {
        ClinicalNote { note_type: "OR PostOp".into(), timestamp: ts(day), text: text.into() }
    }

    fn record(notes: Vec<ClinicalNote>, anchor: Option<DateTime<Utc>>) -> PatientRecord {
        PatientRecord { patient_id: "p1".into(), label: 1, anchor_date: anchor, notes }
    }

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn whitelist_drops_unlisted_note_types() {
        let line = r#"{"patient_id":"a","label":1,"anchor_date":null,"notes":[
            {"note_type":"OR PreOp","timestamp":"2023-01-02T00:00:00Z","text":"kept"},
            {"note_type":"Discharge Summary","timestamp":"2023-01-03T00:00:00Z","text":"dropped"}]}"#
            .replace('\n', "");
        let recs = parse_corpus(line.as_bytes(), &NoteWhitelist::default()).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].notes.len(), 1);
        assert_eq!(recs[0].notes[0].text, "kept");
    }

    #[test]
    fn empty_input_yields_no_records() {
        assert!(parse_corpus("".as_bytes(), &NoteWhitelist::default()).unwrap().is_empty());
    }

    #[test]
    fn notes_are_sorted_by_timestamp() {
        let line = r#"{"patient_id":"a","label":0,"notes":[
            {"note_type":"OR PostOp","timestamp":"2023-01-05T00:00:00Z","text":"second"},
            {"note_type":"OR PreOp","timestamp":"2023-01-02T00:00:00Z","text":"first"}]}"#
            .replace('\n', "");
        let recs = parse_corpus(line.as_bytes(), &NoteWhitelist::default()).unwrap();
        let texts: Vec<_> = recs[0].notes.iter().map(|n| n.text.as_str()).collect();
        assert_eq!(texts, ["first", "second"]);
    }

    #[test]
    fn record_with_no_retained_notes_is_kept_and_flagged() {
        let line = r#"{"patient_id":"a","label":0,"notes":[{"note_type":"Other","timestamp":"2023-01-05T00:00:00Z","text":"x"}]}"#;
        let recs = parse_corpus(line.as_bytes(), &NoteWhitelist::default()).unwrap();
        assert_eq!(recs.len(), 1);
        assert!(recs[0].is_empty());
    }

    #[test]
    fn malformed_line_is_reported_by_number() {
        let input = "{\"patient_id\":\"a\",\"label\":0,\"notes\":[]}\n{not json\n";
        match parse_corpus(input.as_bytes(), &NoteWhitelist::default()) {
            Err(CorpusError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_field_errors_and_unknown_field_is_ignored() {
        let missing = r#"{"patient_id":"a","notes":[]}"#;
        let err = parse_corpus(missing.as_bytes(), &NoteWhitelist::default()).unwrap_err();
        assert!(err.to_string().contains("label"), "{err}");

        let extra = r#"{"patient_id":"a","label":1,"mrn_hash":"zz","notes":[]}"#;
        assert_eq!(parse_corpus(extra.as_bytes(), &NoteWhitelist::default()).unwrap().len(), 1);
    }

    #[test]
    fn bad_label_and_duplicate_ids_are_rejected() {
        let bad = r#"{"patient_id":"a","label":2,"notes":[]}"#;
        assert!(matches!(
            parse_corpus(bad.as_bytes(), &NoteWhitelist::default()),
            Err(CorpusError::Malformed { line: 1, .. })
        ));
        let dup = "{\"patient_id\":\"a\",\"label\":1}\n{\"patient_id\":\"a\",\"label\":0}\n";
        assert!(matches!(
            parse_corpus(dup.as_bytes(), &NoteWhitelist::default()),
            Err(CorpusError::DuplicatePatient { line: 2, .. })
        ));
    }

    #[test]
    fn window_keeps_interval_around_anchor() {
        let r = record(vec![note(-40, "old"), note(-10, "mid"), note(0, "new")], Some(ts(0)));
        let w = window_notes(&r, 30).unwrap();
        let texts: Vec<_> = w.notes.iter().map(|n| n.text.as_str()).collect();
        assert_eq!(texts, ["mid", "new"]);
    }

    #[test]
    fn window_is_identity_when_all_notes_inside() {
        let r = record(vec![note(-5, "a"), note(0, "b")], None);
        assert_eq!(window_notes(&r, 30).unwrap(), r);
    }

    #[test]
    fn window_anchor_defaults_to_latest_note() {
        // anchor = T, so T-31d falls outside a 30-day window
        let r = record(vec![note(-31, "stale"), note(0, "latest")], None);
        let w = window_notes(&r, 30).unwrap();
        assert_eq!(w.notes.len(), 1);
        assert_eq!(w.notes[0].text, "latest");
    }

    #[test]
    fn window_edge_cases() {
        let empty = record(vec![], None);
        assert_eq!(window_notes(&empty, 30).unwrap(), empty);
        assert!(matches!(window_notes(&empty, 0), Err(CorpusError::InvalidWindow)));
        // exactly on the boundary is inside
        let r = record(vec![note(-30, "edge"), note(0, "x")], None);
        assert_eq!(window_notes(&r, 30).unwrap().notes.len(), 2);
        // notes after an explicit anchor are excluded
        let r = record(vec![note(0, "x"), note(2, "later")], Some(ts(1)));
        assert_eq!(window_notes(&r, 30).unwrap().notes.len(), 1);
    }

    #[test]
    fn concat_uses_blank_line_separator() {
        assert_eq!(concat_text(&record(vec![note(0, "A."), note(1, "B.")], None)), "A.\n\nB.");
        assert_eq!(concat_text(&record(vec![note(0, "only")], None)), "only");
        assert_eq!(concat_text(&record(vec![], None)), "");
    }

    #[test]
    fn chunk_sizes_follow_word_cap() {
        let counts =
            |n| -> Vec<u32> { chunk_text("p", &words(n), 512).unwrap().iter().map(|c| c.word_count).collect() };
        assert_eq!(counts(1030), [512, 512, 6]);
        assert_eq!(counts(512), [512]);
        assert_eq!(counts(513), [512, 1]);
        let chunks = chunk_text("p", &words(1030), 512).unwrap();
        assert_eq!(chunks.iter().map(|c| c.position).collect::<Vec<_>>(), [0, 1, 2]);
    }

    #[test]
    fn chunking_blank_text_is_empty() {
        assert!(chunk_text("p", "", 512).unwrap().is_empty());
        assert!(chunk_text("p", " \n\t ", 512).unwrap().is_empty());
        assert!(matches!(chunk_text("p", "a", 0), Err(CorpusError::InvalidChunkSize)));
    }

    #[test]
    fn chunk_keeps_inner_line_breaks() {
        let chunks = chunk_text("p", "  a b\n\nc d  ", 3).unwrap();
        assert_eq!(chunks[0].text, "a b\n\nc");
        assert_eq!(chunks[1].text, "d");
    }

    fn arb_text() -> impl Strategy<Value = String> {
        prop::collection::vec(
            prop_oneof![
                "[a-zA-Z0-9.,é]{1,8}",
                Just(" ".to_string()),
                Just("\n\n".to_string()),
                Just("\t".to_string()),
                Just("\u{3000}".to_string()),
            ],
            0..400,
        )
        .prop_map(|parts| parts.concat())
    }

    proptest! {
        #[test]
        fn chunk_round_trip_reproduces_words(text in arb_text(), max in 1usize..40) {
            let chunks = chunk_text("p", &text, max).unwrap();
            let joined: Vec<&str> = chunks.iter().flat_map(|c| c.text.split_whitespace()).collect();
            let source: Vec<&str> = text.split_whitespace().collect();
            prop_assert_eq!(joined, source);
            for (i, c) in chunks.iter().enumerate() {
                prop_assert_eq!(c.position as usize, i);
                prop_assert_eq!(c.word_count as usize, word_count(&c.text));
                prop_assert!(c.word_count >= 1 && c.word_count as usize <= max);
                if i + 1 < chunks.len() {
                    prop_assert_eq!(c.word_count as usize, max);
                }
            }
        }

        #[test]
        fn shrinking_window_never_adds_notes(days in prop::collection::vec(0i64..120, 0..12), w in 1u32..100) {
            let notes: Vec<_> = days.iter().map(|&d| note(-d, "t")).collect();
            let r = record(notes, None);
            let wide = window_notes(&r, w + 1).unwrap();
            let narrow = window_notes(&r, w).unwrap();
            prop_assert!(narrow.notes.len() <= wide.notes.len());
            prop_assert_eq!(window_notes(&r, u32::MAX).unwrap(), r);
        }
    }
}
