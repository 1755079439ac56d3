use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Keystroke, SessionMeta, SourceCorpus, TouchPoint, TypedPhrase, VocabSpec};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhraseRecord {
    participant: String,
    age: u32,
    device: String,
    screen_w: u32,
    screen_h: u32,
    corpus: SourceCorpus,
    phrase: String,
    points: Vec<(f64, f64, i64)>,
}

pub fn load_dataset(path: &Path, vocab: &VocabSpec) -> Result<Vec<TypedPhrase>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text, vocab)
}

/// Parses JSONL text, one phrase record per non-blank line, in file order.
pub fn parse_dataset(text: &str, vocab: &VocabSpec) -> Result<Vec<TypedPhrase>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: PhraseRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        out.push(from_record(record, vocab)?);
    }
    Ok(out)
}

fn from_record(r: PhraseRecord, vocab: &VocabSpec) -> Result<TypedPhrase> {
    let bad = |message: String| Error::Alignment {
        phrase: r.phrase.clone(),
        message,
    };
    if r.participant.is_empty() {
        return Err(bad("empty participant id".into()));
    }
    if r.screen_w == 0 || r.screen_h == 0 {
        return Err(bad(format!("screen {}x{} has a zero dimension", r.screen_w, r.screen_h)));
    }
    let indices = vocab.encode_text(&r.phrase);
    if indices.len() != r.points.len() {
        return Err(bad(format!(
            "{} points for {} characters",
            r.points.len(),
            indices.len()
        )));
    }
    let mut prev_t = i64::MIN;
    let mut points = Vec::with_capacity(indices.len());
    for (&(x, y, t_ms), char_index) in r.points.iter().zip(indices) {
        if !x.is_finite() || !y.is_finite() {
            return Err(bad(format!("non-finite coordinate ({x}, {y})")));
        }
        if t_ms < prev_t {
            return Err(bad(format!("timestamp {t_ms} precedes {prev_t}")));
        }
        prev_t = t_ms;
        points.push(Keystroke {
            point: TouchPoint::new(x, y, t_ms),
            char_index,
        });
    }
    Ok(TypedPhrase {
        meta: SessionMeta {
            participant_id: r.participant,
            age: r.age,
            device: r.device,
            screen_w: r.screen_w,
            screen_h: r.screen_h,
        },
        phrase: r.phrase,
        points,
        source_corpus: r.corpus,
    })
}

fn to_record(p: &TypedPhrase) -> PhraseRecord {
    PhraseRecord {
        participant: p.meta.participant_id.clone(),
        age: p.meta.age,
        device: p.meta.device.clone(),
        screen_w: p.meta.screen_w,
        screen_h: p.meta.screen_h,
        corpus: p.source_corpus,
        phrase: p.phrase.clone(),
        points: p
            .points
            .iter()
            .map(|k| (k.point.x, k.point.y, k.point.t_ms))
            .collect(),
    }
}

/// Canonical JSONL serialization: one record per line, `\n` terminated.
pub fn serialize_dataset(data: &[TypedPhrase]) -> String {
    let mut out = String::new();
    for p in data {
        let line = serde_json::to_string(&to_record(p)).expect("record serializes");
        let _ = writeln!(out, "{line}");
    }
    out
}

pub fn save_dataset(path: &Path, data: &[TypedPhrase]) -> Result<()> {
    std::fs::write(path, serialize_dataset(data)).map_err(|e| Error::io(path, e))
}
