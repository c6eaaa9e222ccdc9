//! JSON Lines corpus manifests: one utterance record per line.

use std::fs;
use std::path::Path;

use cascade_ser_core::{CorpusManifest, Emotion, UtteranceRecord};
use log::warn;
use serde_json::{Map, Value};

use crate::error::{io_err, Error, Result};

const FIELDS: [&str; 5] = ["path", "speaker_id", "emotion", "sentence_id", "repetition"];

pub fn load_manifest(path: &Path) -> Result<CorpusManifest> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_manifest(&text, path)
}

/// Parses manifest text; `origin` only labels error messages.
pub fn parse_manifest(text: &str, origin: &Path) -> Result<CorpusManifest> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let schema = |reason: String| Error::Schema { path: origin.to_path_buf(), line: i + 1, reason };
        let object: Map<String, Value> = match serde_json::from_str(line) {
            Ok(Value::Object(o)) => o,
            Ok(_) => return Err(schema("expected a JSON object".into())),
            Err(e) => return Err(schema(e.to_string())),
        };
        for key in object.keys().filter(|k| !FIELDS.contains(&k.as_str())) {
            warn!("{}:{}: ignoring unknown field {key:?}", origin.display(), i + 1);
        }
        let field = |name: &str| object.get(name).ok_or_else(|| schema(format!("missing field {name:?}")));
        let string = |name: &str| -> Result<String> {
            field(name)?.as_str().map(str::to_owned).ok_or_else(|| schema(format!("{name:?} must be a string")))
        };
        let index = |name: &str| -> Result<u32> {
            field(name)?
                .as_u64()
                .filter(|&v| v >= 1)
                .and_then(|v| u32::try_from(v).ok())
                .ok_or_else(|| schema(format!("{name:?} must be an integer >= 1")))
        };
        let emotion: Emotion = string("emotion")?.parse()?;
        records.push(UtteranceRecord {
            path: string("path")?,
            speaker_id: string("speaker_id")?,
            emotion,
            sentence_id: index("sentence_id")?,
            repetition: index("repetition")?,
        });
    }
    Ok(CorpusManifest::from_records(records)?)
}

pub fn render_manifest(manifest: &CorpusManifest) -> String {
    let mut out = String::new();
    for r in manifest.records() {
        out.push_str(&serde_json::to_string(r).expect("records always serialize"));
        out.push('\n');
    }
    out
}

pub fn write_manifest(path: &Path, manifest: &CorpusManifest) -> Result<()> {
    fs::write(path, render_manifest(manifest)).map_err(io_err(path))
}
