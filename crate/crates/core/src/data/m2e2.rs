//! Reader for the M2E2 benchmark layout:
//!
//! ```text
//! <dir>/text_only_event.json         [{sentence_id, words, golden-entity-mentions, golden-event-mentions}]
//! <dir>/text_multimedia_event.json   same layout
//! <dir>/image_only_event.json        {image_id: {event_type, role: {Role: [[id, x1, y1, x2, y2], ...]}}}
//! <dir>/image_multimedia_event.json  same layout
//! <dir>/crossmedia_coref.txt         sentence_id \t image_id \t event_type
//! <dir>/images/<image_id>.jpg        optional
//! ```
//!
//! Document ids are sentence and image ids with the trailing `_<n>` removed.
//! Image event types use `||` as separator and are normalised to `:`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;

use super::document::{DetectedObject, EntityMention, ImageEntry, MultimediaDocument, Sentence};
use super::records::{ArgumentRecord, CandidateRef, EventRecord, ImageSource, Mention};
use crate::candidates::{BBox, WordSpan};
use crate::error::{Error, Result};

const TEXT_FILES: [&str; 2] = ["text_only_event.json", "text_multimedia_event.json"];
const IMAGE_FILES: [&str; 2] = ["image_only_event.json", "image_multimedia_event.json"];
const COREF_FILE: &str = "crossmedia_coref.txt";

#[derive(Debug, Deserialize)]
struct RawSpan {
    start: usize,
    end: usize,
}

#[derive(Debug, Deserialize)]
struct RawEntity {
    start: usize,
    end: usize,
    #[serde(default)]
    entity_type: String,
}

#[derive(Debug, Deserialize)]
struct RawArgument {
    role: String,
    start: usize,
    end: usize,
}

#[derive(Debug, Deserialize)]
struct RawTextEvent {
    event_type: String,
    trigger: RawSpan,
    #[serde(default)]
    arguments: Vec<RawArgument>,
}

#[derive(Debug, Deserialize)]
struct RawSentence {
    sentence_id: String,
    words: Vec<String>,
    #[serde(default, rename = "golden-entity-mentions")]
    entities: Vec<RawEntity>,
    #[serde(default, rename = "golden-event-mentions")]
    events: Vec<RawTextEvent>,
}

#[derive(Debug, Deserialize)]
struct RawImageEvent {
    event_type: String,
    #[serde(default)]
    role: BTreeMap<String, Vec<Vec<Value>>>,
}

/// Detector output keyed by image id.
#[derive(Debug, Deserialize)]
struct RawDetection {
    bbox: [f64; 4],
    #[serde(default)]
    label: String,
}

#[derive(Debug, Clone, Default)]
pub struct M2e2Options {
    /// JSON file `{image_id: [{bbox, label}]}` with detector boxes.
    pub detections: Option<PathBuf>,
    /// Image directory; defaults to `<dir>/images`.
    pub image_dir: Option<PathBuf>,
}

/// `VOA_EN_NW_2017.03.24.3782183_4` → `VOA_EN_NW_2017.03.24.3782183`.
pub fn document_id(item_id: &str) -> &str {
    let stem = item_id.strip_suffix(".jpg").unwrap_or(item_id);
    match stem.rsplit_once('_') {
        Some((doc, n)) if !doc.is_empty() && n.chars().all(|c| c.is_ascii_digit()) => doc,
        _ => stem,
    }
}

pub fn normalise_event_type(raw: &str) -> String {
    raw.replace("||", ":")
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Ingestion { path: path.to_path_buf(), message: e.to_string() })
}

fn parse_box(path: &Path, image: &str, v: &[Value]) -> Result<BBox> {
    let nums: Vec<f64> = v.iter().filter_map(Value::as_f64).collect();
    let coords = match (v.len(), nums.len()) {
        (5, 4) | (5, 5) => &nums[nums.len() - 4..],
        (4, 4) => &nums[..],
        _ => {
            return Err(Error::Ingestion {
                path: path.to_path_buf(),
                message: format!("image {image}: malformed box {v:?}"),
            })
        }
    };
    let b = BBox::new(coords[0], coords[1], coords[2], coords[3]);
    b.validate()
        .map_err(|e| Error::Ingestion { path: path.to_path_buf(), message: format!("image {image}: {e}") })?;
    Ok(b)
}

fn doc_entry<'a>(docs: &'a mut BTreeMap<String, MultimediaDocument>, id: &str) -> &'a mut MultimediaDocument {
    docs.entry(id.to_string()).or_insert_with(|| MultimediaDocument {
        id: id.to_string(),
        sentences: Vec::new(),
        images: Vec::new(),
        events: Vec::new(),
    })
}

/// Loads every document under `dir`. Fails on an empty directory or any
/// dangling reference, naming the offending record.
pub fn load_m2e2(dir: &Path, options: &M2e2Options) -> Result<Vec<MultimediaDocument>> {
    if !dir.is_dir() {
        return Err(Error::Ingestion { path: dir.to_path_buf(), message: "not a directory".into() });
    }
    let image_dir = options.image_dir.clone().unwrap_or_else(|| dir.join("images"));
    let mut docs: BTreeMap<String, MultimediaDocument> = BTreeMap::new();
    let mut found_any = false;

    for name in TEXT_FILES {
        let path = dir.join(name);
        if !path.exists() {
            continue;
        }
        found_any = true;
        let sentences: Vec<RawSentence> = read_json(&path)?;
        for s in sentences {
            let d = doc_entry(&mut docs, document_id(&s.sentence_id));
            if d.sentence(&s.sentence_id).is_some() {
                continue;
            }
            let doc_id = d.id.clone();
            for e in s.events {
                d.events.push(EventRecord {
                    doc_id: doc_id.clone(),
                    event_type: e.event_type,
                    mention: Mention::Text {
                        sentence_id: s.sentence_id.clone(),
                        trigger: WordSpan::new(e.trigger.start, e.trigger.end),
                    },
                    multimedia_id: None,
                    arguments: e
                        .arguments
                        .into_iter()
                        .map(|a| ArgumentRecord {
                            role: a.role,
                            target: CandidateRef::Span(WordSpan::new(a.start, a.end)),
                            score: None,
                        })
                        .collect(),
                });
            }
            d.sentences.push(Sentence {
                id: s.sentence_id,
                words: s.words,
                entities: s
                    .entities
                    .into_iter()
                    .map(|e| EntityMention { span: WordSpan::new(e.start, e.end), entity_type: e.entity_type })
                    .collect(),
            });
        }
    }

    let detections: Option<BTreeMap<String, Vec<RawDetection>>> =
        options.detections.as_deref().map(read_json).transpose()?;

    for name in IMAGE_FILES {
        let path = dir.join(name);
        if !path.exists() {
            continue;
        }
        found_any = true;
        let images: BTreeMap<String, RawImageEvent> = read_json(&path)?;
        for (raw_id, ev) in images {
            let image_id = raw_id.strip_suffix(".jpg").unwrap_or(&raw_id).to_string();
            let d = doc_entry(&mut docs, document_id(&image_id));
            if d.image(&image_id).is_some() {
                continue;
            }
            let mut arguments = Vec::new();
            for (role, boxes) in &ev.role {
                for b in boxes {
                    arguments.push(ArgumentRecord {
                        role: role.clone(),
                        target: CandidateRef::Bbox(parse_box(&path, &image_id, b)?),
                        score: None,
                    });
                }
            }
            d.events.push(EventRecord {
                doc_id: d.id.clone(),
                event_type: normalise_event_type(&ev.event_type),
                mention: Mention::Image { image_id: image_id.clone() },
                multimedia_id: None,
                arguments,
            });
            let objects = detections.as_ref().map(|det| {
                det.get(&image_id)
                    .map(|v| v.iter().map(|o| DetectedObject { bbox: BBox::from(o.bbox), label: o.label.clone() }).collect())
                    .unwrap_or_default()
            });
            d.images.push(ImageEntry {
                source: ImageSource::File { path: image_dir.join(format!("{image_id}.jpg")) },
                id: image_id,
                objects,
            });
        }
    }

    if !found_any {
        return Err(Error::Ingestion { path: dir.to_path_buf(), message: "no M2E2 event files found".into() });
    }

    let coref = dir.join(COREF_FILE);
    if coref.exists() {
        let text = std::fs::read_to_string(&coref).map_err(|e| Error::io(&coref, e))?;
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
            let bad = |msg: String| Error::Ingestion { path: coref.clone(), message: format!("line {}: {msg}", i + 1) };
            let [sentence_id, image_raw, event_type] = cols[..] else {
                return Err(bad(format!("expected 3 columns, got {}", cols.len())));
            };
            let image_id = image_raw.strip_suffix(".jpg").unwrap_or(image_raw);
            let event_type = normalise_event_type(event_type);
            let d = docs
                .get_mut(document_id(sentence_id))
                .ok_or_else(|| bad(format!("unknown sentence {sentence_id}")))?;
            let mm = format!("{sentence_id}|{image_id}");
            let mut linked = [false, false];
            for ev in d.events.iter_mut().filter(|e| e.event_type == event_type && e.multimedia_id.is_none()) {
                let slot = match &ev.mention {
                    Mention::Text { sentence_id: s, .. } if s == sentence_id => 0,
                    Mention::Image { image_id: im } if im == image_id => 1,
                    _ => continue,
                };
                if !linked[slot] {
                    ev.multimedia_id = Some(mm.clone());
                    linked[slot] = true;
                }
            }
            if linked != [true, true] {
                return Err(bad(format!("no {event_type} event pair for {sentence_id} / {image_id}")));
            }
        }
    }

    let docs: Vec<MultimediaDocument> = docs.into_values().collect();
    for d in &docs {
        d.validate()?;
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn document_ids_strip_item_index() {
        assert_eq!(document_id("VOA_EN_NW_2017.03.24.3782183_4"), "VOA_EN_NW_2017.03.24.3782183");
        assert_eq!(document_id("doc_12.jpg"), "doc");
        assert_eq!(document_id("plain"), "plain");
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_m2e2(dir.path(), &M2e2Options::default()), Err(Error::Ingestion { .. })));
    }
}
