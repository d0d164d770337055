//! Adapters for training corpora. Each format is read into source-ontology
//! labels and relabelled through an [`OntologyMapping`].
//!
//! * `ace_like`: JSON lines `{doc_id, sent_id, tokens, entity_mentions: [{id, start, end, entity_type}],
//!   event_mentions: [{event_type, trigger: {start, end}, arguments: [{entity_id, role}]}]}`
//! * `swig_like`: one JSON object `{file_name: {verb, height, width, bb: {role: [x1, y1, x2, y2]}}}`;
//!   boxes of `-1` mark absent roles. Images are looked up next to the file, under `images/`.
//! * `framenet_like`: JSON lines `{doc_id, sent_id, tokens, frame, target: {start, end},
//!   frame_elements: [{name, start, end}]}`

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::records::{read_jsonl, CandidateRef, EventContext, EventInstance, ImageSource};
use crate::candidates::{BBox, WordSpan};
use crate::error::{Error, Result};
use crate::ontology::{map_labels, Ontology, OntologyMapping};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    AceLike,
    SwigLike,
    FramenetLike,
}

impl FromStr for CorpusFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ace_like" => Ok(Self::AceLike),
            "swig_like" => Ok(Self::SwigLike),
            "framenet_like" => Ok(Self::FramenetLike),
            other => Err(Error::Config(format!("unknown corpus format '{other}'"))),
        }
    }
}

/// What to do with records whose labels the mapping does not cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strictness {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusLoad {
    pub instances: Vec<EventInstance>,
    /// Events mapped to DROP.
    pub dropped: usize,
    /// Events skipped in lenient mode because a label had no mapping.
    pub unmapped: usize,
}

/// A source event before relabelling.
struct SourceEvent {
    id: String,
    doc_id: String,
    event_type: String,
    context: EventContext,
    candidates: Vec<CandidateRef>,
    /// `(source role, candidate index)`
    roles: Vec<(String, usize)>,
}

#[derive(Deserialize)]
struct AceSpan {
    start: usize,
    end: usize,
}

#[derive(Deserialize)]
struct AceEntity {
    id: String,
    start: usize,
    end: usize,
}

#[derive(Deserialize)]
struct AceArgument {
    entity_id: String,
    role: String,
}

#[derive(Deserialize)]
struct AceEvent {
    event_type: String,
    trigger: AceSpan,
    #[serde(default)]
    arguments: Vec<AceArgument>,
}

#[derive(Deserialize)]
struct AceSentence {
    doc_id: String,
    sent_id: String,
    tokens: Vec<String>,
    #[serde(default)]
    entity_mentions: Vec<AceEntity>,
    #[serde(default)]
    event_mentions: Vec<AceEvent>,
}

#[derive(Deserialize)]
struct SwigEntry {
    verb: String,
    #[serde(default)]
    bb: BTreeMap<String, [f64; 4]>,
}

#[derive(Deserialize)]
struct FrameElement {
    name: String,
    start: usize,
    end: usize,
}

#[derive(Deserialize)]
struct FramenetSentence {
    doc_id: String,
    sent_id: String,
    tokens: Vec<String>,
    frame: String,
    target: AceSpan,
    #[serde(default)]
    frame_elements: Vec<FrameElement>,
}

fn read_ace(path: &Path) -> Result<Vec<SourceEvent>> {
    let mut out = Vec::new();
    for s in read_jsonl::<AceSentence>(path)? {
        let mut spans: Vec<WordSpan> = Vec::new();
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        for e in &s.entity_mentions {
            let span = WordSpan::new(e.start, e.end);
            let i = spans.iter().position(|x| *x == span).unwrap_or_else(|| {
                spans.push(span);
                spans.len() - 1
            });
            index.insert(e.id.as_str(), i);
        }
        for (k, ev) in s.event_mentions.iter().enumerate() {
            let mut roles = Vec::new();
            for a in &ev.arguments {
                let i = *index.get(a.entity_id.as_str()).ok_or_else(|| Error::Ingestion {
                    path: path.to_path_buf(),
                    message: format!("sentence {}: argument references unknown entity {}", s.sent_id, a.entity_id),
                })?;
                roles.push((a.role.clone(), i));
            }
            out.push(SourceEvent {
                id: format!("{}#{k}", s.sent_id),
                doc_id: s.doc_id.clone(),
                event_type: ev.event_type.clone(),
                context: EventContext::Text {
                    sentence_id: s.sent_id.clone(),
                    words: s.tokens.clone(),
                    trigger: WordSpan::new(ev.trigger.start, ev.trigger.end),
                },
                candidates: spans.iter().copied().map(CandidateRef::Span).collect(),
                roles,
            });
        }
    }
    Ok(out)
}

fn read_swig(path: &Path, image_dir: &Path) -> Result<Vec<SourceEvent>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let entries: BTreeMap<String, SwigEntry> = serde_json::from_slice(&bytes)
        .map_err(|e| Error::Ingestion { path: path.to_path_buf(), message: e.to_string() })?;
    let mut out = Vec::new();
    for (file, e) in entries {
        let mut boxes: Vec<BBox> = Vec::new();
        let mut roles = Vec::new();
        for (role, b) in &e.bb {
            if b.iter().any(|&v| v < 0.0) {
                continue;
            }
            let b = BBox::from(*b);
            if b.validate().is_err() {
                continue;
            }
            let i = boxes.iter().position(|x| *x == b).unwrap_or_else(|| {
                boxes.push(b);
                boxes.len() - 1
            });
            roles.push((role.clone(), i));
        }
        let stem = file.rsplit_once('.').map_or(file.as_str(), |(s, _)| s).to_string();
        out.push(SourceEvent {
            id: stem.clone(),
            doc_id: stem.clone(),
            event_type: e.verb,
            context: EventContext::Image { image_id: stem, image: ImageSource::File { path: image_dir.join(&file) } },
            candidates: boxes.into_iter().map(CandidateRef::Bbox).collect(),
            roles,
        });
    }
    Ok(out)
}

fn read_framenet(path: &Path) -> Result<Vec<SourceEvent>> {
    let mut out = Vec::new();
    for s in read_jsonl::<FramenetSentence>(path)? {
        let mut spans: Vec<WordSpan> = Vec::new();
        let mut roles = Vec::new();
        for fe in &s.frame_elements {
            let span = WordSpan::new(fe.start, fe.end);
            let i = spans.iter().position(|x| *x == span).unwrap_or_else(|| {
                spans.push(span);
                spans.len() - 1
            });
            roles.push((fe.name.clone(), i));
        }
        out.push(SourceEvent {
            id: s.sent_id.clone(),
            doc_id: s.doc_id,
            event_type: s.frame,
            context: EventContext::Text {
                sentence_id: s.sent_id,
                words: s.tokens,
                trigger: WordSpan::new(s.target.start, s.target.end),
            },
            candidates: spans.into_iter().map(CandidateRef::Span).collect(),
            roles,
        });
    }
    Ok(out)
}

/// Reads a training corpus and relabels it into `target`.
pub fn load_training_corpus(
    path: &Path,
    format: CorpusFormat,
    mapping: &OntologyMapping,
    target: &Ontology,
    strictness: Strictness,
    image_dir: Option<PathBuf>,
) -> Result<CorpusLoad> {
    mapping.validate(None, target)?;
    let events = match format {
        CorpusFormat::AceLike => read_ace(path)?,
        CorpusFormat::FramenetLike => read_framenet(path)?,
        CorpusFormat::SwigLike => {
            let dir = image_dir.unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).join("images"));
            read_swig(path, &dir)?
        }
    };
    let mut load = CorpusLoad::default();
    for ev in events {
        let mapped = match map_labels(mapping, &ev.event_type, &ev.roles) {
            Ok(m) => m,
            Err(e @ Error::Lookup(_)) => match strictness {
                Strictness::Strict => {
                    return Err(Error::Data(format!("{}: record {}: {e}", path.display(), ev.id)));
                }
                Strictness::Lenient => {
                    load.unmapped += 1;
                    continue;
                }
            },
            Err(e) => return Err(e),
        };
        let Some((event_type, roles)) = mapped else {
            load.dropped += 1;
            continue;
        };
        target.require_event(&event_type)?;
        let mut labels = vec![Vec::new(); ev.candidates.len()];
        for (role, i) in roles {
            if !labels[i].contains(&role) {
                labels[i].push(role);
            }
        }
        let inst = EventInstance {
            id: ev.id,
            doc_id: ev.doc_id,
            ontology: target.name().to_string(),
            event_type,
            context: ev.context,
            candidates: ev.candidates,
            labels,
            multimedia_id: None,
        };
        inst.validate()?;
        load.instances.push(inst);
    }
    Ok(load)
}
