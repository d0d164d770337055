//! The normalized record schema shared by loaders, trainer and evaluator.
//! Records are stored one JSON object per line.

use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::candidates::{BBox, WordSpan};
use crate::encoding::{load_image, Modality};
use crate::error::{Error, Result};

/// Rectangle of solid colour on a painted image, in integer pixel coordinates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaintedRect {
    pub rect: [u32; 4],
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ImageSource {
    File { path: PathBuf },
    /// Procedurally drawn image: a background colour and filled rectangles,
    /// later rectangles drawn over earlier ones.
    Painted { width: u32, height: u32, background: [u8; 3], rects: Vec<PaintedRect> },
}

impl ImageSource {
    pub fn dimensions(&self) -> Result<(u32, u32)> {
        match self {
            ImageSource::Painted { width, height, .. } => Ok((*width, *height)),
            ImageSource::File { path } => image::image_dimensions(path)
                .map_err(|e| Error::Ingestion { path: path.clone(), message: e.to_string() }),
        }
    }

    pub fn load(&self) -> Result<RgbImage> {
        match self {
            ImageSource::File { path } => load_image(path),
            ImageSource::Painted { width, height, background, rects } => {
                let mut img = RgbImage::from_pixel(*width, *height, Rgb(*background));
                for r in rects {
                    let [x0, y0, x1, y1] = r.rect;
                    for y in y0..y1.min(*height) {
                        for x in x0..x1.min(*width) {
                            img.put_pixel(x, y, Rgb(r.color));
                        }
                    }
                }
                Ok(img)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventContext {
    Text { sentence_id: String, words: Vec<String>, trigger: WordSpan },
    Image { image_id: String, image: ImageSource },
}

impl EventContext {
    pub fn modality(&self) -> Modality {
        match self {
            EventContext::Text { .. } => Modality::Text,
            EventContext::Image { .. } => Modality::Image,
        }
    }
}

/// A candidate argument: an entity span or an object box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateRef {
    Span(WordSpan),
    Bbox(BBox),
}

impl CandidateRef {
    pub fn modality(&self) -> Modality {
        match self {
            CandidateRef::Span(_) => Modality::Text,
            CandidateRef::Bbox(_) => Modality::Image,
        }
    }
}

/// One event mention with its candidates and gold role labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventInstance {
    pub id: String,
    pub doc_id: String,
    pub ontology: String,
    pub event_type: String,
    pub context: EventContext,
    pub candidates: Vec<CandidateRef>,
    /// Gold roles per candidate; empty for non-arguments.
    pub labels: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multimedia_id: Option<String>,
}

impl EventInstance {
    pub fn modality(&self) -> Modality {
        self.context.modality()
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.candidates.len() {
            return Err(Error::Data(format!(
                "instance {}: {} candidates but {} label lists",
                self.id,
                self.candidates.len(),
                self.labels.len()
            )));
        }
        let m = self.modality();
        if let Some(c) = self.candidates.iter().find(|c| c.modality() != m) {
            return Err(Error::Data(format!("instance {}: {c:?} in a {} context", self.id, m.as_str())));
        }
        if let EventContext::Text { words, trigger, .. } = &self.context {
            if trigger.is_empty() || trigger.end > words.len() {
                return Err(Error::Data(format!("instance {}: trigger outside sentence", self.id)));
            }
            for c in &self.candidates {
                if let CandidateRef::Span(s) = c {
                    if s.is_empty() || s.end > words.len() {
                        return Err(Error::Data(format!("instance {}: span {s:?} outside sentence", self.id)));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Where an event mention is anchored.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Mention {
    Text { sentence_id: String, trigger: WordSpan },
    Image { image_id: String },
}

impl Mention {
    pub fn modality(&self) -> Modality {
        match self {
            Mention::Text { .. } => Modality::Text,
            Mention::Image { .. } => Modality::Image,
        }
    }

    /// Sentence or image id.
    pub fn location(&self) -> &str {
        match self {
            Mention::Text { sentence_id, .. } => sentence_id,
            Mention::Image { image_id } => image_id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgumentRecord {
    pub role: String,
    pub target: CandidateRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

/// An event mention with arguments: the format of both predictions and gold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub doc_id: String,
    pub event_type: String,
    pub mention: Mention,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub multimedia_id: Option<String>,
    #[serde(default)]
    pub arguments: Vec<ArgumentRecord>,
}

impl EventRecord {
    pub fn modality(&self) -> Modality {
        self.mention.modality()
    }
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Ingestion {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", i + 1),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// SHA-256 of the JSON-lines encoding of `records`.
pub fn fingerprint<T: Serialize>(records: &[T]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for r in records {
        h.update(serde_json::to_vec(r).expect("records serialize"));
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}
