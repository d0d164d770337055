use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::records::{ArgumentRecord, CandidateRef, EventContext, EventInstance, EventRecord, ImageSource, Mention};
use crate::candidates::{BBox, WordSpan};
use crate::encoding::Modality;
use crate::error::{Error, Result};

/// IoU at which a detected box counts as covering an annotated one.
pub const IOU_MATCH: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityMention {
    pub span: WordSpan,
    #[serde(default)]
    pub entity_type: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub words: Vec<String>,
    /// Entity spans used as text candidates.
    #[serde(default)]
    pub entities: Vec<EntityMention>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedObject {
    pub bbox: BBox,
    #[serde(default)]
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageEntry {
    pub id: String,
    pub source: ImageSource,
    /// Detector boxes; `None` when no detector output was supplied.
    #[serde(default)]
    pub objects: Option<Vec<DetectedObject>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultimediaDocument {
    pub id: String,
    pub sentences: Vec<Sentence>,
    pub images: Vec<ImageEntry>,
    /// Gold events with their arguments.
    pub events: Vec<EventRecord>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: usize,
    pub sentences: usize,
    pub images: usize,
    pub text_events: usize,
    pub image_events: usize,
    pub multimedia_events: usize,
}

impl CorpusStats {
    pub fn of(docs: &[MultimediaDocument]) -> Self {
        let mut s = Self { documents: docs.len(), ..Self::default() };
        let mut mm = BTreeSet::new();
        for d in docs {
            s.sentences += d.sentences.len();
            s.images += d.images.len();
            for e in &d.events {
                match e.modality() {
                    Modality::Text => s.text_events += 1,
                    Modality::Image => s.image_events += 1,
                }
                if let Some(m) = &e.multimedia_id {
                    mm.insert((d.id.clone(), m.clone()));
                }
            }
        }
        s.multimedia_events = mm.len();
        s
    }
}

impl MultimediaDocument {
    pub fn sentence(&self, id: &str) -> Option<&Sentence> {
        self.sentences.iter().find(|s| s.id == id)
    }

    pub fn image(&self, id: &str) -> Option<&ImageEntry> {
        self.images.iter().find(|i| i.id == id)
    }

    /// Referential integrity: every span, box and mention points at an
    /// existing sentence or image, and every multimedia id joins one text and
    /// one image event of the same type.
    pub fn validate(&self) -> Result<()> {
        let err = |what: String| Err(Error::Data(format!("document {}: {what}", self.id)));
        let mut seen = BTreeSet::new();
        for s in &self.sentences {
            if !seen.insert(("s", s.id.as_str())) {
                return err(format!("duplicate sentence {}", s.id));
            }
            for e in &s.entities {
                if e.span.is_empty() || e.span.end > s.words.len() {
                    return err(format!("entity {:?} outside sentence {}", e.span, s.id));
                }
            }
        }
        for i in &self.images {
            if !seen.insert(("i", i.id.as_str())) {
                return err(format!("duplicate image {}", i.id));
            }
            for o in i.objects.iter().flatten() {
                o.bbox.validate().or_else(|e| err(format!("image {}: {e}", i.id)))?;
            }
        }
        let mut pairs: BTreeMap<&str, Vec<&EventRecord>> = BTreeMap::new();
        for ev in &self.events {
            if ev.doc_id != self.id {
                return err(format!("event {} belongs to document {}", ev.event_type, ev.doc_id));
            }
            match &ev.mention {
                Mention::Text { sentence_id, trigger } => {
                    let Some(s) = self.sentence(sentence_id) else {
                        return err(format!("event {} references missing sentence {sentence_id}", ev.event_type));
                    };
                    if trigger.is_empty() || trigger.end > s.words.len() {
                        return err(format!("trigger {trigger:?} outside sentence {sentence_id}"));
                    }
                    for a in &ev.arguments {
                        match a.target {
                            CandidateRef::Span(sp) if !sp.is_empty() && sp.end <= s.words.len() => {}
                            other => return err(format!("argument {} target {other:?} invalid in {sentence_id}", a.role)),
                        }
                    }
                }
                Mention::Image { image_id } => {
                    if self.image(image_id).is_none() {
                        return err(format!("event {} references missing image {image_id}", ev.event_type));
                    }
                    for a in &ev.arguments {
                        match a.target {
                            CandidateRef::Bbox(b) if b.validate().is_ok() => {}
                            other => return err(format!("argument {} target {other:?} invalid in {image_id}", a.role)),
                        }
                    }
                }
            }
            if let Some(m) = &ev.multimedia_id {
                pairs.entry(m).or_default().push(ev);
            }
        }
        for (m, evs) in pairs {
            let ok = evs.len() == 2
                && evs[0].event_type == evs[1].event_type
                && evs[0].modality() != evs[1].modality();
            if !ok {
                return err(format!("multimedia event {m} must join one text and one image event of one type"));
            }
        }
        Ok(())
    }
}

/// All gold events of the corpus.
pub fn gold_records(docs: &[MultimediaDocument]) -> Vec<EventRecord> {
    docs.iter().flat_map(|d| d.events.iter().cloned()).collect()
}

/// Where event mentions come from when building instances.
#[derive(Debug, Clone, Copy)]
pub enum TriggerSource<'a> {
    Gold,
    /// System event mentions; their `arguments` are ignored.
    Predicted(&'a [EventRecord]),
}

/// Where candidates come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CandidateSource {
    /// Sentence entities and detector boxes.
    Detected,
    /// The annotated argument spans and boxes of the matching gold event.
    Gold,
}

/// Turns documents into model inputs. Text candidates are labelled when their
/// span equals a gold argument span; image candidates when their IoU with a
/// gold box reaches [`IOU_MATCH`].
pub fn build_instances(
    docs: &[MultimediaDocument],
    ontology: &str,
    triggers: TriggerSource<'_>,
    candidates: CandidateSource,
) -> Result<Vec<EventInstance>> {
    let by_id: BTreeMap<&str, &MultimediaDocument> = docs.iter().map(|d| (d.id.as_str(), d)).collect();
    let mentions: Vec<&EventRecord> = match triggers {
        TriggerSource::Gold => docs.iter().flat_map(|d| d.events.iter()).collect(),
        TriggerSource::Predicted(p) => p.iter().collect(),
    };
    let mut out = Vec::with_capacity(mentions.len());
    for (k, m) in mentions.into_iter().enumerate() {
        let doc = by_id
            .get(m.doc_id.as_str())
            .ok_or_else(|| Error::Data(format!("event mention references unknown document {}", m.doc_id)))?;
        let gold = doc
            .events
            .iter()
            .find(|g| g.event_type == m.event_type && g.mention == m.mention);
        let gold_args: &[ArgumentRecord] = gold.map(|g| g.arguments.as_slice()).unwrap_or(&[]);
        let (context, cands) = match &m.mention {
            Mention::Text { sentence_id, trigger } => {
                let s = doc.sentence(sentence_id).ok_or_else(|| {
                    Error::Data(format!("document {}: mention references missing sentence {sentence_id}", doc.id))
                })?;
                let mut spans: Vec<WordSpan> = match candidates {
                    CandidateSource::Detected => s.entities.iter().map(|e| e.span).collect(),
                    CandidateSource::Gold => gold_args
                        .iter()
                        .filter_map(|a| match a.target {
                            CandidateRef::Span(sp) => Some(sp),
                            CandidateRef::Bbox(_) => None,
                        })
                        .collect(),
                };
                dedup_spans(&mut spans);
                let ctx = EventContext::Text {
                    sentence_id: sentence_id.clone(),
                    words: s.words.clone(),
                    trigger: *trigger,
                };
                (ctx, spans.into_iter().map(CandidateRef::Span).collect::<Vec<_>>())
            }
            Mention::Image { image_id } => {
                let img = doc.image(image_id).ok_or_else(|| {
                    Error::Data(format!("document {}: mention references missing image {image_id}", doc.id))
                })?;
                let mut boxes: Vec<BBox> = match candidates {
                    CandidateSource::Detected => img
                        .objects
                        .as_ref()
                        .ok_or_else(|| Error::Data(format!("image {image_id} has no detector output")))?
                        .iter()
                        .map(|o| o.bbox)
                        .collect(),
                    CandidateSource::Gold => gold_args
                        .iter()
                        .filter_map(|a| match a.target {
                            CandidateRef::Bbox(b) => Some(b),
                            CandidateRef::Span(_) => None,
                        })
                        .collect(),
                };
                boxes.dedup();
                let ctx = EventContext::Image { image_id: image_id.clone(), image: img.source.clone() };
                (ctx, boxes.into_iter().map(CandidateRef::Bbox).collect::<Vec<_>>())
            }
        };
        let labels = cands.iter().map(|c| label_candidate(c, gold_args)).collect();
        let inst = EventInstance {
            id: format!("{}#{k}", m.doc_id),
            doc_id: m.doc_id.clone(),
            ontology: ontology.to_string(),
            event_type: m.event_type.clone(),
            context,
            candidates: cands,
            labels,
            multimedia_id: gold.and_then(|g| g.multimedia_id.clone()).or_else(|| m.multimedia_id.clone()),
        };
        inst.validate()?;
        out.push(inst);
    }
    Ok(out)
}

fn dedup_spans(spans: &mut Vec<WordSpan>) {
    let mut seen = BTreeSet::new();
    spans.retain(|s| seen.insert(*s));
}

fn label_candidate(c: &CandidateRef, gold: &[ArgumentRecord]) -> Vec<String> {
    let mut roles: Vec<String> = gold
        .iter()
        .filter(|a| match (c, &a.target) {
            (CandidateRef::Span(x), CandidateRef::Span(y)) => x == y,
            (CandidateRef::Bbox(x), CandidateRef::Bbox(y)) => x.iou(y) >= IOU_MATCH,
            _ => false,
        })
        .map(|a| a.role.clone())
        .collect();
    roles.sort();
    roles.dedup();
    roles
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc() -> MultimediaDocument {
        MultimediaDocument {
            id: "d".into(),
            sentences: vec![Sentence {
                id: "d_1".into(),
                words: ["Troops", "attacked", "the", "town"].map(String::from).to_vec(),
                entities: vec![
                    EntityMention { span: WordSpan::new(0, 1), entity_type: "PER".into() },
                    EntityMention { span: WordSpan::new(2, 4), entity_type: "GPE".into() },
                ],
            }],
            images: vec![ImageEntry {
                id: "d_2".into(),
                source: ImageSource::Painted { width: 32, height: 32, background: [0, 0, 0], rects: vec![] },
                objects: Some(vec![
                    DetectedObject { bbox: BBox::new(0.0, 0.0, 10.0, 10.0), label: "person".into() },
                    DetectedObject { bbox: BBox::new(20.0, 20.0, 30.0, 30.0), label: "car".into() },
                ]),
            }],
            events: vec![
                EventRecord {
                    doc_id: "d".into(),
                    event_type: "Conflict:Attack".into(),
                    mention: Mention::Text { sentence_id: "d_1".into(), trigger: WordSpan::new(1, 2) },
                    multimedia_id: Some("m".into()),
                    arguments: vec![
                        ArgumentRecord { role: "Attacker".into(), target: CandidateRef::Span(WordSpan::new(0, 1)), score: None },
                        ArgumentRecord { role: "Target".into(), target: CandidateRef::Span(WordSpan::new(3, 4)), score: None },
                    ],
                },
                EventRecord {
                    doc_id: "d".into(),
                    event_type: "Conflict:Attack".into(),
                    mention: Mention::Image { image_id: "d_2".into() },
                    multimedia_id: Some("m".into()),
                    arguments: vec![ArgumentRecord {
                        role: "Attacker".into(),
                        target: CandidateRef::Bbox(BBox::new(1.0, 1.0, 10.0, 10.0)),
                        score: None,
                    }],
                },
            ],
        }
    }

    #[test]
    fn detected_candidates_are_labelled() {
        let d = doc();
        d.validate().unwrap();
        let inst = build_instances(&[d], "m2e2", TriggerSource::Gold, CandidateSource::Detected).unwrap();
        assert_eq!(inst.len(), 2);
        assert_eq!(inst[0].labels, vec![vec!["Attacker".to_string()], vec![]]);
        assert_eq!(inst[1].labels, vec![vec!["Attacker".to_string()], vec![]]);
        assert_eq!(inst[1].multimedia_id.as_deref(), Some("m"));
    }

    #[test]
    fn gold_candidates_use_annotations() {
        let inst = build_instances(&[doc()], "m2e2", TriggerSource::Gold, CandidateSource::Gold).unwrap();
        assert_eq!(inst[0].candidates.len(), 2);
        assert!(inst[0].labels.iter().all(|l| !l.is_empty()));
    }

    #[test]
    fn predicted_trigger_without_gold_gets_no_labels() {
        let pred = vec![EventRecord {
            doc_id: "d".into(),
            event_type: "Contact:Meet".into(),
            mention: Mention::Text { sentence_id: "d_1".into(), trigger: WordSpan::new(1, 2) },
            multimedia_id: None,
            arguments: vec![],
        }];
        let inst = build_instances(&[doc()], "m2e2", TriggerSource::Predicted(&pred), CandidateSource::Detected).unwrap();
        assert_eq!(inst.len(), 1);
        assert!(inst[0].labels.iter().all(Vec::is_empty));
    }

    #[test]
    fn dangling_references_are_rejected() {
        let mut d = doc();
        d.events[0].mention = Mention::Text { sentence_id: "nope".into(), trigger: WordSpan::new(0, 1) };
        let e = d.validate().unwrap_err().to_string();
        assert!(e.contains("nope"), "{e}");
        let mut d = doc();
        d.events[1].event_type = "Contact:Meet".into();
        assert!(d.validate().is_err());
    }

    #[test]
    fn stats_count_multimedia_pairs_once() {
        let s = CorpusStats::of(&[doc()]);
        assert_eq!((s.text_events, s.image_events, s.multimedia_events), (1, 1, 1));
    }
}
