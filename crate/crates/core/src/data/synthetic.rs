//! Seeded synthetic multimedia corpora.
//!
//! Every document holds one sentence and one painted image, each with one
//! event. A gold argument carries its role's planted feature with probability
//! `signal`: in text a word like `agentb`, in images a 16×16 block whose colour
//! is fixed per (role, variant). Otherwise it carries the feature of a random
//! role from the same template. Distractor candidates carry features that
//! belong to no role. The image background colour encodes the event type.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::document::{build_instances, CandidateSource, DetectedObject, EntityMention, ImageEntry, MultimediaDocument, Sentence, TriggerSource};
use super::records::{EventInstance, ArgumentRecord, CandidateRef, EventRecord, ImageSource, Mention, PaintedRect};
use crate::candidates::{BBox, WordSpan};
use crate::error::{Error, Result};
use crate::layers::keyed_rng;
use crate::ontology::{EventTypeDef, Ontology};

pub const ROLE_POOL: [&str; 12] = [
    "Agent", "Patient", "Instrument", "Place", "Source", "Destination", "Recipient", "Giver", "Vehicle", "Victim",
    "Witness", "Beneficiary",
];
const VARIANT_SUFFIX: [&str; 4] = ["a", "b", "c", "d"];
const FILLERS: [&str; 8] = ["the", "reportedly", "near", "today", "after", "local", "officials", "said"];
pub const SYNTH_IMAGE_SIZE: u32 = 64;
pub const SYNTH_CELL: u32 = 16;
const GRID_CELLS: usize = ((SYNTH_IMAGE_SIZE / SYNTH_CELL) * (SYNTH_IMAGE_SIZE / SYNTH_CELL)) as usize;
const MAX_EVENT_TYPES: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub event_types: usize,
    pub min_roles: usize,
    pub max_roles: usize,
    /// Training events per modality (one text and one image event per document).
    pub events_per_modality: usize,
    pub heldout_events_per_modality: usize,
    /// Non-argument candidates per event.
    pub distractors: usize,
    /// Probability that a gold candidate carries its own role's feature.
    pub signal: f64,
    /// Feature variants per role.
    pub variants: usize,
    pub fillers: usize,
    /// Probability that a document's image event has its sentence's event type.
    pub multimedia_rate: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            event_types: 8,
            min_roles: 2,
            max_roles: 5,
            events_per_modality: 64,
            heldout_events_per_modality: 64,
            distractors: 2,
            signal: 1.0,
            variants: 3,
            fillers: 3,
            multimedia_rate: 0.5,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.event_types == 0 || self.event_types > MAX_EVENT_TYPES {
            return bad(format!("event_types must be in 1..={MAX_EVENT_TYPES}"));
        }
        if self.min_roles == 0 || self.max_roles == 0 {
            return bad("events need at least one role".into());
        }
        if self.min_roles > self.max_roles || self.max_roles > ROLE_POOL.len() {
            return bad(format!("need 1 <= min_roles <= max_roles <= {}", ROLE_POOL.len()));
        }
        if self.max_roles + self.distractors > GRID_CELLS {
            return bad(format!("at most {GRID_CELLS} candidates fit in one image"));
        }
        if self.events_per_modality == 0 {
            return bad("zero events per modality".into());
        }
        if self.variants == 0 || self.variants > VARIANT_SUFFIX.len() {
            return bad(format!("variants must be in 1..={}", VARIANT_SUFFIX.len()));
        }
        if !(0.0..=1.0).contains(&self.signal) || !(0.0..=1.0).contains(&self.multimedia_rate) {
            return bad("probabilities must lie in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedFeature {
    pub role: String,
    pub word: String,
    pub color: [u8; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub spec: SyntheticSpec,
    pub ontology: Ontology,
    pub train: Vec<MultimediaDocument>,
    pub heldout: Vec<MultimediaDocument>,
    /// The role-correlated features, one per (role, variant).
    pub features: Vec<PlantedFeature>,
}

impl SyntheticCorpus {
    /// Gold-trigger instances over detected candidates.
    pub fn instances(&self, docs: &[MultimediaDocument]) -> Result<Vec<EventInstance>> {
        build_instances(docs, self.ontology.name(), TriggerSource::Gold, CandidateSource::Detected)
    }

    pub fn train_instances(&self) -> Result<Vec<EventInstance>> {
        self.instances(&self.train)
    }

    pub fn heldout_instances(&self) -> Result<Vec<EventInstance>> {
        self.instances(&self.heldout)
    }
}

pub fn role_word(role_index: usize, variant: usize) -> String {
    format!("{}{}", ROLE_POOL[role_index].to_lowercase(), VARIANT_SUFFIX[variant])
}

pub fn role_color(role_index: usize, variant: usize) -> [u8; 3] {
    [30 + 18 * role_index as u8, 40 + 50 * variant as u8, 220]
}

fn distractor_word(variant: usize) -> String {
    format!("other{}", VARIANT_SUFFIX[variant])
}

fn distractor_color(variant: usize) -> [u8; 3] {
    [200, 40 + 50 * variant as u8, 60]
}

fn background(event: usize) -> [u8; 3] {
    [10 + 24 * event as u8, 10, 10]
}

fn event_name(e: usize) -> String {
    format!("Synth:E{e}")
}

struct Planner<'a> {
    spec: &'a SyntheticSpec,
    /// Per event type: role pool indices in template order.
    roles: &'a [Vec<usize>],
}

/// One event's candidates: (feature role index or `None` for a distractor,
/// variant, gold role index or `None`).
type Slot = (Option<usize>, usize, Option<usize>);

impl Planner<'_> {
    fn slots(&self, rng: &mut ChaCha8Rng, event: usize) -> Vec<Slot> {
        let roles = &self.roles[event];
        let mut present: Vec<usize> = roles.iter().copied().filter(|_| rng.random_bool(0.75)).collect();
        if present.is_empty() {
            present.push(roles[rng.random_range(0..roles.len())]);
        }
        let mut slots: Vec<Slot> = present
            .into_iter()
            .map(|gold| {
                let feature = if rng.random_bool(self.spec.signal) { gold } else { roles[rng.random_range(0..roles.len())] };
                (Some(feature), rng.random_range(0..self.spec.variants), Some(gold))
            })
            .collect();
        for _ in 0..self.spec.distractors {
            slots.push((None, rng.random_range(0..self.spec.variants), None));
        }
        slots.shuffle(rng);
        slots
    }

    fn document(&self, rng: &mut ChaCha8Rng, id: String) -> MultimediaDocument {
        let text_event = rng.random_range(0..self.spec.event_types);
        let image_event = if rng.random_bool(self.spec.multimedia_rate) {
            text_event
        } else {
            rng.random_range(0..self.spec.event_types)
        };
        let mut doc = MultimediaDocument { id: id.clone(), sentences: vec![], images: vec![], events: vec![] };
        let multimedia = text_event == image_event;
        let mm_id = multimedia.then(|| format!("{id}-mm"));

        {
            let slots = self.slots(rng, text_event);
            let mut tokens: Vec<(String, Option<usize>)> = vec![(format!("event{text_event}"), None)];
            for (k, (feature, variant, _)) in slots.iter().enumerate() {
                let w = match feature {
                    Some(r) => role_word(*r, *variant),
                    None => distractor_word(*variant),
                };
                tokens.push((w, Some(k)));
            }
            for _ in 0..self.spec.fillers {
                tokens.push((FILLERS[rng.random_range(0..FILLERS.len())].to_string(), None));
            }
            tokens.shuffle(rng);
            let trigger_pos = tokens.iter().position(|(w, s)| s.is_none() && w.starts_with("event")).expect("trigger");
            let mut spans = vec![WordSpan::new(0, 0); slots.len()];
            for (i, (_, slot)) in tokens.iter().enumerate() {
                if let Some(k) = slot {
                    spans[*k] = WordSpan::new(i, i + 1);
                }
            }
            let sentence_id = format!("{id}-s0");
            doc.events.push(EventRecord {
                doc_id: id.clone(),
                event_type: event_name(text_event),
                mention: Mention::Text { sentence_id: sentence_id.clone(), trigger: WordSpan::new(trigger_pos, trigger_pos + 1) },
                multimedia_id: mm_id.clone(),
                arguments: slots
                    .iter()
                    .zip(&spans)
                    .filter_map(|((_, _, gold), span)| {
                        gold.map(|g| ArgumentRecord { role: ROLE_POOL[g].into(), target: CandidateRef::Span(*span), score: None })
                    })
                    .collect(),
            });
            doc.sentences.push(Sentence {
                id: sentence_id,
                words: tokens.into_iter().map(|(w, _)| w).collect(),
                entities: spans.into_iter().map(|span| EntityMention { span, entity_type: "ENT".into() }).collect(),
            });
        }

        {
            let slots = self.slots(rng, image_event);
            let mut cells: Vec<usize> = (0..GRID_CELLS).collect();
            cells.shuffle(rng);
            let per_row = (SYNTH_IMAGE_SIZE / SYNTH_CELL) as usize;
            let mut rects = Vec::new();
            let mut objects = Vec::new();
            let mut arguments = Vec::new();
            for ((feature, variant, gold), cell) in slots.iter().zip(cells) {
                let x = (cell % per_row) as u32 * SYNTH_CELL;
                let y = (cell / per_row) as u32 * SYNTH_CELL;
                let color = match feature {
                    Some(r) => role_color(*r, *variant),
                    None => distractor_color(*variant),
                };
                rects.push(PaintedRect { rect: [x, y, x + SYNTH_CELL, y + SYNTH_CELL], color });
                let bbox = BBox::new(x as f64, y as f64, (x + SYNTH_CELL) as f64, (y + SYNTH_CELL) as f64);
                objects.push(DetectedObject { bbox, label: "object".into() });
                if let Some(g) = gold {
                    arguments.push(ArgumentRecord { role: ROLE_POOL[*g].into(), target: CandidateRef::Bbox(bbox), score: None });
                }
            }
            let image_id = format!("{id}-i0");
            doc.events.push(EventRecord {
                doc_id: id.clone(),
                event_type: event_name(image_event),
                mention: Mention::Image { image_id: image_id.clone() },
                multimedia_id: mm_id,
                arguments,
            });
            doc.images.push(ImageEntry {
                id: image_id,
                source: ImageSource::Painted {
                    width: SYNTH_IMAGE_SIZE,
                    height: SYNTH_IMAGE_SIZE,
                    background: background(image_event),
                    rects,
                },
                objects: Some(objects),
            });
        }
        doc
    }

    fn split(&self, seed: u64, label: &str, events: usize) -> Vec<MultimediaDocument> {
        let mut rng = keyed_rng(seed, label.as_bytes());
        (0..events).map(|k| self.document(&mut rng, format!("{label}-{k:04}"))).collect()
    }
}

/// Generates the corpus described by `spec`; the output is a pure function of
/// the spec.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = keyed_rng(spec.seed, b"ontology");
    let mut roles = Vec::with_capacity(spec.event_types);
    let mut defs = Vec::with_capacity(spec.event_types);
    for e in 0..spec.event_types {
        let n = rng.random_range(spec.min_roles..=spec.max_roles);
        let mut pool: Vec<usize> = (0..ROLE_POOL.len()).collect();
        pool.shuffle(&mut rng);
        pool.truncate(n);
        let placeholders: Vec<String> = pool.iter().map(|&r| format!("[{}]", ROLE_POOL[r])).collect();
        let template = format!("event {e} involved {}.", placeholders.join(" and "));
        defs.push(EventTypeDef::new(event_name(e), &template)?);
        roles.push(pool);
    }
    let ontology = Ontology::new("synthetic", defs, std::iter::empty())?;
    let planner = Planner { spec, roles: &roles };
    let train = planner.split(spec.seed, "train", spec.events_per_modality);
    let heldout = planner.split(spec.seed, "heldout", spec.heldout_events_per_modality);
    let features = (0..ROLE_POOL.len())
        .flat_map(|r| {
            (0..spec.variants).map(move |v| PlantedFeature {
                role: ROLE_POOL[r].to_string(),
                word: role_word(r, v),
                color: role_color(r, v),
            })
        })
        .collect();
    Ok(SyntheticCorpus { spec: spec.clone(), ontology, train, heldout, features })
}
