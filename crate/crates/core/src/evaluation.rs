//! Precision, recall and F1 for textual, visual and multimedia argument
//! extraction, threshold sweeps, and the gold-trigger / gold-candidate modes.
//!
//! A predicted argument is matched to at most one gold argument with the same
//! document, location (sentence or image), event type and role. Text spans
//! must be equal (or share their last word in head mode); boxes need
//! IoU ≥ 0.5. Matching is greedy in prediction order. Multimedia scores pool
//! the textual and visual decisions of records that carry a multimedia id.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{
    build_instances, ArgumentRecord, CandidateRef, CandidateSource, EventContext, EventInstance, EventRecord, Mention,
    MultimediaDocument, TriggerSource, IOU_MATCH,
};
use crate::encoding::Modality;
use crate::error::{Error, Result};
use crate::matching::{MatchResult, Model, Thresholds};
use crate::ontology::Ontology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpanPolicy {
    #[default]
    Exact,
    /// Spans match when their last words coincide.
    Head,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchPolicy {
    pub span: SpanPolicy,
    pub iou: f64,
}

impl Default for MatchPolicy {
    fn default() -> Self {
        Self { span: SpanPolicy::Exact, iou: IOU_MATCH }
    }
}

impl MatchPolicy {
    pub fn targets_match(&self, pred: &CandidateRef, gold: &CandidateRef) -> bool {
        match (pred, gold) {
            (CandidateRef::Span(p), CandidateRef::Span(g)) => match self.span {
                SpanPolicy::Exact => p == g,
                SpanPolicy::Head => !p.is_empty() && !g.is_empty() && p.end == g.end,
            },
            (CandidateRef::Bbox(p), CandidateRef::Bbox(g)) => p.iou(g) >= self.iou,
            _ => false,
        }
    }
}

/// Precision, recall and F1 with their counts; `0/0` is taken as 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub predicted: usize,
    pub gold: usize,
    pub matched: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

impl Prf {
    pub fn from_counts(predicted: usize, gold: usize, matched: usize) -> Self {
        let precision = ratio(matched, predicted);
        let recall = ratio(matched, gold);
        Self { predicted, gold, matched, precision, recall, f1: f1(precision, recall) }
    }

    fn add(self, other: Prf) -> Self {
        Self::from_counts(self.predicted + other.predicted, self.gold + other.gold, self.matched + other.matched)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub mentions: Prf,
    pub arguments: Prf,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub textual: TaskReport,
    pub visual: TaskReport,
    pub multimedia: TaskReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Textual,
    Visual,
    Multimedia,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Textual => "textual",
            Task::Visual => "visual",
            Task::Multimedia => "multimedia",
        }
    }
}

impl MetricReport {
    pub fn task(&self, task: Task) -> &TaskReport {
        match task {
            Task::Textual => &self.textual,
            Task::Visual => &self.visual,
            Task::Multimedia => &self.multimedia,
        }
    }
}

/// Checks that every event type in `records` belongs to `ontology`.
pub fn check_ontology(records: &[EventRecord], ontology: &Ontology) -> Result<()> {
    match records.iter().find(|r| !ontology.contains_event(&r.event_type)) {
        Some(r) => Err(Error::Validation(format!(
            "event type '{}' ({}) is not in ontology '{}'",
            r.event_type,
            r.doc_id,
            ontology.name()
        ))),
        None => Ok(()),
    }
}

type ArgKey<'a> = (&'a str, &'a str, &'a str, &'a str);

/// Matched / predicted / gold argument counts for one modality, optionally
/// restricted to multimedia records.
fn argument_counts(
    pred: &[EventRecord],
    gold: &[EventRecord],
    policy: &MatchPolicy,
    modality: Modality,
    multimedia_only: bool,
) -> Prf {
    let keep = |r: &&EventRecord| r.modality() == modality && (!multimedia_only || r.multimedia_id.is_some());
    let mut pool: BTreeMap<ArgKey<'_>, Vec<(&CandidateRef, bool)>> = BTreeMap::new();
    let mut n_gold = 0;
    for r in gold.iter().filter(keep) {
        for a in &r.arguments {
            n_gold += 1;
            pool.entry((&r.doc_id, r.mention.location(), &r.event_type, &a.role)).or_default().push((&a.target, false));
        }
    }
    let mut n_pred = 0;
    let mut matched = 0;
    for r in pred.iter().filter(keep) {
        for a in &r.arguments {
            n_pred += 1;
            if let Some(cands) = pool.get_mut(&(&r.doc_id, r.mention.location(), &r.event_type, &a.role)) {
                if let Some(slot) = cands.iter_mut().find(|(t, used)| !*used && policy.targets_match(&a.target, t)) {
                    slot.1 = true;
                    matched += 1;
                }
            }
        }
    }
    Prf::from_counts(n_pred, n_gold, matched)
}

fn mention_key(r: &EventRecord) -> (&str, &str, &Mention) {
    (&r.doc_id, &r.event_type, &r.mention)
}

fn mention_counts(pred: &[EventRecord], gold: &[EventRecord], modality: Modality) -> Prf {
    let g: BTreeSet<_> = gold.iter().filter(|r| r.modality() == modality).map(mention_key).collect();
    let p: BTreeSet<_> = pred.iter().filter(|r| r.modality() == modality).map(mention_key).collect();
    Prf::from_counts(p.len(), g.len(), p.intersection(&g).count())
}

/// Multimedia mentions: (doc, type, text mention, image mention) joined by
/// multimedia id.
fn multimedia_mentions(records: &[EventRecord]) -> BTreeSet<(&str, &str, &Mention, &Mention)> {
    let mut groups: BTreeMap<(&str, &str), Vec<&EventRecord>> = BTreeMap::new();
    for r in records {
        if let Some(m) = &r.multimedia_id {
            groups.entry((&r.doc_id, m)).or_default().push(r);
        }
    }
    let mut out = BTreeSet::new();
    for evs in groups.values() {
        let text = evs.iter().find(|r| r.modality() == Modality::Text);
        let image = evs.iter().find(|r| r.modality() == Modality::Image);
        if let (Some(t), Some(i)) = (text, image) {
            if t.event_type == i.event_type {
                out.insert((t.doc_id.as_str(), t.event_type.as_str(), &t.mention, &i.mention));
            }
        }
    }
    out
}

/// Scores predicted records against gold records of the same ontology.
pub fn score_arguments(
    pred: &[EventRecord],
    gold: &[EventRecord],
    policy: &MatchPolicy,
    ontology: &Ontology,
) -> Result<MetricReport> {
    check_ontology(gold, ontology)?;
    check_ontology(pred, ontology)?;
    let mm_pred = multimedia_mentions(pred);
    let mm_gold = multimedia_mentions(gold);
    Ok(MetricReport {
        textual: TaskReport {
            mentions: mention_counts(pred, gold, Modality::Text),
            arguments: argument_counts(pred, gold, policy, Modality::Text, false),
        },
        visual: TaskReport {
            mentions: mention_counts(pred, gold, Modality::Image),
            arguments: argument_counts(pred, gold, policy, Modality::Image, false),
        },
        multimedia: TaskReport {
            mentions: Prf::from_counts(mm_pred.len(), mm_gold.len(), mm_pred.intersection(&mm_gold).count()),
            arguments: argument_counts(pred, gold, policy, Modality::Text, true)
                .add(argument_counts(pred, gold, policy, Modality::Image, true)),
        },
    })
}

fn mention_of(inst: &EventInstance) -> Mention {
    match &inst.context {
        EventContext::Text { sentence_id, trigger, .. } => {
            Mention::Text { sentence_id: sentence_id.clone(), trigger: *trigger }
        }
        EventContext::Image { image_id, .. } => Mention::Image { image_id: image_id.clone() },
    }
}

/// Gold records implied by instance labels. Gold arguments that are not among
/// an instance's candidates are not represented.
pub fn instance_gold(instances: &[EventInstance]) -> Vec<EventRecord> {
    instances
        .iter()
        .map(|inst| EventRecord {
            doc_id: inst.doc_id.clone(),
            event_type: inst.event_type.clone(),
            mention: mention_of(inst),
            multimedia_id: inst.multimedia_id.clone(),
            arguments: inst
                .candidates
                .iter()
                .zip(&inst.labels)
                .flat_map(|(c, roles)| roles.iter().map(|r| ArgumentRecord { role: r.clone(), target: *c, score: None }))
                .collect(),
        })
        .collect()
}

/// Prediction record for one scored instance.
pub fn prediction_record(inst: &EventInstance, result: &MatchResult) -> EventRecord {
    let arguments = inst
        .candidates
        .iter()
        .zip(&result.assignments)
        .enumerate()
        .filter_map(|(i, (c, a))| {
            let role = a.as_ref()?;
            let j = result.roles.iter().position(|r| r == role)?;
            Some(ArgumentRecord { role: role.clone(), target: *c, score: Some(result.scores[[i, j]]) })
        })
        .collect();
    EventRecord {
        doc_id: inst.doc_id.clone(),
        event_type: inst.event_type.clone(),
        mention: mention_of(inst),
        multimedia_id: inst.multimedia_id.clone(),
        arguments,
    }
}

/// Runs the model over every instance.
pub fn score_instances(
    model: &Model,
    ontology: &Ontology,
    instances: &[EventInstance],
    thresholds: &Thresholds,
) -> Result<Vec<MatchResult>> {
    instances.iter().map(|inst| model.forward_event(ontology, inst, thresholds)).collect()
}

pub fn predict(
    model: &Model,
    ontology: &Ontology,
    instances: &[EventInstance],
    thresholds: &Thresholds,
) -> Result<Vec<EventRecord>> {
    let results = score_instances(model, ontology, instances, thresholds)?;
    Ok(instances.iter().zip(&results).map(|(i, r)| prediction_record(i, r)).collect())
}

/// Where event mentions and candidates come from at evaluation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    PredTriggers,
    #[default]
    GoldTriggers,
    GoldCandidates,
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pred_triggers" => Ok(Self::PredTriggers),
            "gold_triggers" => Ok(Self::GoldTriggers),
            "gold_candidates" => Ok(Self::GoldCandidates),
            other => Err(Error::Config(format!("unknown evaluation mode '{other}'"))),
        }
    }
}

/// Builds the instances an evaluation mode scores.
pub fn instances_for_mode(
    docs: &[MultimediaDocument],
    ontology: &Ontology,
    mode: EvalMode,
    predicted_triggers: Option<&[EventRecord]>,
) -> Result<Vec<EventInstance>> {
    let has_gold = docs.iter().any(|d| !d.events.is_empty());
    match mode {
        EvalMode::PredTriggers => {
            let triggers = predicted_triggers
                .ok_or_else(|| Error::Data("pred_triggers mode needs a predicted trigger file".into()))?;
            build_instances(docs, ontology.name(), TriggerSource::Predicted(triggers), CandidateSource::Detected)
        }
        EvalMode::GoldTriggers | EvalMode::GoldCandidates if !has_gold => {
            Err(Error::Data("gold evaluation mode requires gold event annotations".into()))
        }
        EvalMode::GoldTriggers => build_instances(docs, ontology.name(), TriggerSource::Gold, CandidateSource::Detected),
        EvalMode::GoldCandidates => build_instances(docs, ontology.name(), TriggerSource::Gold, CandidateSource::Gold),
    }
}

/// Evaluates `model` on `docs` under `mode`.
pub fn evaluate_mode(
    model: &Model,
    ontology: &Ontology,
    docs: &[MultimediaDocument],
    mode: EvalMode,
    predicted_triggers: Option<&[EventRecord]>,
    thresholds: &Thresholds,
    policy: &MatchPolicy,
) -> Result<MetricReport> {
    let instances = instances_for_mode(docs, ontology, mode, predicted_triggers)?;
    let pred = predict(model, ontology, &instances, thresholds)?;
    score_arguments(&pred, &crate::data::gold_records(docs), policy, ontology)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tau_text: Option<f64>,
    pub tau_vis: Option<f64>,
    pub task: Task,
    pub scores: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    /// One report per `(τ_text, τ_vis)` pair.
    pub reports: Vec<(f64, f64, MetricReport)>,
    /// Textual rows per τ_text, visual rows per τ_vis, multimedia rows per pair.
    pub rows: Vec<SweepRow>,
    pub best_tau_text: f64,
    pub best_tau_vis: f64,
}

fn check_grid(grid: &[f64], name: &str) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Validation(format!("{name} threshold grid is empty")));
    }
    if grid.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
        return Err(Error::Validation(format!("{name} threshold grid must lie in (0, 1)")));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Validation(format!("{name} threshold grid must be strictly increasing")));
    }
    Ok(())
}

/// `{0.1, 0.2, …, 0.9}`.
pub fn default_grid() -> Vec<f64> {
    (1..10).map(|k| k as f64 / 10.0).collect()
}

/// Re-thresholds precomputed scores over both grids. `results[i]` must be the
/// model output for `instances[i]`.
pub fn sweep_thresholds(
    instances: &[EventInstance],
    results: &[MatchResult],
    gold: &[EventRecord],
    grid_text: &[f64],
    grid_vis: &[f64],
    policy: &MatchPolicy,
    ontology: &Ontology,
) -> Result<SweepTable> {
    check_grid(grid_text, "text")?;
    check_grid(grid_vis, "visual")?;
    if instances.len() != results.len() {
        return Err(Error::Shape(format!("{} instances but {} results", instances.len(), results.len())));
    }
    let mut reports = Vec::with_capacity(grid_text.len() * grid_vis.len());
    for &tt in grid_text {
        for &tv in grid_vis {
            let pred: Vec<EventRecord> = instances
                .iter()
                .zip(results)
                .map(|(inst, r)| {
                    let tau = Thresholds { text: tt, image: tv }.for_modality(inst.modality());
                    prediction_record(inst, &r.rethreshold(tau))
                })
                .collect();
            reports.push((tt, tv, score_arguments(&pred, gold, policy, ontology)?));
        }
    }
    let nv = grid_vis.len();
    let mut rows = Vec::new();
    for (i, &tt) in grid_text.iter().enumerate() {
        rows.push(SweepRow { tau_text: Some(tt), tau_vis: None, task: Task::Textual, scores: reports[i * nv].2.textual.arguments });
    }
    for (j, &tv) in grid_vis.iter().enumerate() {
        rows.push(SweepRow { tau_text: None, tau_vis: Some(tv), task: Task::Visual, scores: reports[j].2.visual.arguments });
    }
    for (tt, tv, rep) in &reports {
        rows.push(SweepRow { tau_text: Some(*tt), tau_vis: Some(*tv), task: Task::Multimedia, scores: rep.multimedia.arguments });
    }
    let argmax = |task: Task| {
        let mut best: Option<(f64, f64)> = None;
        for r in rows.iter().filter(|r| r.task == task) {
            let tau = r.tau_text.or(r.tau_vis).expect("single-modality row");
            if best.is_none_or(|(_, f)| r.scores.f1 > f) {
                best = Some((tau, r.scores.f1));
            }
        }
        best.expect("non-empty grid").0
    };
    let best_tau_text = argmax(Task::Textual);
    let best_tau_vis = argmax(Task::Visual);
    Ok(SweepTable { reports, rows, best_tau_text, best_tau_vis })
}

impl SweepTable {
    pub const HEADER: &'static str = "tau_text\ttau_vis\ttask\tP\tR\tF1\tpredicted\tgold\tmatched";

    pub fn to_tsv(&self) -> String {
        let fmt = |t: Option<f64>| t.map_or_else(|| "-".to_string(), |v| format!("{v}"));
        let mut out = String::from(Self::HEADER);
        out.push('\n');
        for r in &self.rows {
            let s = &r.scores;
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                fmt(r.tau_text),
                fmt(r.tau_vis),
                r.task.as_str(),
                s.precision,
                s.recall,
                s.f1,
                s.predicted,
                s.gold,
                s.matched
            );
        }
        out
    }

    pub fn rows_for(&self, task: Task) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(move |r| r.task == task)
    }
}
