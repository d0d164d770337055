//! Training: AdamW with decoupled weight decay and a linear learning-rate
//! decay, the joint and sequential multimodal strategies, held-out checkpoint
//! selection, and cross-ontology transfer.
//!
//! Step budgets are `text_epochs × ⌈N_text / text_batch⌉` text steps and
//! `visual_epochs × ⌈N_image / visual_batch⌉` image steps. When both
//! modalities train together, each step draws its modality with probability
//! proportional to the steps it has left.

use std::collections::{BTreeMap, BTreeSet};
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, ParamId};
use crate::data::{fingerprint, EventInstance};
use crate::encoding::{BackendInfo, Modality};
use crate::error::{Error, Result};
use crate::evaluation::{instance_gold, predict, score_arguments, MatchPolicy, MetricReport};
use crate::layers::keyed_rng;
use crate::matching::{groups, Model, ModelConfig, Thresholds};
use crate::ontology::Ontology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Joint,
    /// Joint training with the vision encoder frozen.
    ImageLocked,
    /// Text first; then images with the text and query sides frozen.
    TextThenImage,
    /// Images first; then text with the vision and query sides frozen.
    ImageThenText,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Joint => "joint",
            Strategy::ImageLocked => "image_locked",
            Strategy::TextThenImage => "text_then_image",
            Strategy::ImageThenText => "image_then_text",
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "joint" => Ok(Self::Joint),
            "image_locked" => Ok(Self::ImageLocked),
            "text_then_image" => Ok(Self::TextThenImage),
            "image_then_text" => Ok(Self::ImageThenText),
            other => Err(Error::Config(format!("unknown strategy '{other}'"))),
        }
    }
}

/// Held-out metric used to pick the checkpoint in stages that train both
/// modalities. Single-modality stages always use their own modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    #[default]
    TextF1,
    VisualF1,
    /// Micro-averaged over textual and visual arguments.
    CombinedF1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Decays linearly to zero over each stage.
    #[default]
    Linear,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    pub strategy: Strategy,
    pub text_epochs: usize,
    pub visual_epochs: usize,
    pub text_batch: usize,
    pub visual_batch: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub schedule: Schedule,
    pub seed: u64,
    pub checkpoint_metric: SelectionMetric,
    /// Held-out evaluations per stage; `0` keeps the last parameters.
    pub evaluations: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Joint,
            text_epochs: 25,
            visual_epochs: 5,
            text_batch: 32,
            visual_batch: 16,
            learning_rate: 3e-5,
            weight_decay: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            schedule: Schedule::Linear,
            seed: 0,
            checkpoint_metric: SelectionMetric::TextF1,
            evaluations: 5,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("training: {m}")));
        if self.text_epochs == 0 || self.visual_epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.text_batch == 0 || self.visual_batch == 0 {
            return bad("batch sizes must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || self.weight_decay < 0.0 {
            return bad("learning rate must be positive and weight decay non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return bad("invalid Adam moments");
        }
        Ok(())
    }

    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        match self.schedule {
            Schedule::Linear => linear_lr(self.learning_rate, step, total),
            Schedule::Constant => self.learning_rate,
        }
    }

    pub fn text_steps(&self, n: usize) -> usize {
        self.text_epochs * n.div_ceil(self.text_batch)
    }

    pub fn image_steps(&self, n: usize) -> usize {
        self.visual_epochs * n.div_ceil(self.visual_batch)
    }
}

/// AdamW with decoupled weight decay. Tensors without a gradient in a step
/// are left untouched, decay included.
#[derive(Debug, Clone, Default)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    state: BTreeMap<ParamId, (Array2<f64>, Array2<f64>, i32)>,
}

impl AdamW {
    pub fn new(cfg: &TrainingConfig) -> Self {
        Self {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
            weight_decay: cfg.weight_decay,
            state: BTreeMap::new(),
        }
    }

    pub fn update(&mut self, value: &mut Array2<f64>, id: ParamId, grad: &Array2<f64>, lr: f64) {
        let (m, v, t) = self
            .state
            .entry(id)
            .or_insert_with(|| (Array2::zeros(grad.dim()), Array2::zeros(grad.dim()), 0));
        *t += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        m.zip_mut_with(grad, |m, &g| *m = b1 * *m + (1.0 - b1) * g);
        v.zip_mut_with(grad, |v, &g| *v = b2 * *v + (1.0 - b2) * g * g);
        let c1 = 1.0 - b1.powi(*t);
        let c2 = 1.0 - b2.powi(*t);
        let decay = 1.0 - lr * self.weight_decay;
        ndarray::Zip::from(value).and(&*m).and(&*v).for_each(|p, &m, &v| {
            *p = *p * decay - lr * (m / c1) / ((v / c2).sqrt() + self.epsilon);
        });
    }
}

/// Learning rate at `step` (0-based) of `total`, decaying linearly to zero.
pub fn linear_lr(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    base * (1.0 - step as f64 / total as f64)
}

/// Mean event loss over a batch, with dropout when `rng` is given.
pub fn batch_loss_graph(
    g: &mut Graph,
    model: &Model,
    ontology: &Ontology,
    batch: &[&EventInstance],
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Option<crate::autograd::Var>> {
    let mut losses = Vec::new();
    for inst in batch {
        if let Some(l) = model.loss_graph(g, ontology, inst, rng.as_deref_mut())? {
            losses.push(l);
        }
    }
    if losses.is_empty() {
        return Ok(None);
    }
    let total = g.sum(&losses);
    Ok(Some(g.scale(total, 1.0 / batch.len() as f64)))
}

/// Mean event loss over `instances` without dropout.
pub fn dataset_loss(model: &Model, ontology: &Ontology, instances: &[EventInstance]) -> Result<f64> {
    if instances.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for inst in instances {
        let mut g = Graph::new();
        if let Some(l) = model.loss_graph(&mut g, ontology, inst, None)? {
            total += g.value(l)[[0, 0]];
        }
    }
    Ok(total / instances.len() as f64)
}

/// One optimiser step on `batch`. Returns the batch loss before the update,
/// or `None` if no event in the batch had candidates.
pub fn train_step(
    model: &mut Model,
    optimizer: &mut AdamW,
    ontology: &Ontology,
    batch: &[&EventInstance],
    lr: f64,
    frozen: &BTreeSet<ParamId>,
    rng: &mut ChaCha8Rng,
) -> Result<Option<f64>> {
    let mut g = Graph::new();
    let Some(loss) = batch_loss_graph(&mut g, model, ontology, batch, Some(rng))? else {
        return Ok(None);
    };
    let value = g.value(loss)[[0, 0]];
    if !value.is_finite() {
        return Ok(Some(value));
    }
    let grads = g.backward(loss).into_params();
    for (id, grad) in grads {
        if frozen.contains(&id) {
            continue;
        }
        optimizer.update(model.params.get_mut(id), id, &grad, lr);
    }
    Ok(Some(value))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub modality: Modality,
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub selection_f1: f64,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub modalities: Vec<Modality>,
    pub trainable_groups: Vec<String>,
    pub frozen_groups: Vec<String>,
    pub planned_text_steps: usize,
    pub planned_image_steps: usize,
    pub text_steps: usize,
    pub image_steps: usize,
    pub steps: Vec<StepRecord>,
    pub evaluations: Vec<EvalRecord>,
    /// `stage/step` of the parameters kept at the end of the stage.
    pub selected: String,
    pub fingerprints_before: BTreeMap<String, String>,
    pub fingerprints_after: BTreeMap<String, String>,
    /// Every frozen group hashes identically before and after the stage.
    pub frozen_unchanged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub instances: usize,
    pub fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub training: TrainingConfig,
    pub model: ModelConfig,
    /// Free-form extra configuration supplied by the caller (e.g. the CLI run config).
    #[serde(default)]
    pub run_config: Option<serde_json::Value>,
    pub ontology: String,
    pub backends: BTreeMap<String, BackendInfo>,
    pub datasets: BTreeMap<String, DatasetRecord>,
    /// Scalar count per parameter group.
    pub parameter_groups: BTreeMap<String, usize>,
    pub stages: Vec<StageRecord>,
    pub selected_checkpoint: Option<String>,
    pub final_report: Option<MetricReport>,
    pub final_fingerprints: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Training inputs. `selection` is the held-out split for checkpoint choice.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrainingData<'a> {
    pub text: &'a [EventInstance],
    pub image: &'a [EventInstance],
    pub selection: &'a [EventInstance],
}

impl<'a> TrainingData<'a> {
    /// Splits a mixed list by modality.
    pub fn split(all: &'a [EventInstance]) -> (Vec<EventInstance>, Vec<EventInstance>) {
        all.iter().cloned().partition(|i| i.modality() == Modality::Text)
    }

    fn of(&self, m: Modality) -> &'a [EventInstance] {
        match m {
            Modality::Text => self.text,
            Modality::Image => self.image,
        }
    }
}

struct StagePlan {
    name: &'static str,
    modalities: Vec<Modality>,
    frozen: &'static [&'static [&'static str]],
}

fn plan(strategy: Strategy) -> Vec<StagePlan> {
    use Modality::{Image, Text};
    match strategy {
        Strategy::Joint => vec![StagePlan { name: "joint", modalities: vec![Text, Image], frozen: &[] }],
        Strategy::ImageLocked => vec![StagePlan {
            name: "joint",
            modalities: vec![Text, Image],
            frozen: &[&[groups::VISION_ENCODER]],
        }],
        Strategy::TextThenImage => vec![
            StagePlan { name: "text", modalities: vec![Text], frozen: &[] },
            StagePlan { name: "image", modalities: vec![Image], frozen: &[groups::TEXT_SIDE, groups::QUERY_SIDE] },
        ],
        Strategy::ImageThenText => vec![
            StagePlan { name: "image", modalities: vec![Image], frozen: &[] },
            StagePlan { name: "text", modalities: vec![Text], frozen: &[groups::VISION_SIDE, groups::QUERY_SIDE] },
        ],
    }
}

/// Cycles through a shuffled copy of a dataset, reshuffling every epoch.
struct BatchStream<'a> {
    data: &'a [EventInstance],
    order: Vec<usize>,
    pos: usize,
    batch: usize,
}

impl<'a> BatchStream<'a> {
    fn new(data: &'a [EventInstance], batch: usize) -> Self {
        Self { data, order: Vec::new(), pos: 0, batch }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> Vec<&'a EventInstance> {
        if self.pos >= self.order.len() {
            self.order = (0..self.data.len()).collect();
            self.order.shuffle(rng);
            self.pos = 0;
        }
        let end = (self.pos + self.batch).min(self.order.len());
        let out = self.order[self.pos..end].iter().map(|&i| &self.data[i]).collect();
        self.pos = end;
        out
    }
}

fn selection_score(report: &MetricReport, modalities: &[Modality], metric: SelectionMetric) -> f64 {
    let metric = match modalities {
        [Modality::Text] => SelectionMetric::TextF1,
        [Modality::Image] => SelectionMetric::VisualF1,
        _ => metric,
    };
    match metric {
        SelectionMetric::TextF1 => report.textual.arguments.f1,
        SelectionMetric::VisualF1 => report.visual.arguments.f1,
        SelectionMetric::CombinedF1 => {
            let (t, v) = (report.textual.arguments, report.visual.arguments);
            crate::evaluation::Prf::from_counts(t.predicted + v.predicted, t.gold + v.gold, t.matched + v.matched).f1
        }
    }
}

/// Scores `model` on instances using their own labels as gold.
pub fn evaluate_instances(model: &Model, ontology: &Ontology, instances: &[EventInstance]) -> Result<MetricReport> {
    let pred = predict(model, ontology, instances, &Thresholds::default())?;
    score_arguments(&pred, &instance_gold(instances), &MatchPolicy::default(), ontology)
}

/// Trains a fresh model on `data` under `config`.
pub fn train(
    config: &TrainingConfig,
    model_config: &ModelConfig,
    ontology: &Ontology,
    data: TrainingData<'_>,
) -> Result<(Model, RunManifest)> {
    let model = Model::new(model_config.clone(), ontology)?;
    train_model(config, model, ontology, data)
}

/// Trains an existing model in place according to `config.strategy`.
pub fn train_model(
    config: &TrainingConfig,
    mut model: Model,
    ontology: &Ontology,
    data: TrainingData<'_>,
) -> Result<(Model, RunManifest)> {
    config.validate()?;
    let stages = plan(config.strategy);
    for st in &stages {
        for &m in &st.modalities {
            if data.of(m).is_empty() {
                return Err(Error::Config(format!(
                    "strategy {} needs {} training data, none given",
                    config.strategy.as_str(),
                    m.as_str()
                )));
            }
        }
    }
    for inst in data.text.iter().chain(data.image).chain(data.selection) {
        inst.validate()?;
        ontology.require_event(&inst.event_type)?;
    }
    if data.text.iter().any(|i| i.modality() != Modality::Text) || data.image.iter().any(|i| i.modality() != Modality::Image) {
        return Err(Error::Config("training split contains instances of the wrong modality".into()));
    }

    let mut datasets = BTreeMap::new();
    for (name, d) in [("text", data.text), ("image", data.image), ("selection", data.selection)] {
        datasets.insert(name.to_string(), DatasetRecord { instances: d.len(), fingerprint: fingerprint(d) });
    }
    let mut manifest = RunManifest {
        training: config.clone(),
        model: model.config.clone(),
        run_config: None,
        ontology: ontology.name().to_string(),
        backends: model.backends(),
        datasets,
        parameter_groups: model
            .params
            .groups()
            .into_iter()
            .map(|g| {
                let n = model.params.group(&g).iter().map(|&id| model.params.get(id).len()).sum();
                (g, n)
            })
            .collect(),
        stages: Vec::new(),
        selected_checkpoint: None,
        final_report: None,
        final_fingerprints: BTreeMap::new(),
    };

    let mut global_step = 0;
    for (si, stage) in stages.iter().enumerate() {
        let frozen_groups: Vec<String> = stage
            .frozen
            .iter()
            .flat_map(|set| set.iter())
            .filter(|g| !model.params.group(g).is_empty())
            .map(|g| g.to_string())
            .collect();
        let frozen: BTreeSet<ParamId> = frozen_groups.iter().flat_map(|g| model.params.group(g)).collect();
        let trainable_groups: Vec<String> =
            model.params.groups().into_iter().filter(|g| !frozen_groups.contains(g)).collect();
        let before = model.params.group_fingerprints();

        let planned_text = if stage.modalities.contains(&Modality::Text) { config.text_steps(data.text.len()) } else { 0 };
        let planned_image =
            if stage.modalities.contains(&Modality::Image) { config.image_steps(data.image.len()) } else { 0 };
        let total = planned_text + planned_image;
        let mut record = StageRecord {
            name: stage.name.to_string(),
            modalities: stage.modalities.clone(),
            trainable_groups,
            frozen_groups: frozen_groups.clone(),
            planned_text_steps: planned_text,
            planned_image_steps: planned_image,
            text_steps: 0,
            image_steps: 0,
            steps: Vec::with_capacity(total),
            evaluations: Vec::new(),
            selected: format!("{}/{}", stage.name, total),
            fingerprints_before: before.clone(),
            fingerprints_after: BTreeMap::new(),
            frozen_unchanged: true,
        };

        let mut rng = keyed_rng(config.seed, format!("stage{si}").as_bytes());
        let mut optimizer = AdamW::new(config);
        let mut text_stream = BatchStream::new(data.text, config.text_batch);
        let mut image_stream = BatchStream::new(data.image, config.visual_batch);
        let eval_points: BTreeSet<usize> = if config.evaluations == 0 || data.selection.is_empty() {
            BTreeSet::new()
        } else {
            (1..=config.evaluations).map(|k| (k * total).div_ceil(config.evaluations)).filter(|&s| s > 0).collect()
        };
        let mut best: Option<(f64, String, crate::autograd::ParamStore)> = None;

        for s in 0..total {
            let left_text = planned_text - record.text_steps;
            let left_image = planned_image - record.image_steps;
            let modality = if left_image == 0 || (left_text > 0 && rng.random_range(0..left_text + left_image) < left_text) {
                Modality::Text
            } else {
                Modality::Image
            };
            let batch = match modality {
                Modality::Text => {
                    record.text_steps += 1;
                    text_stream.next(&mut rng)
                }
                Modality::Image => {
                    record.image_steps += 1;
                    image_stream.next(&mut rng)
                }
            };
            let lr = config.lr_at(s, total);
            let loss = train_step(&mut model, &mut optimizer, ontology, &batch, lr, &frozen, &mut rng)?;
            global_step += 1;
            if let Some(loss) = loss {
                record.steps.push(StepRecord { step: global_step, modality, loss, lr });
                if !loss.is_finite() {
                    record.fingerprints_after = model.params.group_fingerprints();
                    manifest.stages.push(record);
                    return Err(Error::NonFinite { step: global_step, manifest: Box::new(manifest) });
                }
            }
            if eval_points.contains(&(s + 1)) {
                let report = evaluate_instances(&model, ontology, data.selection)?;
                let f1 = selection_score(&report, &stage.modalities, config.checkpoint_metric);
                let tag = format!("{}/{}", stage.name, s + 1);
                record.evaluations.push(EvalRecord { step: global_step, selection_f1: f1, report });
                if best.as_ref().is_none_or(|(b, _, _)| f1 > *b) {
                    best = Some((f1, tag, model.params.clone()));
                }
            }
        }
        if let Some((_, tag, params)) = best {
            model.params = params;
            record.selected = tag;
        }
        let after = model.params.group_fingerprints();
        record.frozen_unchanged = frozen_groups.iter().all(|g| before.get(g) == after.get(g));
        record.fingerprints_after = after;
        manifest.selected_checkpoint = Some(record.selected.clone());
        manifest.stages.push(record);
    }
    if !data.selection.is_empty() {
        manifest.final_report = Some(evaluate_instances(&model, ontology, data.selection)?);
    }
    manifest.final_fingerprints = model.params.group_fingerprints();
    Ok((model, manifest))
}

/// Trains on a source ontology for zero-shot use on `target`. Instances
/// labelled in the target ontology are refused unless source and target are
/// the same ontology.
pub fn transfer_train(
    config: &TrainingConfig,
    model_config: &ModelConfig,
    source: &Ontology,
    target: &Ontology,
    data: TrainingData<'_>,
) -> Result<(Model, RunManifest)> {
    if source.name() != target.name() {
        let leaked = data
            .text
            .iter()
            .chain(data.image)
            .chain(data.selection)
            .find(|i| i.ontology == target.name() || i.ontology != source.name());
        if let Some(i) = leaked {
            return Err(Error::Leakage(format!("instance {} is labelled in ontology '{}'", i.id, i.ontology)));
        }
    }
    train(config, model_config, source, data)
}
