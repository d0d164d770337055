//! Candidate-role matching: mapping networks project candidate and query
//! features into one `H`-dimensional space, a candidate `c` matches role `r`
//! with probability `σ(h_c · q_r)`, and each candidate takes its best role if
//! that score reaches the threshold.

use std::collections::BTreeMap;

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{sigmoid, Graph, ParamId, ParamStore, Var, LOGIT_CLAMP};
use crate::candidates::{patch_reduction, subword_range, ObjectPooling, PatchReduction};
use crate::data::{CandidateRef, EventContext, EventInstance};
use crate::encoding::{
    BackendInfo, ContextRef, ImageContext, Modality, QueryBackendConfig, QueryDecoder, QueryFeatures, TextBackendConfig,
    TextContext, TextEncoder, VisionBackendConfig, VisionEncoder,
};
use crate::error::{Error, Result};
use crate::layers::{keyed_rng, Linear};
use crate::ontology::{Ontology, PromptOptions, PromptRendering};

/// Two affine layers with a ReLU between them; dropout on the hidden layer
/// while training.
#[derive(Debug, Clone)]
pub struct MappingNetwork {
    hidden: Linear,
    output: Linear,
    pub dropout: f64,
}

impl MappingNetwork {
    /// `hidden_width` is `4 × output_width`.
    pub fn new(store: &mut ParamStore, seed: u64, name: &str, input_width: usize, output_width: usize, dropout: f64) -> Self {
        let hidden = Linear::new(store, seed, &format!("{name}.hidden"), input_width, 4 * output_width, 1.0);
        let output = Linear::new(store, seed, &format!("{name}.output"), 4 * output_width, output_width, 1.0);
        Self { hidden, output, dropout }
    }

    pub fn input_width(&self) -> usize {
        self.hidden.in_dim
    }

    pub fn output_width(&self) -> usize {
        self.output.out_dim
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut v = self.hidden.params().to_vec();
        v.extend(self.output.params());
        v
    }

    /// Row-wise projection of `x`. Dropout is applied only when `rng` is given.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, rng: Option<&mut ChaCha8Rng>) -> Var {
        let h = self.hidden.forward(g, store, x);
        let mut h = g.relu(h);
        if let Some(rng) = rng {
            if self.dropout > 0.0 {
                let keep = 1.0 - self.dropout;
                let dim = g.value(h).dim();
                let mask = Array2::from_shape_fn(dim, |_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 });
                h = g.mul_const(h, mask);
            }
        }
        self.output.forward(g, store, h)
    }

    pub fn apply(&self, store: &ParamStore, x: &Array2<f64>) -> Array2<f64> {
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let y = self.forward(&mut g, store, xv, None);
        g.value(y).clone()
    }
}

/// `σ(h · q)`.
pub fn match_score(candidate: ArrayView1<f64>, query: ArrayView1<f64>) -> Result<f64> {
    if candidate.len() != query.len() {
        return Err(Error::Shape(format!("candidate width {} vs query width {}", candidate.len(), query.len())));
    }
    Ok(sigmoid(candidate.dot(&query)))
}

/// Binary cross-entropy over a `|C|×R` score matrix: summed over roles and
/// candidates, divided by `|C|`. Scores are clamped to the probabilities of
/// logits `±30`.
pub fn bce_loss(scores: &Array2<f64>, labels: &Array2<f64>) -> Result<f64> {
    if scores.dim() != labels.dim() {
        return Err(Error::Shape(format!("scores {:?} vs labels {:?}", scores.dim(), labels.dim())));
    }
    if let Some(y) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::Validation(format!("label {y} is not binary")));
    }
    if scores.nrows() == 0 {
        return Ok(0.0);
    }
    let lo = sigmoid(-LOGIT_CLAMP);
    let hi = sigmoid(LOGIT_CLAMP);
    let total: f64 = scores
        .iter()
        .zip(labels.iter())
        .map(|(&p, &y)| {
            let p = p.clamp(lo, hi);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum();
    Ok(total / scores.nrows() as f64)
}

/// Index of the highest score if it reaches `tau`; ties go to the earlier role.
pub fn assign_roles(row: &[f64], tau: f64) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in row.iter().enumerate() {
        if best.is_none_or(|b| s > row[b]) {
            best = Some(i);
        }
    }
    best.filter(|&b| row[b] >= tau)
}

/// Inference thresholds per modality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub text: f64,
    pub image: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { text: 0.5, image: 0.5 }
    }
}

impl Thresholds {
    pub fn new(text: f64, image: f64) -> Result<Self> {
        for t in [text, image] {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::Config(format!("threshold {t} is outside (0, 1)")));
            }
        }
        Ok(Self { text, image })
    }

    pub fn for_modality(&self, m: Modality) -> f64 {
        match m {
            Modality::Text => self.text,
            Modality::Image => self.image,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub event_type: String,
    pub roles: Vec<String>,
    /// `|C|×R` matching probabilities.
    pub scores: Array2<f64>,
    pub assignments: Vec<Option<String>>,
    pub tau: f64,
}

impl MatchResult {
    pub fn assign(event_type: String, roles: Vec<String>, scores: Array2<f64>, tau: f64) -> Self {
        let assignments = scores
            .rows()
            .into_iter()
            .map(|row| assign_roles(row.as_slice().expect("standard layout"), tau).map(|j| roles[j].clone()))
            .collect();
        Self { event_type, roles, scores, assignments, tau }
    }

    pub fn rethreshold(&self, tau: f64) -> Self {
        Self::assign(self.event_type.clone(), self.roles.clone(), self.scores.clone(), tau)
    }

    pub fn predicted_count(&self) -> usize {
        self.assignments.iter().filter(|a| a.is_some()).count()
    }
}

/// Ablation switches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationFlags {
    pub no_cross_attention: bool,
    /// One query model for both modalities; `false` builds one per modality.
    pub joint_prompts: bool,
    /// Replace prompt queries with one trainable vector per role.
    pub use_prototypes: bool,
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self { no_cross_attention: false, joint_prompts: true, use_prototypes: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub text: TextBackendConfig,
    pub vision: VisionBackendConfig,
    pub query: QueryBackendConfig,
    /// Width of the shared matching space.
    pub hidden_size: usize,
    pub dropout: f64,
    pub pooling: ObjectPooling,
    pub prompt: PromptOptions,
    pub ablation: AblationFlags,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            text: TextBackendConfig::default(),
            vision: VisionBackendConfig::default(),
            query: QueryBackendConfig::default(),
            hidden_size: 32,
            dropout: 0.4,
            pooling: ObjectPooling::Max,
            prompt: PromptOptions::default(),
            ablation: AblationFlags::default(),
            seed: 0,
        }
    }
}

/// One trainable vector per role, used instead of prompt queries.
#[derive(Debug, Clone)]
pub struct PrototypeBank {
    roles: BTreeMap<String, ParamId>,
}

impl PrototypeBank {
    pub fn new<'a>(store: &mut ParamStore, seed: u64, roles: impl IntoIterator<Item = &'a String>, width: usize) -> Self {
        let roles = roles
            .into_iter()
            .map(|r| {
                let name = format!("prototypes.{r}");
                let mut rng = keyed_rng(seed, name.as_bytes());
                let bound = 1.0 / (width as f64).sqrt();
                let v = Array2::from_shape_fn((1, width), |_| rng.random_range(-bound..bound));
                (r.clone(), store.add(name, v))
            })
            .collect();
        Self { roles }
    }

    pub fn roles(&self) -> impl Iterator<Item = &str> {
        self.roles.keys().map(String::as_str)
    }

    pub fn get(&self, role: &str) -> Result<ParamId> {
        self.roles.get(role).copied().ok_or_else(|| Error::Ontology(format!("no prototype for role '{role}'")))
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.roles.values().copied().collect()
    }
}

/// A prompt query model and its mapping network.
#[derive(Debug, Clone)]
pub struct QueryModel {
    pub decoder: QueryDecoder,
    pub mapping: MappingNetwork,
}

impl QueryModel {
    pub fn params(&self) -> Vec<ParamId> {
        let mut v = self.decoder.params();
        v.extend(self.mapping.params());
        v
    }
}

#[derive(Debug, Clone)]
pub enum QueryPath {
    Joint(QueryModel),
    PerModality { text: QueryModel, image: QueryModel },
    Prototypes(PrototypeBank),
}

/// Parameter groups. The first component of every parameter name is one of
/// these.
pub mod groups {
    pub const TEXT_ENCODER: &str = "text_encoder";
    pub const VISION_ENCODER: &str = "vision_encoder";
    pub const MAP_TEXT: &str = "map_text";
    pub const MAP_IMAGE: &str = "map_image";
    pub const QUERY: &str = "query";
    pub const QUERY_TEXT: &str = "query_text";
    pub const QUERY_IMAGE: &str = "query_image";
    pub const MAP_QUERY: &str = "map_query";
    pub const MAP_QUERY_TEXT: &str = "map_query_text";
    pub const MAP_QUERY_IMAGE: &str = "map_query_image";
    pub const PROTOTYPES: &str = "prototypes";

    /// Text-side candidate path.
    pub const TEXT_SIDE: &[&str] = &[TEXT_ENCODER, MAP_TEXT];
    /// Image-side candidate path.
    pub const VISION_SIDE: &[&str] = &[VISION_ENCODER, MAP_IMAGE];
    /// Everything that produces role queries.
    pub const QUERY_SIDE: &[&str] =
        &[QUERY, QUERY_TEXT, QUERY_IMAGE, MAP_QUERY, MAP_QUERY_TEXT, MAP_QUERY_IMAGE, PROTOTYPES];
}

/// Serialized model: configuration, prototype roles and parameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub ontology: String,
    pub prototype_roles: Vec<String>,
    pub params: ParamStore,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    ontology: String,
    text_encoder: TextEncoder,
    vision_encoder: VisionEncoder,
    text_mapping: MappingNetwork,
    image_mapping: MappingNetwork,
    queries: QueryPath,
}

/// Graph nodes for an encoded context.
enum EncodedContext {
    Text { tokens: Var, alignment: Vec<std::ops::Range<usize>>, trigger: crate::candidates::WordSpan },
    Image { patches: Var, cls: Var, grid: crate::encoding::PatchGrid },
}

impl Model {
    /// Builds a freshly initialised model. `ontology` supplies the role
    /// vocabulary for prototype queries.
    pub fn new(config: ModelConfig, ontology: &Ontology) -> Result<Self> {
        let roles: Vec<String> = ontology.role_vocabulary().iter().cloned().collect();
        Self::build(config, ontology.name().to_string(), &roles)
    }

    fn build(config: ModelConfig, ontology: String, prototype_roles: &[String]) -> Result<Self> {
        if config.hidden_size == 0 {
            return Err(Error::Config("hidden_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&config.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", config.dropout)));
        }
        let mut store = ParamStore::new();
        let seed = config.seed;
        let h = config.hidden_size;
        let text_encoder = TextEncoder::new(&mut store, config.text.clone(), groups::TEXT_ENCODER)?;
        let vision_encoder = VisionEncoder::new(&mut store, config.vision.clone(), groups::VISION_ENCODER)?;
        let text_mapping =
            MappingNetwork::new(&mut store, seed, groups::MAP_TEXT, 2 * config.text.width, h, config.dropout);
        let image_mapping =
            MappingNetwork::new(&mut store, seed, groups::MAP_IMAGE, 2 * config.vision.width, h, config.dropout);

        let text_mem = (Modality::Text, config.text.width);
        let image_mem = (Modality::Image, config.vision.width);
        let use_ca = !config.ablation.no_cross_attention;
        let query_model = |store: &mut ParamStore, mems: &[(Modality, usize)], dec: &str, map: &str| {
            let decoder = QueryDecoder::new(store, config.query.clone(), &config.text, mems, use_ca, dec)?;
            let mapping = MappingNetwork::new(store, seed, map, decoder.width(), h, config.dropout);
            Ok::<_, Error>(QueryModel { decoder, mapping })
        };
        let queries = if config.ablation.use_prototypes {
            QueryPath::Prototypes(PrototypeBank::new(&mut store, seed, prototype_roles, h))
        } else if config.ablation.joint_prompts {
            QueryPath::Joint(query_model(&mut store, &[text_mem, image_mem], groups::QUERY, groups::MAP_QUERY)?)
        } else {
            QueryPath::PerModality {
                text: query_model(&mut store, &[text_mem], groups::QUERY_TEXT, groups::MAP_QUERY_TEXT)?,
                image: query_model(&mut store, &[image_mem], groups::QUERY_IMAGE, groups::MAP_QUERY_IMAGE)?,
            }
        };
        Ok(Self {
            config,
            params: store,
            ontology,
            text_encoder,
            vision_encoder,
            text_mapping,
            image_mapping,
            queries,
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let prototype_roles = match &self.queries {
            QueryPath::Prototypes(bank) => bank.roles().map(str::to_string).collect(),
            _ => Vec::new(),
        };
        Checkpoint {
            config: self.config.clone(),
            ontology: self.ontology.clone(),
            prototype_roles,
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        let mut model = Self::build(ckpt.config, ckpt.ontology, &ckpt.prototype_roles)?;
        if model.params.len() != ckpt.params.len() {
            return Err(Error::Data(format!(
                "checkpoint has {} tensors, model expects {}",
                ckpt.params.len(),
                model.params.len()
            )));
        }
        for (id, p) in ckpt.params.iter() {
            let expected = model.params.get(id);
            if model.params.name(id) != p.name || expected.dim() != p.value.dim() {
                return Err(Error::Data(format!("checkpoint tensor '{}' does not match the model", p.name)));
            }
        }
        model.params = ckpt.params;
        Ok(model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_vec(&self.checkpoint())?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_slice(&bytes)
            .map_err(|e| Error::Ingestion { path: path.to_path_buf(), message: e.to_string() })?;
        Self::from_checkpoint(ckpt)
    }

    /// Name of the ontology the model was built for.
    pub fn ontology_name(&self) -> &str {
        &self.ontology
    }

    pub fn query_path(&self) -> &QueryPath {
        &self.queries
    }

    pub fn backends(&self) -> BTreeMap<String, BackendInfo> {
        let mut out = BTreeMap::new();
        out.insert("text".to_string(), self.text_encoder.info());
        out.insert("vision".to_string(), self.vision_encoder.info());
        match &self.queries {
            QueryPath::Joint(q) => {
                out.insert("query".to_string(), q.decoder.info());
            }
            QueryPath::PerModality { text, image } => {
                out.insert("query_text".to_string(), text.decoder.info());
                out.insert("query_image".to_string(), image.decoder.info());
            }
            QueryPath::Prototypes(_) => {}
        }
        out
    }

    /// Parameter ids in the named groups.
    pub fn group_params(&self, names: &[&str]) -> Vec<ParamId> {
        names.iter().flat_map(|g| self.params.group(g)).collect()
    }

    pub fn text_encoder(&self) -> &TextEncoder {
        &self.text_encoder
    }

    pub fn vision_encoder(&self) -> &VisionEncoder {
        &self.vision_encoder
    }

    pub fn encode_text<S: AsRef<str>>(&self, words: &[S]) -> Result<TextContext> {
        self.text_encoder.encode(&self.params, words)
    }

    pub fn encode_image(&self, image: &image::RgbImage) -> Result<ImageContext> {
        self.vision_encoder.encode(&self.params, image)
    }

    fn query_model(&self, modality: Modality) -> Option<&QueryModel> {
        match &self.queries {
            QueryPath::Joint(q) => Some(q),
            QueryPath::PerModality { text, image } => Some(match modality {
                Modality::Text => text,
                Modality::Image => image,
            }),
            QueryPath::Prototypes(_) => None,
        }
    }

    /// Per-piece query features for `prompt` in `context`. Fails under the
    /// prototype ablation, which has no query model.
    pub fn decode_queries(&self, prompt: &PromptRendering, context: ContextRef<'_>) -> Result<QueryFeatures> {
        let qm = self
            .query_model(context.modality())
            .ok_or_else(|| Error::Config("prototype queries have no query decoder".into()))?;
        qm.decoder.decode(&self.params, prompt, context)
    }

    fn encode_context(&self, g: &mut Graph, ctx: &EventContext) -> Result<EncodedContext> {
        match ctx {
            EventContext::Text { words, trigger, .. } => {
                let (tokens, _, alignment) = self.text_encoder.encode_graph(g, &self.params, words)?;
                subword_range(&alignment, *trigger)?;
                Ok(EncodedContext::Text { tokens, alignment, trigger: *trigger })
            }
            EventContext::Image { image, .. } => {
                let pixels = image.load()?;
                let (patches, cls, grid) = self.vision_encoder.encode_graph(g, &self.params, &pixels)?;
                Ok(EncodedContext::Image { patches, cls, grid })
            }
        }
    }

    /// `|C|×2w` raw candidate features.
    fn candidate_features(&self, g: &mut Graph, enc: &EncodedContext, candidates: &[CandidateRef]) -> Result<Var> {
        let mut rows = Vec::with_capacity(candidates.len());
        match enc {
            EncodedContext::Text { tokens, alignment, trigger } => {
                let t = subword_range(alignment, *trigger)?;
                let trig = g.mean_rows(*tokens, t);
                for c in candidates {
                    let CandidateRef::Span(span) = c else {
                        return Err(Error::Config(format!("{c:?} cannot be a candidate in a text context")));
                    };
                    let r = subword_range(alignment, *span)?;
                    let ent = g.mean_rows(*tokens, r);
                    rows.push(g.concat_cols(&[ent, trig]));
                }
            }
            EncodedContext::Image { patches, cls, grid } => {
                for c in candidates {
                    let CandidateRef::Bbox(bbox) = c else {
                        return Err(Error::Config(format!("{c:?} cannot be a candidate in an image context")));
                    };
                    let pooled = match patch_reduction(grid, bbox, self.config.pooling)? {
                        PatchReduction::Max(idx) => g.max_rows(*patches, &idx),
                        PatchReduction::Weighted(w) => g.weighted_rows(*patches, w),
                    };
                    rows.push(g.concat_cols(&[pooled, *cls]));
                }
            }
        }
        Ok(g.stack_rows(&rows))
    }

    /// `R×H` role queries for the event.
    fn role_queries(
        &self,
        g: &mut Graph,
        ontology: &Ontology,
        event_type: &str,
        enc: &EncodedContext,
        modality: Modality,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let def = ontology.require_event(event_type)?;
        let qm = match &self.queries {
            QueryPath::Prototypes(bank) => {
                let rows: Vec<Var> = def
                    .roles()
                    .iter()
                    .map(|r| bank.get(r).map(|id| g.param(&self.params, id)))
                    .collect::<Result<_>>()?;
                return Ok(g.stack_rows(&rows));
            }
            _ => self.query_model(modality).expect("prompt query path"),
        };
        let prompt = def.render(&self.config.prompt)?;
        let pieces = qm.decoder.tokenize(&prompt);
        let role_pieces = qm.decoder.role_pieces(&prompt, &pieces)?;
        let memory = match enc {
            EncodedContext::Text { tokens, .. } => (*tokens, Modality::Text),
            EncodedContext::Image { patches, .. } => (*patches, Modality::Image),
        };
        let feats = qm.decoder.decode_graph(g, &self.params, &pieces, Some(memory))?;
        let rows: Vec<Var> = role_pieces.into_iter().map(|idx| g.mean_rows(feats, idx)).collect();
        let stacked = g.stack_rows(&rows);
        Ok(qm.mapping.forward(g, &self.params, stacked, rng))
    }

    /// Builds the `|C|×R` logit matrix for an event. Returns `None` when the
    /// event has no candidates or its template has no roles.
    pub fn logits_graph(
        &self,
        g: &mut Graph,
        ontology: &Ontology,
        inst: &EventInstance,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Option<(Var, Vec<String>)>> {
        let def = ontology.require_event(&inst.event_type)?;
        let roles: Vec<String> = def.roles().into_iter().map(str::to_string).collect();
        if inst.candidates.is_empty() || roles.is_empty() {
            return Ok(None);
        }
        let modality = inst.modality();
        let enc = self.encode_context(g, &inst.context)?;
        let raw = self.candidate_features(g, &enc, &inst.candidates)?;
        let mapping = match modality {
            Modality::Text => &self.text_mapping,
            Modality::Image => &self.image_mapping,
        };
        let cands = mapping.forward(g, &self.params, raw, rng.as_deref_mut());
        let queries = self.role_queries(g, ontology, &inst.event_type, &enc, modality, rng)?;
        let qt = g.transpose(queries);
        Ok(Some((g.matmul(cands, qt), roles)))
    }

    /// Training loss for one event: BCE over the `|C|×R` logits, normalised by
    /// `|C|`. Labels naming roles outside the template are ignored.
    pub fn loss_graph(
        &self,
        g: &mut Graph,
        ontology: &Ontology,
        inst: &EventInstance,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Option<Var>> {
        let Some((logits, roles)) = self.logits_graph(g, ontology, inst, rng)? else {
            return Ok(None);
        };
        let labels = label_matrix(inst, &roles);
        let n = inst.candidates.len() as f64;
        g.bce_with_logits(logits, labels, n).map(Some)
    }

    /// Scores and assigns roles for one event.
    pub fn forward_event(&self, ontology: &Ontology, inst: &EventInstance, thresholds: &Thresholds) -> Result<MatchResult> {
        let tau = thresholds.for_modality(inst.modality());
        let mut g = Graph::new();
        match self.logits_graph(&mut g, ontology, inst, None)? {
            Some((logits, roles)) => {
                let scores = g.value(logits).mapv(sigmoid);
                Ok(MatchResult::assign(inst.event_type.clone(), roles, scores, tau))
            }
            None => {
                let roles: Vec<String> =
                    ontology.require_event(&inst.event_type)?.roles().into_iter().map(str::to_string).collect();
                Ok(MatchResult {
                    event_type: inst.event_type.clone(),
                    scores: Array2::zeros((inst.candidates.len(), roles.len())),
                    assignments: vec![None; inst.candidates.len()],
                    roles,
                    tau,
                })
            }
        }
    }
}

/// `|C|×R` 0/1 matrix from an instance's gold labels.
pub fn label_matrix(inst: &EventInstance, roles: &[String]) -> Array2<f64> {
    let mut y = Array2::zeros((inst.candidates.len(), roles.len()));
    for (i, gold) in inst.labels.iter().enumerate() {
        for role in gold {
            if let Some(j) = roles.iter().position(|r| r == role) {
                y[[i, j]] = 1.0;
            }
        }
    }
    y
}

/// Sigmoid of a single logit row (helper for tests and tools).
pub fn scores_from_logits(logits: &Array1<f64>) -> Array1<f64> {
    logits.mapv(sigmoid)
}
