//! Modality encoders and the prompt-conditioned query decoder.
//!
//! Only the `synthetic` backend is implemented: token and patch embeddings are
//! content-hashed unit vectors passed through a trainable residual adapter,
//! and the query decoder is a single residual feed-forward step plus one
//! cross-attention block over the context embeddings. This keeps every shape
//! and gradient path of the full model while running in milliseconds.

use std::ops::Range;

use image::{imageops::FilterType, RgbImage};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, ParamId, ParamStore, Var};
use crate::error::{Error, Result};
use crate::layers::{hashed_unit_vector, Linear};
use crate::ontology::PromptRendering;

pub const SYNTHETIC: &str = "synthetic";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendFamily {
    EncoderDecoderText,
    EncoderOnlyText,
    Vision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Text,
    Image,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Text => "text",
            Modality::Image => "image",
        }
    }
}

/// Identity of an attached backend, as recorded in run manifests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub name: String,
    pub family: BackendFamily,
    pub hidden_size: usize,
    pub cross_attention_supported: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextBackendConfig {
    pub name: String,
    pub family: BackendFamily,
    pub width: usize,
    pub seed: u64,
    pub max_length: usize,
    /// Longest subword piece, in chars.
    pub piece_len: usize,
}

impl Default for TextBackendConfig {
    fn default() -> Self {
        Self {
            name: SYNTHETIC.into(),
            family: BackendFamily::EncoderDecoderText,
            width: 32,
            seed: 17,
            max_length: 512,
            piece_len: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VisionBackendConfig {
    pub name: String,
    pub width: usize,
    pub seed: u64,
    /// Side length images are resized to before patching.
    pub image_size: u32,
    pub patch_size: u32,
}

impl Default for VisionBackendConfig {
    fn default() -> Self {
        Self { name: SYNTHETIC.into(), width: 32, seed: 23, image_size: 224, patch_size: 16 }
    }
}

/// Query model settings. An encoder-decoder query model reuses the text
/// backend's embedding space; an encoder-only one is a separate model and
/// needs `added_cross_attention` to see the context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QueryBackendConfig {
    pub family: BackendFamily,
    pub width: usize,
    pub seed: u64,
    pub added_cross_attention: bool,
    pub attention_width: usize,
}

impl Default for QueryBackendConfig {
    fn default() -> Self {
        Self {
            family: BackendFamily::EncoderDecoderText,
            width: 32,
            seed: 29,
            added_cross_attention: false,
            attention_width: 32,
        }
    }
}

pub(crate) fn require_synthetic(name: &str, what: &str) -> Result<()> {
    if name == SYNTHETIC {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{what} backend '{name}' is not available in this build; only '{SYNTHETIC}' is"
        )))
    }
}

/// Splits text into subword pieces: whitespace separates words, ASCII
/// punctuation becomes its own piece, and letter runs are cut into chunks of at
/// most `piece_len` chars.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubwordTokenizer {
    pub piece_len: usize,
}

impl SubwordTokenizer {
    pub fn new(piece_len: usize) -> Self {
        assert!(piece_len > 0);
        Self { piece_len }
    }

    /// Pieces of `text` with their byte ranges.
    pub fn tokenize(&self, text: &str) -> Vec<(String, Range<usize>)> {
        let mut out = Vec::new();
        let mut run_start: Option<usize> = None;
        let mut run_chars = 0usize;
        let flush = |out: &mut Vec<(String, Range<usize>)>, start: usize, end: usize| {
            out.push((text[start..end].to_string(), start..end));
        };
        for (i, ch) in text.char_indices() {
            if ch.is_whitespace() || ch.is_ascii_punctuation() {
                if let Some(s) = run_start.take() {
                    flush(&mut out, s, i);
                }
                run_chars = 0;
                if ch.is_ascii_punctuation() {
                    flush(&mut out, i, i + ch.len_utf8());
                }
                continue;
            }
            match run_start {
                Some(s) if run_chars == self.piece_len => {
                    flush(&mut out, s, i);
                    run_start = Some(i);
                    run_chars = 1;
                }
                Some(_) => run_chars += 1,
                None => {
                    run_start = Some(i);
                    run_chars = 1;
                }
            }
        }
        if let Some(s) = run_start {
            flush(&mut out, s, text.len());
        }
        out
    }

    /// Pieces for a pre-split sentence plus, per word, its piece range.
    pub fn tokenize_words<S: AsRef<str>>(&self, words: &[S]) -> Result<(Vec<String>, Vec<Range<usize>>)> {
        let mut pieces = Vec::new();
        let mut alignment = Vec::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            let start = pieces.len();
            pieces.extend(self.tokenize(w.as_ref()).into_iter().map(|(p, _)| p));
            if pieces.len() == start {
                return Err(Error::Validation(format!("word {i} ('{}') has no tokens", w.as_ref())));
            }
            alignment.push(start..pieces.len());
        }
        Ok((pieces, alignment))
    }
}

fn token_id(seed: u64, piece: &str) -> u64 {
    use rand::Rng;
    crate::layers::keyed_rng(seed, piece.as_bytes()).random()
}

fn piece_embeddings(seed: u64, pieces: &[String], width: usize) -> Array2<f64> {
    let mut m = Array2::zeros((pieces.len(), width));
    for (i, p) in pieces.iter().enumerate() {
        m.row_mut(i).assign(&hashed_unit_vector(seed, "piece", p.as_bytes(), width));
    }
    m
}

/// Encoded sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct TextContext {
    pub pieces: Vec<String>,
    pub tokens: Vec<u64>,
    pub token_embeddings: Array2<f64>,
    /// Word index to its contiguous piece range.
    pub subword_alignment: Vec<Range<usize>>,
}

impl TextContext {
    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }
}

/// Patch layout of an encoded image. `image_width`/`image_height` are the
/// original dimensions; the encoder frame is `cols*patch_size` by
/// `rows*patch_size` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub rows: u32,
    pub cols: u32,
    pub patch_size: u32,
    pub image_width: u32,
    pub image_height: u32,
}

impl PatchGrid {
    pub fn len(&self) -> usize {
        (self.rows * self.cols) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame_width(&self) -> u32 {
        self.cols * self.patch_size
    }

    pub fn frame_height(&self) -> u32 {
        self.rows * self.patch_size
    }

    /// Pixel rectangle `(x0, y0, x1, y1)` of patch `index` in the encoder frame.
    pub fn patch_rect(&self, index: usize) -> (f64, f64, f64, f64) {
        let r = index as u32 / self.cols;
        let c = index as u32 % self.cols;
        let p = self.patch_size as f64;
        (c as f64 * p, r as f64 * p, (c + 1) as f64 * p, (r + 1) as f64 * p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageContext {
    pub patch_embeddings: Array2<f64>,
    pub cls_embedding: Array1<f64>,
    pub grid: PatchGrid,
}

/// Context handed to the query decoder as cross-attention memory.
#[derive(Debug, Clone, Copy)]
pub enum ContextRef<'a> {
    Text(&'a TextContext),
    Image(&'a ImageContext),
}

impl ContextRef<'_> {
    pub fn modality(&self) -> Modality {
        match self {
            ContextRef::Text(_) => Modality::Text,
            ContextRef::Image(_) => Modality::Image,
        }
    }

    fn memory(&self) -> &Array2<f64> {
        match self {
            ContextRef::Text(t) => &t.token_embeddings,
            ContextRef::Image(i) => &i.patch_embeddings,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TextEncoder {
    pub config: TextBackendConfig,
    tokenizer: SubwordTokenizer,
    adapter: Linear,
}

impl TextEncoder {
    pub fn new(store: &mut ParamStore, config: TextBackendConfig, prefix: &str) -> Result<Self> {
        require_synthetic(&config.name, "text")?;
        if config.family == BackendFamily::Vision {
            return Err(Error::Config("text backend cannot have the vision family".into()));
        }
        let adapter = Linear::new(store, config.seed, &format!("{prefix}.adapter"), config.width, config.width, 0.1);
        let tokenizer = SubwordTokenizer::new(config.piece_len);
        Ok(Self { config, tokenizer, adapter })
    }

    pub fn info(&self) -> BackendInfo {
        BackendInfo {
            name: self.config.name.clone(),
            family: self.config.family,
            hidden_size: self.config.width,
            cross_attention_supported: self.config.family == BackendFamily::EncoderDecoderText,
        }
    }

    pub fn tokenizer(&self) -> SubwordTokenizer {
        self.tokenizer
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.adapter.params().to_vec()
    }

    /// Graph version of [`encode`](Self::encode): returns the `N×H` token
    /// matrix and the word alignment.
    pub fn encode_graph<S: AsRef<str>>(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        words: &[S],
    ) -> Result<(Var, Vec<String>, Vec<Range<usize>>)> {
        if words.is_empty() {
            return Err(Error::Validation("cannot encode an empty sentence".into()));
        }
        let (pieces, alignment) = self.tokenizer.tokenize_words(words)?;
        if pieces.len() > self.config.max_length {
            return Err(Error::Truncation { length: pieces.len(), limit: self.config.max_length });
        }
        let base = g.input(piece_embeddings(self.config.seed, &pieces, self.config.width));
        let delta = self.adapter.forward(g, store, base);
        let out = g.add(base, delta);
        Ok((out, pieces, alignment))
    }

    pub fn encode<S: AsRef<str>>(&self, store: &ParamStore, words: &[S]) -> Result<TextContext> {
        let mut g = Graph::new();
        let (out, pieces, subword_alignment) = self.encode_graph(&mut g, store, words)?;
        let tokens = pieces.iter().map(|p| token_id(self.config.seed, p)).collect();
        Ok(TextContext { pieces, tokens, token_embeddings: g.value(out).clone(), subword_alignment })
    }
}

#[derive(Debug, Clone)]
pub struct VisionEncoder {
    pub config: VisionBackendConfig,
    adapter: Linear,
    cls_head: Linear,
}

impl VisionEncoder {
    pub fn new(store: &mut ParamStore, config: VisionBackendConfig, prefix: &str) -> Result<Self> {
        require_synthetic(&config.name, "vision")?;
        if config.patch_size == 0 || config.image_size == 0 || !config.image_size.is_multiple_of(config.patch_size) {
            return Err(Error::Config(format!(
                "image_size {} must be a positive multiple of patch_size {}",
                config.image_size, config.patch_size
            )));
        }
        let w = config.width;
        let adapter = Linear::new(store, config.seed, &format!("{prefix}.adapter"), w, w, 0.1);
        let cls_head = Linear::new(store, config.seed, &format!("{prefix}.cls"), w, w, 0.1);
        Ok(Self { config, adapter, cls_head })
    }

    pub fn info(&self) -> BackendInfo {
        BackendInfo {
            name: self.config.name.clone(),
            family: BackendFamily::Vision,
            hidden_size: self.config.width,
            cross_attention_supported: false,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut v = self.adapter.params().to_vec();
        v.extend(self.cls_head.params());
        v
    }

    pub fn grid_for(&self, width: u32, height: u32) -> PatchGrid {
        let n = self.config.image_size / self.config.patch_size;
        PatchGrid { rows: n, cols: n, patch_size: self.config.patch_size, image_width: width, image_height: height }
    }

    fn patch_bases(&self, image: &RgbImage) -> (Array2<f64>, PatchGrid) {
        let grid = self.grid_for(image.width(), image.height());
        let side = self.config.image_size;
        let resized;
        let frame = if image.width() == side && image.height() == side {
            image
        } else {
            resized = image::imageops::resize(image, side, side, FilterType::Nearest);
            &resized
        };
        let p = self.config.patch_size;
        let mut bases = Array2::zeros((grid.len(), self.config.width));
        let mut buf = Vec::with_capacity((p * p * 3) as usize);
        for idx in 0..grid.len() {
            let (r, c) = (idx as u32 / grid.cols, idx as u32 % grid.cols);
            buf.clear();
            for y in r * p..(r + 1) * p {
                for x in c * p..(c + 1) * p {
                    buf.extend_from_slice(&frame.get_pixel(x, y).0);
                }
            }
            bases.row_mut(idx).assign(&hashed_unit_vector(self.config.seed, "patch", &buf, self.config.width));
        }
        (bases, grid)
    }

    /// Returns `(M×H patches, 1×H cls, grid)` graph nodes.
    pub fn encode_graph(&self, g: &mut Graph, store: &ParamStore, image: &RgbImage) -> Result<(Var, Var, PatchGrid)> {
        if image.width() == 0 || image.height() == 0 {
            return Err(Error::Validation("image has zero size".into()));
        }
        let (bases, grid) = self.patch_bases(image);
        let base = g.input(bases);
        let delta = self.adapter.forward(g, store, base);
        let patches = g.add(base, delta);
        let pooled = g.mean_rows(patches, 0..grid.len());
        let cls_delta = self.cls_head.forward(g, store, pooled);
        let cls = g.add(pooled, cls_delta);
        Ok((patches, cls, grid))
    }

    pub fn encode(&self, store: &ParamStore, image: &RgbImage) -> Result<ImageContext> {
        let mut g = Graph::new();
        let (patches, cls, grid) = self.encode_graph(&mut g, store, image)?;
        Ok(ImageContext {
            patch_embeddings: g.value(patches).clone(),
            cls_embedding: g.value(cls).row(0).to_owned(),
            grid,
        })
    }
}

#[derive(Debug, Clone)]
struct MemoryProjection {
    key: Linear,
    value: Linear,
}

#[derive(Debug, Clone)]
struct CrossAttention {
    query: Linear,
    text: Option<MemoryProjection>,
    image: Option<MemoryProjection>,
    out: Linear,
    attention_width: usize,
}

/// How the decoder treats the context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextMode {
    CrossAttention,
    /// Cross-attention removed; queries ignore the context.
    Disabled,
    /// Encoder-only query model without the added cross-attention layers.
    Unsupported,
}

/// Per-prompt-token query features.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryFeatures {
    pub pieces: Vec<(String, Range<usize>)>,
    pub features: Array2<f64>,
}

impl QueryFeatures {
    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct QueryDecoder {
    pub config: QueryBackendConfig,
    embed_seed: u64,
    tokenizer: SubwordTokenizer,
    ffn: Linear,
    cross: Option<CrossAttention>,
    mode: ContextMode,
    max_length: usize,
}

impl QueryDecoder {
    /// `memories` lists the context widths this decoder attends over.
    pub fn new(
        store: &mut ParamStore,
        config: QueryBackendConfig,
        text: &TextBackendConfig,
        memories: &[(Modality, usize)],
        use_cross_attention: bool,
        prefix: &str,
    ) -> Result<Self> {
        let (embed_seed, width) = match config.family {
            BackendFamily::EncoderDecoderText => {
                if config.width != text.width {
                    return Err(Error::Config(format!(
                        "encoder-decoder query width {} must equal text width {}",
                        config.width, text.width
                    )));
                }
                (text.seed, text.width)
            }
            BackendFamily::EncoderOnlyText => (config.seed, config.width),
            BackendFamily::Vision => {
                return Err(Error::Config("query model must be a text backend".into()));
            }
        };
        let mode = if !use_cross_attention {
            ContextMode::Disabled
        } else if config.family == BackendFamily::EncoderOnlyText && !config.added_cross_attention {
            ContextMode::Unsupported
        } else {
            ContextMode::CrossAttention
        };
        let seed = config.seed;
        let ffn = Linear::new(store, seed, &format!("{prefix}.ffn"), width, width, 0.5);
        let cross = if mode == ContextMode::CrossAttention {
            let dk = config.attention_width;
            let query = Linear::new(store, seed, &format!("{prefix}.attn.query"), width, dk, 1.0);
            let mut text_proj = None;
            let mut image_proj = None;
            for &(m, mem_width) in memories {
                let tag = m.as_str();
                let proj = MemoryProjection {
                    key: Linear::new(store, seed, &format!("{prefix}.attn.{tag}.key"), mem_width, dk, 1.0),
                    value: Linear::new(store, seed, &format!("{prefix}.attn.{tag}.value"), mem_width, width, 1.0),
                };
                match m {
                    Modality::Text => text_proj = Some(proj),
                    Modality::Image => image_proj = Some(proj),
                }
            }
            let out = Linear::new(store, seed, &format!("{prefix}.attn.out"), width, width, 0.5);
            Some(CrossAttention { query, text: text_proj, image: image_proj, out, attention_width: dk })
        } else {
            None
        };
        Ok(Self {
            config,
            embed_seed,
            tokenizer: SubwordTokenizer::new(text.piece_len),
            ffn,
            cross,
            mode,
            max_length: text.max_length,
        })
    }

    pub fn width(&self) -> usize {
        self.ffn.out_dim
    }

    pub fn mode(&self) -> ContextMode {
        self.mode
    }

    pub fn info(&self) -> BackendInfo {
        BackendInfo {
            name: SYNTHETIC.into(),
            family: self.config.family,
            hidden_size: self.width(),
            cross_attention_supported: self.mode == ContextMode::CrossAttention,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut v = self.ffn.params().to_vec();
        if let Some(ca) = &self.cross {
            v.extend(ca.query.params());
            for p in [&ca.text, &ca.image].into_iter().flatten() {
                v.extend(p.key.params());
                v.extend(p.value.params());
            }
            v.extend(ca.out.params());
        }
        v
    }

    pub fn tokenize(&self, prompt: &PromptRendering) -> Vec<(String, Range<usize>)> {
        self.tokenizer.tokenize(&prompt.text)
    }

    /// Piece indices overlapping each role span, in prompt role order.
    pub fn role_pieces(&self, prompt: &PromptRendering, pieces: &[(String, Range<usize>)]) -> Result<Vec<Vec<usize>>> {
        prompt
            .role_spans
            .iter()
            .map(|(role, span)| {
                let idx: Vec<usize> = pieces
                    .iter()
                    .enumerate()
                    .filter(|(_, (_, r))| r.start < span.end && span.start < r.end)
                    .map(|(i, _)| i)
                    .collect();
                if idx.is_empty() {
                    Err(Error::Validation(format!("role '{role}' has no prompt tokens")))
                } else {
                    Ok(idx)
                }
            })
            .collect()
    }

    /// `L×H'` features for the prompt pieces, attending over `memory`.
    pub fn decode_graph(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        pieces: &[(String, Range<usize>)],
        memory: Option<(Var, Modality)>,
    ) -> Result<Var> {
        if pieces.len() > self.max_length {
            return Err(Error::Truncation { length: pieces.len(), limit: self.max_length });
        }
        let names: Vec<String> = pieces.iter().map(|(p, _)| p.clone()).collect();
        let x = g.input(piece_embeddings(self.embed_seed, &names, self.width()));
        let ffn = self.ffn.forward(g, store, x);
        let ffn = g.relu(ffn);
        let mut y = g.add(x, ffn);
        match self.mode {
            ContextMode::Disabled => {}
            ContextMode::Unsupported => {
                return Err(Error::Config(
                    "encoder-only query model has no cross-attention; enable added_cross_attention".into(),
                ));
            }
            ContextMode::CrossAttention => {
                let ca = self.cross.as_ref().expect("cross-attention built");
                let (mem, modality) = memory
                    .ok_or_else(|| Error::Config("cross-attention decoder needs a context".into()))?;
                let proj = match modality {
                    Modality::Text => ca.text.as_ref(),
                    Modality::Image => ca.image.as_ref(),
                }
                .ok_or_else(|| {
                    Error::Config(format!("query model cannot attend over {} contexts", modality.as_str()))
                })?;
                let q = ca.query.forward(g, store, x);
                let k = proj.key.forward(g, store, mem);
                let v = proj.value.forward(g, store, mem);
                let kt = g.transpose(k);
                let logits = g.matmul(q, kt);
                let logits = g.scale(logits, 1.0 / (ca.attention_width as f64).sqrt());
                let attn = g.softmax_rows(logits);
                let mixed = g.matmul(attn, v);
                let out = ca.out.forward(g, store, mixed);
                y = g.add(y, out);
            }
        }
        Ok(y)
    }

    /// Query features for a rendered prompt in the given context.
    pub fn decode(&self, store: &ParamStore, prompt: &PromptRendering, context: ContextRef<'_>) -> Result<QueryFeatures> {
        let pieces = self.tokenize(prompt);
        let mut g = Graph::new();
        let mem = g.input(context.memory().clone());
        let y = self.decode_graph(&mut g, store, &pieces, Some((mem, context.modality())))?;
        Ok(QueryFeatures { pieces, features: g.value(y).clone() })
    }
}

/// Reads an image file, reporting the path on failure.
pub fn load_image(path: &std::path::Path) -> Result<RgbImage> {
    let img = image::open(path).map_err(|e| Error::Ingestion { path: path.to_path_buf(), message: e.to_string() })?;
    Ok(img.to_rgb8())
}
