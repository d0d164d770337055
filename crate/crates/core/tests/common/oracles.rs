//! Naive reference implementations used as independent oracles.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::ops::Range;

use argfill_core::autograd::{Graph, ParamId};
use argfill_core::candidates::{BBox, WordSpan};
use argfill_core::data::{ArgumentRecord, CandidateRef, EventInstance, EventRecord, Mention};
use argfill_core::encoding::{ImageContext, Modality, PatchGrid, TextContext};
use argfill_core::evaluation::{MatchPolicy, MetricReport, Prf, SpanPolicy};
use argfill_core::matching::Model;
use argfill_core::ontology::Ontology;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Patches hit by an integer-coordinate box, found by testing every cell of
/// a lattice fine enough that no overlap is thinner than one cell.
///
/// In frame units every box edge is a multiple of `1/W` (or `1/H`) and every
/// patch edge is an integer, so cells of width `1/W` are either fully inside
/// or fully outside an overlap.
pub fn brute_patches(grid: &PatchGrid, b: [i64; 4]) -> BTreeSet<usize> {
    let p = grid.patch_size as f64;
    let axis = |lo: i64, hi: i64, n: u32, frame: u32, image: u32| -> Vec<u32> {
        let scale = frame as f64 / image as f64;
        let (lo, hi) = (lo as f64 * scale, hi as f64 * scale);
        let cells = frame as u64 * image as u64;
        let mut hit = vec![false; n as usize];
        for i in 0..cells {
            let x = (i as f64 + 0.5) / image as f64;
            if x >= lo && x < hi {
                let k = (x / p) as usize;
                hit[k.min(n as usize - 1)] = true;
            }
        }
        (0..n).filter(|&k| hit[k as usize]).collect()
    };
    let cols = axis(b[0], b[2], grid.cols, grid.frame_width(), grid.image_width);
    let rows = axis(b[1], b[3], grid.rows, grid.frame_height(), grid.image_height);
    let mut out = BTreeSet::new();
    for &r in &rows {
        for &c in &cols {
            out.insert((r * grid.cols + c) as usize);
        }
    }
    out
}

pub fn random_grid(rng: &mut ChaCha8Rng) -> PatchGrid {
    let patch_size = [4u32, 8, 16][rng.random_range(0..3)];
    let n = rng.random_range(2..=14u32);
    PatchGrid { rows: n, cols: n, patch_size, image_width: rng.random_range(8..=160), image_height: rng.random_range(8..=160) }
}

/// Integer box that overlaps the image, possibly sticking out of it.
pub fn random_int_box(rng: &mut ChaCha8Rng, w: u32, h: u32) -> [i64; 4] {
    let (w, h) = (w as i64, h as i64);
    let x0 = rng.random_range(-4..w);
    let y0 = rng.random_range(-4..h);
    let x1 = rng.random_range((x0 + 1).max(1)..=w + 4);
    let y1 = rng.random_range((y0 + 1).max(1)..=h + 4);
    [x0, y0, x1, y1]
}

pub fn to_bbox(b: [i64; 4]) -> BBox {
    BBox::new(b[0] as f64, b[1] as f64, b[2] as f64, b[3] as f64)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
    Array2::from_shape_fn((r, c), |_| rng.random_range(-2.0..2.0))
}

pub fn random_text_context(rng: &mut ChaCha8Rng, words: usize, width: usize) -> TextContext {
    let mut alignment: Vec<Range<usize>> = Vec::with_capacity(words);
    let mut at = 0;
    for _ in 0..words {
        let n = rng.random_range(1..=3);
        alignment.push(at..at + n);
        at += n;
    }
    TextContext {
        pieces: (0..at).map(|i| format!("p{i}")).collect(),
        tokens: (0..at as u64).collect(),
        token_embeddings: random_matrix(rng, at, width),
        subword_alignment: alignment,
    }
}

pub fn random_image_context(rng: &mut ChaCha8Rng, width: usize) -> ImageContext {
    let grid = random_grid(rng);
    ImageContext {
        patch_embeddings: random_matrix(rng, grid.len(), width),
        cls_embedding: Array1::from_shape_fn(width, |_| rng.random_range(-2.0..2.0)),
        grid,
    }
}

/// `mean(entity pieces) ⊕ mean(trigger pieces)` by explicit loops.
pub fn naive_entity_pool(ctx: &TextContext, entity: WordSpan, trigger: WordSpan) -> Vec<f64> {
    let mean = |span: WordSpan| {
        let w = ctx.token_embeddings.ncols();
        let mut acc = vec![0.0; w];
        let mut n = 0.0;
        for word in span.start..span.end {
            for piece in ctx.subword_alignment[word].clone() {
                for (k, a) in acc.iter_mut().enumerate() {
                    *a += ctx.token_embeddings[[piece, k]];
                }
                n += 1.0;
            }
        }
        acc.into_iter().map(|a| a / n).collect::<Vec<_>>()
    };
    let mut out = mean(entity);
    out.extend(mean(trigger));
    out
}

/// Max (or mean) over the oracle patch set, then the CLS vector.
pub fn naive_object_pool(ctx: &ImageContext, patches: &BTreeSet<usize>, max: bool) -> Vec<f64> {
    let w = ctx.patch_embeddings.ncols();
    let mut out = Vec::with_capacity(2 * w);
    for k in 0..w {
        let vals: Vec<f64> = patches.iter().map(|&i| ctx.patch_embeddings[[i, k]]).collect();
        out.push(if max {
            vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        });
    }
    out.extend(ctx.cls_embedding.iter());
    out
}

/// `‖a − b‖∞ / max(‖b‖∞, 1e-12)`.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(0.0, f64::max).max(1e-12);
    diff / scale
}

/// BCE over probabilities, double loop, divided by the row count.
pub fn naive_bce(scores: &Array2<f64>, labels: &Array2<f64>) -> f64 {
    let mut total = 0.0;
    for i in 0..scores.nrows() {
        for j in 0..scores.ncols() {
            let (p, y) = (scores[[i, j]], labels[[i, j]]);
            total -= if y == 1.0 { p.ln() } else { (1.0 - p).ln() };
        }
    }
    total / scores.nrows() as f64
}

pub fn pixel_iou(a: [i64; 4], b: [i64; 4]) -> f64 {
    let lo = a[0].min(a[1]).min(b[0]).min(b[1]);
    let hi = a[2].max(a[3]).max(b[2]).max(b[3]);
    let inside = |r: [i64; 4], x: i64, y: i64| x >= r[0] && x < r[2] && y >= r[1] && y < r[3];
    let (mut inter, mut union) = (0u64, 0u64);
    for y in lo..hi {
        for x in lo..hi {
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += (ia && ib) as u64;
            union += (ia || ib) as u64;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn same_target(policy: &MatchPolicy, p: &CandidateRef, g: &CandidateRef) -> bool {
    match (p, g) {
        (CandidateRef::Span(p), CandidateRef::Span(g)) => match policy.span {
            SpanPolicy::Exact => p.start == g.start && p.end == g.end,
            SpanPolicy::Head => p.end == g.end,
        },
        (CandidateRef::Bbox(p), CandidateRef::Bbox(g)) => {
            let iw = (p.x_max.min(g.x_max) - p.x_min.max(g.x_min)).max(0.0);
            let ih = (p.y_max.min(g.y_max) - p.y_min.max(g.y_min)).max(0.0);
            let inter = iw * ih;
            let union = (p.x_max - p.x_min) * (p.y_max - p.y_min) + (g.x_max - g.x_min) * (g.y_max - g.y_min) - inter;
            union > 0.0 && inter / union >= policy.iou
        }
        _ => false,
    }
}

fn flat(records: &[EventRecord], modality: Modality, mm_only: bool) -> Vec<(&EventRecord, &ArgumentRecord)> {
    let mut out = Vec::new();
    for r in records {
        if r.mention.modality() == modality && (!mm_only || r.multimedia_id.is_some()) {
            for a in &r.arguments {
                out.push((r, a));
            }
        }
    }
    out
}

/// O(|P|×|G|) matcher: each prediction, in order, takes the first unused
/// gold argument with the same document, location, event type and role.
pub fn naive_argument_counts(
    pred: &[EventRecord],
    gold: &[EventRecord],
    policy: &MatchPolicy,
    modality: Modality,
    mm_only: bool,
) -> (usize, usize, usize) {
    let p = flat(pred, modality, mm_only);
    let g = flat(gold, modality, mm_only);
    let mut used = vec![false; g.len()];
    let mut matched = 0;
    for (pr, pa) in &p {
        for (j, (gr, ga)) in g.iter().enumerate() {
            if !used[j]
                && pr.doc_id == gr.doc_id
                && pr.mention.location() == gr.mention.location()
                && pr.event_type == gr.event_type
                && pa.role == ga.role
                && same_target(policy, &pa.target, &ga.target)
            {
                used[j] = true;
                matched += 1;
                break;
            }
        }
    }
    (p.len(), g.len(), matched)
}

fn naive_mentions(pred: &[EventRecord], gold: &[EventRecord], modality: Modality) -> (usize, usize, usize) {
    let uniq = |rs: &[EventRecord]| {
        let mut v: Vec<(String, String, Mention)> = Vec::new();
        for r in rs.iter().filter(|r| r.mention.modality() == modality) {
            let k = (r.doc_id.clone(), r.event_type.clone(), r.mention.clone());
            if !v.contains(&k) {
                v.push(k);
            }
        }
        v
    };
    let (p, g) = (uniq(pred), uniq(gold));
    let m = p.iter().filter(|k| g.contains(k)).count();
    (p.len(), g.len(), m)
}

/// Text/image pairs sharing a document and multimedia id, with equal types.
fn naive_mm_pairs(rs: &[EventRecord]) -> Vec<(String, String, Mention, Mention)> {
    let mut out = Vec::new();
    for t in rs.iter().filter(|r| r.mention.modality() == Modality::Text) {
        for i in rs.iter().filter(|r| r.mention.modality() == Modality::Image) {
            if t.multimedia_id.is_some()
                && t.multimedia_id == i.multimedia_id
                && t.doc_id == i.doc_id
                && t.event_type == i.event_type
            {
                let k = (t.doc_id.clone(), t.event_type.clone(), t.mention.clone(), i.mention.clone());
                if !out.contains(&k) {
                    out.push(k);
                }
            }
        }
    }
    out
}

fn prf((p, g, m): (usize, usize, usize)) -> Prf {
    let precision = if p == 0 { 0.0 } else { m as f64 / p as f64 };
    let recall = if g == 0 { 0.0 } else { m as f64 / g as f64 };
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Prf { predicted: p, gold: g, matched: m, precision, recall, f1 }
}

pub fn naive_report(pred: &[EventRecord], gold: &[EventRecord], policy: &MatchPolicy) -> MetricReport {
    let args = |m, mm| naive_argument_counts(pred, gold, policy, m, mm);
    let (tp, tg, tm) = args(Modality::Text, true);
    let (ip, ig, im) = args(Modality::Image, true);
    let (pp, gp) = (naive_mm_pairs(pred), naive_mm_pairs(gold));
    let mm_matched = pp.iter().filter(|k| gp.contains(k)).count();
    let mut r = MetricReport::default();
    r.textual.mentions = prf(naive_mentions(pred, gold, Modality::Text));
    r.textual.arguments = prf(args(Modality::Text, false));
    r.visual.mentions = prf(naive_mentions(pred, gold, Modality::Image));
    r.visual.arguments = prf(args(Modality::Image, false));
    r.multimedia.mentions = prf((pp.len(), gp.len(), mm_matched));
    r.multimedia.arguments = prf((tp + ip, tg + ig, tm + im));
    r
}

/// Reports agree when all counts agree and all ratios agree to 1e-12.
pub fn reports_agree(a: &MetricReport, b: &MetricReport) -> bool {
    let same = |x: &Prf, y: &Prf| {
        x.predicted == y.predicted
            && x.gold == y.gold
            && x.matched == y.matched
            && (x.precision - y.precision).abs() < 1e-12
            && (x.recall - y.recall).abs() < 1e-12
            && (x.f1 - y.f1).abs() < 1e-12
    };
    [(&a.textual, &b.textual), (&a.visual, &b.visual), (&a.multimedia, &b.multimedia)]
        .iter()
        .all(|(x, y)| same(&x.mentions, &y.mentions) && same(&x.arguments, &y.arguments))
}

const FIXTURE_TYPES: [(&str, [&str; 3]); 2] =
    [("Conflict:Attack", ["Attacker", "Target", "Place"]), ("Contact:Meet", ["Entity", "Place", "Entity"])];

fn random_target(rng: &mut ChaCha8Rng, m: Modality) -> CandidateRef {
    match m {
        Modality::Text => {
            let s = rng.random_range(0..6);
            CandidateRef::Span(WordSpan::new(s, s + rng.random_range(1..3)))
        }
        Modality::Image => {
            let x = rng.random_range(0..8) as f64;
            let y = rng.random_range(0..8) as f64;
            CandidateRef::Bbox(BBox::new(x, y, x + rng.random_range(2..6) as f64, y + rng.random_range(2..6) as f64))
        }
    }
}

fn jitter(rng: &mut ChaCha8Rng, t: &CandidateRef) -> CandidateRef {
    match t {
        CandidateRef::Span(s) => {
            let start = if rng.random_bool(0.5) { s.start } else { s.start.saturating_sub(1) };
            CandidateRef::Span(WordSpan::new(start, s.end + rng.random_range(0..2)))
        }
        CandidateRef::Bbox(b) => {
            let d = rng.random_range(0..3) as f64;
            CandidateRef::Bbox(BBox::new(b.x_min + d, b.y_min, b.x_max + d, b.y_max))
        }
    }
}

/// A random gold/prediction pair over the bundled ontology. Predictions are
/// perturbed copies of gold plus spurious arguments and events.
pub fn random_fixture(rng: &mut ChaCha8Rng) -> (Vec<EventRecord>, Vec<EventRecord>) {
    let mut gold = Vec::new();
    for d in 0..rng.random_range(1..4) {
        let doc = format!("doc{d}");
        for k in 0..rng.random_range(1..4) {
            let m = if rng.random_bool(0.5) { Modality::Text } else { Modality::Image };
            let (ty, roles) = FIXTURE_TYPES[rng.random_range(0..2)];
            let mention = match m {
                Modality::Text => Mention::Text { sentence_id: format!("{doc}_{}", rng.random_range(0..2)), trigger: WordSpan::new(k, k + 1) },
                Modality::Image => Mention::Image { image_id: format!("{doc}_img{}", rng.random_range(0..2)) },
            };
            let arguments = (0..rng.random_range(0..5))
                .map(|_| ArgumentRecord { role: roles[rng.random_range(0..3)].into(), target: random_target(rng, m), score: None })
                .collect();
            gold.push(EventRecord { doc_id: doc.clone(), event_type: ty.into(), mention, multimedia_id: None, arguments });
        }
    }
    // Pair some text and image events of the same document and type.
    let n = gold.len();
    for i in 0..n {
        for j in 0..n {
            let pairable = gold[i].mention.modality() == Modality::Text
                && gold[j].mention.modality() == Modality::Image
                && gold[i].doc_id == gold[j].doc_id
                && gold[i].event_type == gold[j].event_type
                && gold[i].multimedia_id.is_none()
                && gold[j].multimedia_id.is_none();
            if pairable && rng.random_bool(0.6) {
                let id = format!("mm{i}-{j}");
                gold[i].multimedia_id = Some(id.clone());
                gold[j].multimedia_id = Some(id);
            }
        }
    }
    let mut pred = Vec::new();
    for g in &gold {
        if rng.random_bool(0.1) {
            continue;
        }
        let mut p = g.clone();
        let m = g.mention.modality();
        let roles = FIXTURE_TYPES.iter().find(|(t, _)| *t == g.event_type).unwrap().1;
        p.arguments.retain(|_| rng.random_bool(0.8));
        for a in &mut p.arguments {
            match rng.random_range(0..6) {
                0 => a.role = roles[rng.random_range(0..3)].into(),
                1 => a.target = jitter(rng, &a.target),
                _ => {}
            }
        }
        for _ in 0..rng.random_range(0..3) {
            p.arguments.push(ArgumentRecord { role: roles[rng.random_range(0..3)].into(), target: random_target(rng, m), score: Some(0.7) });
        }
        if rng.random_bool(0.1) {
            p.multimedia_id = None;
        }
        pred.push(p);
    }
    if rng.random_bool(0.3) {
        let mut extra = gold[rng.random_range(0..gold.len())].clone();
        extra.event_type = FIXTURE_TYPES.iter().find(|(t, _)| *t != extra.event_type).unwrap().0.into();
        extra.arguments.clear();
        extra.multimedia_id = None;
        pred.push(extra);
    }
    (pred, gold)
}

/// Largest relative gap between analytic and central-difference gradients
/// over sampled parameter coordinates of one event's loss.
pub fn gradient_gap(model: &mut Model, ontology: &Ontology, inst: &EventInstance, rng: &mut ChaCha8Rng, samples: usize) -> f64 {
    let loss = |m: &Model| {
        let mut g = Graph::new();
        let l = m.loss_graph(&mut g, ontology, inst, None).unwrap().unwrap();
        g.value(l)[[0, 0]]
    };
    let mut g = Graph::new();
    let l = model.loss_graph(&mut g, ontology, inst, None).unwrap().unwrap();
    let grads = g.backward(l).into_params();
    let ids: Vec<ParamId> = grads.keys().copied().collect();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let id = ids[rng.random_range(0..ids.len())];
        let (r, c) = model.params.get(id).dim();
        let (i, j) = (rng.random_range(0..r), rng.random_range(0..c));
        let orig = model.params.get(id)[[i, j]];
        model.params.get_mut(id)[[i, j]] = orig + h;
        let up = loss(model);
        model.params.get_mut(id)[[i, j]] = orig - h;
        let down = loss(model);
        model.params.get_mut(id)[[i, j]] = orig;
        let numeric = (up - down) / (2.0 * h);
        let analytic = grads[&id][[i, j]];
        // Relative to the larger magnitude, with a floor near the
        // finite-difference noise level.
        let gap = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
        worst = worst.max(gap);
    }
    worst
}
