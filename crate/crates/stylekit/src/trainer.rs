//! Affine style encoder trained with a squared-distance triplet margin loss.
//!
//! The encoder is a projection `f(x) = Wx (+ b)` over frozen base vectors.
//! Loss per triplet: `max(0, ||f(a)-f(p)||^2 - ||f(a)-f(n)||^2 + margin)`.
//! The bias cancels inside the distances, so its gradient is identically
//! zero; it is kept for serialization compatibility.

use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingSet, Triplet};
use crate::error::{Error, Result};
use crate::par::map_ordered;
use crate::rng::seeded_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub seed: u64,
    pub margin: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs_run: usize,
}

impl Default for ModelMeta {
    fn default() -> Self {
        ModelMeta {
            seed: 0,
            margin: 0.1,
            learning_rate: 1e-4,
            batch_size: 512,
            epochs_run: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    /// Row-major, `d_out` rows of `d_in` entries.
    pub weights: Vec<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
    pub d_in: usize,
    pub d_out: usize,
    pub meta: ModelMeta,
}

impl EncoderModel {
    pub fn new(weights: Vec<Vec<f64>>, bias: Option<Vec<f64>>) -> Result<Self> {
        let d_out = weights.len();
        let d_in = weights.first().map(|r| r.len()).unwrap_or(0);
        if d_out == 0 || d_in == 0 {
            return Err(Error::InvalidConfig("empty weight matrix".into()));
        }
        if weights.iter().any(|r| r.len() != d_in) {
            return Err(Error::InvalidConfig("ragged weight matrix".into()));
        }
        if weights.iter().flatten().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite {
                context: "model weights".into(),
            });
        }
        if let Some(b) = &bias {
            if b.len() != d_out {
                return Err(Error::DimMismatch {
                    expected: d_out,
                    got: b.len(),
                });
            }
        }
        Ok(EncoderModel {
            weights,
            bias,
            d_in,
            d_out,
            meta: ModelMeta::default(),
        })
    }

    pub fn identity(dim: usize) -> Self {
        let weights = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        EncoderModel::new(weights, None).expect("identity is valid")
    }

    /// Uniform random weights in [-scale, scale].
    pub fn random(d_in: usize, d_out: usize, seed: u64, scale: f64) -> Self {
        let mut rng = seeded_rng(seed, &["model-init"]);
        let weights = (0..d_out)
            .map(|_| (0..d_in).map(|_| rng.gen_range(-scale..=scale)).collect())
            .collect();
        let mut model = EncoderModel::new(weights, None).expect("random init is valid");
        model.meta.seed = seed;
        model
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d_in {
            return Err(Error::DimMismatch {
                expected: self.d_in,
                got: x.len(),
            });
        }
        let mut out: Vec<f64> = self
            .weights
            .iter()
            .map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum())
            .collect();
        if let Some(b) = &self.bias {
            for (o, bi) in out.iter_mut().zip(b) {
                *o += bi;
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorTriplet {
    pub a: Vec<f64>,
    pub p: Vec<f64>,
    pub n: Vec<f64>,
}

impl VectorTriplet {
    pub fn new(a: Vec<f64>, p: Vec<f64>, n: Vec<f64>) -> Result<Self> {
        if a.len() != p.len() || a.len() != n.len() {
            return Err(Error::DimMismatch {
                expected: a.len(),
                got: p.len().max(n.len()),
            });
        }
        if [&a, &p, &n].iter().flat_map(|v| v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                context: "vector triplet".into(),
            });
        }
        Ok(VectorTriplet { a, p, n })
    }
}

/// Resolves triplet side references into base vectors keyed `pair_id#side`.
pub fn materialize_triplets(
    triplets: &[Triplet],
    embeddings: &EmbeddingSet,
) -> Result<Vec<VectorTriplet>> {
    triplets
        .iter()
        .map(|t| {
            VectorTriplet::new(
                embeddings.get(&t.anchor.key())?.to_vec(),
                embeddings.get(&t.positive.key())?.to_vec(),
                embeddings.get(&t.negative.key())?.to_vec(),
            )
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub margin: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub val_fraction: f64,
    pub patience_epochs: usize,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            margin: 0.1,
            learning_rate: 1e-4,
            batch_size: 512,
            val_fraction: 0.1,
            patience_epochs: 1,
            max_epochs: 50,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.margin <= 0.0 {
            return Err(Error::InvalidConfig("margin must be > 0".into()));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::InvalidConfig("val_fraction must be in (0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Gradient with the same shape as the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Vec<f64>>,
    pub bias: Option<Vec<f64>>,
}

impl Gradient {
    fn zeros_like(model: &EncoderModel) -> Self {
        Gradient {
            weights: vec![vec![0.0; model.d_in]; model.d_out],
            bias: model.bias.as_ref().map(|b| vec![0.0; b.len()]),
        }
    }

    fn add(&mut self, other: &Gradient) {
        for (row, orow) in self.weights.iter_mut().zip(&other.weights) {
            for (w, o) in row.iter_mut().zip(orow) {
                *w += o;
            }
        }
    }
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Active hinge margin of one triplet under the model, before clamping.
fn active_margin(model: &EncoderModel, t: &VectorTriplet, margin: f64) -> Result<f64> {
    let wu = model.encode(&t.a)?.iter().zip(model.encode(&t.p)?).map(|(x, y)| x - y).collect::<Vec<_>>();
    let wv = model.encode(&t.a)?.iter().zip(model.encode(&t.n)?).map(|(x, y)| x - y).collect::<Vec<_>>();
    Ok(sq_norm(&wu) - sq_norm(&wv) + margin)
}

const LOSS_CHUNK: usize = 256;

fn loss_grad_chunk(
    model: &EncoderModel,
    chunk: &[VectorTriplet],
    margin: f64,
) -> Result<(f64, Gradient)> {
    let mut loss = 0.0;
    let mut grad = Gradient::zeros_like(model);
    for t in chunk {
        if t.a.len() != model.d_in {
            return Err(Error::DimMismatch {
                expected: model.d_in,
                got: t.a.len(),
            });
        }
        let u = diff(&t.a, &t.p);
        let v = diff(&t.a, &t.n);
        let wu = model.encode(&u)?;
        let wv = model.encode(&v)?;
        // Bias cancels in the two differences; subtract it back out when set.
        let (wu, wv) = match &model.bias {
            Some(b) => (
                wu.iter().zip(b).map(|(x, bi)| x - bi).collect::<Vec<_>>(),
                wv.iter().zip(b).map(|(x, bi)| x - bi).collect::<Vec<_>>(),
            ),
            None => (wu, wv),
        };
        let active = sq_norm(&wu) - sq_norm(&wv) + margin;
        if !active.is_finite() {
            return Err(Error::NonFinite {
                context: "triplet loss term".into(),
            });
        }
        // Subgradient 0 at the hinge boundary keeps loss-0 points stationary.
        if active > 0.0 {
            loss += active;
            for r in 0..model.d_out {
                let row = &mut grad.weights[r];
                for c in 0..model.d_in {
                    row[c] += 2.0 * (wu[r] * u[c] - wv[r] * v[c]);
                }
            }
        }
    }
    Ok((loss, grad))
}

/// Summed hinge loss and exact subgradient over a batch.
///
/// Accumulation is chunked and folded in chunk order, so the parallel and
/// sequential paths produce bit-identical sums.
pub fn triplet_loss(
    model: &EncoderModel,
    batch: &[VectorTriplet],
    margin: f64,
) -> Result<(f64, Gradient)> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let chunks: Vec<&[VectorTriplet]> = batch.chunks(LOSS_CHUNK).collect();
    let partials = map_ordered(&chunks, |chunk| loss_grad_chunk(model, chunk, margin));
    let mut loss = 0.0;
    let mut grad = Gradient::zeros_like(model);
    for partial in partials {
        let (l, g) = partial?;
        loss += l;
        grad.add(&g);
    }
    Ok((loss, grad))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Plain mini-batch gradient descent with best-snapshot early stopping.
pub fn train(
    triplets: &[VectorTriplet],
    config: &TrainConfig,
    init: &EncoderModel,
) -> Result<(EncoderModel, Vec<EpochRecord>)> {
    config.validate()?;
    if triplets.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 triplets, got {}",
            triplets.len()
        )));
    }
    let mut rng = seeded_rng(config.seed, &["train"]);
    let mut order: Vec<usize> = (0..triplets.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((triplets.len() as f64 * config.val_fraction).round() as usize)
        .clamp(1, triplets.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let val: Vec<VectorTriplet> = val_idx.iter().map(|&i| triplets[i].clone()).collect();
    let mut train_set: Vec<VectorTriplet> =
        train_idx.iter().map(|&i| triplets[i].clone()).collect();

    let mut model = init.clone();
    model.meta = ModelMeta {
        seed: config.seed,
        margin: config.margin,
        learning_rate: config.learning_rate,
        batch_size: config.batch_size,
        epochs_run: 0,
    };
    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut epochs_since_improvement = 0usize;
    let mut history = Vec::new();

    for epoch in 0..config.max_epochs {
        train_set.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in train_set.chunks(config.batch_size) {
            let (loss, grad) = triplet_loss(&model, batch, config.margin)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            epoch_loss += loss;
            for (row, grad_row) in model.weights.iter_mut().zip(&grad.weights) {
                for (w, g) in row.iter_mut().zip(grad_row) {
                    *w -= config.learning_rate * g;
                }
            }
        }
        let (val_total, _) = triplet_loss(&model, &val, config.margin)?;
        let val_loss = val_total / val.len() as f64;
        if !val_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        history.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / train_set.len() as f64,
            val_loss,
        });
        model.meta.epochs_run = epoch + 1;
        if val_loss < best_val {
            best_val = val_loss;
            best = model.clone();
            epochs_since_improvement = 0;
        } else {
            epochs_since_improvement += 1;
            if epochs_since_improvement >= config.patience_epochs {
                break;
            }
        }
    }
    Ok((best, history))
}

/// Compares the analytic gradient against central finite differences.
///
/// Triplets whose active margin sits within `10 * epsilon` of the hinge
/// boundary are skipped (the subgradient is not comparable there); the
/// number skipped is returned alongside the max relative error.
pub fn grad_check(
    model: &EncoderModel,
    batch: &[VectorTriplet],
    epsilon: f64,
) -> Result<(f64, usize)> {
    if epsilon <= 0.0 {
        return Err(Error::InvalidConfig("epsilon must be > 0".into()));
    }
    let mut kept = Vec::new();
    let mut skipped = 0usize;
    for t in batch {
        if active_margin(model, t, model.meta.margin)?.abs() <= 10.0 * epsilon {
            skipped += 1;
        } else {
            kept.push(t.clone());
        }
    }
    if kept.is_empty() {
        return Err(Error::InvalidConfig(
            "every triplet in the batch sits on the hinge boundary".into(),
        ));
    }
    let margin = model.meta.margin;
    let (_, analytic) = triplet_loss(model, &kept, margin)?;
    let mut max_rel = 0.0f64;
    let mut probe = model.clone();
    for r in 0..model.d_out {
        for c in 0..model.d_in {
            let orig = probe.weights[r][c];
            probe.weights[r][c] = orig + epsilon;
            let (plus, _) = triplet_loss(&probe, &kept, margin)?;
            probe.weights[r][c] = orig - epsilon;
            let (minus, _) = triplet_loss(&probe, &kept, margin)?;
            probe.weights[r][c] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = analytic.weights[r][c];
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            max_rel = max_rel.max((a - numeric).abs() / denom);
        }
    }
    Ok((max_rel, skipped))
}

// ---------------------------------------------------------------------------
// Checkpoint format: JSON header line, then one JSON array per weight row
// (row-major), then the bias row when present.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    format: String,
    version: u32,
    d_in: usize,
    d_out: usize,
    has_bias: bool,
    meta: ModelMeta,
}

pub fn save_model(model: &EncoderModel, path: impl AsRef<Path>) -> Result<()> {
    let header = CheckpointHeader {
        format: "stylekit-encoder".into(),
        version: 1,
        d_in: model.d_in,
        d_out: model.d_out,
        has_bias: model.bias.is_some(),
        meta: model.meta.clone(),
    };
    let mut buf = Vec::new();
    serde_json::to_writer(&mut buf, &header).map_err(|e| Error::Other(e.to_string()))?;
    buf.push(b'\n');
    for row in &model.weights {
        serde_json::to_writer(&mut buf, row).map_err(|e| Error::Other(e.to_string()))?;
        buf.push(b'\n');
    }
    if let Some(bias) = &model.bias {
        serde_json::to_writer(&mut buf, bias).map_err(|e| Error::Other(e.to_string()))?;
        buf.push(b'\n');
    }
    crate::data::write_atomic(path.as_ref(), &buf)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<EncoderModel> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let mut lines = BufReader::new(file).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| Error::InvalidRecord("empty checkpoint".into()))
        .and_then(|l| l.map_err(|e| Error::io(path.display().to_string(), e)))?;
    let header: CheckpointHeader = serde_json::from_str(&header_line).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        line: 1,
        message: e.to_string(),
    })?;
    if header.format != "stylekit-encoder" || header.version != 1 {
        return Err(Error::InvalidRecord(format!(
            "unsupported checkpoint format {}/{}",
            header.format, header.version
        )));
    }
    let mut rows = Vec::with_capacity(header.d_out);
    let expect = header.d_out + usize::from(header.has_bias);
    for (i, line) in lines.enumerate().take(expect) {
        let line = line.map_err(|e| Error::io(path.display().to_string(), e))?;
        let row: Vec<f64> = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 2,
            message: e.to_string(),
        })?;
        rows.push(row);
    }
    if rows.len() != expect {
        return Err(Error::InvalidRecord(format!(
            "checkpoint truncated: expected {expect} rows, got {}",
            rows.len()
        )));
    }
    let bias = if header.has_bias { rows.pop() } else { None };
    let mut model = EncoderModel::new(rows, bias)?;
    if model.d_in != header.d_in || model.d_out != header.d_out {
        return Err(Error::InvalidRecord("checkpoint header/body dim mismatch".into()));
    }
    model.meta = header.meta;
    Ok(model)
}

/// Writes the training history as JSONL next to the model.
pub fn save_history(history: &[EpochRecord], path: impl AsRef<Path>) -> Result<()> {
    crate::data::write_jsonl(path, history)
}
