//! Embedding index over color images, Euclidean ranking, and mAP / acc@K.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encode::{encode_stream, EncodeError};
use crate::event::EventStream;
use crate::ingest::imageio::{color_tensor, read_color};
use crate::ingest::{read_event_file, DatasetManifest, IngestError};
use crate::neural::io::{f32_blob, read_f32_blob};
use crate::neural::net::{euclidean, COLOR_CHANNELS};
use crate::neural::{Embedding, Modality, Model, NeuralError, Tensor};
use crate::par::Exec;
use crate::train::TrainConfig;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("stream has no complete bin to query with")]
    EmptyStream,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("query instance `{0}` has no relevant image in the index")]
    UncoveredQueryInstance(String),
    #[error("duplicate image id `{0}`")]
    DuplicateId(String),
    #[error("embedding of `{id}` has length {got}, index dimension is {expected}")]
    DimensionMismatch { id: String, expected: usize, got: usize },
    #[error("malformed index: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

fn io_err(path: &Path, source: std::io::Error) -> RetrievalError {
    RetrievalError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub image_id: String,
    pub instance_id: String,
    pub embedding: Embedding,
}

/// Database of color-image embeddings, searched by linear scan.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    dim: usize,
    entries: Vec<IndexEntry>,
}

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    format: String,
    version: u32,
    d: usize,
    ids: Vec<String>,
    instances: Vec<String>,
}

const INDEX_FORMAT: &str = "evlink-index";

/// `(json, bin)` paths for an index stem; a trailing `.json` / `.bin` is ignored.
pub fn index_paths(path: &Path) -> (PathBuf, PathBuf) {
    crate::train::checkpoint::checkpoint_paths(path)
}

impl EmbeddingIndex {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            entries: Vec::new(),
        }
    }

    /// Adds an entry. Embeddings are stored at `f32` precision.
    pub fn push(
        &mut self,
        image_id: impl Into<String>,
        instance_id: impl Into<String>,
        embedding: Embedding,
    ) -> Result<(), RetrievalError> {
        let image_id = image_id.into();
        if embedding.dim() != self.dim {
            return Err(RetrievalError::DimensionMismatch {
                id: image_id,
                expected: self.dim,
                got: embedding.dim(),
            });
        }
        if self.entries.iter().any(|e| e.image_id == image_id) {
            return Err(RetrievalError::DuplicateId(image_id));
        }
        let embedding = Embedding(embedding.0.iter().map(|v| *v as f32 as f64).collect());
        self.entries.push(IndexEntry {
            image_id,
            instance_id: instance_id.into(),
            embedding,
        });
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    /// Number of entries belonging to `instance_id`.
    pub fn count_instance(&self, instance_id: &str) -> usize {
        self.entries.iter().filter(|e| e.instance_id == instance_id).count()
    }

    pub fn to_parts(&self) -> (String, Vec<u8>) {
        let header = IndexHeader {
            format: INDEX_FORMAT.into(),
            version: 1,
            d: self.dim,
            ids: self.entries.iter().map(|e| e.image_id.clone()).collect(),
            instances: self.entries.iter().map(|e| e.instance_id.clone()).collect(),
        };
        let json = serde_json::to_string_pretty(&header).expect("index header serializes");
        let blob = f32_blob(self.entries.iter().flat_map(|e| e.embedding.0.iter().copied()));
        (json, blob)
    }

    pub fn from_parts(json: &str, blob: &[u8]) -> Result<Self, RetrievalError> {
        let h: IndexHeader =
            serde_json::from_str(json).map_err(|e| RetrievalError::Format(e.to_string()))?;
        if h.format != INDEX_FORMAT || h.version != 1 {
            return Err(RetrievalError::Format(format!("unsupported index {} v{}", h.format, h.version)));
        }
        if h.ids.len() != h.instances.len() {
            return Err(RetrievalError::Format("ids and instance labels differ in length".into()));
        }
        let values = read_f32_blob(blob).map_err(|e| RetrievalError::Format(e.to_string()))?;
        if values.len() != h.ids.len() * h.d {
            return Err(RetrievalError::Format(format!(
                "blob holds {} values, expected {} x {}",
                values.len(),
                h.ids.len(),
                h.d
            )));
        }
        let mut index = Self::new(h.d);
        for (i, (id, inst)) in h.ids.into_iter().zip(h.instances).enumerate() {
            let e = Embedding(values[i * h.d..(i + 1) * h.d].to_vec());
            index.push(id, inst, e)?;
        }
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<(), RetrievalError> {
        let (jp, bp) = index_paths(path);
        let (json, blob) = self.to_parts();
        fs::write(&jp, json).map_err(|e| io_err(&jp, e))?;
        fs::write(&bp, blob).map_err(|e| io_err(&bp, e))
    }

    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let (jp, bp) = index_paths(path);
        let json = fs::read_to_string(&jp).map_err(|e| io_err(&jp, e))?;
        let blob = fs::read(&bp).map_err(|e| io_err(&bp, e))?;
        Self::from_parts(&json, &blob)
    }
}

/// Embeds every color image listed in `manifest` with the color generator.
pub fn build_index(
    manifest: &DatasetManifest,
    model: &Model,
    exec: Exec,
) -> Result<EmbeddingIndex, RetrievalError> {
    let size = model.spec().input_size;
    let mut index = EmbeddingIndex::new(model.spec().embed_dim);
    for inst in &manifest.instances {
        let images = inst
            .images
            .iter()
            .map(|rel| Ok(color_tensor(&read_color(&manifest.resolve(rel))?, size)))
            .collect::<Result<Vec<_>, IngestError>>()?;
        if images.is_empty() {
            continue;
        }
        let n = images.len();
        let t = Tensor::new(vec![n, COLOR_CHANNELS, size, size], images.concat());
        let f = model.forward_generator(&t, Modality::Color, exec)?;
        for (rel, row) in inst.images.iter().zip(f.data().chunks(index.dim())) {
            index.push(rel.clone(), inst.id.clone(), Embedding(row.to_vec()))?;
        }
    }
    Ok(index)
}

/// How a multi-bin stream becomes one query embedding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum QueryMode {
    /// Embedding of the first complete bin.
    #[default]
    FirstBin,
    /// Mean of the embeddings of all complete bins.
    MeanOfBins,
}

/// Embedding of an event stream under the encoder settings the model was trained with.
pub fn embed_stream(
    stream: &EventStream,
    model: &Model,
    cfg: &TrainConfig,
    mode: QueryMode,
    exec: Exec,
) -> Result<Embedding, RetrievalError> {
    let images = encode_stream(stream, cfg.bins, &cfg.encoder, cfg.temporal_channels(), exec)?;
    if images.is_empty() {
        return Err(RetrievalError::EmptyStream);
    }
    let used = match mode {
        QueryMode::FirstBin => &images[..1],
        QueryMode::MeanOfBins => &images[..],
    };
    let (c, s) = (used[0].channels, used[0].width);
    let data: Vec<f64> = used.iter().flat_map(|i| i.data.iter().copied()).collect();
    let f = model.forward_generator(&Tensor::new(vec![used.len(), c, s, s], data), Modality::Event, exec)?;
    let d = model.spec().embed_dim;
    let mut mean = vec![0.0; d];
    for row in f.data().chunks(d) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    let n = used.len() as f64;
    Ok(Embedding(mean.into_iter().map(|v| v / n).collect()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub image_id: String,
    pub instance_id: String,
    pub distance: f64,
}

/// Entries in order of increasing distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub hits: Vec<Hit>,
    /// Set when `k` exceeded the index size and every entry was returned.
    pub k_exceeds_index: bool,
}

impl RankedResult {
    pub fn relevance(&self, instance_id: &str) -> Vec<bool> {
        self.hits.iter().map(|h| h.instance_id == instance_id).collect()
    }
}

/// The `k` nearest entries by Euclidean distance, ties broken by ascending image id.
pub fn rank(index: &EmbeddingIndex, query: &Embedding, k: usize) -> Result<RankedResult, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    if query.dim() != index.dim {
        return Err(RetrievalError::DimensionMismatch {
            id: "query".into(),
            expected: index.dim,
            got: query.dim(),
        });
    }
    let mut scored: Vec<(f64, &IndexEntry)> = index
        .entries
        .iter()
        .map(|e| (euclidean(&query.0, &e.embedding.0), e))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.image_id.cmp(&b.1.image_id)));
    let k_exceeds_index = k > scored.len();
    scored.truncate(k);
    Ok(RankedResult {
        hits: scored
            .into_iter()
            .map(|(distance, e)| Hit {
                image_id: e.image_id.clone(),
                instance_id: e.instance_id.clone(),
                distance,
            })
            .collect(),
        k_exceeds_index,
    })
}

/// Encodes the stream's query bin, embeds it with the event generator and ranks the index.
pub fn query_topk(
    index: &EmbeddingIndex,
    stream: &EventStream,
    model: &Model,
    cfg: &TrainConfig,
    k: usize,
    mode: QueryMode,
    exec: Exec,
) -> Result<RankedResult, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    let q = embed_stream(stream, model, cfg, mode, exec)?;
    rank(index, &q, k)
}

/// `(1 / num_relevant_total) Σ_{relevant ranks r} hits_up_to_r / r`.
pub fn average_precision(relevant: &[bool], num_relevant_total: usize) -> f64 {
    assert!(num_relevant_total >= 1, "average precision needs at least one relevant item");
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, &rel) in relevant.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / num_relevant_total as f64
}

/// Relevant items within the top `k`, divided by `min(k, num_relevant_total)`.
pub fn accuracy_at_k(relevant: &[bool], k: usize, num_relevant_total: usize) -> f64 {
    assert!(k >= 1 && num_relevant_total >= 1);
    let found = relevant.iter().take(k).filter(|r| **r).count();
    found as f64 / k.min(num_relevant_total) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub instance_id: String,
    pub embedding: Embedding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryAp {
    pub query: String,
    pub ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(rename = "mAP")]
    pub map: f64,
    #[serde(rename = "acc@1")]
    pub acc_at_1: f64,
    #[serde(rename = "acc@3")]
    pub acc_at_3: f64,
    pub per_query: Vec<QueryAp>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Ranks the full index for every query.
pub fn evaluate_embeddings(index: &EmbeddingIndex, queries: &[Query], exec: Exec) -> Result<EvalReport, RetrievalError> {
    let mut totals: BTreeMap<&str, usize> = BTreeMap::new();
    for q in queries {
        let r = index.count_instance(&q.instance_id);
        if r == 0 {
            return Err(RetrievalError::UncoveredQueryInstance(q.instance_id.clone()));
        }
        totals.insert(&q.instance_id, r);
    }
    let k = index.len().max(1);
    let scored = exec
        .map(queries, |q| {
            let ranked = rank(index, &q.embedding, k)?;
            let rel = ranked.relevance(&q.instance_id);
            let total = totals[q.instance_id.as_str()];
            Ok((
                average_precision(&rel, total),
                accuracy_at_k(&rel, 1, total),
                accuracy_at_k(&rel, 3, total),
            ))
        })
        .into_iter()
        .collect::<Result<Vec<_>, RetrievalError>>()?;
    let n = scored.len().max(1) as f64;
    let mean = |f: fn(&(f64, f64, f64)) -> f64| scored.iter().map(f).sum::<f64>() / n;
    Ok(EvalReport {
        map: mean(|s| s.0),
        acc_at_1: mean(|s| s.1),
        acc_at_3: mean(|s| s.2),
        per_query: queries
            .iter()
            .zip(&scored)
            .map(|(q, s)| QueryAp {
                query: q.id.clone(),
                ap: s.0,
            })
            .collect(),
    })
}

/// One query per event stream in `manifest`, ranked against `index`.
pub fn evaluate(
    index: &EmbeddingIndex,
    manifest: &DatasetManifest,
    model: &Model,
    cfg: &TrainConfig,
    mode: QueryMode,
    exec: Exec,
) -> Result<EvalReport, RetrievalError> {
    let mut queries = Vec::with_capacity(manifest.instances.len());
    let mut seen = HashSet::new();
    for inst in &manifest.instances {
        if !seen.insert(inst.id.as_str()) {
            continue;
        }
        let stream = read_event_file(&manifest.resolve(&inst.events))?;
        queries.push(Query {
            id: inst.events.clone(),
            instance_id: inst.id.clone(),
            embedding: embed_stream(&stream, model, cfg, mode, exec)?,
        });
    }
    evaluate_embeddings(index, &queries, exec)
}
