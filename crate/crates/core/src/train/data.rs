//! Encoded training data and pair sampling.

use log::{debug, warn};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::encode::encode_stream;
use crate::ingest::imageio::{color_tensor, read_color};
use crate::ingest::{read_event_file, DatasetManifest};
use crate::neural::net::COLOR_CHANNELS;
use crate::neural::Tensor;
use crate::par::Exec;

use super::augment::{augment_with, Augmentation};
use super::{TrainConfig, TrainError};

/// Channel-major image tensor with its instance label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub id: String,
    pub label: usize,
    pub data: Vec<f64>,
}

/// Every encoded event image and color image of a dataset.
#[derive(Debug, Clone)]
pub struct Pool {
    pub instance_ids: Vec<String>,
    pub events: Vec<LabeledImage>,
    pub colors: Vec<LabeledImage>,
    pub event_channels: usize,
    pub size: usize,
    colors_by_label: Vec<Vec<usize>>,
}

/// One training batch: event image `i` is paired with color image `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub events: Tensor,
    pub colors: Tensor,
    pub labels_e: Vec<usize>,
    pub labels_r: Vec<usize>,
    /// 1.0 for same-instance pairs, 0.0 otherwise.
    pub same: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.same.len()
    }

    pub fn is_empty(&self) -> bool {
        self.same.is_empty()
    }

    pub fn num_positive(&self) -> usize {
        self.same.iter().filter(|s| **s == 1.0).count()
    }
}

impl Pool {
    pub fn new(
        instance_ids: Vec<String>,
        events: Vec<LabeledImage>,
        colors: Vec<LabeledImage>,
        event_channels: usize,
        size: usize,
    ) -> Result<Self, TrainError> {
        let k = instance_ids.len();
        let plane = size * size;
        for e in &events {
            if e.label >= k || e.data.len() != event_channels * plane {
                return Err(TrainError::InvalidConfig(format!(
                    "event image `{}` does not match the pool layout",
                    e.id
                )));
            }
        }
        let mut colors_by_label = vec![Vec::new(); k];
        for (i, c) in colors.iter().enumerate() {
            if c.label >= k || c.data.len() != COLOR_CHANNELS * plane {
                return Err(TrainError::InvalidConfig(format!(
                    "color image `{}` does not match the pool layout",
                    c.id
                )));
            }
            colors_by_label[c.label].push(i);
        }
        Ok(Self {
            instance_ids,
            events,
            colors,
            event_channels,
            size,
            colors_by_label,
        })
    }

    /// Reads and encodes a dataset. Each complete bin of each stream becomes
    /// one event image.
    pub fn from_manifest(
        manifest: &DatasetManifest,
        cfg: &TrainConfig,
        exec: Exec,
    ) -> Result<Self, TrainError> {
        let size = cfg.encoder.output_size;
        let mut events = Vec::new();
        let mut colors = Vec::new();
        let ids: Vec<String> = manifest.instances.iter().map(|i| i.id.clone()).collect();
        for (label, inst) in manifest.instances.iter().enumerate() {
            let stream = read_event_file(&manifest.resolve(&inst.events))?;
            let imgs = encode_stream(&stream, cfg.bins, &cfg.encoder, cfg.temporal_channels(), exec)?;
            if imgs.is_empty() {
                warn!("instance `{}` has no complete bin; no event images", inst.id);
            }
            debug!("instance `{}`: {} event images", inst.id, imgs.len());
            for (b, img) in imgs.into_iter().enumerate() {
                events.push(LabeledImage {
                    id: format!("{}#bin{b}", inst.id),
                    label,
                    data: img.data,
                });
            }
            for rel in &inst.images {
                let rgb = read_color(&manifest.resolve(rel))?;
                colors.push(LabeledImage {
                    id: rel.clone(),
                    label,
                    data: color_tensor(&rgb, size),
                });
            }
        }
        Self::new(ids, events, colors, cfg.bins.sub_bins, size)
    }

    pub fn num_classes(&self) -> usize {
        self.instance_ids.len()
    }

    /// Instances that have at least one event image and one color image.
    pub fn usable_instances(&self) -> usize {
        let mut has_event = vec![false; self.num_classes()];
        for e in &self.events {
            has_event[e.label] = true;
        }
        (0..self.num_classes())
            .filter(|&l| has_event[l] && !self.colors_by_label[l].is_empty())
            .count()
    }

    fn check_usable(&self) -> Result<(), TrainError> {
        let n = self.usable_instances();
        let with_colors = self.colors_by_label.iter().filter(|c| !c.is_empty()).count();
        if n < 2 || with_colors < 2 {
            return Err(TrainError::InsufficientInstances(n));
        }
        Ok(())
    }

    /// Pairs the given event images with color images: the first
    /// `round(pos_ratio · n)` pairs share the instance, the rest do not.
    pub fn pair_batch(
        &self,
        event_indices: &[usize],
        pos_ratio: f64,
        augment: bool,
        rng: &mut impl Rng,
    ) -> Result<Batch, TrainError> {
        self.check_usable()?;
        let n = event_indices.len();
        let n_pos = (pos_ratio * n as f64).round() as usize;
        let plane = self.size * self.size;
        let mut ev = Vec::with_capacity(n * self.event_channels * plane);
        let mut co = Vec::with_capacity(n * COLOR_CHANNELS * plane);
        let (mut labels_e, mut labels_r, mut same) = (Vec::new(), Vec::new(), Vec::new());
        let candidates: Vec<usize> = (0..self.num_classes())
            .filter(|&l| !self.colors_by_label[l].is_empty())
            .collect();
        for (j, &ei) in event_indices.iter().enumerate() {
            let e = &self.events[ei];
            let positive = j < n_pos && !self.colors_by_label[e.label].is_empty();
            let label_r = if positive {
                e.label
            } else {
                let others: Vec<usize> =
                    candidates.iter().copied().filter(|&l| l != e.label).collect();
                *others.choose(rng).expect("at least two labels have color images")
            };
            let ci = *self.colors_by_label[label_r].choose(rng).expect("non-empty");
            let c = &self.colors[ci];
            if augment {
                ev.extend(augment_with(&e.data, self.event_channels, self.size, Augmentation::random(rng)));
                co.extend(augment_with(&c.data, COLOR_CHANNELS, self.size, Augmentation::random(rng)));
            } else {
                ev.extend_from_slice(&e.data);
                co.extend_from_slice(&c.data);
            }
            labels_e.push(e.label);
            labels_r.push(label_r);
            same.push(if positive { 1.0 } else { 0.0 });
        }
        Ok(Batch {
            events: Tensor::new(vec![n, self.event_channels, self.size, self.size], ev),
            colors: Tensor::new(vec![n, COLOR_CHANNELS, self.size, self.size], co),
            labels_e,
            labels_r,
            same,
        })
    }

    /// Shuffled event-image indices split into batches of `n`; a trailing
    /// batch with fewer than two items is dropped.
    pub fn epoch_batches(&self, n: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.events.len()).collect();
        order.shuffle(rng);
        order
            .chunks(n)
            .filter(|c| c.len() >= 2)
            .map(|c| c.to_vec())
            .collect()
    }
}

/// A batch of `n` pairs, exactly `round(pos_ratio · n)` of them positive.
/// Event images are drawn without replacement while possible.
pub fn sample_batch(pool: &Pool, n: usize, pos_ratio: f64, seed: u64) -> Result<Batch, TrainError> {
    pool.check_usable()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = Vec::with_capacity(n);
    while idx.len() < n {
        let mut order: Vec<usize> = (0..pool.events.len()).collect();
        order.shuffle(&mut rng);
        idx.extend(order.into_iter().take(n - idx.len()));
    }
    pool.pair_batch(&idx, pos_ratio, false, &mut rng)
}
