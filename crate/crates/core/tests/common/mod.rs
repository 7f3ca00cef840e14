//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use evlink::event::{Event, EventStream, Polarity, SensorGeometry};
use evlink::ingest::{generate_toy_dataset, DatasetManifest, ToyConfig};
use evlink::neural::{Graph, Modality, Model, NetworkSpec, Tensor, Var};
use evlink::par::Exec;
use evlink::retrieval::{build_index, evaluate, EmbeddingIndex, EvalReport, QueryMode};
use evlink::train::{fit, Checkpoint, Pool, TrainConfig};

// ---------------------------------------------------------------- streams

/// Sorted random stream with up to `max_events` events in `[0, t_max)`.
pub fn random_stream(rng: &mut ChaCha8Rng, w: u32, h: u32, max_events: usize, t_max: u64) -> EventStream {
    let n = rng.gen_range(0..=max_events);
    let mut events: Vec<Event> = (0..n)
        .map(|_| {
            let p = if rng.gen_bool(0.5) { Polarity::On } else { Polarity::Off };
            Event::new(rng.gen_range(0..w), rng.gen_range(0..h), rng.gen_range(0..t_max), p)
        })
        .collect();
    events.sort_by_key(|e| e.t);
    EventStream::new(SensorGeometry::new(w, h).unwrap(), events).unwrap()
}

// ---------------------------------------------------------------- encoders

/// Per-pixel counts over `[t0, t1)` by a single pass with a hash map.
pub fn oracle_counts(events: &[Event], w: u32, h: u32, t0: u64, t1: u64) -> Vec<u32> {
    let mut m: HashMap<(u32, u32), u32> = HashMap::new();
    for e in events.iter().filter(|e| e.t >= t0 && e.t < t1) {
        *m.entry((e.x, e.y)).or_default() += 1;
    }
    let mut out = vec![0; (w * h) as usize];
    for ((x, y), n) in m {
        out[(y * w + x) as usize] = n;
    }
    out
}

/// `max` over the window's events of `exp((t - t_ref) / tau)`, 0 where none.
pub fn oracle_time_surface(events: &[Event], w: u32, h: u32, t0: u64, t1: u64, tau: f64) -> Vec<f64> {
    let mut out = vec![0.0f64; (w * h) as usize];
    for e in events.iter().filter(|e| e.t >= t0 && e.t < t1) {
        let v = ((e.t as f64 - t1 as f64) / tau).exp();
        let slot = &mut out[(e.y * w + e.x) as usize];
        *slot = slot.max(v);
    }
    out
}

/// `1 - 2 / (e^n + 1)` written as `tanh(n / 2)`.
pub fn oracle_frequency(n: u32) -> f64 {
    (n as f64 / 2.0).tanh()
}

// ---------------------------------------------------------------- simulator

/// Bilinear sample with clamped borders.
fn bilinear(img: &[f64], w: usize, h: usize, x: f64, y: f64) -> f64 {
    let xc = x.clamp(0.0, (w - 1) as f64);
    let yc = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (xc.floor() as usize, yc.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (xc - x0 as f64, yc - y0 as f64);
    let p = |x: usize, y: usize| img[y * w + x];
    let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
    let bot = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
    top * (1.0 - fy) + bot * fy
}

/// Per-pixel (ON, OFF) counts from the threshold-crossing definition,
/// evaluated at every sample of `offsets`.
pub fn oracle_sim_counts(
    img: &[f64],
    w: usize,
    h: usize,
    offsets: &[(f64, f64)],
    c: f64,
    eps: f64,
) -> Vec<(u32, u32)> {
    let logs: Vec<Vec<f64>> = offsets
        .iter()
        .map(|&(dx, dy)| {
            (0..w * h)
                .map(|i| {
                    let (x, y) = ((i % w) as f64, (i / w) as f64);
                    bilinear(img, w, h, x - dx, y - dy).max(eps).ln()
                })
                .collect()
        })
        .collect();
    (0..w * h)
        .map(|i| {
            let mut reference = logs[0][i];
            let (mut on, mut off) = (0u32, 0u32);
            for frame in &logs[1..] {
                let diff = frame[i] - reference;
                // number of whole thresholds crossed, counted one at a time
                let mut n = 0u32;
                while diff.abs() >= c * ((n + 1) as f64 - 1e-9) {
                    n += 1;
                }
                if diff > 0.0 {
                    on += n;
                } else {
                    off += n;
                }
                reference += diff.signum() * n as f64 * c;
            }
            (on, off)
        })
        .collect()
}

// ---------------------------------------------------------------- metrics

/// AP of a ranked relevance list, straight from precision at each hit.
pub fn oracle_ap(relevant: &[bool], total: usize) -> f64 {
    let mut precisions = Vec::new();
    for r in 0..relevant.len() {
        if relevant[r] {
            let hits = relevant[..=r].iter().filter(|v| **v).count();
            precisions.push(hits as f64 / (r + 1) as f64);
        }
    }
    precisions.iter().sum::<f64>() / total as f64
}

/// Expected AP of `relevant` items placed uniformly at random among `n`.
pub fn permutation_ap(n: usize, relevant: usize, trials: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut list: Vec<bool> = (0..n).map(|i| i < relevant).collect();
    let mut sum = 0.0;
    for _ in 0..trials {
        list.shuffle(&mut rng);
        sum += oracle_ap(&list, relevant);
    }
    sum / trials as f64
}

// ---------------------------------------------------------------- gradients

pub const GRAD_H: f64 = 1e-6;

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Spec and inputs of the tiny gradient-check network.
pub fn tiny_network() -> (NetworkSpec, Tensor, Tensor) {
    let spec = NetworkSpec {
        event_channels: 3,
        input_size: 8,
        conv_channels: [2, 3, 4],
        embed_dim: 8,
        num_classes: 3,
        disc_hidden: 6,
        weight_sharing: true,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut img = || Tensor::new(vec![2, 3, 8, 8], (0..2 * 3 * 64).map(|_| rng.gen::<f64>()).collect());
    let (xe, xr) = (img(), img());
    (spec, xe, xr)
}

/// Which scalar to build on the tiny network.
#[derive(Debug, Clone, Copy)]
pub enum LossKind {
    Discriminator,
    DiscriminatorLogits,
    Identity,
    Contrastive,
    Total,
}

pub fn build_loss(model: &Model, g: &mut Graph, trainable: bool, xe: &Tensor, xr: &Tensor, kind: LossKind) -> (Var, evlink::neural::Bound) {
    let bound = g.bind_with(model.params(), |_| trainable);
    let (a, b) = (g.input(xe.clone()), g.input(xr.clone()));
    let fe = model.generator(g, &bound, a, Modality::Event);
    let fr = model.generator(g, &bound, b, Modality::Color);
    let (labels_e, labels_r, same) = ([0usize, 2], [0usize, 1], [1.0, 0.0]);
    let l = match kind {
        LossKind::Discriminator => {
            let (de, dr) = (model.discriminator(g, &bound, fe), model.discriminator(g, &bound, fr));
            g.loss_discriminator(de, dr).unwrap()
        }
        LossKind::DiscriminatorLogits => {
            let (ze, zr) = (
                model.discriminator_logits(g, &bound, fe),
                model.discriminator_logits(g, &bound, fr),
            );
            g.loss_discriminator_logits(ze, zr).unwrap()
        }
        LossKind::Identity => {
            let (pe, pr) = (model.classifier(g, &bound, fe), model.classifier(g, &bound, fr));
            g.loss_identity(pe, pr, &labels_e, &labels_r).unwrap()
        }
        LossKind::Contrastive => g.loss_contrastive(fe, fr, &same, 1.0).unwrap(),
        LossKind::Total => {
            let (pe, pr) = (model.classifier(g, &bound, fe), model.classifier(g, &bound, fr));
            let l_id = g.loss_identity(pe, pr, &labels_e, &labels_r).unwrap();
            let l_ct = g.loss_contrastive(fe, fr, &same, 1.0).unwrap();
            let (de, dr) = (model.discriminator(g, &bound, fe), model.discriminator(g, &bound, fr));
            let l_dis = g.loss_discriminator(de, dr).unwrap();
            g.weighted_sum(&[(1.0, l_id), (0.5, l_ct), (-0.3, l_dis)])
        }
    };
    (l, bound)
}

/// Largest relative error between analytic and central-difference gradients
/// over every parameter value, and how many values were checked.
pub fn grad_check(kind: LossKind) -> (f64, usize) {
    let (spec, xe, xr) = tiny_network();
    let model = Model::init(spec, 3).unwrap();
    let mut g = Graph::with_exec(Exec::Seq);
    let (l, bound) = build_loss(&model, &mut g, true, &xe, &xr, kind);
    let grads = g.param_grads(l, &bound, model.params());
    let value = |m: &Model| {
        let mut g = Graph::with_exec(Exec::Seq);
        let (l, _) = build_loss(m, &mut g, false, &xe, &xr, kind);
        g.value(l).item()
    };
    let mut worst = 0.0f64;
    let mut count = 0;
    for i in 0..model.params().len() {
        for j in 0..model.params().get(i).value.len() {
            let mut plus = model.clone();
            plus.params_mut().get_mut(i).value.data_mut()[j] += GRAD_H;
            let mut minus = model.clone();
            minus.params_mut().get_mut(i).value.data_mut()[j] -= GRAD_H;
            let numeric = (value(&plus) - value(&minus)) / (2.0 * GRAD_H);
            let analytic = grads.get(i).data()[j];
            worst = worst.max(rel_err(analytic, numeric));
            count += 1;
        }
    }
    (worst, count)
}

// ---------------------------------------------------------------- pipeline

pub struct ToyRun {
    pub manifest: DatasetManifest,
    pub pool: Pool,
    pub checkpoint: Checkpoint,
    pub index: EmbeddingIndex,
    pub report: EvalReport,
}

/// Epoch count giving the toy pipeline its training budget.
pub const TOY_EPOCHS: usize = 1000;

/// gen-dataset (10 × 3, seed 7) → fit → index → evaluate.
pub fn toy_pipeline(dir: &Path, cfg: &TrainConfig) -> ToyRun {
    let exec = Exec::default();
    let manifest = generate_toy_dataset(&ToyConfig::new(10, 3, 7), dir, exec).unwrap();
    let pool = Pool::from_manifest(&manifest, cfg, exec).unwrap();
    let checkpoint = fit(&pool, cfg, exec, |_| {}).unwrap();
    let index = build_index(&manifest, &checkpoint.model, exec).unwrap();
    let report = evaluate(&index, &manifest, &checkpoint.model, &checkpoint.config, QueryMode::FirstBin, exec).unwrap();
    ToyRun {
        manifest,
        pool,
        checkpoint,
        index,
        report,
    }
}
