//! Post-hoc modality probe: how well can a fresh classifier tell event
//! embeddings from color embeddings?

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::neural::net::COLOR_CHANNELS;
use crate::neural::{
    AdamConfig, Graph, Group, Modality, Model, Optimizer, OptimizerConfig, ParameterSet, Tensor,
};
use crate::par::Exec;

use super::augment::{augment_with, Augmentation};
use super::data::{LabeledImage, Pool};
use super::TrainError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub hidden: usize,
    pub steps: usize,
    pub lr: f64,
    /// Share of each modality used for fitting; the rest is held out.
    pub train_fraction: f64,
    /// Embed all 18 rotation / flip variants of every image.
    pub augment: bool,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            hidden: 32,
            steps: 400,
            lr: 0.01,
            train_fraction: 0.5,
            augment: true,
        }
    }
}

fn embed_all(
    model: &Model,
    images: &[LabeledImage],
    channels: usize,
    size: usize,
    modality: Modality,
    augment: bool,
    exec: Exec,
) -> Result<Vec<Vec<f64>>, TrainError> {
    let augs: Vec<Augmentation> = if augment {
        Augmentation::all().collect()
    } else {
        vec![Augmentation::IDENTITY]
    };
    let d = model.spec().embed_dim;
    let mut out = Vec::new();
    for img in images {
        let data: Vec<f64> = augs
            .iter()
            .flat_map(|a| augment_with(&img.data, channels, size, *a))
            .collect();
        let t = Tensor::new(vec![augs.len(), channels, size, size], data);
        let f = model.forward_generator(&t, modality, exec)?;
        out.extend(f.data().chunks(d).map(<[f64]>::to_vec));
    }
    Ok(out)
}

fn uniform(rng: &mut impl Rng, shape: Vec<usize>, fan_in: usize) -> Tensor {
    let b = 1.0 / (fan_in as f64).sqrt();
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.gen_range(-b..b)).collect())
}

/// Held-out accuracy of a two-layer probe trained to separate event from
/// color embeddings. Both modalities are subsampled to the same count.
pub fn probe_modality_accuracy(
    model: &Model,
    pool: &Pool,
    cfg: &ProbeConfig,
    seed: u64,
    exec: Exec,
) -> Result<f64, TrainError> {
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) || cfg.hidden == 0 {
        return Err(TrainError::InvalidConfig(format!("bad probe config {cfg:?}")));
    }
    let s = pool.size;
    let mut ev = embed_all(model, &pool.events, pool.event_channels, s, Modality::Event, cfg.augment, exec)?;
    let mut co = embed_all(model, &pool.colors, COLOR_CHANNELS, s, Modality::Color, cfg.augment, exec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ev.shuffle(&mut rng);
    co.shuffle(&mut rng);
    let m = ev.len().min(co.len());
    let n_train = ((m as f64 * cfg.train_fraction).round() as usize).clamp(1, m.saturating_sub(1));
    if m < 2 {
        return Err(TrainError::InsufficientInstances(m));
    }
    let d = model.spec().embed_dim;
    let split = |v: &[Vec<f64>]| (v[..n_train].to_vec(), v[n_train..m].to_vec());
    let (ev_tr, ev_te) = split(&ev);
    let (co_tr, co_te) = split(&co);

    // Standardize with training statistics.
    let train: Vec<&Vec<f64>> = ev_tr.iter().chain(&co_tr).collect();
    let nt = train.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| train.iter().map(|r| r[j]).sum::<f64>() / nt).collect();
    let std: Vec<f64> = (0..d)
        .map(|j| {
            let v = train.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / nt;
            v.sqrt().max(1e-12)
        })
        .collect();
    let to_tensor = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        let rows: Vec<f64> = a
            .iter()
            .chain(b)
            .flat_map(|r| r.iter().enumerate().map(|(j, v)| (v - mean[j]) / std[j]))
            .collect();
        let targets: Vec<f64> = a.iter().map(|_| 1.0).chain(b.iter().map(|_| 0.0)).collect();
        (Tensor::new(vec![targets.len(), d], rows), targets)
    };
    let (x_tr, t_tr) = to_tensor(&ev_tr, &co_tr);
    let (x_te, t_te) = to_tensor(&ev_te, &co_te);

    let mut params = ParameterSet::new();
    let h = cfg.hidden;
    params.push("w1", Group::Discriminator, uniform(&mut rng, vec![h, d], d));
    params.push("b1", Group::Discriminator, Tensor::zeros(vec![h]));
    params.push("w2", Group::Discriminator, uniform(&mut rng, vec![1, h], h));
    params.push("b2", Group::Discriminator, Tensor::zeros(vec![1]));
    let adam = AdamConfig {
        lr: cfg.lr,
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };
    let mut opt = Optimizer::new(OptimizerConfig::Adam(adam), &params);
    let logits = |g: &mut Graph, params: &ParameterSet, x: &Tensor, trainable: bool| {
        let b = g.bind_with(params, |_| trainable);
        let x = g.input(x.clone());
        let z = g.linear(x, b.var(0), b.var(1));
        let z = g.relu(z);
        let z = g.linear(z, b.var(2), b.var(3));
        let n = g.value(z).shape()[0];
        (g.reshape(z, vec![n]), b)
    };
    for _ in 0..cfg.steps {
        let mut g = Graph::with_exec(Exec::Seq);
        let (z, b) = logits(&mut g, &params, &x_tr, true);
        let l = g.loss_bce_logits(z, &t_tr)?;
        let grads = g.param_grads(l, &b, &params);
        opt.step(&mut params, &grads, |_| true);
    }
    let mut g = Graph::with_exec(Exec::Seq);
    let (z, _) = logits(&mut g, &params, &x_te, false);
    let correct = g
        .value(z)
        .data()
        .iter()
        .zip(&t_te)
        .filter(|(z, t)| (**z > 0.0) == (**t == 1.0))
        .count();
    Ok(correct as f64 / t_te.len() as f64)
}
