use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::neural::{Model, NeuralError};
use crate::par::Exec;

use super::checkpoint::Checkpoint;
use super::data::Pool;
use super::step::{StepReport, Trainer};
use super::{TrainConfig, TrainError};

/// Mean losses over one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub steps: usize,
    pub l_id: f64,
    pub l_ct: f64,
    pub l_dis: f64,
    pub total: f64,
    pub l_dis_before: Option<f64>,
}

impl EpochMetrics {
    fn from_reports(epoch: usize, reports: &[StepReport]) -> Self {
        let n = reports.len().max(1) as f64;
        let mean = |f: fn(&StepReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let before: Vec<f64> = reports.iter().filter_map(|r| r.l_dis_before).collect();
        Self {
            epoch,
            steps: reports.len(),
            l_id: mean(|r| r.l_id),
            l_ct: mean(|r| r.l_ct),
            l_dis: mean(|r| r.l_dis),
            total: mean(|r| r.total),
            l_dis_before: (!before.is_empty())
                .then(|| before.iter().sum::<f64>() / before.len() as f64),
        }
    }
}

/// Trains a freshly initialized model for `cfg.max_epochs` epochs.
pub fn fit(
    pool: &Pool,
    cfg: &TrainConfig,
    exec: Exec,
    on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Checkpoint, TrainError> {
    cfg.check()?;
    let model = Model::init(cfg.network_spec(pool.num_classes()), cfg.seed)?;
    fit_from(model, pool, cfg, exec, on_epoch)
}

/// Trains `model` for `cfg.max_epochs` epochs. Batching and augmentation
/// are driven by a generator seeded from `cfg.seed`.
pub fn fit_from(
    model: Model,
    pool: &Pool,
    cfg: &TrainConfig,
    exec: Exec,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<Checkpoint, TrainError> {
    cfg.check()?;
    if pool.usable_instances() < 2 {
        return Err(TrainError::InsufficientInstances(pool.usable_instances()));
    }
    if model.spec().num_classes != pool.num_classes() {
        return Err(TrainError::InvalidConfig(format!(
            "model has {} classes, data has {} instances",
            model.spec().num_classes,
            pool.num_classes()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut trainer = Trainer::new(model, cfg.clone(), exec);
    let mut history = Vec::new();
    let snapshot = |t: &Trainer, epoch: usize, history: &Vec<EpochMetrics>| {
        Checkpoint::new(t.model().clone(), cfg.clone(), epoch, history.clone(), pool.instance_ids.clone())
    };
    let mut last_good = snapshot(&trainer, 0, &history);
    for epoch in 1..=cfg.max_epochs {
        let batches = pool.epoch_batches(cfg.batch_size, &mut rng);
        let mut reports = Vec::with_capacity(batches.len());
        for (step, idx) in batches.iter().enumerate() {
            let batch = pool.pair_batch(idx, cfg.pos_ratio, cfg.augment, &mut rng)?;
            let diverged = |reason: String, last_good: Checkpoint| TrainError::Divergence {
                epoch,
                step,
                reason,
                last_good: Some(Box::new(last_good)),
            };
            let r = match trainer.step(&batch) {
                Ok(r) => r,
                Err(TrainError::Neural(NeuralError::Domain(m))) => return Err(diverged(m, last_good)),
                Err(e) => return Err(e),
            };
            if !r.is_finite() || !trainer.model().params().iter().all(|p| p.value.is_finite()) {
                return Err(diverged(format!("non-finite loss {r:?}"), last_good));
            }
            debug!("epoch {epoch} step {step}: {r:?}");
            reports.push(r);
        }
        let m = EpochMetrics::from_reports(epoch, &reports);
        info!(
            "epoch {epoch}: L_id {:.4} L_ct {:.4} L_dis {:.4} total {:.4}",
            m.l_id, m.l_ct, m.l_dis, m.total
        );
        on_epoch(&m);
        history.push(m);
        last_good = snapshot(&trainer, epoch, &history);
    }
    Ok(last_good)
}
