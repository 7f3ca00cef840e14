//! One alternating update: the discriminator first, then the generator and
//! classifier against the updated discriminator.

use crate::neural::{Graph, Group, Modality, Model, Optimizer, OptimizerConfig, Tensor};
use crate::par::Exec;

use super::data::Batch;
use super::{TrainConfig, TrainError};

/// Loss values of one step, evaluated with the updated discriminator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub l_dis: f64,
    pub l_id: f64,
    pub l_ct: f64,
    pub total: f64,
    /// Discriminator loss before its update; `None` when adversarial training is off.
    pub l_dis_before: Option<f64>,
}

impl StepReport {
    pub fn is_finite(&self) -> bool {
        self.l_dis.is_finite()
            && self.l_id.is_finite()
            && self.l_ct.is_finite()
            && self.total.is_finite()
            && self.l_dis_before.map_or(true, f64::is_finite)
    }
}

/// Model plus optimizer state.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: Model,
    cfg: TrainConfig,
    sgd: Optimizer,
    adam: Optimizer,
    exec: Exec,
}

impl Trainer {
    pub fn new(model: Model, cfg: TrainConfig, exec: Exec) -> Self {
        let sgd = Optimizer::new(OptimizerConfig::SgdMomentum(cfg.sgd), model.params());
        let adam = Optimizer::new(OptimizerConfig::Adam(cfg.adam), model.params());
        Self {
            model,
            cfg,
            sgd,
            adam,
            exec,
        }
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    fn group_mask(&self, groups: &[Group]) -> Vec<bool> {
        self.model
            .params()
            .iter()
            .map(|p| groups.contains(&p.group))
            .collect()
    }

    /// Discriminator update on fixed features; returns the loss before the update.
    fn discriminator_step(&mut self, f_e: &Tensor, f_r: &Tensor) -> Result<f64, TrainError> {
        let mask = self.group_mask(&[Group::Discriminator]);
        let mut g = Graph::with_exec(self.exec);
        let bound = g.bind_with(self.model.params(), |i| mask[i]);
        let xe = g.input(f_e.clone());
        let xr = g.input(f_r.clone());
        let ze = self.model.discriminator_logits(&mut g, &bound, xe);
        let zr = self.model.discriminator_logits(&mut g, &bound, xr);
        let l = g.loss_discriminator_logits(ze, zr)?;
        let grads = g.param_grads(l, &bound, self.model.params());
        self.adam.step(self.model.params_mut(), &grads, |i| mask[i]);
        Ok(g.value(l).item())
    }

    /// Phase 1 alone: one discriminator update on the current embeddings of
    /// `batch`. Returns the discriminator loss before the update.
    pub fn discriminator_phase(&mut self, batch: &Batch) -> Result<f64, TrainError> {
        let f_e = self.model.forward_generator(&batch.events, Modality::Event, self.exec)?;
        let f_r = self.model.forward_generator(&batch.colors, Modality::Color, self.exec)?;
        self.discriminator_step(&f_e, &f_r)
    }

    /// Phase 2 alone: one generator / classifier update against the current
    /// discriminator.
    pub fn generator_phase(&mut self, batch: &Batch) -> Result<StepReport, TrainError> {
        self.run(batch, false)
    }

    /// Both phases: the discriminator update (unless adversarial training is
    /// off), then the generator / classifier update.
    pub fn step(&mut self, batch: &Batch) -> Result<StepReport, TrainError> {
        let adversarial = !self.cfg.ablations.no_adversarial;
        self.run(batch, adversarial)
    }

    fn run(&mut self, batch: &Batch, with_discriminator: bool) -> Result<StepReport, TrainError> {
        let cfg = &self.cfg;
        let (alpha, beta, gamma) = (cfg.alpha, cfg.beta, cfg.gamma_eff());
        let margin = cfg.margin;
        self.model.check_input(&batch.events, Modality::Event)?;
        self.model.check_input(&batch.colors, Modality::Color)?;

        let gen_mask = self.group_mask(&[Group::Generator, Group::Classifier]);
        let mut g = Graph::with_exec(self.exec);
        let bound = g.bind_with(self.model.params(), |i| gen_mask[i]);
        let xe = g.input(batch.events.clone());
        let xr = g.input(batch.colors.clone());
        let fe = self.model.generator(&mut g, &bound, xe, Modality::Event);
        let fr = self.model.generator(&mut g, &bound, xr, Modality::Color);

        // Embeddings do not depend on the discriminator, so phase 1 can reuse them.
        let l_dis_before = if with_discriminator {
            let (ve, vr) = (g.value(fe).clone(), g.value(fr).clone());
            Some(self.discriminator_step(&ve, &vr)?)
        } else {
            None
        };

        // Fresh copies of the (possibly updated) discriminator, held fixed.
        let frozen = g.bind_with(self.model.params(), |_| false);
        let pe = self.model.classifier(&mut g, &bound, fe);
        let pr = self.model.classifier(&mut g, &bound, fr);
        let l_id = g.loss_identity(pe, pr, &batch.labels_e, &batch.labels_r)?;
        let l_ct = g.loss_contrastive(fe, fr, &batch.same, margin)?;
        let ze = self.model.discriminator_logits(&mut g, &frozen, fe);
        let zr = self.model.discriminator_logits(&mut g, &frozen, fr);
        let l_dis = g.loss_discriminator_logits(ze, zr)?;
        // A zero weight drops the term from the graph entirely.
        let total = g.weighted_sum(&[(alpha, l_id), (beta, l_ct), (-gamma, l_dis)]);
        let grads = g.param_grads(total, &bound, self.model.params());
        self.sgd.step(self.model.params_mut(), &grads, |i| gen_mask[i]);

        Ok(StepReport {
            l_dis: g.value(l_dis).item(),
            l_id: g.value(l_id).item(),
            l_ct: g.value(l_ct).item(),
            total: g.value(total).item(),
            l_dis_before,
        })
    }
}

/// Single step with fresh optimizer state; updates `model` in place.
pub fn train_step(
    model: &mut Model,
    batch: &Batch,
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<StepReport, TrainError> {
    let mut t = Trainer::new(model.clone(), cfg.clone(), exec);
    let r = t.step(batch)?;
    *model = t.into_model();
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::data::sample_batch;
    use crate::train::data::tests::synthetic_pool;

    fn tiny_cfg() -> TrainConfig {
        let mut c = TrainConfig::toy();
        c.encoder.output_size = 8;
        c.network.conv_channels = [2, 3, 4];
        c.network.embed_dim = 8;
        c.network.disc_hidden = 6;
        c
    }

    fn group_values(m: &Model, g: Group) -> Vec<Tensor> {
        m.params().group_values(g)
    }

    #[test]
    fn phases_touch_only_their_groups() {
        let pool = synthetic_pool(3, 2, 8);
        let cfg = tiny_cfg();
        let model = Model::init(cfg.network_spec(3), 5).unwrap();
        let batch = sample_batch(&pool, 4, 0.5, 1).unwrap();

        let mut t = Trainer::new(model.clone(), cfg.clone(), Exec::Seq);
        t.step(&batch).unwrap();
        for g in [Group::Generator, Group::Classifier, Group::Discriminator] {
            assert_ne!(group_values(&model, g), group_values(t.model(), g), "{g:?}");
        }

        let mut nal = cfg.clone();
        nal.ablations.no_adversarial = true;
        let mut t = Trainer::new(model.clone(), nal, Exec::Seq);
        let r = t.step(&batch).unwrap();
        assert!(r.l_dis_before.is_none());
        assert_eq!(
            group_values(&model, Group::Discriminator),
            group_values(t.model(), Group::Discriminator)
        );
    }

    #[test]
    fn step_is_the_two_phases_in_order() {
        let pool = synthetic_pool(3, 2, 8);
        let cfg = tiny_cfg();
        let model = Model::init(cfg.network_spec(3), 5).unwrap();
        let batch = sample_batch(&pool, 4, 0.5, 1).unwrap();
        let mut a = Trainer::new(model.clone(), cfg.clone(), Exec::Seq);
        let ra = a.step(&batch).unwrap();
        let mut b = Trainer::new(model, cfg, Exec::Seq);
        let before = b.discriminator_phase(&batch).unwrap();
        let rb = b.generator_phase(&batch).unwrap();
        assert_eq!(ra.l_dis_before, Some(before));
        assert_eq!((ra.l_id, ra.total), (rb.l_id, rb.total));
        assert_eq!(a.model().params(), b.model().params());
    }

    #[test]
    fn zero_gamma_matches_no_adversarial_for_generator() {
        let pool = synthetic_pool(3, 2, 8);
        let cfg = tiny_cfg();
        let model = Model::init(cfg.network_spec(3), 9).unwrap();
        let mut zero = cfg.clone();
        zero.gamma = 0.0;
        let mut nal = cfg;
        nal.ablations.no_adversarial = true;
        let mut a = Trainer::new(model.clone(), zero, Exec::Seq);
        let mut b = Trainer::new(model, nal, Exec::Seq);
        for s in 0..3 {
            let batch = sample_batch(&pool, 4, 0.5, s).unwrap();
            a.step(&batch).unwrap();
            b.step(&batch).unwrap();
        }
        for g in [Group::Generator, Group::Classifier] {
            assert_eq!(group_values(a.model(), g), group_values(b.model(), g));
        }
    }

    #[test]
    fn adversarial_term_alone_raises_discriminator_loss() {
        let pool = synthetic_pool(3, 2, 8);
        let mut cfg = tiny_cfg();
        cfg.alpha = 0.0;
        cfg.beta = 0.0;
        cfg.gamma = 1.0;
        let model = Model::init(cfg.network_spec(3), 4).unwrap();
        let batch = sample_batch(&pool, 4, 0.5, 2).unwrap();
        let mut t = Trainer::new(model, cfg, Exec::Seq);
        let first = t.generator_phase(&batch).unwrap().l_dis;
        let second = t.generator_phase(&batch).unwrap().l_dis;
        assert!(second > first, "{second} <= {first}");
    }

    #[test]
    fn seq_and_par_agree() {
        let pool = synthetic_pool(3, 2, 8);
        let cfg = tiny_cfg();
        let model = Model::init(cfg.network_spec(3), 2).unwrap();
        let batch = sample_batch(&pool, 4, 0.5, 0).unwrap();
        let mut a = Trainer::new(model.clone(), cfg.clone(), Exec::Seq);
        let mut b = Trainer::new(model, cfg, Exec::default());
        assert_eq!(a.step(&batch).unwrap(), b.step(&batch).unwrap());
        assert_eq!(a.model().params(), b.model().params());
    }
}
