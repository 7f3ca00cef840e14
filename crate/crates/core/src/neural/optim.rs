//! SGD with momentum and Adam, updating a selected subset of parameters.

use serde::{Deserialize, Serialize};

use super::params::{ParamGrads, ParameterSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            momentum: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.002,
            beta1: 0.5,
            beta2: 0.99,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OptimizerConfig {
    SgdMomentum(SgdConfig),
    Adam(AdamConfig),
}

/// Optimizer state for one parameter set.
#[derive(Debug, Clone)]
pub enum Optimizer {
    Sgd {
        cfg: SgdConfig,
        velocity: Vec<Vec<f64>>,
    },
    Adam {
        cfg: AdamConfig,
        m: Vec<Vec<f64>>,
        v: Vec<Vec<f64>>,
        t: Vec<u64>,
    },
}

fn zeros_like(params: &ParameterSet) -> Vec<Vec<f64>> {
    params.iter().map(|p| vec![0.0; p.value.len()]).collect()
}

impl Optimizer {
    pub fn new(cfg: OptimizerConfig, params: &ParameterSet) -> Self {
        match cfg {
            OptimizerConfig::SgdMomentum(cfg) => Optimizer::Sgd {
                cfg,
                velocity: zeros_like(params),
            },
            OptimizerConfig::Adam(cfg) => Optimizer::Adam {
                cfg,
                m: zeros_like(params),
                v: zeros_like(params),
                t: vec![0; params.len()],
            },
        }
    }

    /// Applies one update to every parameter for which `selected` is true;
    /// other parameters are left untouched.
    pub fn step(
        &mut self,
        params: &mut ParameterSet,
        grads: &ParamGrads,
        selected: impl Fn(usize) -> bool,
    ) {
        for i in (0..params.len()).filter(|&i| selected(i)) {
            let g = grads.get(i).data();
            let theta = params.get_mut(i).value.data_mut();
            assert_eq!(g.len(), theta.len(), "gradient shape mismatch for parameter {i}");
            match self {
                Optimizer::Sgd { cfg, velocity } => {
                    for ((p, v), gi) in theta.iter_mut().zip(velocity[i].iter_mut()).zip(g) {
                        *v = cfg.momentum * *v - cfg.lr * gi;
                        *p += *v;
                    }
                }
                Optimizer::Adam { cfg, m, v, t } => {
                    t[i] += 1;
                    let bc1 = 1.0 - cfg.beta1.powi(t[i] as i32);
                    let bc2 = 1.0 - cfg.beta2.powi(t[i] as i32);
                    for (((p, mi), vi), gi) in theta
                        .iter_mut()
                        .zip(m[i].iter_mut())
                        .zip(v[i].iter_mut())
                        .zip(g)
                    {
                        *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * gi;
                        *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * gi * gi;
                        let mhat = *mi / bc1;
                        let vhat = *vi / bc2;
                        *p -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
                    }
                }
            }
        }
    }
}

/// One optimizer step without persistent state beyond this call.
pub fn optimizer_step(
    cfg: OptimizerConfig,
    params: &mut ParameterSet,
    grads: &ParamGrads,
) {
    Optimizer::new(cfg, params).step(params, grads, |_| true);
}
