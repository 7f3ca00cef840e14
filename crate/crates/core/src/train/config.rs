use serde::{Deserialize, Serialize};

use crate::encode::EncoderConfig;
use crate::event::BinSpec;
use crate::neural::net::{NetworkSpec, COLOR_CHANNELS};
use crate::neural::{AdamConfig, SgdConfig};

use super::TrainError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ablations {
    /// Separate generator weights per modality.
    pub no_weight_sharing: bool,
    /// Encode each whole bin once and replicate it across channels.
    pub no_temporal_channels: bool,
    /// Skip discriminator updates and drop the adversarial term.
    pub no_adversarial: bool,
}

/// Generator / discriminator widths; input size and class count come from
/// the encoder and the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkShape {
    pub conv_channels: [usize; 3],
    pub embed_dim: usize,
    pub disc_hidden: usize,
}

impl Default for NetworkShape {
    fn default() -> Self {
        Self {
            conv_channels: [8, 16, 32],
            embed_dim: 64,
            disc_hidden: 32,
        }
    }
}

/// Every knob of a training run. Config files must list every field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub margin: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Fraction of same-instance pairs per batch.
    pub pos_ratio: f64,
    /// Random rotation / flip of every training image.
    pub augment: bool,
    pub ablations: Ablations,
    /// Generator and classifier optimizer.
    pub sgd: SgdConfig,
    /// Discriminator optimizer.
    pub adam: AdamConfig,
    pub encoder: EncoderConfig,
    pub bins: BinSpec,
    pub network: NetworkShape,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 0.01,
            gamma: 0.01,
            margin: 1.0,
            batch_size: 16,
            max_epochs: 20,
            seed: 0,
            pos_ratio: 0.5,
            augment: true,
            ablations: Ablations::default(),
            sgd: SgdConfig::default(),
            adam: AdamConfig::default(),
            encoder: EncoderConfig::default(),
            bins: BinSpec::default(),
            network: NetworkShape::default(),
        }
    }
}

impl TrainConfig {
    /// Settings sized for the procedural toy dataset (32 px renderings).
    pub fn toy() -> Self {
        let mut cfg = Self::default();
        cfg.encoder.output_size = 32;
        cfg.batch_size = 8;
        cfg.max_epochs = 100;
        cfg
    }

    pub fn check(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::InvalidConfig(m));
        for (name, w) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(w.is_finite() && w >= 0.0) {
                return bad(format!("{name} must be a non-negative number, got {w}"));
            }
        }
        if !(self.margin.is_finite() && self.margin > 0.0) {
            return bad(format!("margin must be positive, got {}", self.margin));
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be at least 2, got {}", self.batch_size));
        }
        if !(0.0..=1.0).contains(&self.pos_ratio) {
            return bad(format!("pos_ratio must lie in [0, 1], got {}", self.pos_ratio));
        }
        self.encoder
            .check()
            .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
        self.bins
            .check()
            .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    /// Effective adversarial weight.
    pub fn gamma_eff(&self) -> f64 {
        if self.ablations.no_adversarial {
            0.0
        } else {
            self.gamma
        }
    }

    /// Whether event images carry one channel per temporal sub-bin.
    pub fn temporal_channels(&self) -> bool {
        !self.ablations.no_temporal_channels
    }

    /// Network for `num_classes` instances. Weight sharing is only possible
    /// when event images have as many channels as color images.
    pub fn network_spec(&self, num_classes: usize) -> NetworkSpec {
        NetworkSpec {
            event_channels: self.bins.sub_bins,
            input_size: self.encoder.output_size,
            conv_channels: self.network.conv_channels,
            embed_dim: self.network.embed_dim,
            num_classes,
            disc_hidden: self.network.disc_hidden,
            weight_sharing: !self.ablations.no_weight_sharing
                && self.bins.sub_bins == COLOR_CHANNELS,
        }
    }
}
