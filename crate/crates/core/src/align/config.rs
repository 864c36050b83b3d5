use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Non-linearity between the two channel-wise fully connected layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    /// Ablation: the network collapses to an affine map.
    Identity,
}

/// Shape and training hyperparameters of the alignment network.
///
/// `n_filters` and `hidden_dim` default to the input and output channel
/// counts when left unset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DanConfig {
    pub n_in_channels: usize,
    pub n_filters: Option<usize>,
    pub hidden_dim: Option<usize>,
    pub n_out_channels: usize,
    pub n_samples: usize,
    pub activation: Activation,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl Default for DanConfig {
    fn default() -> Self {
        DanConfig {
            n_in_channels: 0,
            n_filters: None,
            hidden_dim: None,
            n_out_channels: 0,
            n_samples: 0,
            activation: Activation::Tanh,
            learning_rate: 5e-4,
            batch_size: 64,
            pretrain_epochs: 500,
            finetune_epochs: 150,
            val_fraction: 0.2,
            seed: 0,
            bn_eps: 1e-5,
            bn_momentum: 0.1,
        }
    }
}

impl DanConfig {
    /// Default hyperparameters for the given shapes.
    pub fn for_shape(n_in: usize, n_out: usize, n_samples: usize) -> Self {
        DanConfig {
            n_in_channels: n_in,
            n_out_channels: n_out,
            n_samples,
            ..Default::default()
        }
    }

    pub fn with_shape(mut self, n_in: usize, n_out: usize, n_samples: usize) -> Self {
        self.n_in_channels = n_in;
        self.n_out_channels = n_out;
        self.n_samples = n_samples;
        self
    }

    pub fn n_filters(&self) -> usize {
        self.n_filters.unwrap_or(self.n_in_channels)
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim.unwrap_or(self.n_out_channels)
    }

    /// Checks hyperparameters only (shapes may still be unresolved).
    pub fn validate_hyper(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("dan.learning_rate", "must be > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("dan.batch_size", "must be >= 1"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::config("dan.val_fraction", "must lie in (0, 1)"));
        }
        if !(self.bn_eps > 0.0) {
            return Err(Error::config("dan.bn_eps", "must be > 0"));
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return Err(Error::config("dan.bn_momentum", "must lie in (0, 1]"));
        }
        if self.n_filters == Some(0) {
            return Err(Error::config("dan.n_filters", "must be >= 1"));
        }
        if self.hidden_dim == Some(0) {
            return Err(Error::config("dan.hidden_dim", "must be >= 1"));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_hyper()?;
        for (name, v) in [
            ("dan.n_in_channels", self.n_in_channels),
            ("dan.n_out_channels", self.n_out_channels),
            ("dan.n_samples", self.n_samples),
        ] {
            if v == 0 {
                return Err(Error::config(name, "must be >= 1"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = DanConfig::for_shape(8, 8, 375);
        assert_eq!(c.learning_rate, 5e-4);
        assert_eq!(c.pretrain_epochs, 500);
        assert_eq!(c.finetune_epochs, 150);
        assert_eq!(c.val_fraction, 0.2);
        assert_eq!(c.batch_size, 64);
        assert_eq!(c.n_filters(), 8);
        assert_eq!(c.hidden_dim(), 8);
        assert_eq!(c.activation, Activation::Tanh);
        c.validate().unwrap();
    }

    #[test]
    fn invalid_fields_are_named() {
        let c = DanConfig {
            val_fraction: 1.0,
            ..DanConfig::for_shape(8, 8, 10)
        };
        assert!(c.validate().unwrap_err().to_string().contains("dan.val_fraction"));
        let c = DanConfig::default();
        assert!(c.validate().unwrap_err().to_string().contains("dan.n_in_channels"));
    }

    #[test]
    fn toml_partial() {
        let c: DanConfig = toml::from_str("learning_rate = 0.001\nhidden_dim = 4").unwrap();
        assert_eq!(c.learning_rate, 0.001);
        assert_eq!(c.hidden_dim, Some(4));
        assert_eq!(c.pretrain_epochs, 500);
    }
}
