use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the complementary fusion weight is obtained from the assignment
/// weight. Only `1 - psi` is defined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RhoMode {
    #[default]
    OneMinusPsi,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HgnnConfig {
    /// Width of every fused feature vector. BiLSTM hidden size is half of it
    /// and the convolution has this many filters.
    pub fusion_dim: usize,
    pub kernel_size: usize,
    pub num_classes: usize,
    pub rho_mode: RhoMode,
    pub seed: u64,
}

impl Default for HgnnConfig {
    fn default() -> Self {
        Self {
            fusion_dim: 64,
            kernel_size: 3,
            num_classes: 5,
            rho_mode: RhoMode::OneMinusPsi,
            seed: 0,
        }
    }
}

impl HgnnConfig {
    pub fn lstm_hidden(&self) -> usize {
        self.fusion_dim / 2
    }

    pub fn conv_filters(&self) -> usize {
        self.fusion_dim
    }

    /// Shape checks that do not depend on the input length.
    pub fn validate(&self) -> Result<()> {
        if self.fusion_dim < 2 || !self.fusion_dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "fusion width must be even and at least 2, got {}",
                self.fusion_dim
            )));
        }
        if self.kernel_size == 0 || self.kernel_size > self.fusion_dim {
            return Err(Error::Config(format!(
                "kernel size {} must lie in 1..={}",
                self.kernel_size, self.fusion_dim
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("at least 2 classes are required".into()));
        }
        Ok(())
    }

    /// Shape checks for an input fractal series of length `input_len`.
    pub fn validate_input(&self, input_len: usize) -> Result<()> {
        self.validate()?;
        if input_len < self.kernel_size {
            return Err(Error::invalid(format!(
                "input of length {input_len} is shorter than the kernel ({})",
                self.kernel_size
            )));
        }
        Ok(())
    }
}
