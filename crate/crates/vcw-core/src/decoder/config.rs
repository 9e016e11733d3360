use crate::error::{Error, Result};

/// Toy decoder geometry. Defaults train in minutes on a CPU while still
/// leaving room for an 8x context extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub mlp_ratio: usize,
    /// Maximum sequence length used during training.
    pub train_context: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 512,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            mlp_ratio: 2,
            train_context: 256,
        }
    }
}

impl ModelConfig {
    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 {
            return Err(Error::Config("vocab_size must be at least 2".into()));
        }
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} must be divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.head_dim() % 2 != 0 || self.head_dim() < 2 {
            return Err(Error::Config(format!(
                "head_dim {} must be even and >= 2",
                self.head_dim()
            )));
        }
        if self.n_layers == 0 || self.mlp_ratio == 0 {
            return Err(Error::Config(
                "n_layers and mlp_ratio must be positive".into(),
            ));
        }
        if self.train_context < 8 {
            return Err(Error::Config("train_context must be at least 8".into()));
        }
        Ok(())
    }
}
