use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape and loss weighting of a model.
///
/// The encoder width is `d_type + d_value`; see [`ModelConfig::hidden`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_type: usize,
    pub d_value: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_head: usize,
    pub d_ff: usize,
    /// Segment length `L`.
    pub segment_len: usize,
    /// Cached positions per layer `M`.
    pub mem_len: usize,
    /// Path length `m`.
    pub path_len: usize,
    /// Path vector size `H_p` (both directions together).
    pub path_dim: usize,
    pub type_vocab_size: usize,
    pub value_vocab_size: usize,
    /// Loss weights for (type, value).
    pub alpha: [f64; 2],
    pub seed: u64,
}

impl ModelConfig {
    /// Reference dimensions: 300 + 1200 embeddings, six layers of six 64-wide
    /// heads, feed-forward 1024, `L = 50`, `M = 256`, `m = 5`, `H_p = 300`.
    pub fn reference_scale(type_vocab_size: usize, value_vocab_size: usize) -> Self {
        Self {
            d_type: 300,
            d_value: 1200,
            n_layers: 6,
            n_heads: 6,
            d_head: 64,
            d_ff: 1024,
            segment_len: 50,
            mem_len: 256,
            path_len: 5,
            path_dim: 300,
            type_vocab_size,
            value_vocab_size,
            alpha: [0.5, 0.5],
            seed: 0,
        }
    }

    /// A desk-scale configuration that trains in seconds.
    pub fn desk_scale(type_vocab_size: usize, value_vocab_size: usize) -> Self {
        Self {
            d_type: 16,
            d_value: 16,
            n_layers: 1,
            n_heads: 2,
            d_head: 8,
            d_ff: 32,
            segment_len: 16,
            mem_len: 32,
            path_len: 5,
            path_dim: 16,
            type_vocab_size,
            value_vocab_size,
            alpha: [0.5, 0.5],
            seed: 0,
        }
    }

    /// Width of node vectors and hidden states (`H`).
    pub fn hidden(&self) -> usize {
        self.d_type + self.d_value
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_type", self.d_type),
            ("d_value", self.d_value),
            ("n_layers", self.n_layers),
            ("n_heads", self.n_heads),
            ("d_head", self.d_head),
            ("d_ff", self.d_ff),
            ("segment_len", self.segment_len),
            ("path_len", self.path_len),
            ("path_dim", self.path_dim),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(alloc::format!("{name} must be positive")));
            }
        }
        if !self.path_dim.is_multiple_of(2) {
            return Err(Error::Config("path_dim must be even (split across two directions)".into()));
        }
        if self.type_vocab_size < 3 || self.value_vocab_size < 3 {
            return Err(Error::Config("vocabularies must hold at least the three sentinels".into()));
        }
        check_alpha(self.alpha)
    }
}

/// Loss weights must be non-negative and sum to one.
pub fn check_alpha(alpha: [f64; 2]) -> Result<()> {
    if alpha.iter().any(|a| !a.is_finite() || *a < 0.0) {
        return Err(Error::Config(alloc::format!("loss weights {alpha:?} must be non-negative")));
    }
    if ((alpha[0] + alpha[1]) - 1.0).abs() > 1e-9 {
        return Err(Error::Config(alloc::format!("loss weights {alpha:?} must sum to 1")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Type,
    Value,
}

/// Switches for the component ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    /// Train both heads jointly; when off only `single_task` is trained.
    pub use_mtl: bool,
    /// Feed the path-to-root vector into the heads.
    pub use_path: bool,
    /// Carry memory across the segments of a program.
    pub use_recurrence: bool,
    pub single_task: Task,
}

impl Default for Ablation {
    fn default() -> Self {
        Self { use_mtl: true, use_path: true, use_recurrence: true, single_task: Task::Type }
    }
}

impl Ablation {
    /// Whether the head for `task` takes part in the loss.
    pub fn trains(&self, task: Task) -> bool {
        self.use_mtl || self.single_task == task
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_dimensions() {
        let c = ModelConfig::reference_scale(330, 50_003);
        assert_eq!(c.hidden(), 1500);
        assert_eq!(c.path_dim / 2, 150);
        c.validate().unwrap();
    }

    #[test]
    fn alpha_simplex() {
        assert!(check_alpha([0.7, 0.4]).is_err());
        assert!(check_alpha([-0.1, 1.1]).is_err());
        assert!(check_alpha([1.0, 0.0]).is_ok());
        assert!(check_alpha([0.3, 0.7]).is_ok());
    }

    #[test]
    fn odd_path_dim_rejected() {
        let mut c = ModelConfig::desk_scale(10, 10);
        c.path_dim = 15;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
