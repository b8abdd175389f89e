//! TOML run configuration.
//!
//! ```toml
//! [model]
//! preset = "desk"      # or "reference"
//! segment_len = 32
//! alpha = [0.5, 0.5]
//!
//! [train]
//! epochs = 20
//! learning_rate = 0.003
//!
//! [train.ablation]
//! use_recurrence = false
//! ```
//!
//! Model fields left out take the preset's value; vocabulary sizes always
//! come from the vocabulary files.

use std::path::{Path, PathBuf};

use astcomp_core::model::ModelConfig;
use astcomp_core::training::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CONFIG_DIR_ENV: &str = "ASTCOMP_CONFIG_DIR";
pub const DEFAULT_CONFIG_FILE: &str = "astcomp.toml";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Desk,
    Reference,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub preset: Preset,
    pub d_type: Option<usize>,
    pub d_value: Option<usize>,
    pub n_layers: Option<usize>,
    pub n_heads: Option<usize>,
    pub d_head: Option<usize>,
    pub d_ff: Option<usize>,
    pub segment_len: Option<usize>,
    pub mem_len: Option<usize>,
    pub path_len: Option<usize>,
    pub path_dim: Option<usize>,
    pub alpha: Option<[f64; 2]>,
    pub seed: Option<u64>,
}

impl ModelSection {
    pub fn resolve(&self, type_vocab_size: usize, value_vocab_size: usize) -> ModelConfig {
        let mut c = match self.preset {
            Preset::Desk => ModelConfig::desk_scale(type_vocab_size, value_vocab_size),
            Preset::Reference => ModelConfig::reference_scale(type_vocab_size, value_vocab_size),
        };
        let set = |slot: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut c.d_type, self.d_type);
        set(&mut c.d_value, self.d_value);
        set(&mut c.n_layers, self.n_layers);
        set(&mut c.n_heads, self.n_heads);
        set(&mut c.d_head, self.d_head);
        set(&mut c.d_ff, self.d_ff);
        set(&mut c.segment_len, self.segment_len);
        set(&mut c.mem_len, self.mem_len);
        set(&mut c.path_len, self.path_len);
        set(&mut c.path_dim, self.path_dim);
        if let Some(a) = self.alpha {
            c.alpha = a;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        c
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Core(astcomp_core::Error::Config(format!("{}: {e}", origin.display()))))
    }

    /// Reads `explicit` when given, else `$ASTCOMP_CONFIG_DIR/astcomp.toml`
    /// when that exists, else the defaults. Returns the file actually used.
    pub fn locate(explicit: Option<&Path>) -> Result<(Self, Option<PathBuf>)> {
        let path = match explicit {
            Some(p) => Some(p.to_owned()),
            None => std::env::var_os(CONFIG_DIR_ENV)
                .map(|d| PathBuf::from(d).join(DEFAULT_CONFIG_FILE))
                .filter(|p| p.is_file()),
        };
        match path {
            Some(p) => {
                let text = std::fs::read_to_string(&p).map_err(Error::io(&p))?;
                Ok((Self::from_toml(&text, &p)?, Some(p)))
            }
            None => Ok((Self::default(), None)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overlay_on_preset() {
        let text =
            "[model]\nsegment_len = 8\nalpha = [0.7, 0.3]\n[train]\nepochs = 3\n[train.ablation]\nuse_path = false\n";
        let c = RunConfig::from_toml(text, Path::new("x.toml")).unwrap();
        let m = c.model.resolve(10, 20);
        assert_eq!(m.segment_len, 8);
        assert_eq!(m.alpha, [0.7, 0.3]);
        assert_eq!(m.d_type, ModelConfig::desk_scale(10, 20).d_type);
        assert_eq!(c.train.epochs, 3);
        assert!(!c.train.ablation.use_path && c.train.ablation.use_mtl);
        assert_eq!(c.train.learning_rate, TrainConfig::default().learning_rate);
    }

    #[test]
    fn reference_preset_and_unknown_keys() {
        let c = RunConfig::from_toml("[model]\npreset = \"reference\"\n", Path::new("x.toml")).unwrap();
        assert_eq!(c.model.resolve(330, 50_003).hidden(), 1500);
        assert!(RunConfig::from_toml("[model]\nwidth = 3\n", Path::new("x.toml")).is_err());
    }
}
