//! Model hyper-parameters.

use serde::{Deserialize, Serialize};

use crate::data::vocab::DEFAULT_STYLES;
use crate::data::{DataLimits, StyleMixing};

/// Widths and block counts of the reader and decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Model width d.
    pub d: usize,
    /// Word embedding width.
    pub d_word: usize,
    pub heads: usize,
    pub ffn_inner: usize,
    /// Shared encoder blocks.
    pub n_shared: usize,
    /// Modeling blocks for the question.
    pub n_model_q: usize,
    /// Modeling blocks for passages.
    pub n_model_p: usize,
    pub n_dec: usize,
    pub dropout: f64,
    /// Standard deviation of the normal weight initialization (the paper
    /// preset uses 0.02).
    pub init_std: f64,
    /// Add sinusoidal positions to word embeddings.
    pub positional: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d: 32,
            d_word: 32,
            heads: 4,
            ffn_inner: 64,
            n_shared: 2,
            n_model_q: 1,
            n_model_p: 2,
            n_dec: 2,
            dropout: 0.1,
            init_std: 0.1,
            positional: true,
        }
    }
}

impl ModelConfig {
    /// Checks invariants, naming the offending key on failure.
    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("d", self.d),
            ("d_word", self.d_word),
            ("heads", self.heads),
            ("ffn_inner", self.ffn_inner),
            ("n_shared", self.n_shared),
            ("n_model_q", self.n_model_q),
            ("n_model_p", self.n_model_p),
            ("n_dec", self.n_dec),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(format!("model.{key} must be at least 1"));
            }
        }
        if !self.d.is_multiple_of(self.heads) {
            return Err(format!(
                "model.d ({}) must be divisible by model.heads ({})",
                self.d, self.heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(format!("model.dropout ({}) must lie in [0, 1)", self.dropout));
        }
        if self.init_std.is_nan() || self.init_std <= 0.0 {
            return Err(format!("model.init_std ({}) must be positive", self.init_std));
        }
        Ok(())
    }
}

/// Optimization recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub gamma_rank: f64,
    pub gamma_cls: f64,
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub total_steps: u64,
    pub clip_norm: f64,
    /// Shadow decay; 0 makes the shadow track the live weights.
    pub ema_decay: f64,
    pub weight_decay: f64,
    /// Target used in place of positive binary labels.
    pub label_smooth_pos: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Write a checkpoint every this many steps (0: only at the end).
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            gamma_rank: 0.5,
            gamma_cls: 0.1,
            peak_lr: 2.5e-4,
            warmup_steps: 2000,
            total_steps: 20_000,
            clip_norm: 1.0,
            ema_decay: 0.9995,
            weight_decay: 0.01,
            label_smooth_pos: 0.9,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 16,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        let nonneg = [
            ("gamma_rank", self.gamma_rank),
            ("gamma_cls", self.gamma_cls),
            ("weight_decay", self.weight_decay),
        ];
        for (key, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(format!("train.{key} ({v}) must be a non-negative number"));
            }
        }
        let positive = [
            ("peak_lr", self.peak_lr),
            ("clip_norm", self.clip_norm),
            ("adam_eps", self.adam_eps),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("train.{key} ({v}) must be positive"));
            }
        }
        for (key, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2), ("ema_decay", self.ema_decay)] {
            if !(0.0..1.0).contains(&v) {
                return Err(format!("train.{key} ({v}) must lie in [0, 1)"));
            }
        }
        if !(self.label_smooth_pos > 0.5 && self.label_smooth_pos <= 1.0) {
            return Err(format!(
                "train.label_smooth_pos ({}) must lie in (0.5, 1]",
                self.label_smooth_pos
            ));
        }
        if self.total_steps <= self.warmup_steps {
            return Err(format!(
                "train.total_steps ({}) must exceed train.warmup_steps ({})",
                self.total_steps, self.warmup_steps
            ));
        }
        if self.batch_size == 0 {
            return Err("train.batch_size must be at least 1".into());
        }
        Ok(())
    }
}

/// Sequence limits, vocabulary size and style sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub k: usize,
    pub j_max: usize,
    pub l_max: usize,
    /// Target length including the style token and EOS.
    pub t_max: usize,
    /// Generation vocabulary size, reserved and style tokens included.
    pub vocab_size: usize,
    pub styles: Vec<String>,
    /// `"multi"` or the name of a single style.
    pub mixing: String,
}

impl Default for DataConfig {
    fn default() -> Self {
        let limits = DataLimits::default();
        Self {
            k: limits.k,
            j_max: limits.j_max,
            l_max: limits.l_max,
            t_max: limits.t_max,
            vocab_size: 1000,
            styles: DEFAULT_STYLES.iter().map(|s| s.to_string()).collect(),
            mixing: "multi".into(),
        }
    }
}

impl DataConfig {
    pub fn limits(&self) -> DataLimits {
        DataLimits {
            k: self.k,
            j_max: self.j_max,
            l_max: self.l_max,
            t_max: self.t_max,
        }
    }

    pub fn mixing(&self) -> StyleMixing {
        if self.mixing == "multi" {
            StyleMixing::Multi
        } else {
            StyleMixing::Single(self.mixing.clone())
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (key, v) in [("k", self.k), ("j_max", self.j_max), ("l_max", self.l_max)] {
            if v == 0 {
                return Err(format!("data.{key} must be at least 1"));
            }
        }
        if self.t_max < 2 {
            return Err(format!("data.t_max ({}) must be at least 2", self.t_max));
        }
        if self.styles.is_empty() {
            return Err("data.styles must name at least one style".into());
        }
        let reserved = crate::data::vocab::FIRST_STYLE + self.styles.len();
        if self.vocab_size <= reserved {
            return Err(format!(
                "data.vocab_size ({}) must exceed the {reserved} reserved tokens",
                self.vocab_size
            ));
        }
        if self.mixing != "multi" && !self.styles.contains(&self.mixing) {
            return Err(format!(
                "data.mixing ({:?}) must be \"multi\" or one of data.styles",
                self.mixing
            ));
        }
        Ok(())
    }
}

/// Everything a run needs; loaded from JSON, then adjusted by overrides.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("config: {e}"))
    }

    pub fn validate(&self) -> Result<(), String> {
        self.model.validate()?;
        self.train.validate()?;
        self.data.validate()
    }

    /// Sets `section.key` to `value`, given as JSON or as a bare string.
    pub fn set(&mut self, path: &str, value: &str) -> Result<(), String> {
        let mut tree = serde_json::to_value(&*self).expect("config serializes");
        let mut slot = &mut tree;
        for part in path.split('.') {
            slot = slot
                .get_mut(part)
                .ok_or_else(|| format!("unknown configuration key {path:?}"))?;
        }
        *slot = serde_json::from_str(value).unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        *self = serde_json::from_value(tree).map_err(|e| format!("{path}: {e}"))?;
        Ok(())
    }
}
