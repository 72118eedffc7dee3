//! HIS-Unet: two U-net branches (drift and concentration) exchanging
//! features through six weighting attention modules.

mod checkpoint;
mod forward;
mod params;

use std::path::PathBuf;

use icepinn_autodiff::AutodiffError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint, CHECKPOINT_MAGIC};
pub use forward::{channel_attention, forward, spatial_attention, wam, WamParams};
pub use params::{init_params, Bound, HisUnetParams, ParamSpec};

/// Encoder depth; fixed because the six WAMs sit at three encoder and three
/// decoder levels.
pub const LEVELS: usize = 3;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("input {got} incompatible with the model: {reason}")]
    Input {
        got: icepinn_autodiff::Shape,
        reason: String,
    },
    #[error("checkpoint config mismatch: expected {expected}, found {found}")]
    ConfigMismatch { expected: String, found: String },
    #[error("{path}: corrupt checkpoint: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown parameter `{0}`")]
    UnknownParam(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub base_channels: usize,
    pub levels: usize,
    pub attention_reduction: usize,
    pub spatial_kernel: usize,
    pub sic_sigmoid: bool,
    /// Appends normalized x and y coordinate channels to the input.
    pub include_xy: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            in_channels: crate::data::INPUT_CHANNELS,
            base_channels: 8,
            levels: LEVELS,
            attention_reduction: 4,
            spatial_kernel: 7,
            sic_sigmoid: true,
            include_xy: false,
        }
    }
}

impl ModelConfig {
    /// 7x7 spatial attention, or 3x3 when either grid side is below 16.
    pub fn default_spatial_kernel(height: usize, width: usize) -> usize {
        if height < 16 || width < 16 {
            3
        } else {
            7
        }
    }

    /// Channels the first convolution sees, coordinates included.
    pub fn input_channels(&self) -> usize {
        self.in_channels + if self.include_xy { 2 } else { 0 }
    }

    /// Feature width at encoder level `l` (1-based).
    pub fn width_at(&self, level: usize) -> usize {
        self.base_channels << (level - 1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ModelError::Config(m));
        if self.levels != LEVELS {
            return bad(format!("levels must be {LEVELS}, got {}", self.levels));
        }
        if self.in_channels == 0 || self.base_channels == 0 {
            return bad("in_channels and base_channels must be positive".into());
        }
        if self.attention_reduction == 0 || self.base_channels % self.attention_reduction != 0 {
            return bad(format!(
                "base_channels {} must be divisible by attention_reduction {}",
                self.base_channels, self.attention_reduction
            ));
        }
        if self.spatial_kernel % 2 == 0 {
            return bad(format!("spatial_kernel {} must be odd", self.spatial_kernel));
        }
        Ok(())
    }
}
