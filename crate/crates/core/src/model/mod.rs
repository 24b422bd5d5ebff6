//! Encoder, pointer scorer and circle loss with hand-written gradients.

mod checkpoint;
mod forward;
mod gradcheck;
mod loss;
mod params;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{Array3, LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Serialize};

use crate::linking::{IsolationFlags, FULL_CHANNELS, VALUE_CHANNELS};
use crate::serialize::{DEFAULT_MAX_SEQ_LEN, LAYOUT_BUCKETS};
use crate::{Error, Result};

pub use checkpoint::{load_checkpoint, load_checkpoint_expecting, save_checkpoint};
pub use forward::{attention_mask, embed, encode, score, Forward, Model};
pub use gradcheck::{grad_check, tiny_fixture, GradCheckReport};
pub use loss::{circle_loss, circle_loss_with_grad};
pub use params::{LayerParams, Params};

/// Score tensor `[channels, L, L]`; masked cells hold [`Real::sentinel`].
pub type ScoreTensor<T> = Array3<T>;

/// Floating point type the network runs in: `f32` for training, `f64` for
/// gradient checks.
pub trait Real:
    Float
    + FromPrimitive
    + LinalgScalar
    + ScalarOperand
    + Debug
    + Display
    + Default
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Send
    + Sync
    + 'static
{
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable constant")
    }

    /// Stand-in for minus infinity that keeps arithmetic finite.
    fn sentinel() -> Self {
        Self::min_value() / Self::of(2.0)
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Width of each link type's head/tail projection.
    pub d_head_score: usize,
    pub max_seq_len: usize,
    pub layout_buckets: usize,
    pub dropout: f64,
    pub use_sinusoidal: bool,
    pub use_key_channels: bool,
    pub use_qci: bool,
    pub use_qhi: bool,
    pub use_qti: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 0,
            d_model: 64,
            n_layers: 2,
            n_heads: 4,
            d_head_score: 32,
            max_seq_len: DEFAULT_MAX_SEQ_LEN,
            layout_buckets: LAYOUT_BUCKETS,
            dropout: 0.1,
            use_sinusoidal: true,
            use_key_channels: true,
            use_qci: true,
            use_qhi: true,
            use_qti: true,
        }
    }
}

impl ModelConfig {
    pub fn n_link_types(&self) -> usize {
        if self.use_key_channels {
            FULL_CHANNELS
        } else {
            VALUE_CHANNELS
        }
    }

    pub fn d_ff(&self) -> usize {
        4 * self.d_model
    }

    pub fn isolation(&self) -> IsolationFlags {
        IsolationFlags {
            qci: self.use_qci,
            qhi: self.use_qhi,
            qti: self.use_qti,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.vocab_size == 0 {
            return bad("vocab_size must be positive".into());
        }
        if self.d_model == 0 || self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return bad(format!(
                "d_model ({}) must be a positive multiple of n_heads ({})",
                self.d_model, self.n_heads
            ));
        }
        if self.d_head_score == 0 || !self.d_head_score.is_multiple_of(2) {
            return bad(format!("d_head_score must be positive and even, got {}", self.d_head_score));
        }
        if self.max_seq_len == 0 || self.layout_buckets == 0 {
            return bad("max_seq_len and layout_buckets must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }
}
