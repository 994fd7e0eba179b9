//! Diffusion transformer noise predictor with hand-written reverse mode.
//!
//! The input stack `[condition, y_t]` is cut into `p x p` patches, projected
//! to width `d` with a fixed 2-D sinusoidal position term, passed through
//! adaLN-Zero blocks conditioned on the summed step / lead-time embedding, and
//! projected back to `p * p * C_y` values per token.
//!
//! The network is generic over [`Real`]: `f32` for training, `f64` for
//! gradient checks.

mod dit;
mod layers;
mod params;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

pub use dit::{Dit, Tape};
pub use layers::{patchify, sincos_pos_embed, timestep_embedding, unpatchify};
pub use params::{Block, Head, Linear, Mlp, Params};

use crate::error::{Error, Result};

pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + LinalgScalar
    + ScalarOperand
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("representable")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Patch edge length in grid cells.
    pub patch: usize,
    pub width: usize,
    pub depth: usize,
    pub heads: usize,
    /// Condition channels plus target channels.
    pub in_channels: usize,
    pub out_channels: usize,
    /// Width of the sinusoidal base embedding of the step and lead time.
    pub freq_dim: usize,
    pub mlp_ratio: usize,
    /// Add the fixed 2-D positional term at patch embedding.
    pub positional: bool,
    /// Zero-pad grids that are not a patch multiple; the padded outputs are
    /// cropped, so they never enter the loss.
    pub pad_to_patch: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            patch: 4,
            width: 256,
            depth: 6,
            heads: 8,
            in_channels: 4,
            out_channels: 1,
            freq_dim: 256,
            mlp_ratio: 4,
            positional: true,
            pad_to_patch: false,
        }
    }
}

impl ModelConfig {
    /// Small profile for tests.
    pub fn tiny(in_channels: usize, out_channels: usize) -> Self {
        Self { patch: 2, width: 32, depth: 2, heads: 4, in_channels, out_channels, freq_dim: 32, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.patch == 0 || self.width == 0 || self.heads == 0 || self.mlp_ratio == 0 {
            return bad("patch, width, heads and mlp_ratio must be positive".into());
        }
        if !self.width.is_multiple_of(self.heads) {
            return bad(format!("width {} not divisible by {} heads", self.width, self.heads));
        }
        if self.positional && !self.width.is_multiple_of(4) {
            return bad(format!("positional term needs width divisible by 4, got {}", self.width));
        }
        if self.freq_dim == 0 || !self.freq_dim.is_multiple_of(2) {
            return bad(format!("freq_dim {} must be even and positive", self.freq_dim));
        }
        if self.out_channels == 0 || self.in_channels <= self.out_channels {
            return bad(format!(
                "need out_channels >= 1 and at least one condition channel (in {}, out {})",
                self.in_channels, self.out_channels
            ));
        }
        Ok(())
    }

    pub fn condition_channels(&self) -> usize {
        self.in_channels - self.out_channels
    }

    pub fn head_dim(&self) -> usize {
        self.width / self.heads
    }

    /// Padded grid extents, or an error when padding is disabled and the grid
    /// is not a patch multiple.
    pub fn padded_dims(&self, nx: usize, ny: usize) -> Result<(usize, usize)> {
        let p = self.patch;
        if nx.is_multiple_of(p) && ny.is_multiple_of(p) {
            return Ok((nx, ny));
        }
        if !self.pad_to_patch {
            return Err(Error::ShapeMismatch(format!("grid {nx}x{ny} not divisible by patch {p}")));
        }
        Ok((nx.div_ceil(p) * p, ny.div_ceil(p) * p))
    }

    pub fn num_tokens(&self, nx: usize, ny: usize) -> Result<usize> {
        let (px, py) = self.padded_dims(nx, ny)?;
        Ok(px * py / (self.patch * self.patch))
    }
}
