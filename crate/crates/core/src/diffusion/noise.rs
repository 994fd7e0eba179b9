//! Multi-resolution Gaussian noise with step-dependent annealing.
//!
//! Scale 1 is white noise on the model grid. Scale `i >= 2` is white noise on
//! a grid coarsened by `2^(i-1)` and bilinearly upsampled back. The combination
//! is divided by its exact per-element standard deviation, so every element is
//! marginally unit Gaussian and the forward-process marginal is unchanged.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::schedule::VarianceSchedule;
use crate::error::{Error, Result};
use crate::fields::{axis_taps, resample_values, AxisTap, ChannelStack, Domain};

/// How the annealing strength enters the combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnnealMode {
    /// Strength scales only the coarse-scale additions; the white base keeps
    /// full strength and the result has unit variance at every step.
    #[default]
    Surplus,
    /// Strength scales the whole (unit-variance) combination, so the noise
    /// vanishes at the last step.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    /// Per-scale weights; `weights[0]` belongs to the full-resolution scale.
    pub weights: Vec<f64>,
    /// Per-scale standard deviations.
    pub sigmas: Vec<f64>,
    pub anneal: bool,
    #[serde(default)]
    pub anneal_mode: AnnealMode,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self::multires(4, 0.5, true)
    }
}

impl NoiseSpec {
    /// Plain white Gaussian noise.
    pub fn gaussian(anneal: bool) -> Self {
        Self::multires(1, 0.5, anneal)
    }

    /// `k` scales with geometric weights `gamma^(i-1)` and unit sigmas.
    pub fn multires(k: usize, gamma: f64, anneal: bool) -> Self {
        Self {
            weights: (0..k).map(|i| gamma.powi(i as i32)).collect(),
            sigmas: vec![1.0; k],
            anneal,
            anneal_mode: AnnealMode::Surplus,
        }
    }

    pub fn with_mode(mut self, mode: AnnealMode) -> Self {
        self.anneal_mode = mode;
        self
    }

    pub fn scales(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::InvalidParameter("noise needs at least one scale".into()));
        }
        if self.sigmas.len() != self.weights.len() {
            return Err(Error::InvalidParameter(format!(
                "{} weights but {} sigmas",
                self.weights.len(),
                self.sigmas.len()
            )));
        }
        if self.weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter("noise weights must be nonnegative".into()));
        }
        if self.sigmas.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidParameter("noise sigmas must be nonnegative".into()));
        }
        if !(self.weights[0] * self.sigmas[0] > 0.0) {
            return Err(Error::InvalidParameter("full-resolution scale must carry positive weight".into()));
        }
        Ok(())
    }

    /// True when the noise is plain white Gaussian at every step.
    pub fn is_white(&self) -> bool {
        let coarse_silent = self.weights[1..].iter().zip(&self.sigmas[1..]).all(|(w, s)| w * s == 0.0);
        coarse_silent && !(self.anneal && self.anneal_mode == AnnealMode::Literal)
    }
}

/// Linear annealing strength `1 - t/T`.
pub fn anneal_strength(t: usize, steps: usize) -> Result<f64> {
    if steps == 0 || t > steps {
        return Err(Error::StepOutOfRange { t, steps });
    }
    Ok(1.0 - t as f64 / steps as f64)
}

fn level_dims(nx: usize, ny: usize, level: usize) -> Result<(usize, usize)> {
    let (cx, cy) = (nx >> level, ny >> level);
    if cx < 2 || cy < 2 {
        return Err(Error::InvalidParameter(format!(
            "grid {nx}x{ny} is too small for noise scale {} (coarse grid {cx}x{cy})",
            level + 1
        )));
    }
    Ok((cx, cy))
}

fn squared_weights(taps: &[AxisTap]) -> Vec<f64> {
    taps.iter().map(|t| (1.0 - t.frac).powi(2) + t.frac.powi(2)).collect()
}

/// Noise generator for one grid, with the per-element variance map cached.
pub struct MultiresNoise {
    nx: usize,
    ny: usize,
    spec: NoiseSpec,
    levels: Vec<(usize, usize)>,
    /// Per coarse scale, the sum of squared bilinear weights at every output
    /// element (the variance of upsampled unit white noise).
    upsample_gain: Vec<Vec<f64>>,
}

impl MultiresNoise {
    pub fn new(nx: usize, ny: usize, spec: &NoiseSpec) -> Result<Self> {
        spec.validate()?;
        let mut levels = Vec::new();
        let mut upsample_gain = Vec::new();
        for level in 1..spec.scales() {
            let (cx, cy) = level_dims(nx, ny, level)?;
            let wx = squared_weights(&axis_taps(cx, nx));
            let wy = squared_weights(&axis_taps(cy, ny));
            let mut gain = Vec::with_capacity(nx * ny);
            for gy in &wy {
                gain.extend(wx.iter().map(|gx| gx * gy));
            }
            levels.push((cx, cy));
            upsample_gain.push(gain);
        }
        Ok(Self { nx, ny, spec: spec.clone(), levels, upsample_gain })
    }

    /// Coarse-scale multiplier and overall multiplier at step `t` of `steps`.
    fn strengths(&self, t: usize, steps: usize) -> Result<(f64, f64)> {
        if !self.spec.anneal {
            return Ok((1.0, 1.0));
        }
        let s = anneal_strength(t, steps)?;
        Ok(match self.spec.anneal_mode {
            AnnealMode::Surplus => (s, 1.0),
            AnnealMode::Literal => (1.0, s),
        })
    }

    /// One channel of noise, `ny * nx` values.
    pub fn sample(&self, t: usize, steps: usize, rng: &mut impl Rng) -> Result<Vec<f64>> {
        let (coarse, overall) = self.strengths(t, steps)?;
        let base = self.spec.weights[0] * self.spec.sigmas[0];
        let mut out: Vec<f64> = (0..self.nx * self.ny).map(|_| base * rng.sample::<f64, _>(StandardNormal)).collect();
        let mut variance = vec![base * base; out.len()];
        for (i, &(cx, cy)) in self.levels.iter().enumerate() {
            let amp = coarse * self.spec.weights[i + 1] * self.spec.sigmas[i + 1];
            let white: Vec<f64> = (0..cx * cy).map(|_| rng.sample(StandardNormal)).collect();
            if amp == 0.0 {
                continue;
            }
            let up = resample_values(&white, cx, cy, self.nx, self.ny);
            for ((o, u), (v, g)) in out.iter_mut().zip(&up).zip(variance.iter_mut().zip(&self.upsample_gain[i])) {
                *o += amp * u;
                *v += amp * amp * g;
            }
        }
        for (o, v) in out.iter_mut().zip(&variance) {
            *o *= overall / v.sqrt();
        }
        Ok(out)
    }
}

/// `channels` independent channels of multi-resolution noise for diffusion
/// step `t` of the schedule's training length.
pub fn multires_noise(
    nx: usize,
    ny: usize,
    channels: usize,
    spec: &NoiseSpec,
    t: usize,
    sched: &VarianceSchedule,
    rng: &mut impl Rng,
) -> Result<ChannelStack> {
    let gen = MultiresNoise::new(nx, ny, spec)?;
    let mut values = Vec::with_capacity(channels * nx * ny);
    for _ in 0..channels {
        values.extend(gen.sample(t, sched.train_steps(), rng)?);
    }
    let names = (0..channels).map(|c| format!("eps{c}")).collect();
    ChannelStack::from_flat(nx, ny, Domain::UnitBox, names, &values)
}
