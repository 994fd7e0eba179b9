use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BETA_START: f64 = 1e-4;
pub const BETA_END: f64 = 2e-2;

/// Noise levels `beta_t` and their cumulative products `alpha_bar_t`,
/// indexed from 1.
///
/// A schedule may be a strided subset of a longer training schedule; then
/// `model_step(i)` gives the training-step index the network must be queried
/// with at position `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
    model_steps: Vec<usize>,
    train_steps: usize,
}

/// Linear betas from 1e-4 to 2e-2 over `steps` steps.
pub fn make_schedule(steps: usize) -> Result<VarianceSchedule> {
    if steps < 1 {
        return Err(Error::InvalidParameter("schedule needs at least one step".into()));
    }
    let betas =
        (0..steps)
            .map(|i| {
                if steps == 1 {
                    BETA_START
                } else {
                    BETA_START + (BETA_END - BETA_START) * i as f64 / (steps - 1) as f64
                }
            })
            .collect();
    VarianceSchedule::from_betas(betas)
}

impl VarianceSchedule {
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::InvalidParameter("schedule needs at least one step".into()));
        }
        if let Some(b) = betas.iter().find(|&&b| !(b > 0.0 && b < 1.0)) {
            return Err(Error::InvalidParameter(format!("beta {b} outside (0, 1)")));
        }
        let alpha_bars: Vec<f64> = betas
            .iter()
            .scan(1.0, |prod, b| {
                *prod *= 1.0 - b;
                Some(*prod)
            })
            .collect();
        if !(alpha_bars[alpha_bars.len() - 1] > 0.0) {
            return Err(Error::InvalidParameter("alpha_bar underflows to zero".into()));
        }
        let n = betas.len();
        Ok(Self { betas, alpha_bars, model_steps: (1..=n).collect(), train_steps: n })
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    /// Length of the schedule the model was trained on.
    pub fn train_steps(&self) -> usize {
        self.train_steps
    }

    pub fn check(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.len() {
            return Err(Error::StepOutOfRange { t, steps: self.len() });
        }
        Ok(())
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }

    /// `alpha_bar_{t-1}`, with `alpha_bar_0 = 1`.
    pub fn alpha_bar_prev(&self, t: usize) -> f64 {
        if t == 1 {
            1.0
        } else {
            self.alpha_bars[t - 2]
        }
    }

    pub fn model_step(&self, t: usize) -> usize {
        self.model_steps[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// Posterior variance `(1 - abar_{t-1}) / (1 - abar_t) * beta_t`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        (1.0 - self.alpha_bar_prev(t)) / (1.0 - self.alpha_bar(t)) * self.beta(t)
    }

    /// An evenly strided sub-schedule with `steps` entries that ends at the
    /// last training step. Betas are recomputed so the cumulative products
    /// match the parent at the retained steps.
    pub fn strided(&self, steps: usize) -> Result<Self> {
        let n = self.len();
        if steps == 0 || steps > n {
            return Err(Error::InvalidParameter(format!("strided schedule length {steps} must be in 1..={n}")));
        }
        if steps == n {
            return Ok(self.clone());
        }
        let picks: Vec<usize> = (1..=steps).map(|i| (i * n).div_ceil(steps)).collect();
        let alpha_bars: Vec<f64> = picks.iter().map(|&t| self.alpha_bar(t)).collect();
        let betas = alpha_bars
            .iter()
            .enumerate()
            .map(|(i, &ab)| {
                let prev = if i == 0 { 1.0 } else { alpha_bars[i - 1] };
                1.0 - ab / prev
            })
            .collect();
        Ok(Self {
            betas,
            alpha_bars,
            model_steps: picks.iter().map(|&t| self.model_steps[t - 1]).collect(),
            train_steps: self.train_steps,
        })
    }
}
