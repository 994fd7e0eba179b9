//! Forward noising, the training objective, and ancestral sampling.

mod noise;
mod sampler;
mod schedule;

pub use noise::{anneal_strength, multires_noise, AnnealMode, MultiresNoise, NoiseSpec};
pub use sampler::{ddpm_sample, NoisePredictor, SamplerConfig};
pub use schedule::{make_schedule, VarianceSchedule, BETA_END, BETA_START};

use crate::error::{Error, Result};
use crate::fields::ChannelStack;

fn check_same_shape(a: &ChannelStack, b: &ChannelStack) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::GridMismatch { expected: a.dims(), got: b.dims() });
    }
    if a.len() != b.len() {
        return Err(Error::ChannelMismatch { expected: a.len(), got: b.len() });
    }
    Ok(())
}

fn combine(a: &ChannelStack, b: &ChannelStack, f: impl Fn(f64, f64) -> f64) -> Result<ChannelStack> {
    check_same_shape(a, b)?;
    let (nx, ny) = a.dims();
    let values: Vec<f64> = a.to_flat().iter().zip(b.to_flat()).map(|(&x, y)| f(x, y)).collect();
    ChannelStack::from_flat(nx, ny, a.domain(), a.names().to_vec(), &values)
}

/// `sqrt(abar) * y0 + sqrt(1 - abar) * eps` for an explicit `abar` in `[0, 1]`.
pub fn forward_diffuse_with(y0: &ChannelStack, eps: &ChannelStack, alpha_bar: f64) -> Result<ChannelStack> {
    if !(0.0..=1.0).contains(&alpha_bar) {
        return Err(Error::InvalidParameter(format!("alpha_bar {alpha_bar} outside [0, 1]")));
    }
    let (a, b) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    combine(y0, eps, |y, e| a * y + b * e)
}

/// Noisy target at step `t`.
pub fn forward_diffuse(
    y0: &ChannelStack,
    t: usize,
    eps: &ChannelStack,
    sched: &VarianceSchedule,
) -> Result<ChannelStack> {
    sched.check(t)?;
    forward_diffuse_with(y0, eps, sched.alpha_bar(t))
}

/// Clean-target estimate implied by a noise estimate at step `t`.
pub fn predict_x0(
    y_t: &ChannelStack,
    eps_hat: &ChannelStack,
    t: usize,
    sched: &VarianceSchedule,
) -> Result<ChannelStack> {
    sched.check(t)?;
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    combine(y_t, eps_hat, |y, e| (y - b * e) / a)
}

/// Loss value with its two components (means over all elements).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub loss: f64,
    pub mse: f64,
    pub l1: f64,
}

pub fn check_loss_weights(lambda2: f64, lambda1: f64) -> Result<()> {
    if !(lambda2 >= 0.0 && lambda1 >= 0.0) || !(lambda2.is_finite() && lambda1.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "loss weights must be finite and nonnegative (l2 {lambda2}, l1 {lambda1})"
        )));
    }
    if lambda2 == 0.0 && lambda1 == 0.0 {
        return Err(Error::InvalidParameter("loss weights cannot both be zero".into()));
    }
    Ok(())
}

/// `lambda2 * mean((e - e_hat)^2) + lambda1 * mean(|e - e_hat|)` over slices.
pub fn loss_parts(eps: &[f64], eps_hat: &[f64], lambda2: f64, lambda1: f64) -> Result<LossParts> {
    check_loss_weights(lambda2, lambda1)?;
    if eps.len() != eps_hat.len() || eps.is_empty() {
        return Err(Error::ShapeMismatch(format!("loss over {} and {} elements", eps.len(), eps_hat.len())));
    }
    let (mut sq, mut abs) = (0.0, 0.0);
    for (e, h) in eps.iter().zip(eps_hat) {
        let r = h - e;
        sq += r * r;
        abs += r.abs();
    }
    let n = eps.len() as f64;
    let (mse, l1) = (sq / n, abs / n);
    Ok(LossParts { loss: lambda2 * mse + lambda1 * l1, mse, l1 })
}

pub fn combined_loss(eps: &ChannelStack, eps_hat: &ChannelStack, lambda2: f64, lambda1: f64) -> Result<f64> {
    check_same_shape(eps, eps_hat)?;
    Ok(loss_parts(&eps.to_flat(), &eps_hat.to_flat(), lambda2, lambda1)?.loss)
}
