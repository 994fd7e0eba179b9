//! Ancestral denoising from white Gaussian noise.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::schedule::VarianceSchedule;
use crate::error::{Error, Result};
use crate::fields::ChannelStack;

/// A noise estimator `eps_theta(y_t, x, t, T)`. `t` is the training-schedule
/// step the network was trained with.
pub trait NoisePredictor {
    fn predict_noise(
        &self,
        y_t: &ChannelStack,
        condition: &ChannelStack,
        t: usize,
        lead_time: Option<f64>,
    ) -> Result<ChannelStack>;
}

impl<F> NoisePredictor for F
where
    F: Fn(&ChannelStack, &ChannelStack, usize, Option<f64>) -> Result<ChannelStack>,
{
    fn predict_noise(
        &self,
        y_t: &ChannelStack,
        condition: &ChannelStack,
        t: usize,
        lead_time: Option<f64>,
    ) -> Result<ChannelStack> {
        self(y_t, condition, t, lead_time)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// Number of denoising steps; `None` runs the full training schedule,
    /// otherwise an evenly strided sub-schedule.
    pub steps: Option<usize>,
    /// Return the clean-target estimate of the last step directly instead of
    /// the ancestral update. The two agree in exact arithmetic.
    pub deterministic_final: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { steps: None, deterministic_final: true }
    }
}

impl SamplerConfig {
    pub fn schedule(&self, train: &VarianceSchedule) -> Result<VarianceSchedule> {
        match self.steps {
            None => Ok(train.clone()),
            Some(n) => train.strided(n),
        }
    }
}

/// Runs the reverse chain `t = T..1` and returns the denoised target in the
/// same (normalized) space the predictor was trained in.
pub fn ddpm_sample(
    predictor: &impl NoisePredictor,
    condition: &ChannelStack,
    lead_time: Option<f64>,
    sched: &VarianceSchedule,
    target_names: &[String],
    rng: &mut impl Rng,
    deterministic_final: bool,
) -> Result<ChannelStack> {
    if target_names.is_empty() {
        return Err(Error::EmptyStack);
    }
    let (nx, ny) = condition.dims();
    let domain = condition.domain();
    let n = target_names.len() * nx * ny;
    let mut y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();

    for t in (1..=sched.len()).rev() {
        let y_t = ChannelStack::from_flat(nx, ny, domain, target_names.to_vec(), &y)?;
        let eps = predictor.predict_noise(&y_t, condition, sched.model_step(t), lead_time)?;
        if eps.num_values() != n || eps.dims() != (nx, ny) {
            return Err(Error::ShapeMismatch(format!(
                "predictor returned {} values on {:?}, expected {n} on {:?}",
                eps.num_values(),
                eps.dims(),
                (nx, ny)
            )));
        }
        let eps = eps.to_flat();
        let (beta, ab) = (sched.beta(t), sched.alpha_bar(t));

        if t == 1 && deterministic_final {
            let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
            for (v, e) in y.iter_mut().zip(&eps) {
                *v = (*v - b * e) / a;
            }
        } else {
            let coef = beta / (1.0 - ab).sqrt();
            let scale = 1.0 / (1.0 - beta).sqrt();
            let sigma = if t > 1 { sched.posterior_variance(t).sqrt() } else { 0.0 };
            for (v, e) in y.iter_mut().zip(&eps) {
                *v = scale * (*v - coef * e);
                if sigma > 0.0 {
                    *v += sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: t, context: "denoising update".into() });
        }
    }
    ChannelStack::from_flat(nx, ny, domain, target_names.to_vec(), &y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{forward_diffuse, make_schedule, predict_x0};
    use crate::fields::Domain;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::cell::RefCell;

    fn cond(nx: usize, ny: usize) -> ChannelStack {
        let v: Vec<f64> = (0..nx * ny).map(|i| i as f64 * 0.1).collect();
        ChannelStack::from_flat(nx, ny, Domain::UnitBox, vec!["a".into()], &v).unwrap()
    }

    fn names() -> Vec<String> {
        vec!["u".into()]
    }

    fn zero_predictor(y: &ChannelStack, _: &ChannelStack, _: usize, _: Option<f64>) -> Result<ChannelStack> {
        y.map_channels(|_, c| c.map(|_| 0.0))
    }

    #[test]
    fn deterministic_given_seed() {
        let s = make_schedule(20).unwrap();
        let x = cond(4, 4);
        let run = |seed| {
            ddpm_sample(&zero_predictor, &x, None, &s, &names(), &mut ChaCha8Rng::seed_from_u64(seed), false).unwrap()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }

    #[test]
    fn visits_every_step_once() {
        for (sched, expect) in [
            (make_schedule(30).unwrap(), (1..=30).rev().collect::<Vec<_>>()),
            (make_schedule(30).unwrap().strided(3).unwrap(), vec![30, 20, 10]),
        ] {
            let seen = RefCell::new(Vec::new());
            let pred = |y: &ChannelStack, x: &ChannelStack, t, l| {
                seen.borrow_mut().push(t);
                zero_predictor(y, x, t, l)
            };
            ddpm_sample(&pred, &cond(4, 4), Some(1.0), &sched, &names(), &mut ChaCha8Rng::seed_from_u64(0), true)
                .unwrap();
            assert_eq!(seen.into_inner(), expect);
        }
    }

    #[test]
    fn single_step_with_oracle_noise_recovers_x0() {
        let s = make_schedule(1).unwrap();
        let x = cond(4, 4);
        let y0 = x.map_channels(|_, c| c.map(|v| (v * 3.0).sin())).unwrap();
        let y0 = ChannelStack::from_flat(4, 4, Domain::UnitBox, names(), &y0.to_flat()).unwrap();
        for det in [false, true] {
            let captured = RefCell::new(None);
            let pred = |y_t: &ChannelStack, _: &ChannelStack, t: usize, _| {
                // the exact noise that maps y0 to the given y_t
                let ab = s.alpha_bar(t);
                let e: Vec<f64> = y_t
                    .to_flat()
                    .iter()
                    .zip(y0.to_flat())
                    .map(|(y, y0)| (y - ab.sqrt() * y0) / (1.0 - ab).sqrt())
                    .collect();
                let e = ChannelStack::from_flat(4, 4, Domain::UnitBox, names(), &e)?;
                *captured.borrow_mut() = Some((y_t.clone(), e.clone()));
                Ok(e)
            };
            let out = ddpm_sample(&pred, &x, None, &s, &names(), &mut ChaCha8Rng::seed_from_u64(5), det).unwrap();
            let (y_t, e) = captured.into_inner().unwrap();
            assert_eq!(forward_diffuse(&y0, 1, &e, &s).unwrap().to_flat().len(), 16);
            let expect = predict_x0(&y_t, &e, 1, &s).unwrap();
            for ((a, b), c) in out.to_flat().iter().zip(expect.to_flat()).zip(y0.to_flat()) {
                assert!((a - b).abs() < 1e-9, "{a} vs {b}");
                assert!((a - c).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn deterministic_final_matches_ancestral_update() {
        let s = make_schedule(50).unwrap();
        let x = cond(4, 4);
        let pred = |y: &ChannelStack, _: &ChannelStack, t: usize, _| {
            y.map_channels(|_, c| c.map(|v| 0.3 * v + 0.01 * t as f64))
        };
        let a = ddpm_sample(&pred, &x, None, &s, &names(), &mut ChaCha8Rng::seed_from_u64(8), true).unwrap();
        let b = ddpm_sample(&pred, &x, None, &s, &names(), &mut ChaCha8Rng::seed_from_u64(8), false).unwrap();
        for (u, v) in a.to_flat().iter().zip(b.to_flat()) {
            assert!((u - v).abs() < 1e-10 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn non_finite_aborts_with_step() {
        let s = VarianceSchedule::from_betas(vec![0.9999; 3]).unwrap();
        let pred = |y: &ChannelStack, _: &ChannelStack, t: usize, _| {
            let v = if t == 2 { -1e308 } else { 0.0 };
            y.map_channels(|_, c| c.map(|_| v))
        };
        let err =
            ddpm_sample(&pred, &cond(2, 2), None, &s, &names(), &mut ChaCha8Rng::seed_from_u64(1), true).unwrap_err();
        assert!(matches!(err, Error::NonFinite { step: 2, .. }), "{err}");
    }
}
