//! Pseudo-spectral solver for 2-D incompressible Navier-Stokes in vorticity
//! form on the unit torus:
//!
//! `w_t + u . grad w = nu lap w + f`, `div u = 0`, `lap psi = -w`,
//! `u = (psi_y, -psi_x)`.
//!
//! Time stepping is Crank-Nicolson on the viscous term and Heun on advection
//! and forcing. The advective term is evaluated in flux form in physical space
//! and truncated with the 2/3 rule, so the mean vorticity is untouched.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Domain, ScalarField2D};
use crate::spectral::{signed_freq, Fft2};

/// Largest admissible `dt * max|u| / dx`.
pub const CFL_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Forcing {
    None,
    /// `0.1 (sin(2 pi (x + y)) + cos(2 pi (x + y)))`.
    Benchmark,
}

impl Forcing {
    pub fn eval(self, x: f64, y: f64) -> f64 {
        match self {
            Forcing::None => 0.0,
            Forcing::Benchmark => {
                let s = 2.0 * PI * (x + y);
                0.1 * (s.sin() + s.cos())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NsSolverConfig {
    pub nu: f64,
    pub dt: f64,
    pub record_every: usize,
    pub dealias: bool,
    pub forcing: Forcing,
}

impl Default for NsSolverConfig {
    fn default() -> Self {
        Self { nu: 1e-5, dt: 1e-3, record_every: 1000, dealias: true, forcing: Forcing::Benchmark }
    }
}

impl NsSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(Error::InvalidParameter(format!("viscosity {} must be positive", self.nu)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("time step {} must be positive", self.dt)));
        }
        if self.record_every == 0 {
            return Err(Error::InvalidParameter("record_every must be positive".into()));
        }
        Ok(())
    }
}

/// Precomputed spectral operators for one grid and configuration.
pub struct NsSolver {
    n: usize,
    cfg: NsSolverConfig,
    fft: Fft2,
    /// `2 pi kx`, `2 pi ky` per bin.
    kx: Vec<f64>,
    ky: Vec<f64>,
    /// `4 pi^2 |k|^2`.
    lap: Vec<f64>,
    mask: Vec<f64>,
    forcing_hat: Vec<Complex64>,
    scratch: Scratch,
}

#[derive(Default)]
struct Scratch {
    u: Vec<Complex64>,
    v: Vec<Complex64>,
    w: Vec<Complex64>,
}

impl NsSolver {
    pub fn new(n: usize, cfg: NsSolverConfig) -> Result<Self> {
        cfg.validate()?;
        if n < 4 {
            return Err(Error::InvalidField(format!("NS grid {n} is too small")));
        }
        let fft = Fft2::new(n, n);
        let cutoff = n as i64 / 3;
        let mut kx = Vec::with_capacity(n * n);
        let mut ky = Vec::with_capacity(n * n);
        let mut lap = Vec::with_capacity(n * n);
        let mut mask = Vec::with_capacity(n * n);
        for j in 0..n {
            let fy = signed_freq(j, n);
            for i in 0..n {
                let fx = signed_freq(i, n);
                kx.push(2.0 * PI * fx as f64);
                ky.push(2.0 * PI * fy as f64);
                lap.push(4.0 * PI * PI * (fx * fx + fy * fy) as f64);
                let keep = !cfg.dealias || (fx.abs() <= cutoff && fy.abs() <= cutoff);
                mask.push(if keep { 1.0 } else { 0.0 });
            }
        }
        let forcing = ScalarField2D::from_fn(n, n, Domain::UnitTorus, |x, y| cfg.forcing.eval(x, y))?;
        let forcing_hat = fft.forward_real(forcing.values());
        Ok(Self { n, cfg, fft, kx, ky, lap, mask, forcing_hat, scratch: Scratch::default() })
    }

    /// Velocity components in spectral space from vorticity.
    fn velocity_hat(&self, w_hat: &[Complex64], u: &mut Vec<Complex64>, v: &mut Vec<Complex64>, masked: bool) {
        let i = Complex64::new(0.0, 1.0);
        u.clear();
        v.clear();
        for (k, &w) in w_hat.iter().enumerate() {
            let psi = if self.lap[k] > 0.0 { w / self.lap[k] } else { Complex64::default() };
            let m = if masked { self.mask[k] } else { 1.0 };
            u.push(i * self.ky[k] * psi * m);
            v.push(-i * self.kx[k] * psi * m);
        }
    }

    /// `-div(u w)` in spectral space; also returns `max |u|`.
    fn advection(&mut self, w_hat: &[Complex64]) -> (Vec<Complex64>, f64) {
        let mut scratch = std::mem::take(&mut self.scratch);
        self.velocity_hat(w_hat, &mut scratch.u, &mut scratch.v, true);
        scratch.w.clear();
        scratch.w.extend(w_hat.iter().zip(&self.mask).map(|(w, m)| w * m));
        self.fft.inverse(&mut scratch.u);
        self.fft.inverse(&mut scratch.v);
        self.fft.inverse(&mut scratch.w);

        let mut max_speed: f64 = 0.0;
        let mut flux_x: Vec<Complex64> = Vec::with_capacity(w_hat.len());
        let mut flux_y: Vec<Complex64> = Vec::with_capacity(w_hat.len());
        for k in 0..w_hat.len() {
            let (u, v, w) = (scratch.u[k].re, scratch.v[k].re, scratch.w[k].re);
            max_speed = max_speed.max((u * u + v * v).sqrt());
            flux_x.push(Complex64::new(u * w, 0.0));
            flux_y.push(Complex64::new(v * w, 0.0));
        }
        self.fft.forward(&mut flux_x);
        self.fft.forward(&mut flux_y);
        let i = Complex64::new(0.0, 1.0);
        let out = (0..w_hat.len())
            .map(|k| -(i * self.kx[k] * flux_x[k] + i * self.ky[k] * flux_y[k]) * self.mask[k])
            .collect();
        self.scratch = scratch;
        (out, max_speed)
    }

    fn check_cfl(&self, step: usize, max_speed: f64) -> Result<()> {
        if max_speed > 0.0 {
            let dx = 1.0 / self.n as f64;
            let bound = CFL_LIMIT * dx / max_speed;
            if self.cfg.dt > bound {
                return Err(Error::CflViolation { step, dt: self.cfg.dt, bound, limit: CFL_LIMIT });
            }
        }
        Ok(())
    }

    /// Advances `w_hat` by one step. `step` is only used for diagnostics.
    pub fn step(&mut self, w_hat: &mut [Complex64], step: usize) -> Result<()> {
        let dt = self.cfg.dt;
        let nu = self.cfg.nu;
        let (n0, max_speed) = self.advection(w_hat);
        self.check_cfl(step, max_speed)?;

        let mut predictor = Vec::with_capacity(w_hat.len());
        for k in 0..w_hat.len() {
            let a = 1.0 - 0.5 * dt * nu * self.lap[k];
            let b = 1.0 + 0.5 * dt * nu * self.lap[k];
            predictor.push((w_hat[k] * a + (n0[k] + self.forcing_hat[k]) * dt) / b);
        }
        let (n1, _) = self.advection(&predictor);
        for k in 0..w_hat.len() {
            let a = 1.0 - 0.5 * dt * nu * self.lap[k];
            let b = 1.0 + 0.5 * dt * nu * self.lap[k];
            w_hat[k] = (w_hat[k] * a + (n0[k] + n1[k]) * (0.5 * dt) + self.forcing_hat[k] * dt) / b;
        }
        if w_hat.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::NonFinite { step, context: "vorticity spectrum".into() });
        }
        Ok(())
    }

    fn to_field(&self, w_hat: &[Complex64]) -> Result<ScalarField2D> {
        let mut w = w_hat.to_vec();
        self.fft.inverse(&mut w);
        ScalarField2D::new(self.n, self.n, w.iter().map(|c| c.re).collect(), Domain::UnitTorus)
    }

    fn integrate(
        &mut self,
        w0: &ScalarField2D,
        t_end: f64,
        mut on_step: impl FnMut(&Self, usize, &[Complex64]) -> Result<()>,
    ) -> Result<Vec<Complex64>> {
        if w0.dims() != (self.n, self.n) {
            return Err(Error::GridMismatch { expected: (self.n, self.n), got: w0.dims() });
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::InvalidParameter(format!("t_end {t_end} must be positive")));
        }
        let steps = (t_end / self.cfg.dt).round() as usize;
        let mut w_hat = self.fft.forward_real(w0.values());
        for s in 1..=steps {
            self.step(&mut w_hat, s)?;
            on_step(self, s, &w_hat)?;
        }
        Ok(w_hat)
    }

    /// Integrates from `w0` to `t_end`, returning the snapshots at step
    /// multiples of `record_every` (including `t = 0`).
    pub fn run(&mut self, w0: &ScalarField2D, t_end: f64) -> Result<Vec<ScalarField2D>> {
        let mut snapshots = vec![w0.clone()];
        let every = self.cfg.record_every;
        self.integrate(w0, t_end, |solver, s, w_hat| {
            if s % every == 0 {
                snapshots.push(solver.to_field(w_hat)?);
            }
            Ok(())
        })?;
        Ok(snapshots)
    }

    /// The state at `t_end`, independent of `record_every`.
    pub fn advance(&mut self, w0: &ScalarField2D, t_end: f64) -> Result<ScalarField2D> {
        let w_hat = self.integrate(w0, t_end, |_, _, _| Ok(()))?;
        self.to_field(&w_hat)
    }
}

/// Solves from `w0` and returns snapshots at times `0, record_every*dt, ...`
/// up to `t_end`.
pub fn solve_ns_vorticity(w0: &ScalarField2D, cfg: &NsSolverConfig, t_end: f64) -> Result<Vec<ScalarField2D>> {
    let (nx, ny) = w0.dims();
    if nx != ny {
        return Err(Error::InvalidField(format!("NS grid must be square, got {nx}x{ny}")));
    }
    if w0.domain() != Domain::UnitTorus {
        return Err(Error::InvalidField("NS initial condition must live on the unit torus".into()));
    }
    NsSolver::new(nx, *cfg)?.run(w0, t_end)
}

/// Kinetic energy `0.5 * mean(|u|^2)` of the velocity induced by `w`.
pub fn kinetic_energy(w: &ScalarField2D) -> f64 {
    let (nx, ny) = w.dims();
    let fft = Fft2::new(nx, ny);
    let w_hat = fft.forward_real(w.values());
    let m = (nx * ny) as f64;
    let mut e = 0.0;
    for j in 0..ny {
        let fy = signed_freq(j, ny) as f64;
        for i in 0..nx {
            let fx = signed_freq(i, nx) as f64;
            let k2 = 4.0 * PI * PI * (fx * fx + fy * fy);
            if k2 > 0.0 {
                e += w_hat[j * nx + i].norm_sqr() / k2;
            }
        }
    }
    0.5 * e / (m * m)
}

/// Enstrophy `0.5 * mean(w^2)`.
pub fn enstrophy(w: &ScalarField2D) -> f64 {
    0.5 * w.values().iter().map(|v| v * v).sum::<f64>() / w.values().len() as f64
}
