//! Spectral sampling of stationary Gaussian random fields.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Domain, ScalarField2D};
use crate::spectral::{signed_freq, Fft2};

/// Spectral density `scale^2 * (4 pi^2 |k|^2 + tau^2)^(-exponent)` of a
/// period-one field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrfKernel {
    pub tau: f64,
    pub exponent: f64,
    pub scale: f64,
}

impl GrfKernel {
    /// Coefficient field kernel of the Darcy benchmark.
    pub fn darcy() -> Self {
        Self { tau: 3.0, exponent: 2.0, scale: 3.0 }
    }

    /// Initial vorticity kernel of the Navier-Stokes benchmark.
    pub fn navier_stokes() -> Self {
        Self { tau: 7.0, exponent: 2.5, scale: 7f64.powf(1.5) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("GRF shift tau = {} must be > 0", self.tau)));
        }
        if !(self.exponent > 1.0 && self.exponent.is_finite()) {
            return Err(Error::InvalidParameter(format!("GRF exponent {} must be > 1", self.exponent)));
        }
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return Err(Error::InvalidParameter(format!("GRF scale {} must be >= 0", self.scale)));
        }
        Ok(())
    }

    /// Variance carried by a single Fourier mode with integer wavevector `k`.
    pub fn density(&self, k_sq: f64) -> f64 {
        let four_pi_sq = 4.0 * std::f64::consts::PI * std::f64::consts::PI;
        self.scale * self.scale * (four_pi_sq * k_sq + self.tau * self.tau).powf(-self.exponent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrfSpec {
    pub kernel: GrfKernel,
    pub seed: u64,
    pub domain: Domain,
}

/// Draws a zero-mean field with the kernel's spectral density.
///
/// White noise is transformed, coloured by the square root of the density and
/// transformed back, so Hermitian symmetry holds by construction. On the unit
/// box the field is sampled on the `(nx-1) x (ny-1)` torus and the periodic
/// image is appended as the last row and column.
pub fn sample_grf(spec: &GrfSpec, nx: usize, ny: usize) -> Result<ScalarField2D> {
    let (values, _) = sample_grf_raw(spec, nx, ny)?;
    ScalarField2D::new(nx, ny, values, spec.domain)
}

/// Like [`sample_grf`] but also reports the largest imaginary residue left by
/// the inverse transform.
pub fn sample_grf_raw(spec: &GrfSpec, nx: usize, ny: usize) -> Result<(Vec<f64>, f64)> {
    spec.kernel.validate()?;
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidField(format!("grid {nx}x{ny} is smaller than 2x2")));
    }
    let (mx, my) = match spec.domain {
        Domain::UnitTorus => (nx, ny),
        Domain::UnitBox => (nx - 1, ny - 1),
    };
    let m = (mx * my) as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let white: Vec<f64> = (0..mx * my).map(|_| rng.sample(StandardNormal)).collect();

    let fft = Fft2::new(mx, my);
    let mut spectrum = fft.forward_real(&white);
    // E|W_k|^2 = m for the transform of unit white noise; after the 1/m of the
    // inverse each mode then carries exactly `density(k)`.
    for j in 0..my {
        let ky = signed_freq(j, my) as f64;
        for i in 0..mx {
            let kx = signed_freq(i, mx) as f64;
            let c = &mut spectrum[j * mx + i];
            if i == 0 && j == 0 {
                *c = Complex64::default();
            } else {
                *c *= (spec.kernel.density(kx * kx + ky * ky) * m).sqrt();
            }
        }
    }
    fft.inverse(&mut spectrum);

    let residue = spectrum.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    let mut values = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            values.push(spectrum[(j % my) * mx + (i % mx)].re);
        }
    }
    Ok((values, residue))
}
