//! Steady Darcy flow `-div(a grad u) = f` on the unit box with `u = 0` on the
//! boundary.
//!
//! Cell-centred finite volumes on the vertex grid: every interior node owns a
//! control volume of side `h`, the four face conductivities are harmonic means
//! of the coefficient on either side, and the resulting symmetric positive
//! definite system is solved with Jacobi-preconditioned conjugate gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{Domain, ScalarField2D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DarcySolverConfig {
    pub resolution: usize,
    pub forcing_value: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for DarcySolverConfig {
    fn default() -> Self {
        Self { resolution: 421, forcing_value: 1.0, cg_tol: 1e-10, cg_max_iter: 50_000 }
    }
}

impl DarcySolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolution < 3 {
            return Err(Error::InvalidParameter(format!("Darcy resolution {} must be at least 3", self.resolution)));
        }
        if !(self.cg_tol > 0.0 && self.cg_tol < 1.0) {
            return Err(Error::InvalidParameter(format!("cg_tol {} must lie in (0, 1)", self.cg_tol)));
        }
        if self.cg_max_iter == 0 {
            return Err(Error::InvalidParameter("cg_max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Thresholds a random field into the two-phase coefficient: `hi` where the
/// field is nonnegative, `lo` elsewhere.
pub fn make_darcy_coefficient(grf: &ScalarField2D, hi: f64, lo: f64) -> Result<ScalarField2D> {
    if !(lo > 0.0) {
        return Err(Error::InvalidParameter(format!("coefficient lower value {lo} must be positive")));
    }
    if !(hi > lo) {
        return Err(Error::InvalidParameter(format!("hi = {hi} must exceed lo = {lo}")));
    }
    grf.map(|v| if v >= 0.0 { hi } else { lo })
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

/// The assembled five-point operator acting on interior unknowns.
#[derive(Debug, Clone)]
pub struct DarcyOperator {
    n: usize,
    inv_h2: f64,
    /// Conductivity of the face between `(i, j)` and `(i + 1, j)`, `(n-1) x n`.
    east: Vec<f64>,
    /// Conductivity of the face between `(i, j)` and `(i, j + 1)`, `n x (n-1)`.
    north: Vec<f64>,
}

impl DarcyOperator {
    pub fn new(a: &ScalarField2D) -> Result<Self> {
        let (n, ny) = a.dims();
        if n != ny {
            return Err(Error::InvalidField(format!("Darcy grid must be square, got {n}x{ny}")));
        }
        if n < 3 {
            return Err(Error::InvalidField("Darcy grid needs at least one interior node".into()));
        }
        if let Some(v) = a.values().iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::InvalidParameter(format!("coefficient value {v} is not positive")));
        }
        let mut east = vec![0.0; (n - 1) * n];
        let mut north = vec![0.0; n * (n - 1)];
        for j in 0..n {
            for i in 0..n - 1 {
                east[j * (n - 1) + i] = harmonic(a.at(i, j), a.at(i + 1, j));
            }
        }
        for j in 0..n - 1 {
            for i in 0..n {
                north[j * n + i] = harmonic(a.at(i, j), a.at(i, j + 1));
            }
        }
        let h = 1.0 / (n - 1) as f64;
        Ok(Self { n, inv_h2: 1.0 / (h * h), east, north })
    }

    /// Number of interior unknowns per axis.
    pub fn interior(&self) -> usize {
        self.n - 2
    }

    pub fn unknowns(&self) -> usize {
        self.interior() * self.interior()
    }

    #[inline]
    fn faces(&self, i: usize, j: usize) -> [f64; 4] {
        let n = self.n;
        [self.east[j * (n - 1) + i], self.east[j * (n - 1) + i - 1], self.north[j * n + i], self.north[(j - 1) * n + i]]
    }

    /// `out = A u` on interior unknowns, row-major over the interior block.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let m = self.interior();
        let get = |i: usize, j: usize| -> f64 {
            if i == 0 || j == 0 || i > m || j > m {
                0.0
            } else {
                u[(j - 1) * m + (i - 1)]
            }
        };
        for j in 1..=m {
            for i in 1..=m {
                let [e, w, nn, s] = self.faces(i, j);
                let up = get(i, j);
                out[(j - 1) * m + (i - 1)] = self.inv_h2
                    * (e * (up - get(i + 1, j))
                        + w * (up - get(i - 1, j))
                        + nn * (up - get(i, j + 1))
                        + s * (up - get(i, j - 1)));
            }
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let m = self.interior();
        let mut d = Vec::with_capacity(m * m);
        for j in 1..=m {
            for i in 1..=m {
                d.push(self.inv_h2 * self.faces(i, j).iter().sum::<f64>());
            }
        }
        d
    }

    /// Interior values of a full-grid field.
    pub fn restrict(&self, field: &ScalarField2D) -> Vec<f64> {
        let m = self.interior();
        let mut out = Vec::with_capacity(m * m);
        for j in 1..=m {
            for i in 1..=m {
                out.push(field.at(i, j));
            }
        }
        out
    }

    /// Embeds interior values into a full grid with zero boundary.
    pub fn extend(&self, interior: &[f64]) -> Result<ScalarField2D> {
        let (n, m) = (self.n, self.interior());
        let mut values = vec![0.0; n * n];
        for j in 1..=m {
            for i in 1..=m {
                values[j * n + i] = interior[(j - 1) * m + (i - 1)];
            }
        }
        ScalarField2D::new(n, n, values, Domain::UnitBox)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Relative residual `|f - A u| / |f|` over interior nodes.
pub fn darcy_residual(op: &DarcyOperator, u: &ScalarField2D, f: &ScalarField2D) -> f64 {
    let uu = op.restrict(u);
    let b = op.restrict(f);
    let mut au = vec![0.0; uu.len()];
    op.apply(&uu, &mut au);
    let r: Vec<f64> = b.iter().zip(&au).map(|(b, a)| b - a).collect();
    let bn = norm(&b);
    if bn == 0.0 {
        norm(&r)
    } else {
        norm(&r) / bn
    }
}

/// Solves with constant forcing `cfg.forcing_value`.
pub fn solve_darcy(a: &ScalarField2D, cfg: &DarcySolverConfig) -> Result<ScalarField2D> {
    let f = ScalarField2D::constant(a.nx(), a.ny(), cfg.forcing_value, Domain::UnitBox)?;
    solve_darcy_with_forcing(a, &f, cfg)
}

pub fn solve_darcy_with_forcing(
    a: &ScalarField2D,
    f: &ScalarField2D,
    cfg: &DarcySolverConfig,
) -> Result<ScalarField2D> {
    cfg.validate()?;
    if a.nx() != cfg.resolution {
        return Err(Error::InvalidParameter(format!(
            "coefficient grid {} does not match configured resolution {}",
            a.nx(),
            cfg.resolution
        )));
    }
    if f.dims() != a.dims() {
        return Err(Error::GridMismatch { expected: a.dims(), got: f.dims() });
    }
    let op = DarcyOperator::new(a)?;
    let b = op.restrict(f);
    let x = conjugate_gradient(&op, &b, cfg.cg_tol, cfg.cg_max_iter)?;
    let u = op.extend(&x)?;

    let residual = darcy_residual(&op, &u, f);
    if residual > 2.0 * cfg.cg_tol {
        return Err(Error::CgNotConverged { iterations: cfg.cg_max_iter, residual });
    }
    Ok(u)
}

fn conjugate_gradient(op: &DarcyOperator, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(x);
    }
    let inv_diag: Vec<f64> = op.diagonal().iter().map(|d| 1.0 / d).collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);

    for _ in 0..max_iter {
        op.apply(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        let rel = norm(&r) / b_norm;
        if !rel.is_finite() {
            return Err(Error::NonFinite { step: 0, context: "conjugate gradient residual".into() });
        }
        if rel <= tol {
            return Ok(x);
        }
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::CgNotConverged { iterations: max_iter, residual: norm(&r) / b_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cfg(n: usize) -> DarcySolverConfig {
        DarcySolverConfig { resolution: n, cg_tol: 1e-12, ..Default::default() }
    }

    #[test]
    fn coefficient_thresholding() {
        let g = ScalarField2D::new(2, 2, vec![0.5, -0.2, 0.0, -1.0], Domain::UnitBox).unwrap();
        let a = make_darcy_coefficient(&g, 12.0, 3.0).unwrap();
        assert_eq!(a.values(), &[12.0, 3.0, 12.0, 3.0]);
        let pos = ScalarField2D::constant(3, 3, 0.7, Domain::UnitBox).unwrap();
        assert!(make_darcy_coefficient(&pos, 12.0, 3.0).unwrap().values().iter().all(|&v| v == 12.0));
        assert!(make_darcy_coefficient(&g, 12.0, 0.0).is_err());
        assert!(make_darcy_coefficient(&g, 3.0, 3.0).is_err());
    }

    #[test]
    fn negated_field_swaps_values() {
        let g = ScalarField2D::new(3, 2, vec![0.5, -0.2, 0.3, -1.0, 2.0, -0.1], Domain::UnitBox).unwrap();
        let a = make_darcy_coefficient(&g, 12.0, 3.0).unwrap();
        let b = make_darcy_coefficient(&g.map(|v| -v).unwrap(), 12.0, 3.0).unwrap();
        for (x, y) in a.values().iter().zip(b.values()) {
            assert_eq!(x + y, 15.0);
        }
    }

    #[test]
    fn zero_forcing_gives_zero_solution() {
        let a = ScalarField2D::constant(9, 9, 1.0, Domain::UnitBox).unwrap();
        let c = DarcySolverConfig { forcing_value: 0.0, ..cfg(9) };
        let u = solve_darcy(&a, &c).unwrap();
        assert!(u.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn manufactured_solution_is_accurate() {
        let n = 33;
        let a = ScalarField2D::constant(n, n, 1.0, Domain::UnitBox).unwrap();
        let f = ScalarField2D::from_fn(n, n, Domain::UnitBox, |x, y| 2.0 * PI * PI * (PI * x).sin() * (PI * y).sin())
            .unwrap();
        let u = solve_darcy_with_forcing(&a, &f, &cfg(n)).unwrap();
        let exact = ScalarField2D::from_fn(n, n, Domain::UnitBox, |x, y| (PI * x).sin() * (PI * y).sin()).unwrap();
        let err = u.values().iter().zip(exact.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 2e-3, "max error {err}");
        assert!(u.values()[..n].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = ScalarField2D::constant(5, 4, 1.0, Domain::UnitBox).unwrap();
        assert!(solve_darcy(&a, &cfg(5)).is_err());
        let neg =
            ScalarField2D::new(3, 3, vec![1.0, 1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0, 1.0], Domain::UnitBox).unwrap();
        assert!(solve_darcy(&neg, &cfg(3)).is_err());
        let ok = ScalarField2D::constant(17, 17, 1.0, Domain::UnitBox).unwrap();
        let starved = DarcySolverConfig { cg_max_iter: 2, ..cfg(17) };
        assert!(matches!(solve_darcy(&ok, &starved), Err(Error::CgNotConverged { .. })));
    }
}
