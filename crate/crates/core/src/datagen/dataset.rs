//! Train/test dataset builders for the two generated benchmarks.

use serde::{Deserialize, Serialize};

use super::darcy::{make_darcy_coefficient, solve_darcy, DarcySolverConfig};
use super::grf::{sample_grf, GrfKernel, GrfSpec};
use super::ns::{NsSolver, NsSolverConfig};
use crate::error::{Error, Result};
use crate::fields::{
    compute_norm_stats, resample_bilinear, subsample, ChannelStack, DatasetStats, Domain, SampleRecord, ScalarField2D,
};
use crate::seed::{derive_seed, streams};

/// A generated benchmark: training and test records plus the normalization
/// statistics of the training split.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Vec<SampleRecord>,
    pub test: Vec<SampleRecord>,
    pub stats: DatasetStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResamplePlan {
    Identity,
    Subsample(usize),
    Bilinear,
}

/// How a `base` grid is brought to `target`: exact subsampling when the
/// stride is an integer, bilinear interpolation otherwise.
pub fn resample_plan(base: usize, target: usize) -> Result<ResamplePlan> {
    if target < 2 {
        return Err(Error::ResolutionTooSmall(target));
    }
    if base == target {
        Ok(ResamplePlan::Identity)
    } else if target < base && (base - 1).is_multiple_of(target - 1) {
        Ok(ResamplePlan::Subsample((base - 1) / (target - 1)))
    } else {
        Ok(ResamplePlan::Bilinear)
    }
}

pub fn apply_resample(field: &ScalarField2D, target: usize) -> Result<ScalarField2D> {
    match resample_plan(field.nx(), target)? {
        ResamplePlan::Identity => Ok(field.clone()),
        ResamplePlan::Subsample(stride) => subsample(field, stride),
        ResamplePlan::Bilinear => resample_bilinear(field, target, target),
    }
}

fn check_counts(n_train: usize, n_test: usize) -> Result<()> {
    if n_train == 0 || n_test == 0 {
        return Err(Error::InvalidParameter(format!(
            "dataset sizes must be at least 1 (train {n_train}, test {n_test})"
        )));
    }
    Ok(())
}

fn split_seeds(seed: u64, n_train: usize, n_test: usize) -> Vec<u64> {
    (0..n_train as u64)
        .map(|i| derive_seed(seed, streams::TRAIN_RECORDS, i))
        .chain((0..n_test as u64).map(|i| derive_seed(seed, streams::TEST_RECORDS, i)))
        .collect()
}

fn finish(records: Vec<SampleRecord>, n_train: usize) -> Result<SplitDataset> {
    let mut train = records;
    let test = train.split_off(n_train);
    let stats = compute_norm_stats(&train)?;
    Ok(SplitDataset { train, test, stats })
}

fn with_coordinates(first: Vec<(String, ScalarField2D)>) -> Result<ChannelStack> {
    let (nx, ny) = first[0].1.dims();
    let (x, y) = ScalarField2D::coordinate_channels(nx, ny, first[0].1.domain())?;
    let (mut names, mut channels): (Vec<String>, Vec<ScalarField2D>) = first.into_iter().unzip();
    names.extend(["x".to_string(), "y".to_string()]);
    channels.extend([x.quantized(), y.quantized()]);
    ChannelStack::new(channels, names)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NsDatasetConfig {
    pub resolution: usize,
    pub solver: NsSolverConfig,
    /// Time between the last conditioning frame and the target.
    pub lead_time: f64,
    /// Number of conditioning frames, spaced one time unit apart.
    pub past_window: usize,
    pub kernel: GrfKernel,
}

impl Default for NsDatasetConfig {
    fn default() -> Self {
        Self {
            resolution: 64,
            solver: NsSolverConfig::default(),
            lead_time: 10.0,
            past_window: 1,
            kernel: GrfKernel::navier_stokes(),
        }
    }
}

/// The snapshot interval used for conditioning frames.
pub const NS_FRAME_INTERVAL: f64 = 1.0;

/// Generates one NS record from the initial-condition seed.
pub fn ns_record(cfg: &NsDatasetConfig, seed: u64) -> Result<SampleRecord> {
    if cfg.past_window == 0 {
        return Err(Error::InvalidParameter("past_window must be at least 1".into()));
    }
    if !(cfg.lead_time > 0.0) {
        return Err(Error::InvalidParameter(format!("lead time {} must be positive", cfg.lead_time)));
    }
    let n = cfg.resolution;
    let spec = GrfSpec { kernel: cfg.kernel, seed, domain: Domain::UnitTorus };
    let w_init = sample_grf(&spec, n, n)?;
    let mut solver = NsSolver::new(n, cfg.solver)?;

    let mut frames = vec![w_init];
    for _ in 1..cfg.past_window {
        let last = frames.last().unwrap();
        let next = solver.advance(last, NS_FRAME_INTERVAL)?;
        frames.push(next);
    }
    let target = solver.advance(frames.last().unwrap(), cfg.lead_time)?;

    let k = frames.len();
    let named = frames
        .into_iter()
        .enumerate()
        .map(|(i, f)| {
            let lag = k - 1 - i;
            let name = if lag == 0 { "w0".to_string() } else { format!("w-{lag}") };
            (name, f.quantized())
        })
        .collect();
    SampleRecord::new(with_coordinates(named)?, ChannelStack::single("wT", target.quantized()), Some(cfg.lead_time))
}

/// Builds the vorticity benchmark: condition `[w0, x, y]`, target `[w_T]`.
pub fn build_ns_dataset(n_train: usize, n_test: usize, cfg: &NsDatasetConfig, seed: u64) -> Result<SplitDataset> {
    check_counts(n_train, n_test)?;
    cfg.solver.validate()?;
    let steps = cfg.lead_time / cfg.solver.dt;
    if (steps - steps.round()).abs() > 1e-6 {
        return Err(Error::InvalidParameter(format!(
            "lead time {} is not a multiple of dt {}",
            cfg.lead_time, cfg.solver.dt
        )));
    }
    let records =
        split_seeds(seed, n_train, n_test).into_iter().map(|s| ns_record(cfg, s)).collect::<Result<Vec<_>>>()?;
    finish(records, n_train)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DarcyDatasetConfig {
    pub base_resolution: usize,
    pub target_resolution: usize,
    pub hi: f64,
    pub lo: f64,
    pub kernel: GrfKernel,
    pub forcing_value: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
}

impl Default for DarcyDatasetConfig {
    fn default() -> Self {
        let solver = DarcySolverConfig::default();
        Self {
            base_resolution: 421,
            target_resolution: 85,
            hi: 12.0,
            lo: 3.0,
            kernel: GrfKernel::darcy(),
            forcing_value: solver.forcing_value,
            cg_tol: solver.cg_tol,
            cg_max_iter: solver.cg_max_iter,
        }
    }
}

impl DarcyDatasetConfig {
    pub fn solver(&self) -> DarcySolverConfig {
        DarcySolverConfig {
            resolution: self.base_resolution,
            forcing_value: self.forcing_value,
            cg_tol: self.cg_tol,
            cg_max_iter: self.cg_max_iter,
        }
    }
}

/// Coefficient and solution at the base resolution.
pub fn darcy_pair(cfg: &DarcyDatasetConfig, seed: u64) -> Result<(ScalarField2D, ScalarField2D)> {
    let n = cfg.base_resolution;
    let spec = GrfSpec { kernel: cfg.kernel, seed, domain: Domain::UnitBox };
    let a = make_darcy_coefficient(&sample_grf(&spec, n, n)?, cfg.hi, cfg.lo)?;
    let u = solve_darcy(&a, &cfg.solver())?;
    Ok((a, u))
}

pub fn darcy_record(cfg: &DarcyDatasetConfig, seed: u64) -> Result<SampleRecord> {
    let (a, u) = darcy_pair(cfg, seed)?;
    let a = apply_resample(&a, cfg.target_resolution)?.quantized();
    let u = apply_resample(&u, cfg.target_resolution)?.quantized();
    SampleRecord::new(with_coordinates(vec![("a".into(), a)])?, ChannelStack::single("u", u), None)
}

/// Builds the porous-medium benchmark: condition `[a, x, y]`, target `[u]`,
/// solved at the base resolution and brought to the target grid.
pub fn build_darcy_dataset(n_train: usize, n_test: usize, cfg: &DarcyDatasetConfig, seed: u64) -> Result<SplitDataset> {
    check_counts(n_train, n_test)?;
    cfg.solver().validate()?;
    resample_plan(cfg.base_resolution, cfg.target_resolution)?;
    let records =
        split_seeds(seed, n_train, n_test).into_iter().map(|s| darcy_record(cfg, s)).collect::<Result<Vec<_>>>()?;
    finish(records, n_train)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plans() {
        assert_eq!(resample_plan(421, 85).unwrap(), ResamplePlan::Subsample(5));
        assert_eq!(resample_plan(421, 141).unwrap(), ResamplePlan::Subsample(3));
        assert_eq!(resample_plan(65, 65).unwrap(), ResamplePlan::Identity);
        assert_eq!(resample_plan(421, 41).unwrap(), ResamplePlan::Bilinear);
        assert_eq!(resample_plan(421, 58).unwrap(), ResamplePlan::Bilinear);
        assert!(resample_plan(421, 1).is_err());
    }

    #[test]
    fn darcy_shapes() {
        let cfg = DarcyDatasetConfig { base_resolution: 17, target_resolution: 9, ..Default::default() };
        let ds = build_darcy_dataset(2, 1, &cfg, 3).unwrap();
        assert_eq!(ds.train.len(), 2);
        assert_eq!(ds.test.len(), 1);
        let r = &ds.train[0];
        assert_eq!(r.dims(), (9, 9));
        assert_eq!(r.condition.names(), &["a", "x", "y"]);
        assert_eq!(r.target.names(), &["u"]);
        assert_eq!(r.lead_time, None);
        assert!(build_darcy_dataset(0, 1, &cfg, 3).is_err());
    }
}
