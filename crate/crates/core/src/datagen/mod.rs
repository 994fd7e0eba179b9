//! Reference solvers and random-field samplers that generate the benchmark
//! datasets.

pub mod darcy;
pub mod dataset;
pub mod grf;
pub mod ns;

pub use darcy::{
    darcy_residual, make_darcy_coefficient, solve_darcy, solve_darcy_with_forcing, DarcyOperator, DarcySolverConfig,
};
pub use dataset::{
    apply_resample, build_darcy_dataset, build_ns_dataset, darcy_pair, darcy_record, ns_record, resample_plan,
    DarcyDatasetConfig, NsDatasetConfig, ResamplePlan, SplitDataset,
};
pub use grf::{sample_grf, sample_grf_raw, GrfKernel, GrfSpec};
pub use ns::{enstrophy, kinetic_energy, solve_ns_vorticity, Forcing, NsSolver, NsSolverConfig, CFL_LIMIT};
