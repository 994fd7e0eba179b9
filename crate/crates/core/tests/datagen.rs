use std::f64::consts::PI;

use flowdiff_core::datagen::dataset::{resample_plan, ResamplePlan};
use flowdiff_core::datagen::{
    build_darcy_dataset, build_ns_dataset, enstrophy, kinetic_energy, make_darcy_coefficient, sample_grf, solve_darcy,
    solve_darcy_with_forcing, solve_ns_vorticity, DarcyDatasetConfig, DarcyOperator, DarcySolverConfig, Forcing,
    GrfKernel, GrfSpec, NsDatasetConfig, NsSolver, NsSolverConfig,
};
use flowdiff_core::fields::{subsample, Domain, ScalarField2D};
use flowdiff_core::seed::{derive_seed, streams};
use nalgebra::{DMatrix, DVector};

fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

/// Naive separable DFT, independent of the FFT used by the generator.
fn dft_power(values: &[f64], n: usize) -> Vec<f64> {
    let tw: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let a = -2.0 * PI * k as f64 / n as f64;
            (a.cos(), a.sin())
        })
        .collect();
    // rows
    let mut rows = vec![(0.0, 0.0); n * n];
    for j in 0..n {
        for k in 0..n {
            let (mut re, mut im) = (0.0, 0.0);
            for i in 0..n {
                let (c, s) = tw[(i * k) % n];
                re += values[j * n + i] * c;
                im += values[j * n + i] * s;
            }
            rows[j * n + k] = (re, im);
        }
    }
    let mut power = vec![0.0; n * n];
    for kx in 0..n {
        for ky in 0..n {
            let (mut re, mut im) = (0.0, 0.0);
            for j in 0..n {
                let (c, s) = tw[(j * ky) % n];
                let (a, b) = rows[j * n + kx];
                re += a * c - b * s;
                im += a * s + b * c;
            }
            power[ky * n + kx] = re * re + im * im;
        }
    }
    power
}

fn signed(i: usize, n: usize) -> f64 {
    if i <= n / 2 {
        i as f64
    } else {
        i as f64 - n as f64
    }
}

#[test]
fn grf_power_spectrum_matches_density_per_band() {
    let n = 32;
    let kernel = GrfKernel::darcy();
    let draws = 200;
    let bands = n / 2;
    let (mut emp, mut ana, mut count) = (vec![0.0; bands], vec![0.0; bands], vec![0usize; bands]);
    for seed in 0..draws {
        let spec = GrfSpec { kernel, seed, domain: Domain::UnitTorus };
        let f = sample_grf(&spec, n, n).unwrap();
        let p = dft_power(f.values(), n);
        for ky in 0..n {
            for kx in 0..n {
                let (fx, fy) = (signed(kx, n), signed(ky, n));
                let k = (fx * fx + fy * fy).sqrt().round() as usize;
                if k == 0 || k >= bands {
                    continue;
                }
                // |F|^2 / m^2 estimates the per-mode density
                emp[k] += p[ky * n + kx] / (n * n * n * n) as f64;
                if seed == 0 {
                    ana[k] += kernel.density(fx * fx + fy * fy);
                    count[k] += 1;
                }
            }
        }
    }
    for k in 1..bands {
        let e = emp[k] / (draws as usize * count[k]) as f64;
        let a = ana[k] / count[k] as f64;
        assert!((e / a - 1.0).abs() < 0.10, "band {k}: empirical {e:.4e} vs analytic {a:.4e}");
    }
}

#[test]
fn threshold_fraction_is_half_on_average() {
    let n = 64;
    let mut hi = 0usize;
    for seed in 0..200 {
        let spec = GrfSpec { kernel: GrfKernel::darcy(), seed, domain: Domain::UnitBox };
        let a = make_darcy_coefficient(&sample_grf(&spec, n, n).unwrap(), 12.0, 3.0).unwrap();
        hi += a.values().iter().filter(|&&v| v == 12.0).count();
    }
    let frac = hi as f64 / (200 * n * n) as f64;
    assert!((frac - 0.5).abs() < 0.03, "fraction {frac}");
}

fn random_coefficient(n: usize, seed: u64) -> ScalarField2D {
    let spec = GrfSpec { kernel: GrfKernel::darcy(), seed, domain: Domain::UnitBox };
    make_darcy_coefficient(&sample_grf(&spec, n, n).unwrap(), 12.0, 3.0).unwrap()
}

fn tight(n: usize) -> DarcySolverConfig {
    DarcySolverConfig { resolution: n, cg_tol: 1e-12, ..Default::default() }
}

/// Dense five-point matrix with harmonic face averages, assembled directly
/// from the coefficient.
fn dense_darcy(a: &ScalarField2D) -> DMatrix<f64> {
    let n = a.nx();
    let m = n - 2;
    let h2 = ((n - 1) as f64).powi(2);
    let harm = |p: f64, q: f64| 2.0 * p * q / (p + q);
    let idx = |i: usize, j: usize| (j - 1) * m + (i - 1);
    let mut mat = DMatrix::zeros(m * m, m * m);
    for j in 1..=m {
        for i in 1..=m {
            let r = idx(i, j);
            for (ni, nj) in [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)] {
                let k = harm(a.at(i, j), a.at(ni, nj)) * h2;
                mat[(r, r)] += k;
                if (1..=m).contains(&ni) && (1..=m).contains(&nj) {
                    mat[(r, idx(ni, nj))] -= k;
                }
            }
        }
    }
    mat
}

#[test]
fn darcy_cg_matches_dense_direct_solve() {
    let n = 33;
    let a = random_coefficient(n, 4);
    let u = solve_darcy(&a, &tight(n)).unwrap();
    let mat = dense_darcy(&a);
    let m = n - 2;
    let x = mat.cholesky().expect("SPD").solve(&DVector::from_element(m * m, 1.0));
    let interior: Vec<f64> = (1..=m).flat_map(|j| (1..=m).map(move |i| (i, j))).map(|(i, j)| u.at(i, j)).collect();
    let err = rel_l2(&interior, x.as_slice());
    assert!(err < 1e-8, "relative L2 {err:e}");
}

#[test]
fn darcy_discrete_energy_identity() {
    let n = 65;
    let a = random_coefficient(n, 9);
    let u = solve_darcy(&a, &tight(n)).unwrap();
    let op = DarcyOperator::new(&a).unwrap();
    let uu = op.restrict(&u);
    let mut au = vec![0.0; uu.len()];
    op.apply(&uu, &mut au);
    let uau: f64 = uu.iter().zip(&au).map(|(x, y)| x * y).sum();
    let uf: f64 = uu.iter().sum();
    assert!(((uau - uf) / uf).abs() < 1e-8, "{uau} vs {uf}");
}

#[test]
fn darcy_manufactured_second_order() {
    let errs: Vec<f64> = [17, 33, 65]
        .iter()
        .map(|&n| {
            let one = ScalarField2D::constant(n, n, 1.0, Domain::UnitBox).unwrap();
            let exact = |x: f64, y: f64| (PI * x).sin() * (PI * y).sin();
            let f = ScalarField2D::from_fn(n, n, Domain::UnitBox, |x, y| 2.0 * PI * PI * exact(x, y)).unwrap();
            let u = solve_darcy_with_forcing(&one, &f, &tight(n)).unwrap();
            let ue = ScalarField2D::from_fn(n, n, Domain::UnitBox, exact).unwrap();
            u.values().iter().zip(ue.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
        .collect();
    for w in errs.windows(2) {
        let r = w[0] / w[1];
        assert!((3.5..=4.5).contains(&r), "ratio {r} from {errs:?}");
    }
}

#[test]
fn darcy_two_resolution_consistency() {
    let a_fine = random_coefficient(421, 2);
    let u_fine = solve_darcy(&a_fine, &DarcySolverConfig::default()).unwrap();
    let a_coarse = subsample(&a_fine, 5).unwrap();
    let u_coarse = solve_darcy(&a_coarse, &DarcySolverConfig { resolution: 85, ..Default::default() }).unwrap();
    let gap = rel_l2(u_coarse.values(), subsample(&u_fine, 5).unwrap().values());
    assert!(gap < 2e-2, "gap {gap}");
}

fn taylor_green(n: usize) -> ScalarField2D {
    ScalarField2D::from_fn(n, n, Domain::UnitTorus, |x, y| -2.0 * (2.0 * PI * x).cos() * (2.0 * PI * y).cos()).unwrap()
}

fn unforced(nu: f64, dt: f64) -> NsSolverConfig {
    NsSolverConfig { nu, dt, record_every: 10, dealias: true, forcing: Forcing::None }
}

#[test]
fn taylor_green_decays_exponentially() {
    let (nu, t) = (1e-2, 0.1);
    let w0 = taylor_green(64);
    let snaps = solve_ns_vorticity(&w0, &unforced(nu, 1e-3), t).unwrap();
    let decay = (-8.0 * PI * PI * nu * t).exp();
    let expected: Vec<f64> = w0.values().iter().map(|v| v * decay).collect();
    let err = rel_l2(snaps.last().unwrap().values(), &expected);
    assert!(err < 1e-4, "relative L2 {err:e}");
}

fn ns_initial(n: usize, seed: u64) -> ScalarField2D {
    let spec = GrfSpec { kernel: GrfKernel::navier_stokes(), seed, domain: Domain::UnitTorus };
    sample_grf(&spec, n, n).unwrap()
}

#[test]
fn forced_mean_vorticity_is_conserved() {
    let w0 = ns_initial(32, 3);
    let cfg = NsSolverConfig { nu: 1e-3, record_every: 100, ..Default::default() };
    let snaps = solve_ns_vorticity(&w0, &cfg, 1.0).unwrap();
    let m0 = w0.mean();
    for s in &snaps {
        assert!((s.mean() - m0).abs() < 1e-10, "drift {}", s.mean() - m0);
    }
}

#[test]
fn unforced_energy_and_enstrophy_do_not_grow() {
    let w0 = ns_initial(32, 5);
    for nu in [1e-4, 1e-2, 1.0] {
        let snaps = solve_ns_vorticity(&w0, &unforced(nu, 1e-3), 0.2).unwrap();
        for pair in snaps.windows(2) {
            assert!(kinetic_energy(&pair[1]) <= kinetic_energy(&pair[0]), "energy grew at nu = {nu}");
        }
        if nu >= 1e-2 {
            for pair in snaps.windows(2) {
                assert!(enstrophy(&pair[1]) < enstrophy(&pair[0]), "enstrophy not decreasing at nu = {nu}");
            }
        }
    }
}

#[test]
fn richardson_self_convergence_is_second_order() {
    let w0 = ns_initial(32, 8);
    let t_end = 0.08;
    let run = |dt: f64| {
        let cfg = NsSolverConfig { nu: 1e-3, dt, record_every: 1, ..Default::default() };
        NsSolver::new(32, cfg).unwrap().advance(&w0, t_end).unwrap()
    };
    let sols: Vec<ScalarField2D> = [0.004, 0.002, 0.001, 0.0005].iter().map(|&dt| run(dt)).collect();
    let diffs: Vec<f64> = sols.windows(2).map(|w| rel_l2(w[0].values(), w[1].values())).collect();
    for d in diffs.windows(2) {
        let r = d[0] / d[1];
        assert!((3.5..=4.5).contains(&r), "ratio {r} from {diffs:?}");
    }
}

fn small_ns() -> NsDatasetConfig {
    NsDatasetConfig { resolution: 16, lead_time: 1.0, ..Default::default() }
}

#[test]
fn ns_dataset_shapes_and_determinism() {
    let ds = build_ns_dataset(2, 1, &small_ns(), 5).unwrap();
    assert_eq!(ds.train.len(), 2);
    assert_eq!(ds.train[0].condition.len(), 3);
    assert_eq!(ds.train[0].target.len(), 1);
    assert_eq!(ds.train[0].lead_time, Some(1.0));
    assert_eq!(ds, build_ns_dataset(2, 1, &small_ns(), 5).unwrap());
}

#[test]
fn ns_targets_match_independent_solve() {
    let cfg = small_ns();
    let ds = build_ns_dataset(2, 1, &cfg, 5).unwrap();
    for (i, r) in ds.train.iter().enumerate() {
        let seed = derive_seed(5, streams::TRAIN_RECORDS, i as u64);
        let w0 = sample_grf(&GrfSpec { kernel: cfg.kernel, seed, domain: Domain::UnitTorus }, 16, 16).unwrap();
        let snaps = solve_ns_vorticity(&w0, &cfg.solver, cfg.lead_time).unwrap();
        assert_eq!(r.target.channel(0), &snaps.last().unwrap().quantized());
        assert_eq!(r.condition.channel(0), &w0.quantized());
    }
}

#[test]
fn darcy_resolution_paths() {
    assert_eq!(resample_plan(421, 85).unwrap(), ResamplePlan::Subsample(5));
    assert_eq!(resample_plan(65, 65).unwrap(), ResamplePlan::Identity);
    let cfg = DarcyDatasetConfig { base_resolution: 65, target_resolution: 65, ..Default::default() };
    let ds = build_darcy_dataset(1, 1, &cfg, 1).unwrap();
    assert_eq!(ds.train[0].dims(), (65, 65));
}

#[test]
fn darcy_stats_match_two_pass_oracle() {
    let cfg = DarcyDatasetConfig { base_resolution: 33, target_resolution: 17, ..Default::default() };
    let ds = build_darcy_dataset(6, 1, &cfg, 21).unwrap();
    assert_eq!(ds, build_darcy_dataset(6, 1, &cfg, 21).unwrap());
    for (c, name) in ["a", "x", "y"].iter().enumerate() {
        assert_eq!(&ds.train[0].condition.names()[c], name);
        let vals: Vec<f64> = ds.train.iter().flat_map(|r| r.condition.channel(c).values().to_vec()).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!((ds.stats.condition.mean[c] - mean).abs() < 1e-12);
        assert!((ds.stats.condition.std[c] - var.sqrt()).abs() < 1e-12);
    }
}
