//! Regular-grid scalar fields, channel stacks and the per-channel
//! normalization shared by the solvers, the model and the evaluation code.
//!
//! Grids are vertex-centered and row-major with `x` varying fastest. On the
//! unit box the first and last samples sit on the boundary (`x_i = i/(nx-1)`);
//! on the unit torus the last sample is one spacing short of the period
//! (`x_i = i/nx`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    UnitTorus,
    UnitBox,
}

impl Domain {
    /// Physical coordinate of grid index `i` on an axis with `n` samples.
    pub fn coord(self, i: usize, n: usize) -> f64 {
        match self {
            Domain::UnitTorus => i as f64 / n as f64,
            Domain::UnitBox => i as f64 / (n - 1) as f64,
        }
    }

    pub fn spacing(self, n: usize) -> f64 {
        match self {
            Domain::UnitTorus => 1.0 / n as f64,
            Domain::UnitBox => 1.0 / (n - 1) as f64,
        }
    }
}

/// A single-channel field sampled on a regular `nx` x `ny` grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField2D {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
    domain: Domain,
}

impl ScalarField2D {
    pub fn new(nx: usize, ny: usize, values: Vec<f64>, domain: Domain) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidField(format!("grid {nx}x{ny} is smaller than 2x2")));
        }
        if values.len() != nx * ny {
            return Err(Error::InvalidField(format!("{} values for a {nx}x{ny} grid", values.len())));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite value at index {pos}")));
        }
        Ok(Self { nx, ny, values, domain })
    }

    pub fn zeros(nx: usize, ny: usize, domain: Domain) -> Result<Self> {
        Self::new(nx, ny, vec![0.0; nx * ny], domain)
    }

    pub fn constant(nx: usize, ny: usize, value: f64, domain: Domain) -> Result<Self> {
        Self::new(nx, ny, vec![value; nx * ny], domain)
    }

    /// Samples `f(x, y)` at the physical grid coordinates.
    pub fn from_fn(nx: usize, ny: usize, domain: Domain, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            let y = domain.coord(j, ny);
            for i in 0..nx {
                values.push(f(domain.coord(i, nx), y));
            }
        }
        Self::new(nx, ny, values, domain)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx + i]
    }

    /// Applies `f` elementwise; fails if the result is not finite.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.nx, self.ny, self.values.iter().map(|&v| f(v)).collect(), self.domain)
    }

    /// Rounds every value to the nearest 32-bit real, the storage precision of
    /// datasets.
    pub fn quantized(&self) -> Self {
        Self { values: self.values.iter().map(|&v| v as f32 as f64).collect(), ..self.clone() }
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Normalized coordinate channels `(x, y)` for this grid.
    pub fn coordinate_channels(nx: usize, ny: usize, domain: Domain) -> Result<(Self, Self)> {
        Ok((Self::from_fn(nx, ny, domain, |x, _| x)?, Self::from_fn(nx, ny, domain, |_, y| y)?))
    }
}

/// An ordered list of fields sharing one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStack {
    channels: Vec<ScalarField2D>,
    names: Vec<String>,
}

impl ChannelStack {
    pub fn new(channels: Vec<ScalarField2D>, names: Vec<String>) -> Result<Self> {
        let first = channels.first().ok_or(Error::EmptyStack)?;
        if names.len() != channels.len() {
            return Err(Error::ChannelMismatch { expected: channels.len(), got: names.len() });
        }
        let dims = first.dims();
        if let Some(bad) = channels.iter().find(|c| c.dims() != dims) {
            return Err(Error::GridMismatch { expected: dims, got: bad.dims() });
        }
        Ok(Self { channels, names })
    }

    pub fn single(name: impl Into<String>, field: ScalarField2D) -> Self {
        Self { channels: vec![field], names: vec![name.into()] }
    }

    /// Builds a stack from channel-major values (`channels * ny * nx`).
    pub fn from_flat(nx: usize, ny: usize, domain: Domain, names: Vec<String>, values: &[f64]) -> Result<Self> {
        let plane = nx * ny;
        if plane == 0 || values.len() != names.len() * plane {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {} channels of {nx}x{ny}",
                values.len(),
                names.len()
            )));
        }
        let channels =
            values.chunks(plane).map(|c| ScalarField2D::new(nx, ny, c.to_vec(), domain)).collect::<Result<Vec<_>>>()?;
        Self::new(channels, names)
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.channels[0].dims()
    }

    pub fn domain(&self) -> Domain {
        self.channels[0].domain()
    }

    pub fn channels(&self) -> &[ScalarField2D] {
        &self.channels
    }

    pub fn channel(&self, i: usize) -> &ScalarField2D {
        &self.channels[i]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Channel-major copy of all values.
    pub fn to_flat(&self) -> Vec<f64> {
        self.channels.iter().flat_map(|c| c.values().iter().copied()).collect()
    }

    pub fn num_values(&self) -> usize {
        let (nx, ny) = self.dims();
        nx * ny * self.len()
    }

    /// Splits after the first `at` channels. Both halves must be non-empty.
    pub fn split_at(&self, at: usize) -> Result<(ChannelStack, ChannelStack)> {
        if at == 0 || at >= self.len() {
            return Err(Error::EmptyStack);
        }
        Ok((
            Self { channels: self.channels[..at].to_vec(), names: self.names[..at].to_vec() },
            Self { channels: self.channels[at..].to_vec(), names: self.names[at..].to_vec() },
        ))
    }

    pub fn map_channels(&self, mut f: impl FnMut(usize, &ScalarField2D) -> Result<ScalarField2D>) -> Result<Self> {
        let channels = self.channels.iter().enumerate().map(|(i, c)| f(i, c)).collect::<Result<Vec<_>>>()?;
        Self::new(channels, self.names.clone())
    }

    pub fn quantized(&self) -> Self {
        Self { channels: self.channels.iter().map(ScalarField2D::quantized).collect(), names: self.names.clone() }
    }

    pub fn l2_norm(&self) -> f64 {
        self.channels.iter().map(|c| c.values().iter().map(|v| v * v).sum::<f64>()).sum::<f64>().sqrt()
    }
}

/// Stacks `a` followed by `b` along the channel axis.
pub fn concat_channels(a: &ChannelStack, b: &ChannelStack) -> Result<ChannelStack> {
    if a.dims() != b.dims() {
        return Err(Error::GridMismatch { expected: a.dims(), got: b.dims() });
    }
    let mut channels = a.channels.clone();
    channels.extend(b.channels.iter().cloned());
    let mut names = a.names.clone();
    names.extend(b.names.iter().cloned());
    ChannelStack::new(channels, names)
}

/// One input/output pair. `lead_time` is set only for time-dependent data.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub condition: ChannelStack,
    pub target: ChannelStack,
    pub lead_time: Option<f64>,
}

impl SampleRecord {
    pub fn new(condition: ChannelStack, target: ChannelStack, lead_time: Option<f64>) -> Result<Self> {
        if condition.dims() != target.dims() {
            return Err(Error::GridMismatch { expected: condition.dims(), got: target.dims() });
        }
        if let Some(t) = lead_time {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::InvalidParameter(format!("lead time {t} must be nonnegative")));
            }
        }
        Ok(Self { condition, target, lead_time })
    }

    pub fn dims(&self) -> (usize, usize) {
        self.condition.dims()
    }
}

/// Per-channel z-score statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn identity(channels: usize) -> Self {
        Self { mean: vec![0.0; channels], std: vec![1.0; channels] }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }
}

/// Statistics for both sides of a record, computed on a training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub condition: NormStats,
    pub target: NormStats,
}

impl DatasetStats {
    pub fn normalize_record(&self, record: &SampleRecord) -> Result<SampleRecord> {
        SampleRecord::new(
            normalize(&record.condition, &self.condition)?,
            normalize(&record.target, &self.target)?,
            record.lead_time,
        )
    }
}

/// Below this the channel is treated as constant and gets unit std.
const DEGENERATE_STD: f64 = 1e-12;

#[derive(Default, Clone, Copy)]
struct Welford {
    count: f64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.count += 1.0;
        let delta = x - self.mean;
        self.mean += delta / self.count;
        self.m2 += delta * (x - self.mean);
    }

    fn std(&self) -> f64 {
        let var = self.m2 / self.count;
        let std = var.max(0.0).sqrt();
        if std <= DEGENERATE_STD * self.mean.abs().max(1.0) {
            1.0
        } else {
            std
        }
    }
}

fn stats_over<'a>(stacks: impl Iterator<Item = &'a ChannelStack>, channels: usize) -> Result<NormStats> {
    let mut acc = vec![Welford::default(); channels];
    for stack in stacks {
        if stack.len() != channels {
            return Err(Error::ChannelMismatch { expected: channels, got: stack.len() });
        }
        for (w, field) in acc.iter_mut().zip(stack.channels()) {
            field.values().iter().for_each(|&v| w.push(v));
        }
    }
    Ok(NormStats { mean: acc.iter().map(|w| w.mean).collect(), std: acc.iter().map(Welford::std).collect() })
}

/// Population mean and standard deviation of every condition and target
/// channel over all records.
pub fn compute_norm_stats(dataset: &[SampleRecord]) -> Result<DatasetStats> {
    let first = dataset.first().ok_or(Error::EmptyDataset)?;
    Ok(DatasetStats {
        condition: stats_over(dataset.iter().map(|r| &r.condition), first.condition.len())?,
        target: stats_over(dataset.iter().map(|r| &r.target), first.target.len())?,
    })
}

pub fn normalize(stack: &ChannelStack, stats: &NormStats) -> Result<ChannelStack> {
    if stack.len() != stats.len() {
        return Err(Error::ChannelMismatch { expected: stats.len(), got: stack.len() });
    }
    stack.map_channels(|i, c| {
        let (m, s) = (stats.mean[i], stats.std[i]);
        c.map(|v| (v - m) / s)
    })
}

pub fn denormalize(stack: &ChannelStack, stats: &NormStats) -> Result<ChannelStack> {
    if stack.len() != stats.len() {
        return Err(Error::ChannelMismatch { expected: stats.len(), got: stack.len() });
    }
    stack.map_channels(|i, c| {
        let (m, s) = (stats.mean[i], stats.std[i]);
        c.map(|v| v * s + m)
    })
}

/// Keeps every `stride`-th grid line in both directions.
pub fn subsample(field: &ScalarField2D, stride: usize) -> Result<ScalarField2D> {
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be positive".into()));
    }
    for extent in [field.nx, field.ny] {
        if (extent - 1) % stride != 0 {
            return Err(Error::BadStride { stride, extent });
        }
    }
    let nx = (field.nx - 1) / stride + 1;
    let ny = (field.ny - 1) / stride + 1;
    let mut values = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            values.push(field.at(i * stride, j * stride));
        }
    }
    ScalarField2D::new(nx, ny, values, field.domain)
}

/// Interpolation stencil of one output sample along one axis: the lower
/// source index and the weight of the upper neighbour.
#[derive(Debug, Clone, Copy)]
pub(crate) struct AxisTap {
    pub lo: usize,
    pub frac: f64,
}

/// Corner-aligned linear interpolation taps from `n_in` to `n_out` samples.
pub(crate) fn axis_taps(n_in: usize, n_out: usize) -> Vec<AxisTap> {
    let scale = (n_in - 1) as f64 / (n_out - 1) as f64;
    (0..n_out)
        .map(|i| {
            let pos = i as f64 * scale;
            let lo = (pos.floor() as usize).min(n_in - 2);
            AxisTap { lo, frac: pos - lo as f64 }
        })
        .collect()
}

/// Bilinear resampling in index space with corner alignment.
pub fn resample_bilinear(field: &ScalarField2D, nx: usize, ny: usize) -> Result<ScalarField2D> {
    for n in [nx, ny] {
        if n < 2 {
            return Err(Error::ResolutionTooSmall(n));
        }
    }
    let values = resample_values(field.values(), field.nx, field.ny, nx, ny);
    ScalarField2D::new(nx, ny, values, field.domain)
}

pub(crate) fn resample_values(src: &[f64], nx_in: usize, ny_in: usize, nx: usize, ny: usize) -> Vec<f64> {
    let tx = axis_taps(nx_in, nx);
    let ty = axis_taps(ny_in, ny);
    let mut out = Vec::with_capacity(nx * ny);
    for y in &ty {
        let r0 = &src[y.lo * nx_in..(y.lo + 1) * nx_in];
        let r1 = &src[(y.lo + 1) * nx_in..(y.lo + 2) * nx_in];
        for x in &tx {
            let top = r0[x.lo] * (1.0 - x.frac) + r0[x.lo + 1] * x.frac;
            let bot = r1[x.lo] * (1.0 - x.frac) + r1[x.lo + 1] * x.frac;
            out.push(top * (1.0 - y.frac) + bot * y.frac);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_field(nx: usize, ny: usize, seed: u64) -> ScalarField2D {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..nx * ny).map(|_| rng.sample(StandardNormal)).collect();
        ScalarField2D::new(nx, ny, values, Domain::UnitBox).unwrap()
    }

    fn one(field: ScalarField2D) -> ChannelStack {
        ChannelStack::single("u", field)
    }

    #[test]
    fn field_rejects_bad_shapes() {
        assert!(ScalarField2D::new(1, 4, vec![0.0; 4], Domain::UnitBox).is_err());
        assert!(ScalarField2D::new(3, 3, vec![0.0; 8], Domain::UnitBox).is_err());
        assert!(ScalarField2D::new(2, 2, vec![0.0, f64::NAN, 0.0, 0.0], Domain::UnitBox).is_err());
    }

    #[test]
    fn constant_channel_gets_unit_std() {
        let rec = SampleRecord::new(
            one(ScalarField2D::zeros(4, 4, Domain::UnitBox).unwrap()),
            one(ScalarField2D::zeros(4, 4, Domain::UnitBox).unwrap()),
            None,
        )
        .unwrap();
        let stats = compute_norm_stats(&[rec]).unwrap();
        assert_eq!(stats.target.mean, vec![0.0]);
        assert_eq!(stats.target.std, vec![1.0]);
    }

    #[test]
    fn symmetric_channel_stats() {
        let f = ScalarField2D::new(2, 2, vec![-1.0, 1.0, 1.0, -1.0], Domain::UnitBox).unwrap();
        let rec = SampleRecord::new(one(f.clone()), one(f), None).unwrap();
        let stats = compute_norm_stats(&[rec]).unwrap();
        assert_eq!(stats.condition.mean[0], 0.0);
        assert!((stats.condition.std[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn stats_errors() {
        assert!(matches!(compute_norm_stats(&[]), Err(Error::EmptyDataset)));
        let a = SampleRecord::new(one(random_field(3, 3, 1)), one(random_field(3, 3, 2)), None).unwrap();
        let two = concat_channels(&one(random_field(3, 3, 3)), &one(random_field(3, 3, 4))).unwrap();
        let b = SampleRecord::new(two, one(random_field(3, 3, 5)), None).unwrap();
        assert!(matches!(compute_norm_stats(&[a, b]), Err(Error::ChannelMismatch { .. })));
    }

    #[test]
    fn normalize_identity_and_constant() {
        let f = one(random_field(5, 4, 3));
        assert_eq!(normalize(&f, &NormStats::identity(1)).unwrap(), f);

        let c = one(ScalarField2D::constant(4, 4, 2.5, Domain::UnitBox).unwrap());
        let stats = NormStats { mean: vec![2.5], std: vec![0.3] };
        assert!(normalize(&c, &stats).unwrap().channel(0).values().iter().all(|&v| v == 0.0));
        assert!(normalize(&c, &NormStats::identity(2)).is_err());
    }

    #[test]
    fn denormalize_arithmetic() {
        let zero = one(ScalarField2D::zeros(3, 3, Domain::UnitBox).unwrap());
        let stats = NormStats { mean: vec![4.0], std: vec![0.5] };
        assert!(denormalize(&zero, &stats).unwrap().channel(0).values().iter().all(|&v| v == 4.0));

        let ones = one(ScalarField2D::constant(3, 3, 1.0, Domain::UnitBox).unwrap());
        let stats = NormStats { mean: vec![0.0], std: vec![2.0] };
        assert!(denormalize(&ones, &stats).unwrap().channel(0).values().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn subsample_paper_resolutions() {
        let f = ScalarField2D::zeros(421, 421, Domain::UnitBox).unwrap();
        assert_eq!(subsample(&f, 5).unwrap().dims(), (85, 85));
        assert_eq!(subsample(&f, 3).unwrap().dims(), (141, 141));
        assert!(matches!(subsample(&f, 8), Err(Error::BadStride { .. })));
        let r = random_field(7, 5, 9);
        assert_eq!(subsample(&r, 1).unwrap(), r);
    }

    #[test]
    fn bilinear_exact_on_linear_fields() {
        let f = ScalarField2D::from_fn(8, 8, Domain::UnitBox, |x, y| x + y).unwrap();
        let up = resample_bilinear(&f, 16, 16).unwrap();
        let exact = ScalarField2D::from_fn(16, 16, Domain::UnitBox, |x, y| x + y).unwrap();
        let err = up.values().iter().zip(exact.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-6, "err {err}");

        let c = ScalarField2D::constant(5, 9, 3.25, Domain::UnitBox).unwrap();
        let r = resample_bilinear(&c, 13, 4).unwrap();
        assert!(r.values().iter().all(|&v| (v - 3.25).abs() < 1e-12));
        assert!(matches!(resample_bilinear(&c, 1, 4), Err(Error::ResolutionTooSmall(1))));
    }

    /// Variance of upsampled white noise, compared per position with the
    /// sum of squared interpolation weights computed from first principles.
    #[test]
    fn upsampled_white_noise_variance_matches_weight_oracle() {
        let (n_in, n_out) = (16usize, 64usize);
        // Oracle weights: output position maps to pos = i*(n_in-1)/(n_out-1);
        // the two neighbours get (1 - d) and d.
        let weight_sq = |i: usize| -> f64 {
            let pos = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
            let d = pos - pos.floor();
            (1.0 - d).powi(2) + d.powi(2)
        };
        let draws = 4000;
        let mut sum_sq = vec![0.0; n_out * n_out];
        for s in 0..draws {
            let f = random_field(n_in, n_in, 1000 + s);
            let up = resample_bilinear(&f, n_out, n_out).unwrap();
            for (acc, v) in sum_sq.iter_mut().zip(up.values()) {
                *acc += v * v;
            }
        }
        let mut worst: f64 = 0.0;
        let mut pooled = (0.0, 0.0);
        for j in 0..n_out {
            for i in 0..n_out {
                let expect = weight_sq(i) * weight_sq(j);
                let got = sum_sq[j * n_out + i] / draws as f64;
                pooled.0 += got;
                pooled.1 += expect;
                worst = worst.max(((got - expect) / expect).abs());
            }
        }
        assert!((pooled.0 / pooled.1 - 1.0).abs() < 0.01, "pooled {:?}", pooled);
        // 4000 draws: per-position relative sd ~ 2.2%, so 6 sd headroom.
        assert!(worst < 0.14, "worst per-position deviation {worst}");
    }

    #[test]
    fn concat_orders_and_splits() {
        let a = concat_channels(&one(random_field(4, 4, 1)), &one(random_field(4, 4, 2))).unwrap();
        let b = one(random_field(4, 4, 3));
        let s = concat_channels(&a, &b).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.channel(2), b.channel(0));
        let (a2, b2) = s.split_at(2).unwrap();
        assert_eq!((a2, b2), (a.clone(), b));
        assert!(matches!(ChannelStack::new(vec![], vec![]), Err(Error::EmptyStack)));
        assert!(concat_channels(&a, &one(random_field(5, 4, 4))).is_err());
    }

    proptest! {
        #[test]
        fn normalize_round_trip(seed in 0u64..1000, mean in -50.0f64..50.0, std in 0.01f64..20.0) {
            let f = one(random_field(6, 5, seed));
            let stats = NormStats { mean: vec![mean], std: vec![std] };
            let back = denormalize(&normalize(&f, &stats).unwrap(), &stats).unwrap();
            for (a, b) in f.channel(0).values().iter().zip(back.channel(0).values()) {
                prop_assert!((a - b).abs() <= 1e-6 * std.max(1.0));
            }
        }

        #[test]
        fn subsample_is_exact_subset(seed in 0u64..1000, stride in 1usize..4, cells in 1usize..5) {
            let n = stride * cells + 1;
            let f = random_field(n, n, seed);
            let s = subsample(&f, stride).unwrap();
            for j in 0..s.ny() {
                for i in 0..s.nx() {
                    prop_assert_eq!(s.at(i, j), f.at(i * stride, j * stride));
                }
            }
        }

        #[test]
        fn bilinear_reproduces_affine(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0,
                                      nx in 2usize..12, ny in 2usize..12, mx in 2usize..30, my in 2usize..30) {
            let f = ScalarField2D::from_fn(nx, ny, Domain::UnitBox, |x, y| a * x + b * y + c).unwrap();
            let r = resample_bilinear(&f, mx, my).unwrap();
            let e = ScalarField2D::from_fn(mx, my, Domain::UnitBox, |x, y| a * x + b * y + c).unwrap();
            for (u, v) in r.values().iter().zip(e.values()) {
                prop_assert!((u - v).abs() < 1e-6);
            }
        }
    }
}
