//! Relative-L2 scoring, test-set evaluation and the strategy ablation grid.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::SplitDataset;
use crate::diffusion::{ddpm_sample, AnnealMode, NoisePredictor, NoiseSpec, SamplerConfig, VarianceSchedule};
use crate::error::{Error, Result};
use crate::fields::{denormalize, normalize, ChannelStack, DatasetStats, SampleRecord};
use crate::model::ModelConfig;
use crate::seed::{derive_seed, streams};
use crate::training::{train_loop, NullSink, TrainConfig};

/// `||y_hat - y|| / ||y||` over all channels.
pub fn relative_l2(y_hat: &ChannelStack, y: &ChannelStack) -> Result<f64> {
    if y_hat.dims() != y.dims() || y_hat.len() != y.len() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {}x{:?} vs reference {}x{:?}",
            y_hat.len(),
            y_hat.dims(),
            y.len(),
            y.dims()
        )));
    }
    let denom = y.l2_norm();
    if denom == 0.0 {
        return Err(Error::InvalidParameter("reference field has zero norm".into()));
    }
    let num: f64 = y_hat.to_flat().iter().zip(y.to_flat()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(num / denom)
}

/// Anything that maps a normalized condition to a normalized target sample.
pub trait Surrogate {
    fn predict(
        &self,
        condition: &ChannelStack,
        lead_time: Option<f64>,
        target_names: &[String],
        rng: &mut ChaCha8Rng,
    ) -> Result<ChannelStack>;
}

/// Ancestral sampling with a noise predictor.
pub struct DdpmSurrogate<'a, P> {
    pub predictor: &'a P,
    pub schedule: VarianceSchedule,
    pub deterministic_final: bool,
}

impl<'a, P: NoisePredictor> DdpmSurrogate<'a, P> {
    pub fn new(predictor: &'a P, train_schedule: &VarianceSchedule, sampler: &SamplerConfig) -> Result<Self> {
        Ok(Self {
            predictor,
            schedule: sampler.schedule(train_schedule)?,
            deterministic_final: sampler.deterministic_final,
        })
    }
}

impl<P: NoisePredictor> Surrogate for DdpmSurrogate<'_, P> {
    fn predict(
        &self,
        condition: &ChannelStack,
        lead_time: Option<f64>,
        target_names: &[String],
        rng: &mut ChaCha8Rng,
    ) -> Result<ChannelStack> {
        ddpm_sample(self.predictor, condition, lead_time, &self.schedule, target_names, rng, self.deterministic_final)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub sampler: SamplerConfig,
    /// Samples averaged per input before scoring.
    pub ensemble: usize,
    pub seed: u64,
    /// Score only the first `n` records.
    pub max_records: Option<usize>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { sampler: SamplerConfig::default(), ensemble: 1, seed: 0, max_records: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_sample: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    pub n_samples: usize,
    pub ensemble: usize,
    pub sampler: SamplerConfig,
    pub seed: u64,
}

impl EvalReport {
    pub fn from_errors(per_sample: Vec<f64>, options: &EvalOptions) -> Result<Self> {
        if per_sample.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let n = per_sample.len();
        let mean = per_sample.iter().sum::<f64>() / n as f64;
        let mut sorted = per_sample.clone();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        Ok(Self {
            max: sorted[n - 1],
            per_sample,
            mean,
            median,
            n_samples: n,
            ensemble: options.ensemble,
            sampler: options.sampler,
            seed: options.seed,
        })
    }

    /// `key=value` lines: a summary line followed by one line per sample.
    pub fn to_lines(&self) -> String {
        let steps = self.sampler.steps.map_or("full".to_string(), |s| s.to_string());
        let mut out = format!(
            "mean_rel_l2={} median_rel_l2={} max_rel_l2={} n_samples={} ensemble={} sampler_steps={} deterministic_final={} seed={}\n",
            self.mean, self.median, self.max, self.n_samples, self.ensemble, steps, self.sampler.deterministic_final, self.seed
        );
        for (i, e) in self.per_sample.iter().enumerate() {
            writeln!(out, "sample={i} rel_l2={e}").unwrap();
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample,rel_l2\n");
        for (i, e) in self.per_sample.iter().enumerate() {
            writeln!(out, "{i},{e}").unwrap();
        }
        out
    }
}

/// Per-record sampling seed; ensemble member `j > 0` uses a further derived
/// seed so member 0 is the default single-sample draw.
fn member_seed(seed: u64, record: usize, member: usize) -> u64 {
    let base = derive_seed(seed, streams::EVAL, record as u64);
    if member == 0 {
        base
    } else {
        derive_seed(base, streams::EVAL, member as u64)
    }
}

/// Physical-space prediction for one raw record: normalize the condition,
/// sample (averaging `ensemble` draws), denormalize.
pub fn predict_record(
    surrogate: &impl Surrogate,
    record: &SampleRecord,
    stats: &DatasetStats,
    index: usize,
    options: &EvalOptions,
) -> Result<ChannelStack> {
    if options.ensemble == 0 {
        return Err(Error::InvalidParameter("ensemble size must be at least 1".into()));
    }
    let cond = normalize(&record.condition, &stats.condition)?;
    let names = record.target.names();
    let mut sum: Option<Vec<f64>> = None;
    let mut template = None;
    for j in 0..options.ensemble {
        let mut rng = ChaCha8Rng::seed_from_u64(member_seed(options.seed, index, j));
        let s = surrogate.predict(&cond, record.lead_time, names, &mut rng)?;
        let flat = s.to_flat();
        match &mut sum {
            None => sum = Some(flat),
            Some(acc) => acc.iter_mut().zip(flat).for_each(|(a, v)| *a += v),
        }
        template.get_or_insert(s);
    }
    let template = template.unwrap();
    let k = options.ensemble as f64;
    let mean: Vec<f64> = sum.unwrap().into_iter().map(|v| v / k).collect();
    let (nx, ny) = template.dims();
    let pred = ChannelStack::from_flat(nx, ny, template.domain(), names.to_vec(), &mean)?;
    if pred.len() != stats.target.len() {
        return Err(Error::ChannelMismatch { expected: stats.target.len(), got: pred.len() });
    }
    denormalize(&pred, &stats.target)
}

/// Scores a surrogate on raw test records in physical space.
pub fn evaluate(
    surrogate: &impl Surrogate,
    test: &[SampleRecord],
    stats: &DatasetStats,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let n = options.max_records.map_or(test.len(), |m| m.min(test.len()));
    let errors = test[..n]
        .iter()
        .enumerate()
        .map(|(i, r)| relative_l2(&predict_record(surrogate, r, stats, i, options)?, &r.target))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_errors(errors, options)
}

pub fn evaluate_predictor(
    predictor: &impl NoisePredictor,
    train_schedule: &VarianceSchedule,
    test: &[SampleRecord],
    stats: &DatasetStats,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let s = DdpmSurrogate::new(predictor, train_schedule, &options.sampler)?;
    evaluate(&s, test, stats, options)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseStrategy {
    Gaussian,
    GaussianAnneal,
    Multires,
    MultiresAnneal,
}

impl NoiseStrategy {
    pub const ALL: [NoiseStrategy; 4] = [Self::Gaussian, Self::GaussianAnneal, Self::Multires, Self::MultiresAnneal];

    pub fn multires(self) -> bool {
        matches!(self, Self::Multires | Self::MultiresAnneal)
    }

    pub fn anneal(self) -> bool {
        matches!(self, Self::GaussianAnneal | Self::MultiresAnneal)
    }

    /// Noise spec for this strategy, keeping the base spec's scale layout for
    /// the multi-resolution cells.
    pub fn spec(self, base: &NoiseSpec, mode: AnnealMode) -> NoiseSpec {
        let mut s = if self.multires() { base.clone() } else { NoiseSpec::gaussian(false) };
        s.anneal = self.anneal();
        s.anneal_mode = mode;
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossStrategy {
    L1,
    L2,
    L1L2,
}

impl LossStrategy {
    pub const ALL: [LossStrategy; 3] = [Self::L1, Self::L2, Self::L1L2];

    /// `(lambda2, lambda1)` for this strategy, taking nonzero weights from
    /// the base config.
    pub fn weights(self, lambda2: f64, lambda1: f64) -> (f64, f64) {
        match self {
            Self::L1 => (0.0, lambda1),
            Self::L2 => (lambda2, 0.0),
            Self::L1L2 => (lambda2, lambda1),
        }
    }

    pub fn uses_l1(self) -> bool {
        self != Self::L2
    }

    pub fn uses_l2(self) -> bool {
        self != Self::L1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationCell {
    pub noise: NoiseStrategy,
    pub loss: LossStrategy,
}

impl AblationCell {
    pub fn name(&self) -> String {
        let n = match self.noise {
            NoiseStrategy::Gaussian => "gaussian",
            NoiseStrategy::GaussianAnneal => "gaussian+anneal",
            NoiseStrategy::Multires => "multires",
            NoiseStrategy::MultiresAnneal => "multires+anneal",
        };
        let l = match self.loss {
            LossStrategy::L1 => "l1",
            LossStrategy::L2 => "l2",
            LossStrategy::L1L2 => "l1+l2",
        };
        format!("{n}/{l}")
    }

    /// The base config with only the noise spec and loss weights replaced.
    pub fn apply(&self, base: &TrainConfig, mode: AnnealMode) -> TrainConfig {
        let (lambda2, lambda1) = self.loss.weights(base.lambda2, base.lambda1);
        TrainConfig { noise: self.noise.spec(&base.noise, mode), lambda1, lambda2, ..base.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationGrid {
    pub cells: Vec<AblationCell>,
    #[serde(default)]
    pub anneal_mode: AnnealMode,
}

impl AblationGrid {
    /// Every noise strategy with the combined loss.
    pub fn noise_grid() -> Self {
        Self {
            cells: NoiseStrategy::ALL.iter().map(|&noise| AblationCell { noise, loss: LossStrategy::L1L2 }).collect(),
            anneal_mode: AnnealMode::default(),
        }
    }

    /// Every loss strategy with annealed multi-resolution noise.
    pub fn loss_grid() -> Self {
        Self {
            cells: LossStrategy::ALL
                .iter()
                .map(|&loss| AblationCell { noise: NoiseStrategy::MultiresAnneal, loss })
                .collect(),
            anneal_mode: AnnealMode::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::InvalidParameter("ablation grid has no cells".into()));
        }
        for (i, c) in self.cells.iter().enumerate() {
            if self.cells[..i].contains(c) {
                return Err(Error::InvalidParameter(format!("duplicate ablation cell {}", c.name())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationTable {
    pub rows: Vec<(AblationCell, EvalReport)>,
}

pub const ABLATION_CSV_HEADER: &str =
    "cell,gaussian_noise,annealing,multires_noise,l1_loss,l2_loss,mean_rel_l2,median_rel_l2,max_rel_l2,n_samples";

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let flag = |b: bool| if b { 1 } else { 0 };
        let mut out = format!("{ABLATION_CSV_HEADER}\n");
        for (c, r) in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                c.name(),
                flag(!c.noise.multires()),
                flag(c.noise.anneal()),
                flag(c.noise.multires()),
                flag(c.loss.uses_l1()),
                flag(c.loss.uses_l2()),
                r.mean,
                r.median,
                r.max,
                r.n_samples
            )
            .unwrap();
        }
        out
    }

    pub fn to_lines(&self) -> String {
        self.rows
            .iter()
            .map(|(c, r)| {
                format!(
                    "cell={} mean_rel_l2={} median_rel_l2={} max_rel_l2={} n_samples={}\n",
                    c.name(),
                    r.mean,
                    r.median,
                    r.max,
                    r.n_samples
                )
            })
            .collect()
    }
}

/// Trains one model per cell with the same data, seed and budget and scores
/// each on the test split with its EMA weights.
pub fn run_ablation(
    grid: &AblationGrid,
    base: &TrainConfig,
    model: &ModelConfig,
    data: &SplitDataset,
    options: &EvalOptions,
    mut on_row: impl FnMut(&AblationCell, &EvalReport),
) -> Result<AblationTable> {
    grid.validate()?;
    let mut rows = Vec::with_capacity(grid.cells.len());
    for cell in &grid.cells {
        let cfg = cell.apply(base, grid.anneal_mode);
        let state = train_loop(data, model, &cfg, &mut NullSink, None)?;
        let report = evaluate_predictor(&state.ema_model(), &state.schedule()?, &data.test, &data.stats, options)?;
        on_row(cell, &report);
        rows.push((*cell, report));
    }
    Ok(AblationTable { rows })
}
