//! Noise-prediction training: step sampling, noising, the combined loss,
//! decoupled-weight-decay Adam with cosine decay, EMA weights and
//! bit-exact checkpoints.

use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{seq::SliceRandom, Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::container::{kinds, Container};
use crate::datagen::SplitDataset;
use crate::diffusion::{
    check_loss_weights, forward_diffuse, make_schedule, LossParts, MultiresNoise, NoiseSpec, VarianceSchedule,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_predictor, EvalOptions};
use crate::fields::{concat_channels, ChannelStack, DatasetStats, SampleRecord};
use crate::model::{Dit, ModelConfig, Params, Tape};
use crate::seed::{child_rng, derive_seed, streams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub total_steps: u64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Final learning rate as a fraction of the initial one (cosine decay).
    pub min_lr_ratio: f64,
    pub ema_decay: f64,
    /// Use `min(ema_decay, (1 + k) / (10 + k))` at update `k`, so short runs
    /// are not dominated by the initial weights.
    pub ema_warmup: bool,
    pub lambda1: f64,
    pub lambda2: f64,
    pub noise: NoiseSpec,
    pub schedule_steps: usize,
    pub seed: u64,
    /// Evaluate the EMA model every this many steps; 0 disables.
    pub eval_every: u64,
    pub eval: EvalOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 8,
            total_steps: 2000,
            learning_rate: 1e-4,
            weight_decay: 0.0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            min_lr_ratio: 0.1,
            ema_decay: 0.999,
            ema_warmup: true,
            lambda1: 1.0,
            lambda2: 1.0,
            noise: NoiseSpec::default(),
            schedule_steps: 1000,
            seed: 0,
            eval_every: 0,
            eval: EvalOptions {
                sampler: crate::diffusion::SamplerConfig { steps: Some(50), deterministic_final: true },
                max_records: Some(16),
                ..EvalOptions::default()
            },
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.ema_decay) {
            return bad(format!("ema_decay {} outside [0, 1)", self.ema_decay));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)".into());
        }
        if !(self.weight_decay >= 0.0) || !(self.adam_eps > 0.0) || !(0.0..=1.0).contains(&self.min_lr_ratio) {
            return bad("weight_decay >= 0, adam_eps > 0 and min_lr_ratio in [0, 1] required".into());
        }
        check_loss_weights(self.lambda2, self.lambda1)?;
        self.noise.validate()?;
        if self.schedule_steps == 0 {
            return bad("schedule_steps must be at least 1".into());
        }
        Ok(())
    }

    /// Learning rate for 0-based update index `k`.
    pub fn lr_at(&self, k: u64) -> f64 {
        if self.total_steps == 0 {
            return self.learning_rate;
        }
        let frac = (k as f64 / self.total_steps as f64).min(1.0);
        let cos = 0.5 * (1.0 + (std::f64::consts::PI * frac).cos());
        self.learning_rate * (self.min_lr_ratio + (1.0 - self.min_lr_ratio) * cos)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub model_config: ModelConfig,
    pub params: Params<f32>,
    pub ema: Params<f32>,
    pub adam_m: Params<f32>,
    pub adam_v: Params<f32>,
    /// Completed updates.
    pub step: u64,
    pub schedule_steps: usize,
    pub stats: DatasetStats,
    pub target_names: Vec<String>,
    pub rng: ChaCha8Rng,
    pub best_eval: Option<f64>,
}

impl TrainState {
    pub fn new(
        model_config: &ModelConfig,
        cfg: &TrainConfig,
        stats: DatasetStats,
        target_names: Vec<String>,
    ) -> Result<Self> {
        let params = Params::init(model_config, derive_seed(cfg.seed, streams::INIT, 0))?;
        Ok(Self {
            model_config: model_config.clone(),
            ema: params.clone(),
            adam_m: params.zeros_like(),
            adam_v: params.zeros_like(),
            params,
            step: 0,
            schedule_steps: cfg.schedule_steps,
            stats,
            target_names,
            rng: child_rng(cfg.seed, streams::TRAIN_NOISE, 0),
            best_eval: None,
        })
    }

    pub fn model(&self) -> Dit<f32> {
        Dit { config: self.model_config.clone(), params: self.params.clone() }
    }

    pub fn ema_model(&self) -> Dit<f32> {
        Dit { config: self.model_config.clone(), params: self.ema.clone() }
    }

    pub fn schedule(&self) -> Result<VarianceSchedule> {
        make_schedule(self.schedule_steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub loss: f64,
    pub mse: f64,
    pub l1: f64,
    pub grad_norm: f64,
    pub eval_rel_l2: Option<f64>,
}

impl fmt::Display for StepMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step={} loss={} mse={} l1={} grad_norm={} eval_rel_l2=",
            self.step, self.loss, self.mse, self.l1, self.grad_norm
        )?;
        match self.eval_rel_l2 {
            Some(e) => write!(f, "{e}"),
            None => write!(f, "NA"),
        }
    }
}

/// Squared-sum gradient norm over every parameter.
pub fn grad_norm(grads: &Params<f32>) -> f64 {
    grads.sq_norm().sqrt()
}

/// Forward and reverse pass over a normalized batch. Draws one step and one
/// noise seed per record from the state's generator.
pub fn compute_gradients(
    state: &mut TrainState,
    batch: &[&SampleRecord],
    cfg: &TrainConfig,
) -> Result<(Params<f32>, LossParts)> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let sched = state.schedule()?;
    let model = state.model();
    let mut tape = Tape::new();
    let mut residuals = Vec::with_capacity(batch.len());
    let (mut mse, mut l1) = (0.0, 0.0);
    let mut noise_gen: Option<((usize, usize), MultiresNoise)> = None;
    for r in batch {
        let t = state.rng.gen_range(1..=sched.len());
        let mut noise_rng = ChaCha8Rng::seed_from_u64(state.rng.next_u64());
        let (nx, ny) = r.dims();
        if noise_gen.as_ref().map(|(d, _)| *d) != Some((nx, ny)) {
            noise_gen = Some(((nx, ny), MultiresNoise::new(nx, ny, &cfg.noise)?));
        }
        let gen = &noise_gen.as_ref().unwrap().1;
        let mut eps = Vec::with_capacity(r.target.num_values());
        for _ in 0..r.target.len() {
            eps.extend(gen.sample(t, sched.len(), &mut noise_rng)?);
        }
        let eps = ChannelStack::from_flat(nx, ny, r.target.domain(), r.target.names().to_vec(), &eps)?;
        let y_t = forward_diffuse(&r.target, t, &eps, &sched)?;
        let input: Vec<f32> = concat_channels(&r.condition, &y_t)?.to_flat().into_iter().map(|v| v as f32).collect();
        let out = model.forward(&input, nx, ny, t, r.lead_time, Some(&mut tape))?;
        let res: Vec<f64> = out.iter().zip(eps.to_flat()).map(|(&h, e)| h as f64 - e).collect();
        let n = res.len() as f64;
        mse += res.iter().map(|v| v * v).sum::<f64>() / n;
        l1 += res.iter().map(|v| v.abs()).sum::<f64>() / n;
        residuals.push(res);
    }
    let b = batch.len() as f64;
    let (mse, l1) = (mse / b, l1 / b);
    let parts = LossParts { loss: cfg.lambda2 * mse + cfg.lambda1 * l1, mse, l1 };
    if !parts.loss.is_finite() {
        return Err(Error::NonFinite {
            step: state.step as usize + 1,
            context: format!("training loss {} (mse {}, l1 {})", parts.loss, parts.mse, parts.l1),
        });
    }
    let d_out: Vec<Vec<f32>> = residuals
        .iter()
        .map(|res| {
            let scale = 1.0 / (res.len() as f64 * b);
            res.iter().map(|&r| ((cfg.lambda2 * 2.0 * r + cfg.lambda1 * sign(r)) * scale) as f32).collect()
        })
        .collect();
    let grads = model.backward(&tape, &d_out)?;
    Ok((grads, parts))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One decoupled-weight-decay Adam update followed by the EMA update.
pub fn apply_update(state: &mut TrainState, grads: &Params<f32>, cfg: &TrainConfig) {
    let k = state.step;
    let lr = cfg.lr_at(k);
    let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
    let c1 = 1.0 - b1.powi((k + 1) as i32);
    let c2 = 1.0 - b2.powi((k + 1) as i32);
    let decay = if cfg.ema_warmup { cfg.ema_decay.min((1.0 + k as f64) / (10.0 + k as f64)) } else { cfg.ema_decay };
    let layers = state
        .params
        .linears_mut()
        .into_iter()
        .zip(state.adam_m.linears_mut())
        .zip(state.adam_v.linears_mut())
        .zip(state.ema.linears_mut())
        .zip(grads.linears().into_iter().map(|(_, l)| l));
    for ((((p, m), v), e), g) in layers {
        let tensors = [
            (
                p.weight.as_slice_mut().unwrap(),
                m.weight.as_slice_mut().unwrap(),
                v.weight.as_slice_mut().unwrap(),
                e.weight.as_slice_mut().unwrap(),
                g.weight.as_slice().unwrap(),
            ),
            (
                p.bias.as_slice_mut().unwrap(),
                m.bias.as_slice_mut().unwrap(),
                v.bias.as_slice_mut().unwrap(),
                e.bias.as_slice_mut().unwrap(),
                g.bias.as_slice().unwrap(),
            ),
        ];
        for (p, m, v, e, g) in tensors {
            for i in 0..p.len() {
                let gi = g[i] as f64;
                let mi = b1 * m[i] as f64 + (1.0 - b1) * gi;
                let vi = b2 * v[i] as f64 + (1.0 - b2) * gi * gi;
                let pi = p[i] as f64;
                let upd = (mi / c1) / ((vi / c2).sqrt() + cfg.adam_eps) + cfg.weight_decay * pi;
                let new = (pi - lr * upd) as f32;
                m[i] = mi as f32;
                v[i] = vi as f32;
                p[i] = new;
                e[i] = (decay * e[i] as f64 + (1.0 - decay) * new as f64) as f32;
            }
        }
    }
    state.step += 1;
}

pub fn train_step(state: &mut TrainState, batch: &[&SampleRecord], cfg: &TrainConfig) -> Result<StepMetrics> {
    let (grads, parts) = compute_gradients(state, batch, cfg)?;
    let norm = grad_norm(&grads);
    apply_update(state, &grads, cfg);
    Ok(StepMetrics {
        step: state.step,
        loss: parts.loss,
        mse: parts.mse,
        l1: parts.l1,
        grad_norm: norm,
        eval_rel_l2: None,
    })
}

/// Record indices for 0-based update `k`: a stream of per-epoch
/// permutations, each a pure function of `(seed, epoch)`.
pub fn batch_indices(seed: u64, n: usize, batch: usize, k: u64) -> Vec<usize> {
    let mut epoch_cache: Option<(u64, Vec<usize>)> = None;
    (0..batch as u64)
        .map(|j| {
            let pos = k * batch as u64 + j;
            let epoch = pos / n as u64;
            if epoch_cache.as_ref().map(|(e, _)| *e) != Some(epoch) {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(&mut child_rng(seed, streams::SHUFFLE, epoch));
                epoch_cache = Some((epoch, perm));
            }
            epoch_cache.as_ref().unwrap().1[(pos % n as u64) as usize]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckpointKind {
    Best,
    Last,
}

impl CheckpointKind {
    pub fn file_name(self) -> &'static str {
        match self {
            Self::Best => "best.dfd",
            Self::Last => "last.dfd",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// Receives metrics and checkpoints from [`train_loop`].
pub trait TrainSink {
    fn on_metrics(&mut self, _metrics: &StepMetrics) -> Result<Flow> {
        Ok(Flow::Continue)
    }

    fn on_checkpoint(&mut self, _state: &TrainState, _kind: CheckpointKind) -> Result<()> {
        Ok(())
    }
}

pub struct NullSink;

impl TrainSink for NullSink {}

/// Keeps everything in memory.
#[derive(Default)]
pub struct MemorySink {
    pub metrics: Vec<StepMetrics>,
    pub checkpoints: Vec<(CheckpointKind, u64)>,
    /// Stop after this many completed updates.
    pub stop_at: Option<u64>,
}

impl TrainSink for MemorySink {
    fn on_metrics(&mut self, m: &StepMetrics) -> Result<Flow> {
        self.metrics.push(*m);
        Ok(if self.stop_at == Some(m.step) { Flow::Stop } else { Flow::Continue })
    }

    fn on_checkpoint(&mut self, state: &TrainState, kind: CheckpointKind) -> Result<()> {
        self.checkpoints.push((kind, state.step));
        Ok(())
    }
}

/// Appends metric lines to a log file and writes checkpoints into a
/// directory.
pub struct DirSink {
    log: fs::File,
    checkpoint_dir: PathBuf,
    pub stop_at: Option<u64>,
}

impl DirSink {
    pub fn new(metrics_log: &Path, checkpoint_dir: &Path) -> Result<Self> {
        fs::create_dir_all(checkpoint_dir)?;
        Ok(Self {
            log: OpenOptions::new().create(true).append(true).open(metrics_log)?,
            checkpoint_dir: checkpoint_dir.to_path_buf(),
            stop_at: None,
        })
    }
}

impl TrainSink for DirSink {
    fn on_metrics(&mut self, m: &StepMetrics) -> Result<Flow> {
        writeln!(self.log, "{m}")?;
        Ok(if self.stop_at == Some(m.step) { Flow::Stop } else { Flow::Continue })
    }

    fn on_checkpoint(&mut self, state: &TrainState, kind: CheckpointKind) -> Result<()> {
        save_checkpoint(state, &self.checkpoint_dir.join(kind.file_name()))
    }
}

/// Trains on the normalized training split for `cfg.total_steps` updates
/// (or continues `resume`), evaluating the EMA model on the test split every
/// `cfg.eval_every` updates. Writes a best checkpoint on each eval
/// improvement and a last checkpoint when the loop ends.
pub fn train_loop(
    data: &SplitDataset,
    model_config: &ModelConfig,
    cfg: &TrainConfig,
    sink: &mut dyn TrainSink,
    resume: Option<TrainState>,
) -> Result<TrainState> {
    cfg.validate()?;
    let first = data.train.first().ok_or(Error::EmptyDataset)?;
    let want = first.condition.len() + first.target.len();
    if model_config.in_channels != want || model_config.out_channels != first.target.len() {
        return Err(Error::ChannelMismatch { expected: model_config.in_channels, got: want });
    }
    let train = data.train.iter().map(|r| data.stats.normalize_record(r)).collect::<Result<Vec<_>>>()?;
    let mut state = match resume {
        Some(s) => {
            if &s.model_config != model_config || s.schedule_steps != cfg.schedule_steps {
                return Err(Error::InvalidParameter("checkpoint does not match the run configuration".into()));
            }
            s
        }
        None => TrainState::new(model_config, cfg, data.stats.clone(), first.target.names().to_vec())?,
    };
    while state.step < cfg.total_steps {
        let idx = batch_indices(cfg.seed, train.len(), cfg.batch_size, state.step);
        let batch: Vec<&SampleRecord> = idx.iter().map(|&i| &train[i]).collect();
        let mut m = train_step(&mut state, &batch, cfg)?;
        if cfg.eval_every > 0 && m.step % cfg.eval_every == 0 && !data.test.is_empty() {
            let report =
                evaluate_predictor(&state.ema_model(), &state.schedule()?, &data.test, &data.stats, &cfg.eval)?;
            m.eval_rel_l2 = Some(report.mean);
            if state.best_eval.is_none_or(|b| report.mean < b) {
                state.best_eval = Some(report.mean);
                sink.on_checkpoint(&state, CheckpointKind::Best)?;
            }
        }
        if sink.on_metrics(&m)? == Flow::Stop {
            break;
        }
    }
    sink.on_checkpoint(&state, CheckpointKind::Last)?;
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RngRecord {
    seed: String,
    stream: u64,
    word_pos: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn unhex(s: &str) -> Result<[u8; 32]> {
    let bad = || Error::Container(format!("malformed rng seed {s}"));
    if s.len() != 64 {
        return Err(bad());
    }
    let mut out = [0u8; 32];
    for (i, o) in out.iter_mut().enumerate() {
        *o = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
    }
    Ok(out)
}

const PARAM_GROUPS: [&str; 4] = ["params", "ema", "adam_m", "adam_v"];

pub fn checkpoint_container(state: &TrainState) -> Result<Container> {
    let mut c = Container::new(kinds::CHECKPOINT);
    let shapes = state.params.tensor_shapes();
    for (group, p) in PARAM_GROUPS.iter().zip([&state.params, &state.ema, &state.adam_m, &state.adam_v]) {
        let values = p.to_vec();
        let mut offset = 0;
        for (name, shape) in &shapes {
            let n: usize = shape.iter().product();
            c.push(format!("{group}.{name}"), shape.clone(), values[offset..offset + n].to_vec())?;
            offset += n;
        }
    }
    c.set_meta("model_config", &state.model_config)?;
    c.set_meta("step", state.step)?;
    c.set_meta("schedule_steps", state.schedule_steps)?;
    c.set_meta("stats", &state.stats)?;
    c.set_meta("target_names", &state.target_names)?;
    c.set_meta("best_eval", state.best_eval)?;
    c.set_meta(
        "rng",
        RngRecord {
            seed: hex(&state.rng.get_seed()),
            stream: state.rng.get_stream(),
            word_pos: state.rng.get_word_pos().to_string(),
        },
    )?;
    Ok(c)
}

pub fn state_from_container(c: &Container) -> Result<TrainState> {
    c.require_kind(kinds::CHECKPOINT)?;
    let model_config: ModelConfig = c.meta("model_config")?;
    let template = Params::<f32>::init(&model_config, 0)?;
    let shapes = template.tensor_shapes();
    let mut groups = Vec::with_capacity(4);
    for group in PARAM_GROUPS {
        let mut values = Vec::with_capacity(template.num_params());
        for (name, shape) in &shapes {
            let a = c.get(&format!("{group}.{name}"))?;
            if &a.shape != shape {
                return Err(Error::Container(format!("{group}.{name} has shape {:?}, expected {shape:?}", a.shape)));
            }
            values.extend_from_slice(&a.data);
        }
        let mut p = template.clone();
        p.assign(&values)?;
        groups.push(p);
    }
    let rec: RngRecord = c.meta("rng")?;
    let mut rng = ChaCha8Rng::from_seed(unhex(&rec.seed)?);
    rng.set_stream(rec.stream);
    rng.set_word_pos(
        rec.word_pos.parse().map_err(|_| Error::Container(format!("malformed rng position {}", rec.word_pos)))?,
    );
    let adam_v = groups.pop().unwrap();
    let adam_m = groups.pop().unwrap();
    let ema = groups.pop().unwrap();
    let params = groups.pop().unwrap();
    Ok(TrainState {
        model_config,
        params,
        ema,
        adam_m,
        adam_v,
        step: c.meta("step")?,
        schedule_steps: c.meta("schedule_steps")?,
        stats: c.meta("stats")?,
        target_names: c.meta("target_names")?,
        rng,
        best_eval: c.meta("best_eval")?,
    })
}

pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    checkpoint_container(state)?.write(path)
}

pub fn load_checkpoint(path: &Path) -> Result<TrainState> {
    state_from_container(&Container::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{compute_norm_stats, Domain};

    fn toy_data(n: usize, seed: u64) -> SplitDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rec = |_| {
            let a: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let u: Vec<f64> = a.iter().map(|v| 0.5 * v + 0.1).collect();
            SampleRecord::new(
                ChannelStack::from_flat(8, 8, Domain::UnitBox, vec!["a".into()], &a).unwrap(),
                ChannelStack::from_flat(8, 8, Domain::UnitBox, vec!["u".into()], &u).unwrap(),
                None,
            )
            .unwrap()
        };
        let train: Vec<_> = (0..n).map(&mut rec).collect();
        let test: Vec<_> = (0..2).map(&mut rec).collect();
        let stats = compute_norm_stats(&train).unwrap();
        SplitDataset { train, test, stats }
    }

    fn small_cfg() -> (ModelConfig, TrainConfig) {
        let m = ModelConfig { width: 16, heads: 2, freq_dim: 16, ..ModelConfig::tiny(2, 1) };
        let t = TrainConfig {
            batch_size: 2,
            total_steps: 6,
            learning_rate: 1e-3,
            schedule_steps: 20,
            noise: NoiseSpec::multires(2, 0.5, true),
            eval: EvalOptions {
                sampler: crate::diffusion::SamplerConfig { steps: Some(5), deterministic_final: true },
                ..EvalOptions::default()
            },
            ..TrainConfig::default()
        };
        (m, t)
    }

    #[test]
    fn batches_are_permutations() {
        let n = 5;
        let mut seen: Vec<usize> = (0..5).flat_map(|k| batch_indices(3, n, 2, k)).collect();
        seen.truncate(n);
        seen.sort();
        assert_eq!(seen, (0..n).collect::<Vec<_>>());
        assert_eq!(batch_indices(3, n, 2, 4), batch_indices(3, n, 2, 4));
    }

    #[test]
    fn lr_schedule_ends_at_floor() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at(0), cfg.learning_rate);
        assert!((cfg.lr_at(cfg.total_steps) - 0.1 * cfg.learning_rate).abs() < 1e-18);
    }

    #[test]
    fn zero_steps_writes_one_checkpoint() {
        let data = toy_data(3, 0);
        let (m, mut t) = small_cfg();
        t.total_steps = 0;
        let mut sink = MemorySink::default();
        let s = train_loop(&data, &m, &t, &mut sink, None).unwrap();
        assert_eq!(s.step, 0);
        assert_eq!(sink.checkpoints, vec![(CheckpointKind::Last, 0)]);
        assert!(sink.metrics.is_empty());
        assert_eq!(s.ema, s.params);
    }

    #[test]
    fn eval_scheduling() {
        let data = toy_data(3, 0);
        let (m, t) = small_cfg();
        let t = TrainConfig { eval_every: t.total_steps, ..t };
        let mut sink = MemorySink::default();
        train_loop(&data, &m, &t, &mut sink, None).unwrap();
        assert_eq!(sink.metrics.iter().filter(|m| m.eval_rel_l2.is_some()).count(), 1);
        assert_eq!(sink.checkpoints, vec![(CheckpointKind::Best, 6), (CheckpointKind::Last, 6)]);
    }

    #[test]
    fn loss_decomposes() {
        let data = toy_data(3, 1);
        let (m, t) = small_cfg();
        for (l2, l1) in [(1.0, 0.0), (1.0, 1.0), (0.0, 2.0)] {
            let cfg = TrainConfig { lambda1: l1, lambda2: l2, ..t.clone() };
            let mut sink = MemorySink::default();
            train_loop(&data, &m, &cfg, &mut sink, None).unwrap();
            for s in &sink.metrics {
                assert_eq!(s.loss, l2 * s.mse + l1 * s.l1);
                if l1 == 0.0 {
                    assert_eq!(s.loss, s.mse);
                }
            }
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let data = toy_data(3, 2);
        let (m, t) = small_cfg();
        let s = train_loop(&data, &m, &t, &mut NullSink, None).unwrap();
        let c = checkpoint_container(&s).unwrap();
        let back = state_from_container(&Container::from_bytes(&c.to_bytes().unwrap()).unwrap()).unwrap();
        assert_eq!(back, s);
        assert_eq!(checkpoint_container(&back).unwrap().to_bytes().unwrap(), c.to_bytes().unwrap());
    }

    #[test]
    fn rejects_bad_config() {
        let t = TrainConfig { lambda1: 0.0, lambda2: 0.0, ..TrainConfig::default() };
        assert!(t.validate().is_err());
        let t = TrainConfig { batch_size: 0, ..TrainConfig::default() };
        assert!(t.validate().is_err());
    }
}
