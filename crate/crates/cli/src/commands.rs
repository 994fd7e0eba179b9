//! The six verbs. Each writes into a run directory laid out as
//! `{config.echo, run.json, metrics.log, checkpoints/, reports/, plots/}` and
//! re-reads every container it writes before reporting success.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use flowdiff_core::container::{
    decode_dataset, encode_dataset, kinds, push_stack, read_stack, write_atomic, Container,
};
use flowdiff_core::datagen::{build_darcy_dataset, build_ns_dataset, SplitDataset};
use flowdiff_core::eval::{predict_record, relative_l2, run_ablation, DdpmSurrogate, EvalOptions, EvalReport};
use flowdiff_core::fields::{DatasetStats, SampleRecord};
use flowdiff_core::training::{load_checkpoint, train_loop, CheckpointKind, DirSink, TrainState};
use serde_json::json;

use crate::cli::Args;
use crate::config::{Benchmark, LoadedConfig};
use crate::plot::{render_field, render_panel, write_image};

pub struct RunDir {
    pub root: PathBuf,
}

impl RunDir {
    /// Creates the layout and echoes the config, seed and version.
    pub fn create(root: &Path, command: &str, cfg: &LoadedConfig, seed: Option<u64>) -> Result<Self> {
        for sub in ["", "checkpoints", "reports", "plots"] {
            fs::create_dir_all(root.join(sub)).with_context(|| format!("creating {}", root.join(sub).display()))?;
        }
        write_atomic(&root.join("config.echo"), cfg.text.as_bytes())?;
        let info = json!({
            "command": command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": seed,
            "config": cfg.config,
        });
        write_atomic(&root.join("run.json"), serde_json::to_string_pretty(&info)?.as_bytes())?;
        Ok(Self { root: root.to_path_buf() })
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }

    pub fn plots(&self) -> PathBuf {
        self.root.join("plots")
    }
}

fn load_config(args: &Args) -> Result<LoadedConfig> {
    let cfg = match &args.config {
        Some(p) => LoadedConfig::load(p)?,
        None => LoadedConfig::defaults(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(args: &Args) -> Result<&Path> {
    args.out.as_deref().ok_or_else(|| anyhow!("--out is required"))
}

pub fn read_dataset(path: &Path) -> Result<(Vec<SampleRecord>, DatasetStats)> {
    let c = Container::read(path).with_context(|| format!("reading dataset {}", path.display()))?;
    Ok(decode_dataset(&c)?)
}

/// Train and test splits from `--dataset DIR` or the config's data paths.
fn load_split(args: &Args, cfg: &LoadedConfig) -> Result<SplitDataset> {
    let (train, test) = match &args.dataset {
        Some(d) if d.is_dir() => (d.join("train.dfd"), d.join("test.dfd")),
        Some(d) => bail!("--dataset {} must be a directory holding train.dfd and test.dfd", d.display()),
        None => {
            let p = &cfg.config.data;
            match (&p.train, &p.test) {
                (Some(a), Some(b)) => (cfg.resolve(a), cfg.resolve(b)),
                _ => bail!("no dataset: pass --dataset DIR or set data.train and data.test"),
            }
        }
    };
    let (train, stats) = read_dataset(&train)?;
    let (test, _) = read_dataset(&test)?;
    Ok(SplitDataset { train, test, stats })
}

/// Records to score: `--dataset FILE`, `--dataset DIR` (its test split) or
/// the config's test path.
fn load_eval_records(args: &Args, cfg: &LoadedConfig) -> Result<Vec<SampleRecord>> {
    let path = match &args.dataset {
        Some(d) if d.is_dir() => d.join("test.dfd"),
        Some(d) => d.clone(),
        None => cfg
            .config
            .data
            .test
            .as_ref()
            .map(|p| cfg.resolve(p))
            .ok_or_else(|| anyhow!("no dataset: pass --dataset or set data.test"))?,
    };
    Ok(read_dataset(&path)?.0)
}

pub fn parse_indices(s: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        if let Some((a, b)) = part.split_once('-') {
            let (a, b): (usize, usize) = (a.parse()?, b.parse()?);
            ensure!(a <= b, "bad index range {part}");
            out.extend(a..=b);
        } else {
            out.push(part.parse().with_context(|| format!("bad index {part}"))?);
        }
    }
    ensure!(!out.is_empty(), "empty index list");
    Ok(out)
}

fn eval_options(args: &Args, cfg: &LoadedConfig) -> EvalOptions {
    let mut o = cfg.config.eval.clone();
    if let Some(s) = args.seed {
        o.seed = s;
    }
    if let Some(k) = args.ensemble {
        o.ensemble = k;
    }
    o
}

fn verify_container(path: &Path, expect: &Container) -> Result<()> {
    let back = Container::read(path)?;
    ensure!(&back == expect, "load-back verification failed for {}", path.display());
    Ok(())
}

pub fn datagen(args: &Args) -> Result<()> {
    let cfg = load_config(args)?;
    let mut g = cfg.config.datagen.clone();
    if let Some(s) = args.seed {
        g.seed = s;
    }
    let dir = RunDir::create(out_dir(args)?, "datagen", &cfg, Some(g.seed))?;
    let ds = match g.benchmark {
        Benchmark::Darcy => build_darcy_dataset(g.n_train, g.n_test, &g.darcy, g.seed)?,
        Benchmark::NavierStokes => build_ns_dataset(g.n_train, g.n_test, &g.navier_stokes, g.seed)?,
    };
    let echo = serde_json::to_value(&g)?;
    for (split, records) in [("train", &ds.train), ("test", &ds.test)] {
        let c = encode_dataset(records, &ds.stats, split, &echo)?;
        let path = dir.root.join(format!("{split}.dfd"));
        c.write(&path)?;
        verify_container(&path, &c)?;
        let (back, stats) = read_dataset(&path)?;
        ensure!(&back == records && stats == ds.stats, "dataset {split} does not round-trip");
    }
    println!("wrote {} train and {} test records to {}", ds.train.len(), ds.test.len(), dir.root.display());
    Ok(())
}

pub fn train(args: &Args) -> Result<()> {
    let cfg = load_config(args)?;
    let data = load_split(args, &cfg)?;
    let mut tc = cfg.config.train.clone();
    if let Some(s) = args.seed {
        tc.seed = s;
    }
    let first = &data.train[0];
    let mut mc = cfg.config.model.clone();
    mc.in_channels = first.condition.len() + first.target.len();
    mc.out_channels = first.target.len();

    let dir = RunDir::create(out_dir(args)?, "train", &cfg, Some(tc.seed))?;
    let log = dir.root.join("metrics.log");
    let resume = match &args.checkpoint {
        Some(p) => Some(load_checkpoint(p).with_context(|| format!("loading checkpoint {}", p.display()))?),
        None => {
            // a fresh run starts a fresh log
            write_atomic(&log, b"")?;
            None
        }
    };
    let mut sink = DirSink::new(&log, &dir.checkpoints())?;
    let state = train_loop(&data, &mc, &tc, &mut sink, resume)?;
    let last = dir.checkpoints().join(CheckpointKind::Last.file_name());
    ensure!(load_checkpoint(&last)? == state, "checkpoint load-back verification failed");
    let summary = format!(
        "steps={} best_eval_rel_l2={}\n",
        state.step,
        state.best_eval.map_or("NA".to_string(), |b| b.to_string())
    );
    write_atomic(&dir.reports().join("train_summary.txt"), summary.as_bytes())?;
    print!("{summary}");
    Ok(())
}

fn encode_predictions(
    indices: &[usize],
    preds: &[(flowdiff_core::fields::ChannelStack, &SampleRecord)],
) -> Result<Container> {
    let mut c = Container::new(kinds::PREDICTION);
    for (k, (pred, rec)) in preds.iter().enumerate() {
        push_stack(&mut c, &format!("r{k}.prediction"), pred)?;
        push_stack(&mut c, &format!("r{k}.target"), &rec.target)?;
    }
    c.set_meta("indices", indices)?;
    Ok(c)
}

/// `(dataset index, prediction, target)` triples from a prediction container.
pub fn decode_predictions(
    c: &Container,
) -> Result<Vec<(usize, flowdiff_core::fields::ChannelStack, flowdiff_core::fields::ChannelStack)>> {
    c.require_kind(kinds::PREDICTION)?;
    let indices: Vec<usize> = c.meta("indices")?;
    indices
        .iter()
        .enumerate()
        .map(|(k, &i)| Ok((i, read_stack(c, &format!("r{k}.prediction"))?, read_stack(c, &format!("r{k}.target"))?)))
        .collect()
}

/// Writes a prediction container whose predictions are given fields; used to
/// score externally produced or rigged predictions with `eval`.
pub fn write_predictions(
    path: &Path,
    indices: &[usize],
    preds: &[(flowdiff_core::fields::ChannelStack, &SampleRecord)],
) -> Result<()> {
    let c = encode_predictions(indices, preds)?;
    c.write(path)?;
    verify_container(path, &c)
}

fn load_state(args: &Args) -> Result<TrainState> {
    let p = args.checkpoint.as_ref().ok_or_else(|| anyhow!("--checkpoint is required"))?;
    load_checkpoint(p).with_context(|| format!("loading checkpoint {}", p.display()))
}

pub fn sample(args: &Args) -> Result<()> {
    let cfg = load_config(args)?;
    let state = load_state(args)?;
    let records = load_eval_records(args, &cfg)?;
    let opts = eval_options(args, &cfg);
    let indices = match &args.indices {
        Some(s) => parse_indices(s)?,
        None => (0..records.len()).collect(),
    };
    if let Some(&bad) = indices.iter().find(|&&i| i >= records.len()) {
        bail!("index {bad} out of range for {} records", records.len());
    }
    let dir = RunDir::create(out_dir(args)?, "sample", &cfg, Some(opts.seed))?;
    let model = state.ema_model();
    let surrogate = DdpmSurrogate::new(&model, &state.schedule()?, &opts.sampler)?;
    let preds = indices
        .iter()
        .map(|&i| Ok((predict_record(&surrogate, &records[i], &state.stats, i, &opts)?, &records[i])))
        .collect::<Result<Vec<_>>>()?;
    let path = dir.root.join("predictions.dfd");
    write_predictions(&path, &indices, &preds)?;
    println!("wrote {} predictions to {}", preds.len(), path.display());
    Ok(())
}

pub fn eval(args: &Args) -> Result<()> {
    let cfg = load_config(args)?;
    let ck = args.checkpoint.as_ref().ok_or_else(|| anyhow!("--checkpoint is required"))?;
    let container = Container::read(ck).with_context(|| format!("reading {}", ck.display()))?;
    let opts = eval_options(args, &cfg);
    let dir = RunDir::create(out_dir(args)?, "eval", &cfg, Some(opts.seed))?;
    let report = if container.kind == kinds::PREDICTION {
        // score stored predictions against their stored targets
        let errors = decode_predictions(&container)?
            .iter()
            .map(|(_, p, t)| Ok(relative_l2(p, t)?))
            .collect::<Result<Vec<_>>>()?;
        EvalReport::from_errors(errors, &opts)?
    } else {
        let state = flowdiff_core::training::state_from_container(&container)?;
        let records = load_eval_records(args, &cfg)?;
        let model = state.ema_model();
        let surrogate = DdpmSurrogate::new(&model, &state.schedule()?, &opts.sampler)?;
        flowdiff_core::eval::evaluate(&surrogate, &records, &state.stats, &opts)?
    };
    write_atomic(&dir.reports().join("eval.txt"), report.to_lines().as_bytes())?;
    write_atomic(&dir.reports().join("eval.csv"), report.to_csv().as_bytes())?;
    println!(
        "mean_rel_l2={} median_rel_l2={} max_rel_l2={} n_samples={}",
        report.mean, report.median, report.max, report.n_samples
    );
    Ok(())
}

pub fn ablate(args: &Args) -> Result<()> {
    let cfg = load_config(args)?;
    let data = load_split(args, &cfg)?;
    let mut tc = cfg.config.train.clone();
    if let Some(s) = args.seed {
        tc.seed = s;
    }
    let opts = eval_options(args, &cfg);
    let first = &data.train[0];
    let mut mc = cfg.config.model.clone();
    mc.in_channels = first.condition.len() + first.target.len();
    mc.out_channels = first.target.len();
    let dir = RunDir::create(out_dir(args)?, "ablate", &cfg, Some(tc.seed))?;
    for (name, grid) in cfg.config.ablation.grids() {
        let stem = match name {
            crate::config::GridName::Noise => "ablation_noise",
            crate::config::GridName::Loss => "ablation_loss",
        };
        let table = run_ablation(&grid, &tc, &mc, &data, &opts, |cell, r| {
            println!("{stem} cell={} mean_rel_l2={}", cell.name(), r.mean);
        })?;
        write_atomic(&dir.reports().join(format!("{stem}.csv")), table.to_csv().as_bytes())?;
        write_atomic(&dir.reports().join(format!("{stem}.txt")), table.to_lines().as_bytes())?;
    }
    Ok(())
}

pub fn plot(args: &Args) -> Result<()> {
    let cfg = load_config(args)?;
    let src = args.dataset.as_ref().ok_or_else(|| anyhow!("--dataset (a container) is required"))?;
    let c = Container::read(src).with_context(|| format!("reading {}", src.display()))?;
    let dir = RunDir::create(out_dir(args)?, "plot", &cfg, None)?;
    let wanted = args.indices.as_deref().map(parse_indices).transpose()?;
    let keep = |i: usize| wanted.as_ref().is_none_or(|w| w.contains(&i));
    let mut n = 0;
    if c.kind == kinds::PREDICTION {
        for (i, pred, truth) in decode_predictions(&c)?.into_iter().filter(|(i, _, _)| keep(*i)) {
            for (ch, name) in truth.names().iter().enumerate() {
                let img = render_panel(truth.channel(ch), pred.channel(ch))?;
                write_image(&dir.plots(), &format!("r{i}_{name}_panel"), img)?;
                n += 1;
            }
        }
    } else {
        let (records, _) = decode_dataset(&c)?;
        for (i, r) in records.iter().enumerate().filter(|(i, _)| keep(*i)) {
            for stack in [&r.condition, &r.target] {
                for (ch, name) in stack.names().iter().enumerate() {
                    write_image(&dir.plots(), &format!("r{i}_{name}"), render_field(stack.channel(ch))?)?;
                    n += 1;
                }
            }
        }
    }
    ensure!(n > 0, "nothing to plot");
    println!("wrote {n} images to {}", dir.plots().display());
    Ok(())
}
