use flowdiff_core::container::Container;
use flowdiff_core::datagen::{build_darcy_dataset, DarcyDatasetConfig, SplitDataset};
use flowdiff_core::fields::SampleRecord;
use flowdiff_core::model::ModelConfig;
use flowdiff_core::training::{
    batch_indices, checkpoint_container, compute_gradients, load_checkpoint, save_checkpoint, state_from_container,
    train_loop, train_step, MemorySink, NullSink, TrainConfig, TrainState,
};

fn toy_data(n_train: usize, target: usize, seed: u64) -> SplitDataset {
    let cfg = DarcyDatasetConfig { base_resolution: 2 * target + 1, target_resolution: target, ..Default::default() };
    build_darcy_dataset(n_train, 2, &cfg, seed).unwrap()
}

fn toy_config(steps: u64) -> TrainConfig {
    let mut cfg =
        TrainConfig { batch_size: 3, total_steps: steps, learning_rate: 1e-3, seed: 11, ..Default::default() };
    cfg.eval.sampler.steps = Some(5);
    cfg
}

fn toy_model() -> ModelConfig {
    ModelConfig::tiny(4, 1)
}

#[test]
fn resume_is_bit_transparent() {
    let data = toy_data(5, 16, 1);
    let mut cfg = toy_config(12);
    cfg.eval_every = 4;
    let mut full = MemorySink::default();
    let end = train_loop(&data, &toy_model(), &cfg, &mut full, None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mid.dfd");
    let mut first = MemorySink { stop_at: Some(7), ..Default::default() };
    let mid = train_loop(&data, &toy_model(), &cfg, &mut first, None).unwrap();
    assert_eq!(mid.step, 7);
    save_checkpoint(&mid, &path).unwrap();
    drop(mid);
    let mut second = MemorySink::default();
    let resumed = train_loop(&data, &toy_model(), &cfg, &mut second, Some(load_checkpoint(&path).unwrap())).unwrap();

    let stitched: Vec<_> = first.metrics.iter().chain(&second.metrics).copied().collect();
    assert_eq!(stitched, full.metrics);
    assert_eq!(resumed, end);
}

#[test]
fn full_run_is_deterministic() {
    let data = toy_data(4, 16, 2);
    let run = || {
        let mut sink = MemorySink::default();
        let s = train_loop(&data, &toy_model(), &toy_config(6), &mut sink, None).unwrap();
        (sink.metrics, s)
    };
    assert_eq!(run(), run());
}

fn normalized(data: &SplitDataset) -> Vec<SampleRecord> {
    data.train.iter().map(|r| data.stats.normalize_record(r).unwrap()).collect()
}

#[test]
fn ema_stays_within_history_envelope() {
    let data = toy_data(4, 16, 3);
    let cfg = toy_config(30);
    let train = normalized(&data);
    let mut state = TrainState::new(&toy_model(), &cfg, data.stats.clone(), vec!["u".into()]).unwrap();
    assert_eq!(state.ema, state.params);
    let mut lo = state.params.to_vec();
    let mut hi = lo.clone();
    for k in 0..cfg.total_steps {
        let batch: Vec<&SampleRecord> =
            batch_indices(cfg.seed, train.len(), cfg.batch_size, k).iter().map(|&i| &train[i]).collect();
        train_step(&mut state, &batch, &cfg).unwrap();
        for ((l, h), v) in lo.iter_mut().zip(hi.iter_mut()).zip(state.params.to_vec()) {
            *l = l.min(v);
            *h = h.max(v);
        }
        for ((l, h), e) in lo.iter().zip(&hi).zip(state.ema.to_vec()) {
            // one f32 rounding of slack
            let slack = f32::EPSILON * l.abs().max(h.abs());
            assert!(e >= l - slack && e <= h + slack, "{e} outside [{l}, {h}]");
        }
    }
}

#[test]
fn grad_norm_matches_independent_accumulation() {
    let data = toy_data(3, 16, 4);
    let cfg = toy_config(1);
    let train = normalized(&data);
    let mut state = TrainState::new(&toy_model(), &cfg, data.stats.clone(), vec!["u".into()]).unwrap();
    // move off the zero-initialized head so every layer has a gradient
    let batch: Vec<&SampleRecord> = train.iter().collect();
    for _ in 0..3 {
        train_step(&mut state, &batch, &cfg).unwrap();
    }
    let mut probe = state.clone();
    let (grads, _) = compute_gradients(&mut probe, &batch, &cfg).unwrap();
    let independent: f64 = grads
        .linears()
        .iter()
        .flat_map(|(_, l)| l.weight.iter().chain(l.bias.iter()).map(|&g| g as f64 * g as f64).collect::<Vec<_>>())
        .sum::<f64>()
        .sqrt();
    let m = train_step(&mut state, &batch, &cfg).unwrap();
    assert!((m.grad_norm - independent).abs() <= 1e-10 * independent);
}

#[test]
fn pure_mse_loss_reports_mse() {
    let data = toy_data(3, 16, 5);
    let cfg = TrainConfig { lambda1: 0.0, ..toy_config(3) };
    let mut sink = MemorySink::default();
    train_loop(&data, &toy_model(), &cfg, &mut sink, None).unwrap();
    for m in &sink.metrics {
        assert_eq!(m.loss, m.mse);
    }
}

#[test]
fn checkpoint_files_are_idempotent_and_checked() {
    let data = toy_data(3, 16, 6);
    let state = train_loop(&data, &toy_model(), &toy_config(4), &mut NullSink, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.dfd"), dir.path().join("b.dfd"));
    save_checkpoint(&state, &a).unwrap();
    let loaded = load_checkpoint(&a).unwrap();
    save_checkpoint(&loaded, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let rec = data.stats.normalize_record(&data.test[0]).unwrap();
    let input: Vec<f32> =
        rec.condition.to_flat().iter().chain(rec.target.to_flat().iter()).map(|&v| v as f32).collect();
    let before = state.model().forward(&input, 16, 16, 77, None, None).unwrap();
    let after = loaded.model().forward(&input, 16, 16, 77, None, None).unwrap();
    assert_eq!(before, after);

    let mut bytes = std::fs::read(&a).unwrap();
    let last = bytes.len() - 20;
    bytes[last] ^= 0x40;
    assert!(Container::from_bytes(&bytes).is_err());
    assert_eq!(state_from_container(&checkpoint_container(&state).unwrap()).unwrap(), state);
}

#[test]
fn single_record_overfits() {
    let data = toy_data(1, 32, 7);
    let cfg = TrainConfig { batch_size: 4, total_steps: 500, learning_rate: 1e-3, seed: 3, ..Default::default() };
    let model = ModelConfig { patch: 4, width: 64, depth: 2, heads: 4, freq_dim: 64, ..ModelConfig::tiny(4, 1) };
    let mut sink = MemorySink::default();
    train_loop(&data, &model, &cfg, &mut sink, None).unwrap();
    let first = sink.metrics[0].loss;
    let tail: f64 = sink.metrics[450..].iter().map(|m| m.loss).sum::<f64>() / 50.0;
    assert!(tail < 0.1 * first, "loss {first} -> {tail}");
}
