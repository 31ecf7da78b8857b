use multires::data::{ManifestEntry, Partition, RunConfig};
use multires::dsp::FeatureMap;
use multires::eval::Label;
use multires::model::{Arch, Model, ModelSpec};
use multires::pipeline::{training_samples, utterance_segments};
use multires::tensor::Tensor;
use multires::train::{adam_step, noam_lr, train_epoch, OptimizerState, Sample, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn spec() -> ModelSpec {
    ModelSpec {
        input_freq: 64,
        input_frames: 250,
        ..ModelSpec::new(Arch::Lcnn, 1)
    }
}

fn random_samples(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| Sample {
            input: Tensor::randn(&[1, 64, 250], 1.0, &mut rng),
            label: i % 10,
        })
        .collect()
}

#[test]
fn one_repeated_batch_is_overfit_in_fifty_steps() {
    let s = spec();
    let mut model = Model::build(&s, 0).unwrap();
    let x = Tensor::randn(&[1, 64, 250], 1.0, &mut ChaCha8Rng::seed_from_u64(1));
    let batch = Tensor::stack(&[&x, &x, &x, &x]).unwrap();
    let cfg = TrainConfig {
        warmup_steps: 5,
        ..TrainConfig::default()
    };
    let mut opt = OptimizerState::new(model.params());
    let mut losses = Vec::new();
    for step in 1..=50 {
        let (loss, grads) = model.loss_and_grads(&batch, &[0; 4]).unwrap();
        losses.push(loss);
        adam_step(model.params_mut(), &grads, &mut opt, noam_lr(step, 5, cfg.peak_lr).unwrap(), &cfg).unwrap();
    }
    let (first, last) = (losses[0], *losses.last().unwrap());
    assert!(last < 0.5 * first, "loss {first} -> {last}: {losses:?}");
}

#[test]
fn training_is_deterministic_given_the_seed() {
    let data = random_samples(6, 2);
    let cfg = TrainConfig {
        batch_size: 4,
        warmup_steps: 2,
        seed: 7,
        ..TrainConfig::default()
    };
    let run = || {
        let mut model = Model::build(&spec(), 3).unwrap();
        let mut opt = OptimizerState::new(model.params());
        let mut log = Vec::new();
        for epoch in 0..2 {
            train_epoch(&mut model, &data, &cfg, &mut opt, epoch, Some(&mut log)).unwrap();
        }
        (model, opt, log)
    };
    let (m1, o1, l1) = run();
    let (m2, o2, l2) = run();
    assert_eq!(m1.params(), m2.params());
    assert_eq!(o1, o2);
    assert_eq!(l1, l2);
    assert_eq!(String::from_utf8(l1).unwrap().lines().count(), 4);
}

#[test]
fn zero_gradients_without_decay_leave_parameters_unchanged() {
    let mut model = Model::build(&spec(), 0).unwrap();
    let before = model.params().clone();
    let grads: Vec<Tensor<f32>> = model.params().iter().map(|p| Tensor::zeros(p.value.shape())).collect();
    let cfg = TrainConfig {
        weight_decay: 0.0,
        ..TrainConfig::default()
    };
    let mut opt = OptimizerState::new(model.params());
    for _ in 0..3 {
        adam_step(model.params_mut(), &grads, &mut opt, 1e-3, &cfg).unwrap();
    }
    assert_eq!(model.params(), &before);
    assert_eq!(opt.t, 3);
}

#[test]
fn longer_utterances_contribute_more_segments() {
    let cfg = RunConfig {
        windows_ms: vec![25.0],
        ..RunConfig::default()
    };
    let entry = |id: &str, label: Label| ManifestEntry {
        utt_id: id.into(),
        audio_path: format!("{id}.wav").into(),
        label,
        partition: Partition::Train,
    };
    let entries = vec![entry("long", Label::Bonafide), entry("short", Label::Spoof("BC".into()))];
    let map = |id: &str, frames: usize| vec![FeatureMap::new(vec![0.0; 8 * frames], 8, frames, 25.0, id).unwrap()];
    let features = vec![map("long", 500), map("short", 400)];
    let segs = utterance_segments(&entries, &features, &cfg).unwrap();
    assert_eq!(segs[0].1.len(), 3);
    assert_eq!(segs[1].1.len(), 1);
    let samples = training_samples(&entries, &segs).unwrap();
    let labels: Vec<usize> = samples.iter().map(|s| s.label).collect();
    assert_eq!(labels, vec![0, 0, 0, 6]);
}
