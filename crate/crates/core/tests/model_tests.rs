use multires::model::{count_parameters, load_checkpoint, save_checkpoint, Arch, Mode, Model, ModelSpec};
use multires::tensor::Tensor;
use multires::train::OptimizerState;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small(arch: Arch, n_c: usize) -> ModelSpec {
    let (f, t) = match arch {
        Arch::Lcnn => (64, 250),
        _ => (24, 24),
    };
    ModelSpec {
        input_freq: f,
        input_frames: t,
        ..ModelSpec::new(arch, n_c)
    }
}

fn batch(spec: &ModelSpec, n: usize, seed: u64) -> Tensor<f32> {
    let shape = [n, spec.n_input_channels, spec.input_freq, spec.input_frames];
    Tensor::randn(&shape, 1.0, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[test]
fn every_parameter_receives_a_gradient() {
    for arch in Arch::ALL {
        let spec = small(arch, 2);
        let mut model = Model::build(&spec, 1).unwrap();
        let (loss, grads) = model.loss_and_grads(&batch(&spec, 3, 2), &[0, 4, 9]).unwrap();
        assert!(loss.is_finite());
        for (p, g) in model.params().iter().zip(&grads) {
            assert_eq!(p.value.shape(), g.shape(), "{arch} {}", p.name);
            assert!(g.data().iter().any(|&v| v != 0.0), "{arch}: {} has an all-zero gradient", p.name);
        }
    }
}

#[test]
fn lcnn_trace_at_full_input_size() {
    let spec = ModelSpec::new(Arch::Lcnn, 1);
    let model = Model::build(&spec, 0).unwrap();
    let trace = model.shape_trace(&batch(&spec, 1, 0)).unwrap();
    let shape_of = |name: &str| {
        trace
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("{name} missing from {trace:?}"))
            .1
            .clone()
    };
    assert_eq!(shape_of("conv1"), vec![1, 32, 257, 400]);
    assert_eq!(shape_of("mfm1"), vec![1, 16, 257, 400]);
    assert_eq!(shape_of("pool1"), vec![1, 16, 128, 133]);
    assert_eq!(shape_of("pool5"), vec![1, 16, 8, 2]);
    assert_eq!(shape_of("fc6"), vec![1, 128]);
    assert_eq!(shape_of("mfm6"), vec![1, 64]);
    assert_eq!(trace.last().unwrap(), &("fc7".to_string(), vec![1, 10]));
}

#[test]
fn channel_count_only_changes_the_first_convolution() {
    for arch in Arch::ALL {
        let one = count_parameters(&Model::build(&ModelSpec::new(arch, 1), 0).unwrap()).unwrap();
        let three = count_parameters(&Model::build(&ModelSpec::new(arch, 3), 0).unwrap()).unwrap();
        let changed: Vec<&str> = one
            .per_layer
            .iter()
            .zip(&three.per_layer)
            .filter(|(a, b)| a.1 != b.1)
            .map(|(a, _)| a.0.as_str())
            .collect();
        assert_eq!(changed.len(), 1, "{arch}: {changed:?}");
        let (k, c1) = arch.first_conv();
        assert_eq!(three.total - one.total, 2 * c1 * k * k);
    }
}

#[test]
fn checkpoint_save_load_save_is_identical() {
    let dir = tempfile::tempdir().unwrap();
    for arch in Arch::ALL {
        let spec = small(arch, 3);
        let mut model = Model::build(&spec, 5).unwrap();
        model.forward(&batch(&spec, 2, 1), Mode::Train).unwrap();
        let mut opt = OptimizerState::new(model.params());
        opt.t = 3;
        let a = dir.path().join(format!("{arch}_a.ckpt"));
        let b = dir.path().join(format!("{arch}_b.ckpt"));
        save_checkpoint(&a, &model, Some(&opt), 3, Some(0.25)).unwrap();
        let ck = load_checkpoint(&a).unwrap();
        save_checkpoint(&b, &ck.model, ck.optimizer.as_ref(), ck.step, ck.dev_eer).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let x = batch(&spec, 2, 9);
        assert_eq!(model.infer(&x).unwrap(), ck.model.infer(&x).unwrap());
    }
}

#[test]
fn chunked_inference_matches_per_sample_inference() {
    let spec = small(Arch::Resnet18, 1);
    let model = Model::build(&spec, 2).unwrap();
    let x = batch(&spec, 11, 3);
    let all = model.infer(&x).unwrap();
    for i in 0..11 {
        let one = model.infer(&x.narrow(i, i + 1).unwrap()).unwrap();
        for (a, b) in one.data().iter().zip(&all.data()[i * 10..(i + 1) * 10]) {
            assert!((a - b).abs() <= 1e-5 * (1.0 + a.abs()), "sample {i}: {a} vs {b}");
        }
    }
}

#[test]
fn eval_forward_is_deterministic_and_leaves_state_alone() {
    let spec = small(Arch::Senet50, 2);
    let mut model = Model::build(&spec, 4).unwrap();
    let before = model.clone();
    let x = batch(&spec, 2, 5);
    let a = model.forward(&x, Mode::Eval).unwrap();
    let b = model.forward(&x, Mode::Eval).unwrap();
    assert_eq!(a, b);
    assert_eq!(model.buffers(), before.buffers());
}
