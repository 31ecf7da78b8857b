//! Take a few optimizer steps, save a checkpoint, reload it and confirm the
//! reloaded model and a re-saved file are identical.

use multires::model::{load_checkpoint, save_checkpoint, Arch, Model, ModelSpec};
use multires::tensor::Tensor;
use multires::train::{adam_step, noam_lr, OptimizerState, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> multires::Result<()> {
    let spec = ModelSpec { input_freq: 32, input_frames: 32, ..ModelSpec::new(Arch::Resnet18, 2) };
    let mut model = Model::build(&spec, 0)?;
    let cfg = TrainConfig { warmup_steps: 3, ..TrainConfig::default() };
    let mut opt = OptimizerState::new(model.params());
    let x = Tensor::randn(&[4, 2, 32, 32], 1.0, &mut ChaCha8Rng::seed_from_u64(1));
    for step in 1..=5 {
        let (loss, grads) = model.loss_and_grads(&x, &[0, 1, 2, 3])?;
        adam_step(model.params_mut(), &grads, &mut opt, noam_lr(step, cfg.warmup_steps, cfg.peak_lr)?, &cfg)?;
        println!("step {step}: loss {loss:.4}");
    }
    let dir = std::env::temp_dir();
    let (a, b) = (dir.join("multires_a.ckpt"), dir.join("multires_b.ckpt"));
    save_checkpoint(&a, &model, Some(&opt), opt.t, Some(0.125))?;
    let ck = load_checkpoint(&a)?;
    save_checkpoint(&b, &ck.model, ck.optimizer.as_ref(), ck.step, ck.dev_eer)?;
    let same_file = std::fs::read(&a).ok() == std::fs::read(&b).ok();
    let same_logits = model.infer(&x)? == ck.model.infer(&x)?;
    println!(
        "{} parameters, step {}, files identical: {same_file}, logits identical: {same_logits}",
        ck.model.params().total(),
        ck.step
    );
    Ok(())
}
