//! Synthetic corpus → multi-resolution features → LCNN training with
//! per-epoch development selection → evaluation-set EER.
//!
//! cargo run --release --example train_desk_scale -- [key=value ...]
//!
//! e.g. `windows_ms=18,30 seed=2 arch=resnet18`.

use multires::data::{generate_synthetic_corpus, labels_of, parse_manifest, RunConfig, SynthSpec};
use multires::eval::compute_eer;
use multires::pipeline::{
    load_features, score_utterances, train_with_selection, training_samples, utterance_segments,
};
use std::time::Instant;

fn main() -> multires::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut cfg = RunConfig::desk_scale();
    for arg in std::env::args().skip(1) {
        cfg.apply_text(&arg)?;
    }
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| multires::Error::io(std::env::temp_dir(), e))?;
    let corpus = generate_synthetic_corpus(&SynthSpec::default(), dir.path())?;
    println!("synthesized corpus in {:.1?}", start.elapsed());

    let mut split = Vec::new();
    for path in [&corpus.train, &corpus.dev, &corpus.eval] {
        let entries = parse_manifest(path)?;
        let feats = load_features(&entries, &cfg, None)?;
        let segs = utterance_segments(&entries, &feats, &cfg)?;
        split.push((entries, segs));
    }
    println!("extracted {:?} ms features in {:.1?}", cfg.windows_ms, start.elapsed());

    let train = training_samples(&split[0].0, &split[0].1)?;
    let dev_labels = labels_of(&split[1].0)?;
    let outcome = train_with_selection(&cfg, &train, &split[1].1, &dev_labels, None)?;
    for (e, (loss, eer)) in outcome.epoch_losses.iter().zip(&outcome.dev_eers).enumerate() {
        println!("epoch {}: loss {loss:.4}  dev EER {:.2}%", e + 1, 100.0 * eer);
    }
    let eval_scores = score_utterances(&outcome.best, &split[2].1)?;
    let eval = compute_eer(&eval_scores, &labels_of(&split[2].0)?)?;
    println!(
        "best epoch {}  eval EER {:.2}%  total {:.1?}",
        outcome.best_epoch,
        100.0 * eval.eer,
        start.elapsed()
    );
    Ok(())
}
