//! Extract 18/25/30 ms log-power spectrograms from one utterance, stack
//! them as channels and write a feature cache.
//!
//! cargo run --example multires_features -- [path/to/16k-mono.wav]

use multires::data::{read_wav, synth_utterance, SynthSpec};
use multires::dsp::{extract_multi_resolution, unify_feature_map, FeatureCache, MultiResConfig, MultiResStack};

fn main() -> multires::Result<()> {
    let audio = match std::env::args().nth(1) {
        Some(p) => read_wav(p.as_ref(), Some(16_000))?,
        None => synth_utterance(&SynthSpec::default(), 3, 0, "demo")?,
    };
    let cfg = MultiResConfig::default();
    let maps = extract_multi_resolution(&audio, &cfg)?;
    for m in &maps {
        let mean = m.values().iter().map(|&v| v as f64).sum::<f64>() / m.values().len() as f64;
        println!("{:>4} ms: {} bins x {} frames, mean log power {mean:.2}", m.window_ms(), m.n_freq(), m.n_frames());
    }
    let sets = maps
        .iter()
        .map(|m| unify_feature_map(m, 400, 200))
        .collect::<multires::Result<Vec<_>>>()?;
    let stacks = MultiResStack::from_segment_sets(&sets)?;
    println!("{} segment(s) of shape {:?}", stacks.len(), stacks[0].channels.shape());

    let path = std::env::temp_dir().join(format!("{}.mrfm", audio.utt_id()));
    FeatureCache::from_maps(&maps)?.write(&path)?;
    println!("cache: {} ({} bytes)", path.display(), std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0));
    Ok(())
}
