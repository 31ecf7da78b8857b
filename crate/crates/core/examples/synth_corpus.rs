//! Generate the ten-class synthetic corpus and summarize it.
//!
//! cargo run --release --example synth_corpus -- OUT_DIR [utts_per_class]

use multires::data::{generate_synthetic_corpus, parse_manifest, read_wav, Partition, SynthSpec};
use multires::dsp::analysis::mean_spectral_centroid;
use multires::dsp::{log_power_spectrogram, SpectrogramConfig};
use std::collections::BTreeMap;
use std::path::PathBuf;

fn main() -> multires::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("multires_synth"));
    let spec = SynthSpec {
        utts_per_class: args.next().and_then(|a| a.parse().ok()).unwrap_or(20),
        ..SynthSpec::default()
    };
    let corpus = generate_synthetic_corpus(&spec, &out)?;
    let cfg = SpectrogramConfig::default();
    let mut centroids: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for p in Partition::ALL {
        let entries = parse_manifest(corpus.manifest(p))?;
        println!("{p}: {} utterances in {}", entries.len(), corpus.manifest(p).display());
        for e in entries.iter().filter(|_| p == Partition::Train) {
            let map = log_power_spectrogram(&read_wav(&e.audio_path, Some(16_000))?, &cfg)?;
            let c = centroids.entry(e.label.to_string()).or_default();
            c.0 += mean_spectral_centroid(&map, cfg.bin_bandwidth_hz());
            c.1 += 1;
        }
    }
    println!("mean spectral centroid of training audio:");
    for (label, (sum, n)) in centroids {
        println!("  {label:<9} {:>7.0} Hz", sum / n as f64);
    }
    Ok(())
}
