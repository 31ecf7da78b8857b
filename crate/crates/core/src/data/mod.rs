//! Dataset ingestion, the synthetic corpus and run configuration.

mod config;
mod manifest;
mod synth;
mod wav;

pub use config::RunConfig;
pub use manifest::{
    class_index, class_label, labels_of, parse_manifest, write_manifest, ManifestEntry, Partition,
    SPOOF_TAGS,
};
pub use synth::{generate_synthetic_corpus, synth_utterance, SynthCorpus, SynthSpec};
pub use wav::{read_wav, write_wav};
