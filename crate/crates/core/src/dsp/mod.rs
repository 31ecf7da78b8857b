//! Log-power STFT features at several window lengths, fixed-length
//! segmentation, and channel stacking into CNN inputs.

pub mod analysis;
mod cache;
mod segment;
mod stack;
mod stft;

pub use cache::FeatureCache;
pub use segment::{unify_feature_map, SegmentSet};
pub use stack::{stack_multi_resolution, MultiResStack};
pub use stft::{
    compute_q_factor, extract_multi_resolution, log_power_spectrogram, ms_to_samples, FeatureMap,
    MultiResConfig, SpectrogramConfig, WindowFunction,
};

use crate::error::{Error, Result};

/// Mono audio with amplitudes nominally in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioBuffer {
    samples: Vec<f64>,
    sample_rate: u32,
    utt_id: String,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32, utt_id: impl Into<String>) -> Result<Self> {
        let utt_id = utt_id.into();
        if samples.is_empty() {
            return Err(Error::Data(format!("{utt_id}: empty audio")));
        }
        if sample_rate == 0 {
            return Err(Error::Config(format!("{utt_id}: sample rate must be positive")));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("audio samples of {utt_id}")));
        }
        Ok(Self {
            samples,
            sample_rate,
            utt_id,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn utt_id(&self) -> &str {
        &self.utt_id
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Repeat the waveform end-to-start until it holds at least `min_len` samples.
    pub fn repeat_to_length(&self, min_len: usize) -> Self {
        if self.samples.len() >= min_len {
            return self.clone();
        }
        let samples = self.samples.iter().copied().cycle().take(min_len).collect();
        Self {
            samples,
            sample_rate: self.sample_rate,
            utt_id: self.utt_id.clone(),
        }
    }
}
