use crate::dsp::{MultiResConfig, SpectrogramConfig};
use crate::error::{Error, Result};
use crate::model::{Arch, ModelSpec};
use crate::train::TrainConfig;
use std::path::Path;

/// Every knob of a run, serialized as `key = value` lines.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub spectrogram: SpectrogramConfig,
    /// Window lengths in ms, one input channel each.
    pub windows_ms: Vec<f64>,
    pub normalize: bool,
    /// Frames per segment (M).
    pub segment_frames: usize,
    /// Frames shared by neighbouring segments (L).
    pub segment_overlap: usize,
    pub arch: Arch,
    pub n_classes: usize,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            spectrogram: SpectrogramConfig::default(),
            windows_ms: vec![18.0, 25.0, 30.0],
            normalize: false,
            segment_frames: 400,
            segment_overlap: 200,
            arch: Arch::Lcnn,
            n_classes: 10,
            train: TrainConfig::default(),
        }
    }
}

const KEYS: [&str; 20] = [
    "sample_rate",
    "fft_size",
    "hop_ms",
    "window",
    "log_floor",
    "windows_ms",
    "normalize",
    "segment_frames",
    "segment_overlap",
    "arch",
    "n_classes",
    "batch_size",
    "beta1",
    "beta2",
    "weight_decay",
    "warmup_steps",
    "peak_lr",
    "eps",
    "epochs",
    "seed",
];

fn parse_windows(s: &str) -> Result<Vec<f64>> {
    let w = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("window list '{s}': '{p}' is not a number")))
        })
        .collect::<Result<Vec<_>>>()?;
    if w.is_empty() || w.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Config(format!("window list '{s}' must hold positive lengths")));
    }
    Ok(w)
}

fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key} = '{value}' is not a valid value")))
}

impl RunConfig {
    /// Settings for a few-minute CPU run on the synthetic corpus: per-map
    /// normalization, small batches and a short warmup so three epochs over
    /// about a hundred segments still take enough optimizer steps.
    pub fn desk_scale() -> Self {
        Self {
            normalize: true,
            train: TrainConfig {
                batch_size: 4,
                warmup_steps: 10,
                peak_lr: 2e-3,
                epochs: 3,
                ..TrainConfig::default()
            },
            ..Self::default()
        }
    }

    pub fn n_input_channels(&self) -> usize {
        self.windows_ms.len()
    }

    pub fn multires(&self) -> MultiResConfig {
        MultiResConfig {
            base: self.spectrogram.clone(),
            windows_ms: self.windows_ms.clone(),
            normalize: self.normalize,
        }
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            arch: self.arch,
            n_input_channels: self.n_input_channels(),
            n_classes: self.n_classes,
            input_freq: self.spectrogram.freq_bins(),
            input_frames: self.segment_frames,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.multires().validate()?;
        self.model_spec().validate()?;
        self.train.validate()?;
        if self.segment_overlap >= self.segment_frames {
            return Err(Error::Config(format!(
                "segment_overlap = {} must be smaller than segment_frames = {}",
                self.segment_overlap, self.segment_frames
            )));
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "sample_rate" => self.spectrogram.sample_rate = num(key, v)?,
            "fft_size" => self.spectrogram.fft_size = num(key, v)?,
            "hop_ms" => self.spectrogram.hop_ms = num(key, v)?,
            "window" => self.spectrogram.window = v.parse()?,
            "log_floor" => self.spectrogram.log_floor = num(key, v)?,
            "windows_ms" => self.windows_ms = parse_windows(v)?,
            "normalize" => self.normalize = num(key, v)?,
            "segment_frames" => self.segment_frames = num(key, v)?,
            "segment_overlap" => self.segment_overlap = num(key, v)?,
            "arch" => self.arch = v.parse()?,
            "n_classes" => self.n_classes = num(key, v)?,
            "batch_size" => self.train.batch_size = num(key, v)?,
            "beta1" => self.train.beta1 = num(key, v)?,
            "beta2" => self.train.beta2 = num(key, v)?,
            "weight_decay" => self.train.weight_decay = num(key, v)?,
            "warmup_steps" => self.train.warmup_steps = num(key, v)?,
            "peak_lr" => self.train.peak_lr = num(key, v)?,
            "eps" => self.train.eps = num(key, v)?,
            "epochs" => self.train.epochs = num(key, v)?,
            "seed" => self.train.seed = num(key, v)?,
            other => {
                return Err(Error::Config(format!(
                    "unknown configuration key '{other}' (known: {})",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    fn get(&self, key: &str) -> String {
        let s = &self.spectrogram;
        let t = &self.train;
        match key {
            "sample_rate" => s.sample_rate.to_string(),
            "fft_size" => s.fft_size.to_string(),
            "hop_ms" => s.hop_ms.to_string(),
            "window" => s.window.to_string(),
            "log_floor" => s.log_floor.to_string(),
            "windows_ms" => self
                .windows_ms
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(","),
            "normalize" => self.normalize.to_string(),
            "segment_frames" => self.segment_frames.to_string(),
            "segment_overlap" => self.segment_overlap.to_string(),
            "arch" => self.arch.to_string(),
            "n_classes" => self.n_classes.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "beta1" => t.beta1.to_string(),
            "beta2" => t.beta2.to_string(),
            "weight_decay" => t.weight_decay.to_string(),
            "warmup_steps" => t.warmup_steps.to_string(),
            "peak_lr" => t.peak_lr.to_string(),
            "eps" => t.eps.to_string(),
            "epochs" => t.epochs.to_string(),
            "seed" => t.seed.to_string(),
            _ => unreachable!("key list and accessors agree"),
        }
    }

    /// Apply `key = value` lines on top of `self`. Blank lines and `#`
    /// comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected 'key = value', found '{line}'", i + 1))
            })?;
            self.set(k.trim(), v)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    /// Every key, resolved.
    pub fn to_text(&self) -> String {
        KEYS.iter().map(|k| format!("{k} = {}\n", self.get(k))).collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut c = RunConfig::desk_scale();
        c.windows_ms = vec![18.0, 30.0];
        c.arch = Arch::Senet50;
        c.train.peak_lr = 3e-4;
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::parse("hop_ms = 10\nlearning_rate = 1\n").unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("learning_rate"), "{err}");
    }

    #[test]
    fn channels_follow_windows() {
        let c = RunConfig::parse("windows_ms = 18, 30\n# comment\n").unwrap();
        assert_eq!(c.model_spec().n_input_channels, 2);
        assert_eq!(c.model_spec().input_freq, 257);
        assert!(RunConfig::parse("windows_ms = 18,x").is_err());
    }

    #[test]
    fn overlap_must_be_below_segment_length() {
        let c = RunConfig::parse("segment_overlap = 400").unwrap();
        assert!(c.validate().is_err());
    }
}
