use super::AudioBuffer;
use crate::error::{Error, Result};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

/// Analysis taper applied to each frame before the FFT.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum WindowFunction {
    #[default]
    Hamming,
    Hann,
    Rectangular,
}

impl WindowFunction {
    /// Symmetric window of `len` coefficients.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        if len == 1 {
            return vec![1.0];
        }
        let denom = (len - 1) as f64;
        (0..len)
            .map(|n| {
                let c = (2.0 * PI * n as f64 / denom).cos();
                match self {
                    WindowFunction::Hamming => 0.54 - 0.46 * c,
                    WindowFunction::Hann => 0.5 - 0.5 * c,
                    WindowFunction::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

impl fmt::Display for WindowFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WindowFunction::Hamming => "hamming",
            WindowFunction::Hann => "hann",
            WindowFunction::Rectangular => "rectangular",
        })
    }
}

impl FromStr for WindowFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hamming" => Ok(Self::Hamming),
            "hann" | "hanning" => Ok(Self::Hann),
            "rectangular" | "rect" | "none" => Ok(Self::Rectangular),
            other => Err(Error::Config(format!("unknown window function '{other}'"))),
        }
    }
}

/// `round(duration_ms · sample_rate / 1000)`.
pub fn ms_to_samples(duration_ms: f64, sample_rate: u32) -> Result<usize> {
    if !(duration_ms > 0.0) || sample_rate == 0 {
        return Err(Error::Config(format!(
            "duration {duration_ms} ms at {sample_rate} Hz: both must be positive"
        )));
    }
    let n = (duration_ms * sample_rate as f64 / 1000.0).round();
    if n < 1.0 {
        return Err(Error::Config(format!(
            "{duration_ms} ms at {sample_rate} Hz rounds to zero samples"
        )));
    }
    Ok(n as usize)
}

/// Quality factor of a band-pass filter: center frequency over bandwidth.
pub fn compute_q_factor(center_freq_hz: f64, bandwidth_hz: f64) -> Result<f64> {
    if !(bandwidth_hz > 0.0) {
        return Err(Error::Domain(format!(
            "Q factor needs a positive bandwidth, got {bandwidth_hz} Hz"
        )));
    }
    Ok(center_freq_hz / bandwidth_hz)
}

/// Single-resolution STFT settings.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectrogramConfig {
    pub window_ms: f64,
    pub hop_ms: f64,
    /// FFT length in samples; a power of two.
    pub fft_size: usize,
    pub sample_rate: u32,
    /// Added to |X|² before the natural log.
    pub log_floor: f64,
    pub window: WindowFunction,
}

impl Default for SpectrogramConfig {
    fn default() -> Self {
        Self {
            window_ms: 25.0,
            hop_ms: 10.0,
            fft_size: 512,
            sample_rate: 16_000,
            log_floor: 1e-10,
            window: WindowFunction::Hamming,
        }
    }
}

impl SpectrogramConfig {
    pub fn with_window_ms(&self, window_ms: f64) -> Self {
        Self {
            window_ms,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.fft_size.is_power_of_two() || self.fft_size < 2 {
            return Err(Error::Config(format!(
                "fft_size {} is not a power of two",
                self.fft_size
            )));
        }
        if !(self.hop_ms > 0.0) {
            return Err(Error::Config(format!("hop_ms {} must be positive", self.hop_ms)));
        }
        if !(self.log_floor > 0.0) {
            return Err(Error::Config(format!(
                "log_floor {} must be positive",
                self.log_floor
            )));
        }
        let win = self.win_len()?;
        if win > self.fft_size {
            return Err(Error::Config(format!(
                "{} ms window is {win} samples, longer than fft_size {}",
                self.window_ms, self.fft_size
            )));
        }
        self.hop_len()?;
        Ok(())
    }

    pub fn win_len(&self) -> Result<usize> {
        ms_to_samples(self.window_ms, self.sample_rate)
    }

    pub fn hop_len(&self) -> Result<usize> {
        ms_to_samples(self.hop_ms, self.sample_rate)
    }

    pub fn freq_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Constant spacing between bin centers, `sample_rate / fft_size`.
    pub fn bin_bandwidth_hz(&self) -> f64 {
        self.sample_rate as f64 / self.fft_size as f64
    }

    pub fn bin_center_hz(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_bandwidth_hz()
    }

    /// Q factor of FFT bin `bin`; grows linearly with the bin index.
    pub fn q_factor_at_bin(&self, bin: usize) -> Result<f64> {
        compute_q_factor(self.bin_center_hz(bin), self.bin_bandwidth_hz())
    }
}

/// Log-power spectrogram of one utterance at one window length.
///
/// Stored frequency-major: `values[f * n_frames + t]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    values: Vec<f32>,
    n_freq: usize,
    n_frames: usize,
    window_ms: f64,
    utt_id: String,
}

impl FeatureMap {
    pub fn new(
        values: Vec<f32>,
        n_freq: usize,
        n_frames: usize,
        window_ms: f64,
        utt_id: impl Into<String>,
    ) -> Result<Self> {
        let utt_id = utt_id.into();
        if n_freq == 0 || n_frames == 0 || values.len() != n_freq * n_frames {
            return Err(Error::dim(
                "feature map",
                format!(
                    "{utt_id}: {} values cannot form {n_freq}×{n_frames}",
                    values.len()
                ),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature map of {utt_id}")));
        }
        Ok(Self {
            values,
            n_freq,
            n_frames,
            window_ms,
            utt_id,
        })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn n_freq(&self) -> usize {
        self.n_freq
    }

    pub fn n_frames(&self) -> usize {
        self.n_frames
    }

    pub fn window_ms(&self) -> f64 {
        self.window_ms
    }

    pub fn utt_id(&self) -> &str {
        &self.utt_id
    }

    pub fn at(&self, freq: usize, frame: usize) -> f32 {
        self.values[freq * self.n_frames + frame]
    }

    /// One spectral column.
    pub fn frame(&self, t: usize) -> Vec<f32> {
        (0..self.n_freq).map(|f| self.at(f, t)).collect()
    }

    /// Keep only the first `n` frames.
    pub fn truncate_frames(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n_frames {
            return Err(Error::dim(
                "feature map",
                format!("cannot keep {n} of {} frames", self.n_frames),
            ));
        }
        if n == self.n_frames {
            return Ok(self.clone());
        }
        let values = self
            .values
            .chunks_exact(self.n_frames)
            .flat_map(|row| row[..n].iter().copied())
            .collect();
        FeatureMap::new(values, self.n_freq, n, self.window_ms, self.utt_id.clone())
    }

    /// Build a map from frame indices into this map (used for tiling).
    pub(crate) fn gather_frames(&self, frames: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(self.n_freq * frames.len());
        for row in self.values.chunks_exact(self.n_frames) {
            values.extend(frames.iter().map(|&t| row[t]));
        }
        FeatureMap::new(
            values,
            self.n_freq,
            frames.len(),
            self.window_ms,
            self.utt_id.clone(),
        )
    }

    /// Zero-mean, unit-variance copy over all values.
    pub fn normalized(&self) -> Self {
        let n = self.values.len() as f64;
        let mean = self.values.iter().map(|&v| v as f64).sum::<f64>() / n;
        let var = self
            .values
            .iter()
            .map(|&v| (v as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        let inv = 1.0 / (var.sqrt() + 1e-8);
        Self {
            values: self
                .values
                .iter()
                .map(|&v| ((v as f64 - mean) * inv) as f32)
                .collect(),
            ..self.clone()
        }
    }
}

/// Log-power STFT: `ln(|X|² + log_floor)` per bin and frame.
///
/// Frames start every hop; the frame count is
/// `floor((n_samples − win_len) / hop) + 1`.
pub fn log_power_spectrogram(audio: &AudioBuffer, cfg: &SpectrogramConfig) -> Result<FeatureMap> {
    cfg.validate()?;
    if audio.sample_rate() != cfg.sample_rate {
        return Err(Error::Config(format!(
            "{}: sample rate mismatch ({} Hz audio, {} Hz config)",
            audio.utt_id(),
            audio.sample_rate(),
            cfg.sample_rate
        )));
    }
    let win = cfg.win_len()?;
    let hop = cfg.hop_len()?;
    let x = audio.samples();
    if x.len() < win {
        return Err(Error::Data(format!(
            "{}: {} samples is shorter than one {win}-sample window; repeat-extend the raw audio first",
            audio.utt_id(),
            x.len()
        )));
    }
    let n_frames = (x.len() - win) / hop + 1;
    let n_freq = cfg.freq_bins();
    let taper = cfg.window.coefficients(win);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(cfg.fft_size);
    let mut buf = vec![Complex::new(0.0, 0.0); cfg.fft_size];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut values = vec![0f32; n_freq * n_frames];
    for t in 0..n_frames {
        let frame = &x[t * hop..t * hop + win];
        for (b, (&s, &w)) in buf.iter_mut().zip(frame.iter().zip(&taper)) {
            *b = Complex::new(s * w, 0.0);
        }
        buf[win..].fill(Complex::new(0.0, 0.0));
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (f, c) in buf[..n_freq].iter().enumerate() {
            values[f * n_frames + t] = (c.norm_sqr() + cfg.log_floor).ln() as f32;
        }
    }
    FeatureMap::new(values, n_freq, n_frames, cfg.window_ms, audio.utt_id())
}

/// Settings for extracting one map per window length on a shared hop.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiResConfig {
    /// Hop, FFT size, rate, floor and taper; its `window_ms` is ignored.
    pub base: SpectrogramConfig,
    /// Channel order of the stacked input.
    pub windows_ms: Vec<f64>,
    /// Per-map mean/variance normalization (off by default).
    pub normalize: bool,
}

impl Default for MultiResConfig {
    fn default() -> Self {
        Self {
            base: SpectrogramConfig::default(),
            windows_ms: vec![18.0, 25.0, 30.0],
            normalize: false,
        }
    }
}

impl MultiResConfig {
    pub fn validate(&self) -> Result<()> {
        if self.windows_ms.is_empty() {
            return Err(Error::Config("at least one window length is required".into()));
        }
        for &w in &self.windows_ms {
            self.base.with_window_ms(w).validate()?;
        }
        Ok(())
    }

    /// Longest window in samples; shorter audio must be extended upstream.
    pub fn max_win_len(&self) -> Result<usize> {
        self.windows_ms
            .iter()
            .map(|&w| self.base.with_window_ms(w).win_len())
            .try_fold(0, |acc, n| n.map(|n| acc.max(n)))
    }
}

/// One log-power map per configured window, trailing-truncated to a common
/// frame count so the maps can be stacked.
pub fn extract_multi_resolution(audio: &AudioBuffer, cfg: &MultiResConfig) -> Result<Vec<FeatureMap>> {
    cfg.validate()?;
    let maps = cfg
        .windows_ms
        .iter()
        .map(|&w| log_power_spectrogram(audio, &cfg.base.with_window_ms(w)))
        .collect::<Result<Vec<_>>>()?;
    let common = maps.iter().map(FeatureMap::n_frames).min().unwrap_or(0);
    maps.iter()
        .map(|m| {
            let m = m.truncate_frames(common)?;
            Ok(if cfg.normalize { m.normalized() } else { m })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, secs: f64, rate: u32) -> AudioBuffer {
        let n = (secs * rate as f64) as usize;
        let s = (0..n)
            .map(|i| 0.5 * (2.0 * PI * freq * i as f64 / rate as f64).sin())
            .collect();
        AudioBuffer::new(s, rate, "tone").unwrap()
    }

    #[test]
    fn window_lengths_in_samples() {
        assert_eq!(ms_to_samples(25.0, 16_000).unwrap(), 400);
        assert_eq!(ms_to_samples(18.0, 16_000).unwrap(), 288);
        assert_eq!(ms_to_samples(30.0, 16_000).unwrap(), 480);
        assert_eq!(ms_to_samples(1000.0, 1).unwrap(), 1);
        assert!(ms_to_samples(0.1, 1000).is_err());
        assert!(ms_to_samples(0.0, 16_000).is_err());
    }

    #[test]
    fn q_factor_examples() {
        assert_eq!(compute_q_factor(500.0, 50.0).unwrap(), 10.0);
        let cfg = SpectrogramConfig::default();
        assert_eq!(cfg.bin_bandwidth_hz(), 31.25);
        assert_eq!(compute_q_factor(1000.0, cfg.bin_bandwidth_hz()).unwrap(), 32.0);
        for k in 1..128 {
            let ratio = cfg.q_factor_at_bin(2 * k).unwrap() / cfg.q_factor_at_bin(k).unwrap();
            assert!((ratio - 2.0).abs() < 1e-12);
        }
        assert!(matches!(compute_q_factor(100.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn default_config_has_257_bins_for_all_windows() {
        let cfg = SpectrogramConfig::default();
        for w in [18.0, 25.0, 30.0] {
            let c = cfg.with_window_ms(w);
            c.validate().unwrap();
            assert_eq!(c.freq_bins(), 257);
        }
        assert!(cfg.with_window_ms(40.0).validate().is_err());
    }

    #[test]
    fn bin_centered_tone_peaks_at_its_bin() {
        let cfg = SpectrogramConfig {
            window: WindowFunction::Rectangular,
            ..SpectrogramConfig::default()
        };
        // bin 40 = 1250 Hz
        let map = log_power_spectrogram(&tone(1250.0, 0.5, 16_000), &cfg).unwrap();
        for t in 0..map.n_frames() {
            let col = map.frame(t);
            let arg = (0..col.len()).max_by(|&a, &b| col[a].total_cmp(&col[b])).unwrap();
            assert_eq!(arg, 40, "frame {t}");
        }
    }

    #[test]
    fn silence_is_the_floor() {
        let cfg = SpectrogramConfig::default();
        let audio = AudioBuffer::new(vec![0.0; 4000], 16_000, "sil").unwrap();
        let map = log_power_spectrogram(&audio, &cfg).unwrap();
        let floor = (1e-10f64).ln() as f32;
        assert!(map.values().iter().all(|&v| v == floor));
        assert_eq!(map.n_frames(), (4000 - 400) / 160 + 1);
    }

    #[test]
    fn short_audio_asks_for_extension() {
        let audio = AudioBuffer::new(vec![0.1; 100], 16_000, "short").unwrap();
        let err = log_power_spectrogram(&audio, &SpectrogramConfig::default()).unwrap_err();
        assert!(err.to_string().contains("repeat-extend"));
    }

    #[test]
    fn rate_mismatch_is_rejected() {
        let audio = AudioBuffer::new(vec![0.1; 1000], 8000, "u").unwrap();
        let err = log_power_spectrogram(&audio, &SpectrogramConfig::default()).unwrap_err();
        assert!(err.to_string().contains("sample rate mismatch"));
    }

    #[test]
    fn multi_resolution_maps_share_frame_count() {
        let audio = tone(1000.0, 1.237, 16_000);
        let maps = extract_multi_resolution(&audio, &MultiResConfig::default()).unwrap();
        assert_eq!(maps.len(), 3);
        let n = maps[0].n_frames();
        assert!(maps.iter().all(|m| m.n_frames() == n && m.n_freq() == 257));
        // the longest window sets the count
        assert_eq!(n, (audio.len() - 480) / 160 + 1);
        assert_eq!(maps[1].window_ms(), 25.0);
    }
}
