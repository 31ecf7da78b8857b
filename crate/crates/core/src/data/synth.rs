//! Deterministic toy corpus with one bonafide and nine spoof classes.
//!
//! Bonafide audio is a vibrato harmonic source under a syllabic envelope
//! plus a little noise. Spoof class `i` is the same kind of source passed
//! through a band-emphasis resonator at a class-specific centre frequency and
//! a sparse reverberation tail whose length depends on the first letter of
//! the replay tag.

use super::manifest::{class_label, write_manifest, ManifestEntry, Partition, SPOOF_TAGS};
use super::wav::write_wav;
use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub utts_per_class: usize,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    pub seed: u64,
    pub sample_rate: u32,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            utts_per_class: 20,
            min_duration_s: 1.0,
            max_duration_s: 2.5,
            seed: 0,
            sample_rate: 16000,
        }
    }
}

impl SynthSpec {
    /// Utterances per class in train, dev and eval: a quarter each for dev
    /// and eval (rounded), the rest for training.
    pub fn split(&self) -> [usize; 3] {
        let held = (self.utts_per_class as f64 / 4.0).round() as usize;
        let held = held.min(self.utts_per_class / 3);
        [self.utts_per_class - 2 * held, held, held]
    }

    pub fn validate(&self) -> Result<()> {
        if self.utts_per_class < 3 {
            return Err(Error::Config(
                "utts_per_class must be at least 3 to fill train, dev and eval".into(),
            ));
        }
        if !(self.min_duration_s > 0.0 && self.max_duration_s >= self.min_duration_s) {
            return Err(Error::Config(format!(
                "invalid duration range {}..{} s",
                self.min_duration_s, self.max_duration_s
            )));
        }
        if self.sample_rate < 8000 {
            return Err(Error::Config("sample_rate must be at least 8000 Hz".into()));
        }
        Ok(())
    }
}

/// Centre frequency of the band emphasis of spoof class `i` (1-based), in
/// Hz at 16 kHz; scaled with the sample rate.
fn emphasis_centre(class: usize, sample_rate: u32) -> f64 {
    (1200.0 + 600.0 * (class - 1) as f64) * sample_rate as f64 / 16000.0
}

fn reverb_seconds(tag: &str) -> f64 {
    match tag.as_bytes()[0] {
        b'A' => 0.15,
        b'B' => 0.3,
        _ => 0.5,
    }
}

fn utterance_seed(seed: u64, class: usize, index: usize) -> u64 {
    let mut z = seed ^ ((class as u64) << 32 | index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn harmonic_source(rng: &mut ChaCha8Rng, n: usize, sr: f64) -> Vec<f64> {
    let f0: f64 = rng.gen_range(90.0..220.0);
    let vib_rate: f64 = rng.gen_range(4.0..6.0);
    let syl_rate: f64 = rng.gen_range(2.5..4.5);
    let syl_phase: f64 = rng.gen_range(0.0..2.0 * PI);
    let n_harm = ((0.45 * sr) / f0).floor() as usize;
    let phases: Vec<f64> = (0..n_harm).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
    let mut phase = 0.0;
    (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let f = f0 * (1.0 + 0.03 * (2.0 * PI * vib_rate * t).sin());
            phase += 2.0 * PI * f / sr;
            let voiced: f64 = phases
                .iter()
                .enumerate()
                .map(|(k, p)| ((k + 1) as f64 * phase + p).sin() / (k + 1) as f64)
                .sum();
            let env = 0.55 + 0.45 * (2.0 * PI * syl_rate * t + syl_phase).sin();
            env * voiced + 0.01 * rng.sample::<f64, _>(StandardNormal)
        })
        .collect()
}

/// `x + gain·bandpass(x)` with an RBJ band-pass biquad.
fn band_emphasis(x: &[f64], centre: f64, q: f64, gain: f64, sr: f64) -> Vec<f64> {
    let w0 = 2.0 * PI * centre / sr;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    let (b0, b2) = (alpha / a0, -alpha / a0);
    let (a1, a2) = (-2.0 * w0.cos() / a0, (1.0 - alpha) / a0);
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    x.iter()
        .map(|&v| {
            let y = b0 * v + b2 * x2 - a1 * y1 - a2 * y2;
            x2 = x1;
            x1 = v;
            y2 = y1;
            y1 = y;
            v + gain * y
        })
        .collect()
}

/// Direct path plus sparse exponentially decaying reflections.
fn reverberate(x: &[f64], seconds: f64, rng: &mut ChaCha8Rng, sr: f64) -> Vec<f64> {
    let len = (seconds * sr) as usize;
    let taps: Vec<(usize, f64)> = (0..200)
        .map(|_| {
            let d = rng.gen_range(1..len.max(2));
            let decay = (-6.9 * d as f64 / len as f64).exp();
            (d, 0.35 * decay * rng.sample::<f64, _>(StandardNormal))
        })
        .collect();
    let mut y = x.to_vec();
    for &(d, g) in &taps {
        for i in d..x.len() {
            y[i] += g * x[i - d];
        }
    }
    y
}

fn normalize_peak(x: &mut [f64], peak: f64) {
    let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if m > 0.0 {
        x.iter_mut().for_each(|v| *v *= peak / m);
    }
}

/// Audio of utterance `index` of class `class` (0 = bonafide).
pub fn synth_utterance(spec: &SynthSpec, class: usize, index: usize, utt_id: &str) -> Result<AudioBuffer> {
    let mut rng = ChaCha8Rng::seed_from_u64(utterance_seed(spec.seed, class, index));
    let sr = spec.sample_rate as f64;
    let dur = rng.gen_range(spec.min_duration_s..=spec.max_duration_s);
    let n = (dur * sr) as usize;
    let mut x = harmonic_source(&mut rng, n, sr);
    if class > 0 {
        x = band_emphasis(&x, emphasis_centre(class, spec.sample_rate), 2.0, 6.0, sr);
        x = reverberate(&x, reverb_seconds(SPOOF_TAGS[class - 1]), &mut rng, sr);
    }
    normalize_peak(&mut x, 0.5);
    AudioBuffer::new(x, spec.sample_rate, utt_id)
}

/// Manifests written by [`generate_synthetic_corpus`], one per partition.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthCorpus {
    pub train: PathBuf,
    pub dev: PathBuf,
    pub eval: PathBuf,
}

impl SynthCorpus {
    pub fn manifest(&self, p: Partition) -> &Path {
        match p {
            Partition::Train => &self.train,
            Partition::Dev => &self.dev,
            Partition::Eval => &self.eval,
        }
    }
}

/// Write `wav/<utt>.wav` and `train.tsv`, `dev.tsv`, `eval.tsv` under `out_dir`.
pub fn generate_synthetic_corpus(spec: &SynthSpec, out_dir: &Path) -> Result<SynthCorpus> {
    spec.validate()?;
    let wav_dir = out_dir.join("wav");
    std::fs::create_dir_all(&wav_dir).map_err(|e| Error::io(&wav_dir, e))?;
    let split = spec.split();
    let mut jobs = Vec::new();
    for class in 0..=SPOOF_TAGS.len() {
        let label = class_label(class)?;
        let mut index = 0;
        for (p, &count) in Partition::ALL.iter().zip(&split) {
            for k in 0..count {
                let utt_id = format!("{p}_{label}_{k:03}");
                jobs.push((class, index, ManifestEntry {
                    audio_path: wav_dir.join(format!("{utt_id}.wav")),
                    utt_id,
                    label: label.clone(),
                    partition: *p,
                }));
                index += 1;
            }
        }
    }
    jobs.par_iter().try_for_each(|(class, index, e)| {
        let audio = synth_utterance(spec, *class, *index, &e.utt_id)?;
        write_wav(&e.audio_path, &audio)
    })?;
    let manifest = |p: Partition| -> Result<PathBuf> {
        let path = out_dir.join(format!("{p}.tsv"));
        let entries: Vec<ManifestEntry> = jobs
            .iter()
            .filter(|(_, _, e)| e.partition == p)
            .map(|(_, _, e)| e.clone())
            .collect();
        write_manifest(&path, &entries)?;
        Ok(path)
    };
    Ok(SynthCorpus {
        train: manifest(Partition::Train)?,
        dev: manifest(Partition::Dev)?,
        eval: manifest(Partition::Eval)?,
    })
}
