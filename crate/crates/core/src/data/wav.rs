use crate::dsp::AudioBuffer;
use crate::error::{Error, Result};
use std::path::Path;

const FULL_SCALE: f64 = 32768.0;

fn utt_id_of(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Read a 16-bit PCM mono file, scaling samples by 1/32768.
///
/// With `expected_rate` set, any other header rate is an error; audio is
/// never resampled.
pub fn read_wav(path: &Path, expected_rate: Option<u32>) -> Result<AudioBuffer> {
    let reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    })?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::format(
            path,
            format!(
                "only 16-bit integer PCM is supported, found {}-bit {:?}",
                spec.bits_per_sample, spec.sample_format
            ),
        ));
    }
    if spec.channels != 1 {
        return Err(Error::format(
            path,
            format!("only mono audio is supported, found {} channels", spec.channels),
        ));
    }
    if let Some(rate) = expected_rate {
        if spec.sample_rate != rate {
            return Err(Error::Config(format!(
                "{}: sample rate mismatch: file is {} Hz, configuration expects {rate} Hz",
                path.display(),
                spec.sample_rate
            )));
        }
    }
    let samples = reader
        .into_samples::<i16>()
        .map(|s| s.map(|v| v as f64 / FULL_SCALE))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::format(path, e.to_string()))?;
    AudioBuffer::new(samples, spec.sample_rate, utt_id_of(path))
}

/// Write 16-bit PCM mono; samples are clipped to the representable range.
pub fn write_wav(path: &Path, audio: &AudioBuffer) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: audio.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let wrap = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for &s in audio.samples() {
        let v = (s * FULL_SCALE).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
        w.write_sample(v).map_err(wrap)?;
    }
    w.finalize().map_err(wrap)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_and_length() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("u1.wav");
        let mut samples = vec![0.0; 16000];
        samples[0] = -1.0;
        samples[1] = 0.5;
        write_wav(&p, &AudioBuffer::new(samples, 16000, "u1").unwrap()).unwrap();
        let a = read_wav(&p, Some(16000)).unwrap();
        assert_eq!(a.len(), 16000);
        assert_eq!(a.samples()[0], -1.0);
        assert_eq!(a.samples()[1], 0.5);
        assert_eq!(a.utt_id(), "u1");
    }

    #[test]
    fn rate_mismatch_is_explicit() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cd.wav");
        write_wav(&p, &AudioBuffer::new(vec![0.1; 441], 44100, "cd").unwrap()).unwrap();
        let err = read_wav(&p, Some(16000)).unwrap_err().to_string();
        assert!(err.contains("sample rate mismatch"), "{err}");
    }

    #[test]
    fn stereo_and_float_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("st.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: hound::SampleFormat::Int,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        w.write_sample(0i16).unwrap();
        w.write_sample(0i16).unwrap();
        w.finalize().unwrap();
        assert!(read_wav(&p, None).unwrap_err().to_string().contains("mono"));

        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(&p, spec).unwrap();
        w.write_sample(0.25f32).unwrap();
        w.finalize().unwrap();
        assert!(read_wav(&p, None).unwrap_err().to_string().contains("PCM"));
    }
}
