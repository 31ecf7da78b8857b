use super::FeatureMap;
use crate::error::{Error, Result};
use std::path::Path;

const MAGIC: &[u8; 8] = b"MRFM0001";

/// On-disk multi-resolution feature maps of one utterance.
///
/// Layout (little-endian): magic `MRFM0001`; u32 `n_channels`, `n_freq`,
/// `n_frames`, `n_window_tags`; `n_window_tags` × u16 window lengths in ms;
/// `n_channels·n_freq·n_frames` × f32, channel-major, then frequency, then time.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCache {
    pub n_channels: usize,
    pub n_freq: usize,
    pub n_frames: usize,
    pub window_tags: Vec<u16>,
    pub data: Vec<f32>,
}

fn window_tag(ms: f64) -> Result<u16> {
    if ms.fract() != 0.0 || !(1.0..=u16::MAX as f64).contains(&ms) {
        return Err(Error::Config(format!(
            "window length {ms} ms cannot be stored as a whole-millisecond tag"
        )));
    }
    Ok(ms as u16)
}

impl FeatureCache {
    pub fn from_maps(maps: &[FeatureMap]) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| Error::Data("no feature maps to cache".into()))?;
        let mut data = Vec::with_capacity(maps.len() * first.values().len());
        let mut window_tags = Vec::with_capacity(maps.len());
        for m in maps {
            if m.n_freq() != first.n_freq() || m.n_frames() != first.n_frames() {
                return Err(Error::dim(
                    "feature cache",
                    format!(
                        "{}×{} map next to {}×{}",
                        m.n_freq(),
                        m.n_frames(),
                        first.n_freq(),
                        first.n_frames()
                    ),
                ));
            }
            window_tags.push(window_tag(m.window_ms())?);
            data.extend_from_slice(m.values());
        }
        Ok(Self {
            n_channels: maps.len(),
            n_freq: first.n_freq(),
            n_frames: first.n_frames(),
            window_tags,
            data,
        })
    }

    pub fn to_maps(&self, utt_id: &str) -> Result<Vec<FeatureMap>> {
        if self.window_tags.len() != self.n_channels {
            return Err(Error::Data(format!(
                "{utt_id}: {} window tags for {} channels",
                self.window_tags.len(),
                self.n_channels
            )));
        }
        let plane = self.n_freq * self.n_frames;
        self.data
            .chunks_exact(plane)
            .zip(&self.window_tags)
            .map(|(values, &w)| {
                FeatureMap::new(values.to_vec(), self.n_freq, self.n_frames, w as f64, utt_id)
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(24 + 2 * self.window_tags.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        for v in [self.n_channels, self.n_freq, self.n_frames, self.window_tags.len()] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for w in &self.window_tags {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |detail: String| Error::format(origin, detail);
        if bytes.len() < 24 || &bytes[..8] != MAGIC {
            return Err(bad("missing MRFM0001 magic".into()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
        let (n_channels, n_freq, n_frames, n_tags) = (u32_at(8), u32_at(12), u32_at(16), u32_at(20));
        let values = n_channels
            .checked_mul(n_freq)
            .and_then(|v| v.checked_mul(n_frames))
            .ok_or_else(|| bad("header dimensions overflow".into()))?;
        let expected = 24 + 2 * n_tags + 4 * values;
        if bytes.len() != expected {
            return Err(bad(format!(
                "expected {expected} bytes for {n_channels}×{n_freq}×{n_frames}, found {}",
                bytes.len()
            )));
        }
        let window_tags = bytes[24..24 + 2 * n_tags]
            .chunks_exact(2)
            .map(|c| u16::from_le_bytes([c[0], c[1]]))
            .collect();
        let data = bytes[24 + 2 * n_tags..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(Self {
            n_channels,
            n_freq,
            n_frames,
            window_tags,
            data,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}
