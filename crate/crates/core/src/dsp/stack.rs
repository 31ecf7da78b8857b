use super::{FeatureMap, SegmentSet};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Several same-shaped maps of one segment, one channel per window length.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiResStack {
    /// `n_c × n_freq × n_frames`.
    pub channels: Tensor<f32>,
    pub window_lengths: Vec<f64>,
    pub utt_id: String,
    pub segment_index: usize,
}

impl MultiResStack {
    pub fn n_channels(&self) -> usize {
        self.window_lengths.len()
    }

    /// Stack every aligned segment of per-window segment sets.
    pub fn from_segment_sets(sets: &[SegmentSet]) -> Result<Vec<MultiResStack>> {
        let first = sets
            .first()
            .ok_or_else(|| Error::Data("no segment sets to stack".into()))?;
        if let Some(bad) = sets.iter().find(|s| s.len() != first.len()) {
            return Err(Error::Data(format!(
                "{}: {} segments at {} ms but {} at {} ms",
                first.utt_id,
                first.len(),
                first.segments[0].window_ms(),
                bad.len(),
                bad.segments[0].window_ms()
            )));
        }
        let windows: Vec<f64> = sets.iter().map(|s| s.segments[0].window_ms()).collect();
        (0..first.len())
            .map(|i| {
                let maps: Vec<FeatureMap> = sets.iter().map(|s| s.segments[i].clone()).collect();
                let mut stack = stack_multi_resolution(&maps, &windows)?;
                stack.segment_index = i;
                Ok(stack)
            })
            .collect()
    }
}

/// Stack same-shaped maps as channels, in `window_lengths` order.
pub fn stack_multi_resolution(maps: &[FeatureMap], window_lengths: &[f64]) -> Result<MultiResStack> {
    let first = maps
        .first()
        .ok_or_else(|| Error::Data("cannot stack zero feature maps".into()))?;
    if maps.len() != window_lengths.len() {
        return Err(Error::Data(format!(
            "{} maps but {} window lengths",
            maps.len(),
            window_lengths.len()
        )));
    }
    for (map, &w) in maps.iter().zip(window_lengths) {
        if map.n_freq() != first.n_freq() || map.n_frames() != first.n_frames() {
            return Err(Error::dim(
                "stack_multi_resolution",
                format!(
                    "{} ms map is {}×{} but {} ms map is {}×{}",
                    first.window_ms(),
                    first.n_freq(),
                    first.n_frames(),
                    map.window_ms(),
                    map.n_freq(),
                    map.n_frames()
                ),
            ));
        }
        if map.window_ms() != w {
            return Err(Error::Data(format!(
                "channel order mismatch: expected a {w} ms map, found {} ms",
                map.window_ms()
            )));
        }
        if map.utt_id() != first.utt_id() {
            return Err(Error::Data(format!(
                "maps from different utterances: {} and {}",
                first.utt_id(),
                map.utt_id()
            )));
        }
    }
    let mut data = Vec::with_capacity(maps.len() * first.values().len());
    for map in maps {
        data.extend_from_slice(map.values());
    }
    Ok(MultiResStack {
        channels: Tensor::new(vec![maps.len(), first.n_freq(), first.n_frames()], data)?,
        window_lengths: window_lengths.to_vec(),
        utt_id: first.utt_id().to_string(),
        segment_index: 0,
    })
}
