use super::FeatureMap;
use crate::error::{Error, Result};

/// Fixed-length overlapping segments cut from one utterance's feature map.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentSet {
    pub segments: Vec<FeatureMap>,
    /// Start frame of each segment in the extended (tiled) map.
    pub offsets: Vec<usize>,
    /// Frames per segment (M).
    pub segment_frames: usize,
    /// Frames shared by neighbouring segments (L).
    pub overlap: usize,
    pub utt_id: String,
    pub n_original_frames: usize,
    pub extended_frames: usize,
}

impl SegmentSet {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }
}

/// Repeat the map cyclically up to the smallest multiple of `m` frames that
/// covers it, then cut `m`-frame segments every `m − l` frames.
pub fn unify_feature_map(map: &FeatureMap, m: usize, l: usize) -> Result<SegmentSet> {
    if m == 0 {
        return Err(Error::Config("segment length M must be positive".into()));
    }
    if l >= m {
        return Err(Error::Config(format!(
            "segment overlap L = {l} must be smaller than M = {m}"
        )));
    }
    let n = map.n_frames();
    let extended = n.div_ceil(m) * m;
    let shift = m - l;
    let offsets: Vec<usize> = (0..)
        .map(|i| i * shift)
        .take_while(|&off| off + m <= extended)
        .collect();
    let segments = offsets
        .iter()
        .map(|&off| {
            let frames: Vec<usize> = (off..off + m).map(|j| j % n).collect();
            map.gather_frames(&frames)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SegmentSet {
        segments,
        offsets,
        segment_frames: m,
        overlap: l,
        utt_id: map.utt_id().to_string(),
        n_original_frames: n,
        extended_frames: extended,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Map whose every value encodes its frame index.
    fn indexed(n_frames: usize, n_freq: usize) -> FeatureMap {
        let values = (0..n_freq)
            .flat_map(|f| (0..n_frames).map(move |t| (t * 10 + f) as f32))
            .collect();
        FeatureMap::new(values, n_freq, n_frames, 25.0, "u").unwrap()
    }

    #[test]
    fn exact_fit_is_one_segment() {
        let s = unify_feature_map(&indexed(400, 2), 400, 200).unwrap();
        assert_eq!(s.offsets, vec![0]);
        assert_eq!(s.segments[0], indexed(400, 2));
    }

    #[test]
    fn five_hundred_frames_make_three_segments() {
        let map = indexed(500, 2);
        let s = unify_feature_map(&map, 400, 200).unwrap();
        assert_eq!(s.extended_frames, 800);
        assert_eq!(s.offsets, vec![0, 200, 400]);
        // segment at 400 covers extended frames 400..800; 500..799 repeat 0..299
        let last = &s.segments[2];
        for j in 0..400 {
            let src = (400 + j) % 500;
            assert_eq!(last.at(1, j), map.at(1, src));
        }
    }

    #[test]
    fn one_frame_over_doubles_the_length() {
        let s = unify_feature_map(&indexed(401, 1), 400, 200).unwrap();
        assert_eq!(s.extended_frames, 800);
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn short_maps_are_tiled() {
        let map = indexed(3, 1);
        let s = unify_feature_map(&map, 7, 0).unwrap();
        let got: Vec<f32> = (0..7).map(|j| s.segments[0].at(0, j)).collect();
        assert_eq!(got, vec![0.0, 10.0, 20.0, 0.0, 10.0, 20.0, 0.0]);
    }

    #[test]
    fn bad_overlap_is_rejected() {
        assert!(matches!(
            unify_feature_map(&indexed(10, 1), 4, 4),
            Err(Error::Config(_))
        ));
    }
}
