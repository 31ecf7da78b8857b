//! How utterances of different lengths are cut into fixed 400-frame
//! segments with a 200-frame overlap. Each segment prints its offset and
//! its first and last source frame; wrapped segments end below their start.

use multires::dsp::{unify_feature_map, FeatureMap};

fn main() -> multires::Result<()> {
    for n in [150, 400, 401, 500, 1234] {
        let map = FeatureMap::new((0..n).map(|t| t as f32).collect(), 1, n, 25.0, "u")?;
        let s = unify_feature_map(&map, 400, 200)?;
        let spans: Vec<String> = s
            .segments
            .iter()
            .zip(&s.offsets)
            .map(|(seg, off)| {
                let v = seg.values();
                format!("@{off}:{}→{}", v[0], v[v.len() - 1])
            })
            .collect();
        println!("{n:>5} frames -> extended {:>5}, {} segments {}", s.extended_frames, s.len(), spans.join(" "));
    }
    Ok(())
}
