//! Measurements on feature maps: mainlobe width, temporal spread, spectral
//! centroid. Used to check the time–frequency trade-off between windows.

use super::FeatureMap;

/// Natural-log units per decibel of power.
const LN_PER_DB: f64 = std::f64::consts::LN_10 / 10.0;

fn argmax(col: &[f32]) -> usize {
    (0..col.len())
        .max_by(|&a, &b| col[a].total_cmp(&col[b]).then(b.cmp(&a)))
        .unwrap_or(0)
}

/// Number of bins whose log power is within `db` decibels of the column peak.
pub fn bins_within_db(column: &[f32], db: f64) -> usize {
    let peak = column[argmax(column)] as f64;
    column
        .iter()
        .filter(|&&v| v as f64 >= peak - db * LN_PER_DB)
        .count()
}

/// Width in bins of the peak's lobe at `db` below the maximum, with the
/// crossing points linearly interpolated between neighbouring bins.
pub fn lobe_width_bins(column: &[f32], db: f64) -> f64 {
    let p = argmax(column);
    let level = column[p] as f64 - db * LN_PER_DB;
    let crossing = |from: usize, to: usize| -> f64 {
        // `from` is above the level, `to` is below it
        let (a, b) = (column[from] as f64, column[to] as f64);
        let frac = (a - level) / (a - b);
        from as f64 + frac * (to as f64 - from as f64)
    };
    let below = |k: &usize| (column[*k] as f64) < level;
    let right = (p + 1..column.len())
        .find(below)
        .map_or(column.len() as f64 - 1.0, |k| crossing(k - 1, k));
    let left = (0..p).rev().find(below).map_or(0.0, |k| crossing(k + 1, k));
    right - left
}

/// Total power of every frame, `Σ_f exp(value)`.
pub fn frame_energies(map: &FeatureMap) -> Vec<f64> {
    (0..map.n_frames())
        .map(|t| (0..map.n_freq()).map(|f| (map.at(f, t) as f64).exp()).sum())
        .collect()
}

/// Number of frames whose energy is within `db` decibels of the loudest frame.
pub fn frames_within_db(energies: &[f64], db: f64) -> usize {
    let peak = energies.iter().copied().fold(f64::MIN, f64::max);
    let level = peak * 10f64.powf(-db / 10.0);
    energies.iter().filter(|&&e| e >= level).count()
}

/// Power-weighted mean frequency averaged over frames.
pub fn mean_spectral_centroid(map: &FeatureMap, bin_hz: f64) -> f64 {
    let mut total = 0.0;
    for t in 0..map.n_frames() {
        let (mut num, mut den) = (0.0, 0.0);
        for f in 0..map.n_freq() {
            let p = (map.at(f, t) as f64).exp();
            num += p * f as f64 * bin_hz;
            den += p;
        }
        total += num / den;
    }
    total / map.n_frames() as f64
}
