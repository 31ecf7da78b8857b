mod common;

use common::brute_force_segments;
use multires::dsp::{
    extract_multi_resolution, log_power_spectrogram, stack_multi_resolution, unify_feature_map,
    AudioBuffer, FeatureCache, FeatureMap, MultiResConfig, SpectrogramConfig, WindowFunction,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

fn noise(n: usize, seed: u64) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
    AudioBuffer::new(s, 16000, format!("noise{seed}")).unwrap()
}

#[test]
fn parseval_holds_per_frame_with_a_rectangular_window() {
    // 32 ms at 16 kHz is exactly one 512-point FFT frame
    let cfg = SpectrogramConfig {
        window_ms: 32.0,
        window: WindowFunction::Rectangular,
        log_floor: 1e-30,
        ..SpectrogramConfig::default()
    };
    for seed in 0..5 {
        let audio = noise(16000, seed);
        let map = log_power_spectrogram(&audio, &cfg).unwrap();
        let hop = 160;
        for t in [0, 7, map.n_frames() - 1] {
            let time_energy: f64 = audio.samples()[t * hop..t * hop + 512].iter().map(|v| v * v).sum();
            let freq_energy: f64 = (0..map.n_freq())
                .map(|f| {
                    let p = (map.at(f, t) as f64).exp();
                    if f == 0 || f == 256 { p } else { 2.0 * p }
                })
                .sum::<f64>()
                / 512.0;
            assert!(
                ((freq_energy - time_energy) / time_energy).abs() < 1e-5,
                "frame {t}: {freq_energy} vs {time_energy}"
            );
        }
    }
}

#[test]
fn each_channel_equals_its_single_window_extraction() {
    let audio = noise(24000, 9);
    let cfg = MultiResConfig::default();
    let maps = extract_multi_resolution(&audio, &cfg).unwrap();
    assert_eq!(maps.len(), 3);
    for (m, &w) in maps.iter().zip(&cfg.windows_ms) {
        let single = log_power_spectrogram(&audio, &cfg.base.with_window_ms(w)).unwrap();
        assert_eq!(m, &single.truncate_frames(m.n_frames()).unwrap());
    }
}

#[test]
fn common_frame_count_is_set_by_the_longest_window() {
    let audio = noise(16000, 2);
    let maps = extract_multi_resolution(&audio, &MultiResConfig::default()).unwrap();
    // floor((16000 − 480) / 160) + 1
    assert!(maps.iter().all(|m| m.n_frames() == 98 && m.n_freq() == 257));
}

#[test]
fn extraction_is_deterministic() {
    let audio = noise(8000, 4);
    let a = extract_multi_resolution(&audio, &MultiResConfig::default()).unwrap();
    let b = extract_multi_resolution(&audio, &MultiResConfig::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_channel_stack_is_the_map_itself() {
    let audio = noise(16000, 5);
    let m = log_power_spectrogram(&audio, &SpectrogramConfig::default()).unwrap();
    let s = stack_multi_resolution(std::slice::from_ref(&m), &[25.0]).unwrap();
    assert_eq!(s.channels.data(), m.values());
}

fn indexed_map(n_frames: usize) -> FeatureMap {
    FeatureMap::new((0..n_frames).map(|t| t as f32).collect(), 1, n_frames, 25.0, "u").unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn segmentation_matches_tiling_oracle(n in 1usize..2000, m in 2usize..500, l_frac in 0.0f64..1.0) {
        let l = ((m as f64) * l_frac) as usize % m;
        let s = unify_feature_map(&indexed_map(n), m, l).unwrap();
        let (extended, want) = brute_force_segments(n, m, l);
        prop_assert_eq!(s.extended_frames, extended);
        prop_assert_eq!(s.len(), want.len());
        for (seg, frames) in s.segments.iter().zip(&want) {
            let got: Vec<usize> = seg.values().iter().map(|&v| v as usize).collect();
            prop_assert_eq!(&got, frames);
        }
        prop_assert!(s.offsets.windows(2).all(|w| w[1] - w[0] == m - l));
        // full coverage is guaranteed once the stride divides the segment length
        if m % (m - l) != 0 {
            return Ok(());
        }
        let mut seen = vec![false; n];
        for seg in &s.segments {
            for &v in seg.values() {
                seen[v as usize] = true;
            }
        }
        prop_assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn cache_round_trips(values in prop::collection::vec(-30.0f32..10.0, 12), tags in prop::sample::subsequence(vec![18u16, 25, 30], 1..=3)) {
        let n_c = tags.len();
        let maps: Vec<FeatureMap> = tags
            .iter()
            .map(|&w| FeatureMap::new(values.clone(), 3, 4, w as f64, "u").unwrap())
            .collect();
        let c = FeatureCache::from_maps(&maps).unwrap();
        prop_assert_eq!(c.n_channels, n_c);
        let back = FeatureCache::from_bytes(&c.to_bytes(), Path::new("mem")).unwrap();
        prop_assert_eq!(back.to_maps("u").unwrap(), maps);
    }
}
