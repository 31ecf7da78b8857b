//! Frequency resolution against time resolution for the three windows:
//! mainlobe width on a pure tone, temporal spread on a short burst.

use multires::dsp::analysis::{frame_energies, frames_within_db, lobe_width_bins};
use multires::dsp::{log_power_spectrogram, AudioBuffer, SpectrogramConfig};
use std::f64::consts::PI;

fn signal(n: usize, f: impl Fn(usize) -> f64, id: &str) -> multires::Result<AudioBuffer> {
    AudioBuffer::new((0..n).map(f).collect(), 16_000, id)
}

fn main() -> multires::Result<()> {
    let tone = signal(16_000, |i| 0.5 * (2.0 * PI * 1000.0 * i as f64 / 16_000.0).sin(), "tone")?;
    let burst = signal(
        4800,
        |i| {
            if (2320..2480).contains(&i) {
                0.5 * (2.0 * PI * 2000.0 * i as f64 / 16_000.0).sin()
            } else {
                0.0
            }
        },
        "burst",
    )?;
    let base = SpectrogramConfig::default();
    let fine = SpectrogramConfig { hop_ms: 1.0, ..base.clone() };
    println!("window  tone 3 dB width (bins)  burst frames within 3 dB (1 ms hop)");
    for w in [18.0, 25.0, 30.0] {
        let t = log_power_spectrogram(&tone, &base.with_window_ms(w))?;
        let b = log_power_spectrogram(&burst, &fine.with_window_ms(w))?;
        println!(
            "{w:>4} ms  {:>22.3}  {:>34}",
            lobe_width_bins(&t.frame(t.n_frames() / 2), 3.0),
            frames_within_db(&frame_energies(&b), 3.0)
        );
    }
    Ok(())
}
