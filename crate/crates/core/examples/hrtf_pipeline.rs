//! Derives a causal HRIR pair from a synthetic binaural/origin measurement.

use biseld::cues::{itd, ItdParams};
use biseld::hrtf::{derive_hrir_pair, DerivationParams, Direction};

fn main() -> biseld::Result<()> {
    let fs = 48000.0;
    let n = 2048;
    // loudspeaker response: a decaying ring starting at sample 300
    let oir: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 - 300.0;
            if t < 0.0 {
                0.0
            } else {
                (-t / 20.0).exp() * (t * 0.3).cos()
            }
        })
        .collect();
    // ears: the same response, delayed and scaled per side
    let ear = |delay: usize, gain: f64| -> Vec<f64> {
        (0..n)
            .map(|i| {
                if i >= delay {
                    gain * oir[i - delay]
                } else {
                    0.0
                }
            })
            .collect()
    };
    let bir_l = ear(10, 0.5);
    let bir_r = ear(2, 1.0);

    let d = derive_hrir_pair(
        &bir_l,
        &bir_r,
        &oir,
        fs,
        Direction::new(60.0, 0.0),
        &DerivationParams::default(),
    )?;
    println!(
        "window start {}, shift {} samples, fallback {}",
        d.start_index, d.shift_samples, d.window_fallback
    );
    let t = itd(&d.pair, &ItdParams::default())?;
    println!("HRIR length {}, ITD {:.1} us", d.pair.len(), t * 1e6);
    Ok(())
}
