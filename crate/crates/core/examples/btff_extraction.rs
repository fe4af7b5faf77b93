//! Binaural time-frequency features from a lateral noise source.

use biseld::btff::{extract_btff, StftParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> biseld::Result<()> {
    let p = StftParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = p.fs as usize;
    let src: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
    // right ear leads by 8 samples and is 6 dB louder
    let lag = 8;
    let right = src.clone();
    let left: Vec<f64> = (0..n)
        .map(|i| if i >= lag { 0.5 * src[i - lag] } else { 0.0 })
        .collect();

    let feat = extract_btff(&left, &right, &p)?;
    println!(
        "{} frames x {} mel bands x 8 channels",
        feat.n_frames(),
        feat.channel(0).ncols()
    );
    let names = ["mel L", "mel R", "V L", "V R", "ITD", "ILD", "SC L", "SC R"];
    for (c, name) in names.iter().enumerate() {
        println!(
            "{name:>5}: mean {:+.4}",
            feat.channel(c).mean().unwrap_or(0.0)
        );
    }
    let itd_us = feat.channel(4).mean().unwrap_or(0.0) * 1e6;
    println!(
        "mean ITD {itd_us:+.1} us, true lag {:+.1} us",
        lag as f64 / p.fs * 1e6
    );
    Ok(())
}
