//! ITD, ILD, pinna features and horizontal directivity from toy HRIRs.

use biseld::cues::{
    extract_prtf, find_spectral_features, hpd, hrtf_pair_spectra, ild_wideband, itd, ItdParams,
    DEFAULT_PROMINENCE_DB, SC_BAND_HZ,
};
use biseld::hrtf::{forward_fft, Direction, HrirPair};

/// Spherical-head flavoured toy: delay and shadow grow with lateral angle,
/// and a comb from a single reflection stands in for the pinna.
fn toy_hrir(az: f64, fs: f64) -> biseld::Result<HrirPair> {
    let s = az.to_radians().sin();
    let lag = (0.0007 * s.abs() * fs).round() as usize;
    let far_gain = 1.0 - 0.6 * s.abs();
    let mut near = vec![0.0; 512];
    let mut far = vec![0.0; 512];
    near[64] = 1.0;
    near[70] = 0.6;
    far[64 + lag] = far_gain;
    far[70 + lag] = 0.6 * far_gain;
    let (l, r) = if s >= 0.0 { (far, near) } else { (near, far) };
    HrirPair::new(l, r, fs, Direction::new(az, 0.0))
}

fn main() -> biseld::Result<()> {
    let fs = 48000.0;
    let mut horizontal = Vec::new();
    for az in [-90.0, -60.0, -30.0, 0.0, 30.0, 60.0, 90.0] {
        let pair = toy_hrir(az, fs)?;
        let (l, r) = hrtf_pair_spectra(&pair, 512)?;
        println!(
            "az {az:>5}: ITD {:>7.1} us, ILD {:>6.2} dB",
            itd(&pair, &ItdParams::default())? * 1e6,
            ild_wideband(&l, &r, 20.0, 20000.0)?
        );
        horizontal.push((az, forward_fft(&pair.left, 512, fs)?));
    }

    let front = toy_hrir(0.0, fs)?;
    let prtf = extract_prtf(&front.left, fs, 2.0)?;
    for f in find_spectral_features(&prtf.spectrum, SC_BAND_HZ, DEFAULT_PROMINENCE_DB, 0.0)? {
        println!(
            "{:?} at {:.0} Hz ({:.1} dB)",
            f.kind, f.frequency_hz, f.prominence_db
        );
    }

    let beam = hpd(&horizontal, 4000.0)?;
    println!("left-ear directivity at 4 kHz: {:?}", beam.levels);
    Ok(())
}
