//! Builds a miniature binaural dataset from generated tones and HRIRs.

use biseld::dataset::{build_dataset, SynthConfig, SynthInputs, CLASS_NAMES};
use biseld::hrtf::{hrir_file_stem, write_hrir_pair, HrirPair};
use biseld::wav::write_wav_i16;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SynthConfig {
        fs: 8000,
        samples_per_class: 3,
        split: [1, 1, 1],
        segment_s: 0.1,
        mixture_s: 1.2,
        seed: 3,
        ..SynthConfig::default()
    };
    let tmp = tempfile::tempdir()?;
    let (events, hrirs, out) = (
        tmp.path().join("events"),
        tmp.path().join("hrirs"),
        tmp.path().join("out"),
    );
    std::fs::create_dir_all(&events)?;
    std::fs::create_dir_all(&hrirs)?;

    let fs = cfg.hrir_fs as f64;
    for d in cfg.directions() {
        let lag = (0.0007 * d.azimuth_deg.to_radians().sin() * fs).round() as isize;
        let mut l = vec![0.0; 512];
        let mut r = vec![0.0; 512];
        l[(40 + lag.max(0)) as usize] = 0.8;
        r[(40 - lag.min(0)) as usize] = 0.8;
        let pair = HrirPair::new(l, r, fs, d)?;
        write_hrir_pair(hrirs.join(format!("{}.txt", hrir_file_stem(&d))), &pair)?;
    }
    let n = (cfg.segment_s * cfg.fs as f64) as usize;
    for (c, name) in CLASS_NAMES.iter().enumerate() {
        for i in 1..=cfg.samples_per_class {
            let f0 = 300.0 + 200.0 * c as f64 + 20.0 * i as f64;
            let x: Vec<f64> = (0..n)
                .map(|k| 0.4 * (2.0 * std::f64::consts::PI * f0 * k as f64 / cfg.fs as f64).sin())
                .collect();
            write_wav_i16(events.join(format!("{name}{i:02}.wav")), &[&x], cfg.fs)?;
        }
    }

    let m = build_dataset(
        &cfg,
        &SynthInputs {
            events: &events,
            noise: None,
            hrirs: &hrirs,
        },
        &out,
    )?;
    println!("counts per split: {:?}", m.counts);
    let first = &m.files[0];
    println!(
        "{} -> {} ({} label rows)",
        first.wav, first.csv, first.label_rows
    );
    for s in first.slots.iter().take(3) {
        println!(
            "  {} from {} at ({}, {})",
            CLASS_NAMES[s.class_idx], s.clip, s.azimuth_deg, s.elevation_deg
        );
    }
    Ok(())
}
