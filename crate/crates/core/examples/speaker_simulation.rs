//! Closed-box loudspeaker response and its summary figures.

use biseld::speaker::{log_grid, response, summarize, Air, RolloffReference, SpeakerSetup, TspSet};

fn main() -> biseld::Result<()> {
    let tsp = TspSet::default();
    let freqs = log_grid(20.0, 20000.0, 400);
    for v_box in [400.0, 800.0, 1600.0] {
        let setup = SpeakerSetup {
            v_box_cc: v_box,
            ..SpeakerSetup::default()
        };
        let table = response(&tsp, &setup, &freqs, &Air::default())?;
        let s = summarize(&table, RolloffReference::Peak, 6.0)?;
        println!(
            "box {v_box:>6} cc: roll-off {:6.1} Hz, max excursion {:.3} mm at {:.0} Hz, peak SPL {:.1} dB",
            s.rolloff_hz, s.peak_excursion_mm, s.peak_excursion_hz, s.peak_spl_db
        );
    }
    Ok(())
}
