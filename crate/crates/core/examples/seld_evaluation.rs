//! Scores a prediction against a reference with the location-aware metrics.

use biseld::metrics::{evaluate, FrameEvents};
use biseld::Direction;

fn main() -> biseld::Result<()> {
    let n = 20;
    let mut reference = FrameEvents::new(n);
    let mut predicted = FrameEvents::new(n);
    for f in 0..10 {
        reference.push(f, 0, Direction::new(30.0, 0.0).unit_vector())?;
        predicted.push(f, 0, Direction::new(35.0, 0.0).unit_vector())?;
    }
    for f in 5..15 {
        reference.push(f, 4, Direction::new(-90.0, 30.0).unit_vector())?;
        // wrong half of the time
        let az = if f < 10 { -90.0 } else { 90.0 };
        predicted.push(f, 4, Direction::new(az, 30.0).unit_vector())?;
    }
    predicted.push(18, 7, Direction::new(0.0, 60.0).unit_vector())?;

    let r = evaluate(&reference, &predicted)?;
    println!(
        "ER {:.3}  F {:.3}  LE {:.2} deg  LR {:.3}",
        r.er20, r.f20, r.le_cd, r.lr_cd
    );
    println!(
        "SED error {:.3}  DOA error {:.3}  SELD error {:.3}",
        r.sed_error, r.doa_error, r.seld_error
    );
    Ok(())
}
