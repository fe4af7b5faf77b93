//! Turning 36-wide output vectors into detections.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::dataset::EventLabel;
use crate::error::{Error, Result};

pub const N_CLASSES: usize = 12;
pub const OUTPUT_WIDTH: usize = 3 * N_CLASSES;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub class_idx: usize,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub magnitude: f64,
}

/// `(x, y, z)` of a class; `x` to the right ear, `y` to the front, `z` up.
pub fn class_vector(v: &[f64], class_idx: usize) -> Result<[f64; 3]> {
    if v.len() != OUTPUT_WIDTH {
        return Err(Error::shape(format!(
            "output vector has {} values, expected {OUTPUT_WIDTH}",
            v.len()
        )));
    }
    if class_idx >= N_CLASSES {
        return Err(Error::invalid(format!(
            "class {class_idx} outside 0..{}",
            N_CLASSES - 1
        )));
    }
    Ok([v[3 * class_idx], v[3 * class_idx + 1], v[3 * class_idx + 2]])
}

pub fn vector_norm(v: &[f64], class_idx: usize) -> Result<f64> {
    let [x, y, z] = class_vector(v, class_idx)?;
    Ok((x * x + y * y + z * z).sqrt())
}

/// Classes whose vector is longer than `threshold`, with their direction.
pub fn decode_output(v: &[f64], threshold: f64) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for k in 0..N_CLASSES {
        let [x, y, z] = class_vector(v, k)?;
        let m = (x * x + y * y + z * z).sqrt();
        if m > threshold {
            let azimuth = if x == 0.0 && y == 0.0 {
                0.0
            } else {
                x.atan2(y).to_degrees()
            };
            out.push(Detection {
                class_idx: k,
                azimuth_deg: azimuth,
                elevation_deg: z.atan2(x.hypot(y)).to_degrees(),
                magnitude: m,
            });
        }
    }
    Ok(out)
}

/// Decodes every output frame into label rows. Output frame `k` starts at
/// `k · hop_s` seconds and is written to the deci-second frame containing it.
pub fn decode_sequence(
    out: ArrayView2<f64>,
    hop_s: f64,
    threshold: f64,
) -> Result<Vec<EventLabel>> {
    if hop_s <= 0.0 {
        return Err(Error::invalid("output frame hop must be positive"));
    }
    let mut labels = Vec::new();
    for (k, row) in out.outer_iter().enumerate() {
        let row = row.to_vec();
        let frame_ds = (k as f64 * hop_s / 0.1 + 1e-9).floor() as u32;
        for d in decode_output(&row, threshold)? {
            labels.push(EventLabel {
                frame_ds,
                class_idx: d.class_idx,
                azimuth_deg: d.azimuth_deg,
                elevation_deg: d.elevation_deg,
            });
        }
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one(class: usize, v: [f64; 3]) -> Vec<f64> {
        let mut out = vec![0.0; OUTPUT_WIDTH];
        out[3 * class..3 * class + 3].copy_from_slice(&v);
        out
    }

    #[test]
    fn front_right_and_below_threshold() {
        let d = decode_output(&one(0, [0.0, 1.0, 0.0]), 0.5).unwrap();
        assert_eq!(
            d,
            vec![Detection {
                class_idx: 0,
                azimuth_deg: 0.0,
                elevation_deg: 0.0,
                magnitude: 1.0
            }]
        );
        let d = decode_output(&one(4, [1.0, 0.0, 0.0]), 0.5).unwrap();
        assert_eq!(d[0].class_idx, 4);
        assert!((d[0].azimuth_deg - 90.0).abs() < 1e-12);
        assert!(decode_output(&one(2, [0.0, 0.4, 0.0]), 0.5)
            .unwrap()
            .is_empty());
        let up = decode_output(&one(1, [0.0, 0.0, 0.9]), 0.5).unwrap();
        assert_eq!((up[0].azimuth_deg, up[0].elevation_deg), (0.0, 90.0));
        assert!(decode_output(&[0.0; 35], 0.5).is_err());
    }

    #[test]
    fn norms() {
        assert_eq!(vector_norm(&one(3, [3.0, 4.0, 0.0]), 3).unwrap(), 5.0);
        assert_eq!(vector_norm(&one(3, [3.0, 4.0, 0.0]), 2).unwrap(), 0.0);
        assert!(vector_norm(&one(0, [1.0, 0.0, 0.0]), 12).is_err());
    }

    #[test]
    fn sequence_frames_in_deciseconds() {
        let mut out = ndarray::Array2::zeros((3, OUTPUT_WIDTH));
        out[[2, 1]] = 0.9;
        let labels = decode_sequence(out.view(), 0.1, 0.5).unwrap();
        assert_eq!(labels.len(), 1);
        assert_eq!(labels[0].frame_ds, 2);
    }

    proptest! {
        #[test]
        fn direction_is_scale_invariant(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0, k in 0.1f64..10.0) {
            prop_assume!((x * x + y * y + z * z).sqrt() > 0.05);
            let a = decode_output(&one(5, [x, y, z]), 0.0).unwrap();
            let b = decode_output(&one(5, [k * x, k * y, k * z]), 0.0).unwrap();
            prop_assert!((a[0].azimuth_deg - b[0].azimuth_deg).abs() < 1e-9);
            prop_assert!((a[0].elevation_deg - b[0].elevation_deg).abs() < 1e-9);
            prop_assert!((b[0].magnitude - k * a[0].magnitude).abs() < 1e-9);
        }
    }
}
