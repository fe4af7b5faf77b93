//! Gated recurrent unit, "reset-before" form with a single bias vector.
//!
//! Weight layout per direction: `kernel` is `D × 3H`, `recurrent` is
//! `H × 3H`, `bias` is `3H`, gate blocks ordered `[z, r, h]`:
//!
//! ```text
//! z = σ(x·Wz + h·Uz + bz)
//! r = σ(x·Wr + h·Ur + br)
//! ĥ = tanh(x·Wh + (r ⊙ h)·Uh + bh)
//! h' = z ⊙ h + (1 − z) ⊙ ĥ
//! ```

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::layers::sigmoid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct GruWeights<'a> {
    pub kernel: ArrayView2<'a, f64>,
    pub recurrent: ArrayView2<'a, f64>,
    pub bias: ArrayView1<'a, f64>,
}

impl GruWeights<'_> {
    pub fn units(&self) -> usize {
        self.recurrent.nrows()
    }

    fn check(&self, d: usize) -> Result<usize> {
        let h = self.units();
        if self.kernel.dim() != (d, 3 * h)
            || self.recurrent.dim() != (h, 3 * h)
            || self.bias.len() != 3 * h
        {
            return Err(Error::shape(format!(
                "gru weights kernel {:?}, recurrent {:?}, bias {} for input width {d}",
                self.kernel.dim(),
                self.recurrent.dim(),
                self.bias.len()
            )));
        }
        Ok(h)
    }
}

/// Runs one direction over `seq` (`T × D`), returning `T × H`.
pub fn gru_pass(seq: ArrayView2<f64>, w: GruWeights, reverse: bool) -> Result<Array2<f64>> {
    let (t, d) = seq.dim();
    let hn = w.check(d)?;
    // input projections for all steps at once
    let xp = seq.dot(&w.kernel) + w.bias.view();
    let uz_r = w.recurrent.slice(s![.., ..2 * hn]);
    let uh = w.recurrent.slice(s![.., 2 * hn..]);
    let mut out = Array2::zeros((t, hn));
    let mut h = Array1::<f64>::zeros(hn);
    for step in 0..t {
        let i = if reverse { t - 1 - step } else { step };
        let x = xp.row(i);
        let hz_r = h.dot(&uz_r);
        let z: Array1<f64> = (0..hn).map(|k| sigmoid(x[k] + hz_r[k])).collect();
        let r: Array1<f64> = (0..hn).map(|k| sigmoid(x[hn + k] + hz_r[hn + k])).collect();
        let rh = &r * &h;
        let hh = rh.dot(&uh);
        for k in 0..hn {
            let cand = (x[2 * hn + k] + hh[k]).tanh();
            h[k] = z[k] * h[k] + (1.0 - z[k]) * cand;
        }
        out.row_mut(i).assign(&h);
    }
    Ok(out)
}

/// Unidirectional when `backward` is `None`; otherwise `[forward, backward]`
/// concatenated per time step, the backward pass aligned to input time.
pub fn gru_forward(
    seq: ArrayView2<f64>,
    forward: GruWeights,
    backward: Option<GruWeights>,
) -> Result<Array2<f64>> {
    let f = gru_pass(seq, forward, false)?;
    match backward {
        None => Ok(f),
        Some(bw) => {
            let b = gru_pass(seq, bw, true)?;
            Ok(concatenate(Axis(1), &[f.view(), b.view()]).expect("equal row counts"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, arr2, Array};

    #[test]
    fn zero_weights_give_zero_output() {
        let seq = Array::from_shape_fn((4, 3), |(i, j)| (i + j) as f64);
        let k = Array2::zeros((3, 6));
        let u = Array2::zeros((2, 6));
        let b = Array1::zeros(6);
        let w = GruWeights {
            kernel: k.view(),
            recurrent: u.view(),
            bias: b.view(),
        };
        let y = gru_forward(seq.view(), w, Some(w)).unwrap();
        assert_eq!(y.dim(), (4, 4));
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_recurrence_by_hand() {
        let (wz, wr, wh) = (0.5, -0.3, 0.8);
        let (uz, ur, uh) = (0.2, 0.7, -0.4);
        let (bz, br, bh) = (0.1, 0.0, -0.2);
        let k = arr2(&[[wz, wr, wh]]);
        let u = arr2(&[[uz, ur, uh]]);
        let b = arr1(&[bz, br, bh]);
        let w = GruWeights {
            kernel: k.view(),
            recurrent: u.view(),
            bias: b.view(),
        };
        let xs = [1.0, -2.0];
        let y = gru_forward(arr2(&[[xs[0]], [xs[1]]]).view(), w, None).unwrap();
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let mut h = 0.0;
        for (t, &x) in xs.iter().enumerate() {
            let z = sig(wz * x + uz * h + bz);
            let r = sig(wr * x + ur * h + br);
            let c = (wh * x + uh * (r * h) + bh).tanh();
            h = z * h + (1.0 - z) * c;
            assert!((y[[t, 0]] - h).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_pass_is_forward_on_reversed_input() {
        let seq = Array::from_shape_fn((5, 2), |(i, j)| ((i * 3 + j) % 4) as f64 - 1.5);
        let k = Array::from_shape_fn((2, 9), |(i, j)| ((i + 2 * j) % 5) as f64 * 0.1 - 0.2);
        let u = Array::from_shape_fn((3, 9), |(i, j)| ((2 * i + j) % 3) as f64 * 0.15 - 0.1);
        let b = Array::from_shape_fn(9, |i| i as f64 * 0.01);
        let w = GruWeights {
            kernel: k.view(),
            recurrent: u.view(),
            bias: b.view(),
        };
        let bi = gru_forward(seq.view(), w, Some(w)).unwrap();
        assert_eq!(bi.ncols(), 6);
        let rev = seq.slice(s![..;-1, ..]).to_owned();
        let f = gru_pass(rev.view(), w, false).unwrap();
        for t in 0..5 {
            for k in 0..3 {
                assert!((bi[[t, 3 + k]] - f[[4 - t, k]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let k = Array2::zeros((3, 6));
        let u = Array2::zeros((2, 6));
        let b = Array1::zeros(6);
        let w = GruWeights {
            kernel: k.view(),
            recurrent: u.view(),
            bias: b.view(),
        };
        assert!(gru_pass(Array2::zeros((2, 4)).view(), w, false).is_err());
    }
}
