//! Forward kernels. Maps are `T × F × C` arrays, sequences `T × D`.

use ndarray::{
    concatenate, s, Array1, Array2, Array3, ArrayD, ArrayView1, ArrayView2, ArrayView3, ArrayView4,
    Axis, Zip,
};

use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-3;

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn tanh(x: f64) -> f64 {
    x.tanh()
}

/// Per-channel 3×3 cross-correlation with zero padding, stride 1.
/// `kernel` is `3 × 3 × C`.
pub fn depthwise3x3(x: ArrayView3<f64>, kernel: ArrayView3<f64>) -> Result<Array3<f64>> {
    let (t, f, c) = x.dim();
    if kernel.dim() != (3, 3, c) {
        return Err(Error::shape(format!(
            "depthwise kernel {:?} for {c} channels",
            kernel.dim()
        )));
    }
    let mut out = Array3::zeros((t, f, c));
    for i in 0..t {
        for j in 0..f {
            let mut o = out.slice_mut(s![i, j, ..]);
            for a in 0..3 {
                let ii = i as isize + a as isize - 1;
                if ii < 0 || ii >= t as isize {
                    continue;
                }
                for b in 0..3 {
                    let jj = j as isize + b as isize - 1;
                    if jj < 0 || jj >= f as isize {
                        continue;
                    }
                    let xv = x.slice(s![ii as usize, jj as usize, ..]);
                    let kv = kernel.slice(s![a, b, ..]);
                    Zip::from(&mut o)
                        .and(&xv)
                        .and(&kv)
                        .for_each(|o, &x, &k| *o += x * k);
                }
            }
        }
    }
    Ok(out)
}

/// `x · W + b` on the last axis of a map. `w` is `C_in × C_out`.
pub fn pointwise(
    x: ArrayView3<f64>,
    w: ArrayView2<f64>,
    bias: Option<ArrayView1<f64>>,
) -> Result<Array3<f64>> {
    let (t, f, c) = x.dim();
    if w.nrows() != c {
        return Err(Error::shape(format!(
            "pointwise weights {:?} for {c} channels",
            w.dim()
        )));
    }
    let flat = x
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((t * f, c))
        .expect("standard layout");
    let y = dense(flat.view(), w, bias)?;
    Ok(y.into_shape_with_order((t, f, w.ncols()))
        .expect("standard layout"))
}

pub fn dsep_conv(
    x: ArrayView3<f64>,
    depthwise: ArrayView3<f64>,
    pointwise_w: ArrayView2<f64>,
    bias: ArrayView1<f64>,
) -> Result<Array3<f64>> {
    let d = depthwise3x3(x, depthwise)?;
    pointwise(d.view(), pointwise_w, Some(bias))
}

/// k×k "same" convolution; `w` is `k × k × C_in × C_out`.
pub fn conv2d(
    x: ArrayView3<f64>,
    w: ArrayView4<f64>,
    bias: Option<ArrayView1<f64>>,
) -> Result<Array3<f64>> {
    let (k, k2, cin, cout) = w.dim();
    let (t, f, c) = x.dim();
    if k != k2 || k % 2 == 0 || cin != c {
        return Err(Error::shape(format!(
            "conv kernel {:?} for {c} channels",
            w.dim()
        )));
    }
    if k == 1 {
        return pointwise(x, w.slice(s![0, 0, .., ..]), bias);
    }
    let p = (k / 2) as isize;
    let mut out = Array3::zeros((t, f, cout));
    for i in 0..t {
        for j in 0..f {
            let mut o = out.slice_mut(s![i, j, ..]);
            for a in 0..k {
                let ii = i as isize + a as isize - p;
                if ii < 0 || ii >= t as isize {
                    continue;
                }
                for b in 0..k {
                    let jj = j as isize + b as isize - p;
                    if jj < 0 || jj >= f as isize {
                        continue;
                    }
                    let xv = x.slice(s![ii as usize, jj as usize, ..]);
                    o += &xv.dot(&w.slice(s![a, b, .., ..]));
                }
            }
            if let Some(b) = &bias {
                o += b;
            }
        }
    }
    Ok(out)
}

/// Inference batch norm on the last axis.
pub fn batch_norm(
    mut x: ArrayD<f64>,
    gamma: ArrayView1<f64>,
    beta: ArrayView1<f64>,
    mean: ArrayView1<f64>,
    var: ArrayView1<f64>,
) -> Result<ArrayD<f64>> {
    let c = *x.shape().last().unwrap_or(&0);
    if [gamma.len(), beta.len(), mean.len(), var.len()]
        .iter()
        .any(|&n| n != c)
    {
        return Err(Error::shape(format!(
            "batch norm parameters for {c} channels"
        )));
    }
    let scale: Array1<f64> = Zip::from(&gamma)
        .and(&var)
        .map_collect(|&g, &v| g / (v + BN_EPSILON).sqrt());
    let shift: Array1<f64> = Zip::from(&beta)
        .and(&mean)
        .and(&scale)
        .map_collect(|&b, &m, &s| b - m * s);
    let last = Axis(x.ndim() - 1);
    for mut lane in x.lanes_mut(last) {
        Zip::from(&mut lane)
            .and(&scale)
            .and(&shift)
            .for_each(|v, &s, &b| *v = *v * s + b);
    }
    Ok(x)
}

/// Non-overlapping max pooling; trailing remainders are dropped.
pub fn max_pool(x: ArrayView3<f64>, pt: usize, pf: usize) -> Result<Array3<f64>> {
    if pt == 0 || pf == 0 {
        return Err(Error::invalid("pool factors must be positive"));
    }
    let (t, f, c) = x.dim();
    let mut out = Array3::from_elem((t / pt, f / pf, c), f64::NEG_INFINITY);
    for ((i, j, k), o) in out.indexed_iter_mut() {
        for a in 0..pt {
            for b in 0..pf {
                *o = o.max(x[[i * pt + a, j * pf + b, k]]);
            }
        }
    }
    Ok(out)
}

pub fn concat_last(xs: &[&ArrayD<f64>]) -> Result<ArrayD<f64>> {
    let nd = xs
        .first()
        .map(|x| x.ndim())
        .ok_or_else(|| Error::shape("concat of nothing"))?;
    let views: Vec<_> = xs.iter().map(|x| x.view()).collect();
    concatenate(Axis(nd - 1), &views).map_err(|e| Error::shape(format!("concat: {e}")))
}

pub fn add_all(xs: &[&ArrayD<f64>]) -> Result<ArrayD<f64>> {
    let mut out = (*xs.first().ok_or_else(|| Error::shape("add of nothing"))?).clone();
    for x in &xs[1..] {
        if x.shape() != out.shape() {
            return Err(Error::shape(format!(
                "add {:?} + {:?}",
                out.shape(),
                x.shape()
            )));
        }
        out += *x;
    }
    Ok(out)
}

/// `T × F × C` to `T × (F·C)` with the channel index fastest.
pub fn reshape_to_sequence(x: Array3<f64>) -> Array2<f64> {
    let (t, f, c) = x.dim();
    x.as_standard_layout()
        .into_owned()
        .into_shape_with_order((t, f * c))
        .expect("standard layout")
}

/// Row-wise `x · W + b`; `w` is `D × U`.
pub fn dense(
    x: ArrayView2<f64>,
    w: ArrayView2<f64>,
    bias: Option<ArrayView1<f64>>,
) -> Result<Array2<f64>> {
    if x.ncols() != w.nrows() {
        return Err(Error::shape(format!("dense {:?} · {:?}", x.dim(), w.dim())));
    }
    let mut y = x.dot(&w);
    if let Some(b) = bias {
        if b.len() != w.ncols() {
            return Err(Error::shape(format!(
                "dense bias {} for {} units",
                b.len(),
                w.ncols()
            )));
        }
        y += &b;
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{arr1, Array};
    use proptest::prelude::*;

    #[test]
    fn identity_dsep_is_identity() {
        let x = Array::from_shape_fn((5, 6, 3), |(i, j, k)| {
            (i * 31 + j * 7 + k) as f64 * 0.1 - 2.0
        });
        let mut dw = Array3::zeros((3, 3, 3));
        dw.slice_mut(s![1, 1, ..]).fill(1.0);
        let pw = Array2::eye(3);
        let y = dsep_conv(x.view(), dw.view(), pw.view(), Array1::zeros(3).view()).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn single_pixel_dsep_is_scalar_arithmetic() {
        // 1×1×1 input: only the centre tap sees data
        let x = Array3::from_elem((1, 1, 1), 1.5);
        let dw = Array::from_shape_fn((3, 3, 1), |(a, b, _)| (a * 3 + b) as f64 - 3.7);
        let pw = Array2::from_shape_vec((1, 2), vec![0.25, -2.0]).unwrap();
        let bias = arr1(&[0.1, 0.3]);
        let y = dsep_conv(x.view(), dw.view(), pw.view(), bias.view()).unwrap();
        let centre = 1.5 * (4.0 - 3.7);
        assert!((y[[0, 0, 0]] - (centre * 0.25 + 0.1)).abs() < 1e-12);
        assert!((y[[0, 0, 1]] - (centre * -2.0 + 0.3)).abs() < 1e-12);
    }

    #[test]
    fn constant_plane_interior_constant_edges_differ() {
        let x = Array3::from_elem((6, 6, 1), 2.0);
        let dw = Array3::from_elem((3, 3, 1), 1.0);
        let y = depthwise3x3(x.view(), dw.view()).unwrap();
        for i in 1..5 {
            for j in 1..5 {
                assert_eq!(y[[i, j, 0]], 18.0);
            }
        }
        assert_eq!(y[[0, 3, 0]], 12.0);
        assert_eq!(y[[0, 0, 0]], 8.0);
    }

    #[test]
    fn conv2d_matches_direct_sum() {
        let x = Array::from_shape_fn((4, 5, 2), |(i, j, k)| {
            ((i + 2 * j + 3 * k) % 5) as f64 - 1.0
        });
        let w = Array::from_shape_fn((3, 3, 2, 3), |(a, b, c, d)| {
            ((a + b * 2 + c + d * 3) % 4) as f64 * 0.5 - 0.7
        });
        let y = conv2d(x.view(), w.view(), None).unwrap();
        let (i, j, o) = (0, 2, 1);
        let mut want = 0.0;
        for a in 0..3 {
            for b in 0..3 {
                let (ii, jj) = (i as i32 + a - 1, j as i32 + b - 1);
                if ii < 0 || jj < 0 || ii >= 4 || jj >= 5 {
                    continue;
                }
                for c in 0..2 {
                    want += x[[ii as usize, jj as usize, c]] * w[[a as usize, b as usize, c, o]];
                }
            }
        }
        assert!((y[[i, j, o]] - want).abs() < 1e-12);
    }

    #[test]
    fn pool_floor_and_max() {
        let x = Array::from_shape_fn((11, 5, 1), |(i, j, _)| (i * 5 + j) as f64);
        let y = max_pool(x.view(), 5, 2).unwrap();
        assert_eq!(y.dim(), (2, 2, 1));
        assert_eq!(y[[0, 0, 0]], 21.0);
        assert_eq!(y[[1, 1, 0]], 48.0);
    }

    #[test]
    fn reshape_channel_fastest() {
        let x = Array::from_shape_fn((2, 3, 4), |(t, f, c)| (t * 100 + f * 10 + c) as f64);
        let y = reshape_to_sequence(x);
        assert_eq!(y.dim(), (2, 12));
        assert_eq!(y[[1, 5]], 111.0);
    }

    #[test]
    fn batch_norm_affine() {
        let x = Array::from_shape_vec((1, 2), vec![1.0, 3.0])
            .unwrap()
            .into_dyn();
        let y = batch_norm(
            x,
            arr1(&[2.0, 1.0]).view(),
            arr1(&[0.5, 0.0]).view(),
            arr1(&[1.0, 1.0]).view(),
            arr1(&[1.0 - BN_EPSILON, 4.0 - BN_EPSILON]).view(),
        )
        .unwrap();
        assert!((y[[0, 0]] - 0.5).abs() < 1e-12);
        assert!((y[[0, 1]] - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn activations_match_closed_forms(x in -30.0f64..30.0) {
            prop_assert!((sigmoid(x) - 1.0 / (1.0 + (-x).exp())).abs() < 1e-12);
            let th = ((x).exp() - (-x).exp()) / ((x).exp() + (-x).exp());
            prop_assert!((tanh(x) - th).abs() < 1e-12);
            prop_assert_eq!(relu(x), if x > 0.0 { x } else { 0.0 });
        }
    }
}
