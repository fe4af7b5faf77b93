//! Vector activation maps: saliency of a pivot layer's feature maps for the
//! length of one class's DOA vector.
//!
//! Gradients come from central finite differences through a [`Tail`] (the
//! part of the network after the pivot), are averaged per feature map into
//! weights, and the weighted sum of the maps is rectified and upscaled.

use ndarray::{Array1, Array2, Array3, ArrayD, Axis, Ix3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::net::decode::vector_norm;
use crate::net::Network;

/// Relative finite-difference step (times the pivot RMS).
pub const FD_RELATIVE_STEP: f64 = 1e-3;
/// Frame norms below this count as sitting on the `|v| = 0` kink.
pub const KINK_TOLERANCE: f64 = 1e-6;

/// Maps a pivot activation (`T_p × F_p × K`) to output vectors (`T' × 36`).
pub trait Tail: Sync {
    fn eval(&self, pivot: &Array3<f64>) -> Result<Array2<f64>>;
}

impl<F> Tail for F
where
    F: Fn(&Array3<f64>) -> Result<Array2<f64>> + Sync,
{
    fn eval(&self, pivot: &Array3<f64>) -> Result<Array2<f64>> {
        self(pivot)
    }
}

/// The downstream part of a [`Network`], re-evaluated from cached activations.
pub struct GraphTail<'a> {
    net: &'a Network,
    cache: Vec<ArrayD<f64>>,
    pivot: usize,
}

impl<'a> GraphTail<'a> {
    pub fn new(net: &'a Network, input: &Array3<f64>, pivot: &str) -> Result<GraphTail<'a>> {
        let id = net
            .graph()
            .find(pivot)
            .ok_or_else(|| Error::Graph(format!("unknown pivot node '{pivot}'")))?;
        let cache = net.forward_all(input)?;
        if cache[id].ndim() != 3 {
            return Err(Error::Graph(format!(
                "pivot '{pivot}' is not a feature map: {:?}",
                cache[id].shape()
            )));
        }
        Ok(GraphTail {
            net,
            cache,
            pivot: id,
        })
    }

    pub fn pivot_activation(&self) -> Array3<f64> {
        self.cache[self.pivot]
            .clone()
            .into_dimensionality::<Ix3>()
            .expect("checked in new")
    }

    pub fn output(&self) -> Result<Array2<f64>> {
        let out = self.cache[self.net.graph().output_index()].clone();
        out.into_dimensionality()
            .map_err(|_| Error::Graph("network output is not a sequence".into()))
    }
}

impl Tail for GraphTail<'_> {
    fn eval(&self, pivot: &Array3<f64>) -> Result<Array2<f64>> {
        self.net
            .forward_from(&self.cache, self.pivot, pivot.clone().into_dyn())
    }
}

/// `|v_c|` averaged over output frames, and the smallest per-frame norm.
pub fn class_score(out: &Array2<f64>, class_idx: usize) -> Result<(f64, f64)> {
    if out.nrows() == 0 {
        return Err(Error::shape("tail produced no frames"));
    }
    let mut sum = 0.0;
    let mut min = f64::INFINITY;
    for row in out.outer_iter() {
        let n = vector_norm(row.as_slice().unwrap_or(&row.to_vec()), class_idx)?;
        if !n.is_finite() {
            return Err(Error::invalid("tail output is not finite"));
        }
        sum += n;
        min = min.min(n);
    }
    Ok((sum / out.nrows() as f64, min))
}

pub fn rms(a: &Array3<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    (a.iter().map(|v| v * v).sum::<f64>() / a.len() as f64).sqrt()
}

/// Default step: `1e-3 · RMS(pivot)`, or `1e-3` for an all-zero pivot.
pub fn default_step(pivot: &Array3<f64>) -> f64 {
    let r = rms(pivot);
    FD_RELATIVE_STEP * if r > 0.0 { r } else { 1.0 }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdGradients {
    pub grads: Array3<f64>,
    pub score: f64,
    pub min_frame_norm: f64,
    /// Some output frame has `|v_c|` at (or within tolerance of) zero,
    /// where the norm is not differentiable.
    pub kink: bool,
}

/// Central differences of the class score with respect to every pivot element.
pub fn pivot_gradients_fd(
    tail: &dyn Tail,
    pivot: &Array3<f64>,
    class_idx: usize,
    step: f64,
) -> Result<FdGradients> {
    if !(step > 0.0) {
        return Err(Error::invalid(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let (score, min_frame_norm) = class_score(&tail.eval(pivot)?, class_idx)?;
    let dim = pivot.raw_dim();
    let base: Vec<f64> = pivot.iter().copied().collect();
    let grads: Vec<f64> = (0..base.len())
        .into_par_iter()
        .map_init(
            || pivot.as_standard_layout().into_owned(),
            |buf, i| -> Result<f64> {
                let flat = buf.as_slice_mut().expect("standard layout");
                flat[i] = base[i] + step;
                let (up, _) = class_score(&tail.eval(buf)?, class_idx)?;
                let flat = buf.as_slice_mut().expect("standard layout");
                flat[i] = base[i] - step;
                let (down, _) = class_score(&tail.eval(buf)?, class_idx)?;
                buf.as_slice_mut().expect("standard layout")[i] = base[i];
                Ok((up - down) / (2.0 * step))
            },
        )
        .collect::<Result<_>>()?;
    Ok(FdGradients {
        grads: Array3::from_shape_vec(dim, grads).expect("same element count"),
        score,
        min_frame_norm,
        kink: min_frame_norm < KINK_TOLERANCE,
    })
}

/// Mean gradient of each feature map (last axis).
pub fn gap_weights(grads: &Array3<f64>) -> Array1<f64> {
    let (t, f, k) = grads.dim();
    if t * f == 0 {
        return Array1::zeros(k);
    }
    grads.sum_axis(Axis(0)).sum_axis(Axis(0)) / (t * f) as f64
}

/// `max(Σ_k w_k · P_k, 0)`.
pub fn weighted_sum_relu(pivot: &Array3<f64>, weights: &Array1<f64>) -> Result<Array2<f64>> {
    let (t, f, k) = pivot.dim();
    if weights.len() != k {
        return Err(Error::shape(format!(
            "{} weights for {k} feature maps",
            weights.len()
        )));
    }
    let flat = pivot
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((t * f, k))
        .expect("standard layout");
    let m = flat.dot(weights).mapv(|v| v.max(0.0));
    Ok(m.into_shape_with_order((t, f)).expect("standard layout"))
}

/// Bilinear resize with corners aligned.
pub fn upscale_to_input(map: &Array2<f64>, target: (usize, usize)) -> Result<Array2<f64>> {
    let (h, w) = map.dim();
    let (th, tw) = target;
    if h == 0 || w == 0 || th == 0 || tw == 0 {
        return Err(Error::invalid(format!(
            "cannot resize {h}×{w} to {th}×{tw}"
        )));
    }
    let coord = |i: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        if n_out == 1 || n_in == 1 {
            return (0, 0, 0.0);
        }
        let x = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let lo = (x.floor() as usize).min(n_in - 1);
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, x - lo as f64)
    };
    Ok(Array2::from_shape_fn(target, |(i, j)| {
        let (r0, r1, a) = coord(i, th, h);
        let (c0, c1, b) = coord(j, tw, w);
        let top = map[[r0, c0]] * (1.0 - b) + map[[r0, c1]] * b;
        let bot = map[[r1, c0]] * (1.0 - b) + map[[r1, c1]] * b;
        top * (1.0 - a) + bot * a
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct VamResult {
    pub class_idx: usize,
    /// Pivot resolution, `T_p × F_p`.
    pub map: Array2<f64>,
    /// Input resolution.
    pub upscaled: Array2<f64>,
    pub weights: Array1<f64>,
    /// Mean over output frames of `|v_c|`.
    pub vector_norm: f64,
    pub kink: bool,
}

/// Full pipeline on an arbitrary tail.
pub fn compute_vam(
    tail: &dyn Tail,
    pivot: &Array3<f64>,
    class_idx: usize,
    target: (usize, usize),
    step: Option<f64>,
) -> Result<VamResult> {
    let step = step.unwrap_or_else(|| default_step(pivot));
    let fd = pivot_gradients_fd(tail, pivot, class_idx, step)?;
    let weights = gap_weights(&fd.grads);
    let map = weighted_sum_relu(pivot, &weights)?;
    let upscaled = upscale_to_input(&map, target)?;
    Ok(VamResult {
        class_idx,
        map,
        upscaled,
        weights,
        vector_norm: fd.score,
        kink: fd.kink,
    })
}

/// VAM of `net` on `input` (`T × F × C`) at node `pivot`, upscaled to `T × F`.
pub fn network_vam(
    net: &Network,
    input: &Array3<f64>,
    class_idx: usize,
    pivot: &str,
) -> Result<VamResult> {
    let tail = GraphTail::new(net, input, pivot)?;
    let p = tail.pivot_activation();
    let (t, f, _) = input.dim();
    compute_vam(&tail, &p, class_idx, (t, f), None)
}
