#![allow(dead_code)]

use std::path::Path;

use biseld::dataset::{SynthConfig, CLASS_NAMES};
use biseld::hrtf::{hrir_file_stem, write_hrir_pair, Direction, HrirPair};
use biseld::net::{Graph, GraphBuilder, Layer, Weights};
use biseld::wav::write_wav_i16;
use ndarray::{Array1, Array2, Array3};
use rand::Rng;

/// A random, shape-valid graph mixing every layer kind.
pub fn random_graph(rng: &mut impl Rng) -> Graph {
    let freq = rng.gen_range(2..=8);
    let mut c = rng.gen_range(1..=4);
    let mut f = freq;
    let mut b = GraphBuilder::new(freq, c);
    let mut prev = "input".to_string();
    let mut n = 0;
    let mut tri = 0;
    let mut name = |tag: &str| {
        n += 1;
        format!("{tag}{n}")
    };
    for _ in 0..rng.gen_range(1..=5) {
        match rng.gen_range(0..7) {
            0 => {
                let filters = rng.gen_range(1..=6);
                prev = b.push(name("dsep"), Layer::DsepConv { filters }, &[&prev]);
                c = filters;
            }
            1 => {
                let filters = rng.gen_range(1..=5);
                let kernel = if rng.gen_bool(0.5) { 1 } else { 3 };
                let bias = rng.gen_bool(0.5);
                prev = b.push(
                    name("conv"),
                    Layer::Conv {
                        filters,
                        kernel,
                        bias,
                    },
                    &[&prev],
                );
                c = filters;
            }
            2 => prev = b.push(name("bn"), Layer::BatchNorm, &[&prev]),
            3 => prev = b.push(name("relu"), Layer::Relu, &[&prev]),
            4 => {
                let pf = if f >= 2 && rng.gen_bool(0.5) { 2 } else { 1 };
                let pt = rng.gen_range(1..=2);
                prev = b.push(
                    name("pool"),
                    Layer::MaxPool { time: pt, freq: pf },
                    &[&prev],
                );
                f /= pf;
            }
            5 => {
                let c_out = rng.gen_range(10..=14);
                tri += 1;
                prev = b.trinity(&prev, c, c_out, tri).unwrap();
                c = c_out;
            }
            _ => {
                let side = b.push(name("side"), Layer::DsepConv { filters: c }, &[&prev]);
                let tag = if rng.gen_bool(0.5) { "add" } else { "cat" };
                let layer = if tag == "add" {
                    Layer::Add
                } else {
                    Layer::Concat
                };
                prev = b.push(name(tag), layer, &[&prev, &side]);
                if tag == "cat" {
                    c *= 2;
                }
            }
        }
    }
    b.push(name("flat"), Layer::Reshape, &[&prev]);
    for _ in 0..rng.gen_range(0..=2) {
        match rng.gen_range(0..4) {
            0 => {
                let units = rng.gen_range(1..=4);
                let bidirectional = rng.gen_bool(0.5);
                b.push(
                    name("gru"),
                    Layer::Gru {
                        units,
                        bidirectional,
                    },
                    &[],
                );
            }
            1 => {
                b.push(
                    name("fc"),
                    Layer::Dense {
                        units: rng.gen_range(1..=6),
                    },
                    &[],
                );
            }
            2 => {
                b.push(name("bn"), Layer::BatchNorm, &[]);
            }
            _ => {
                b.push(name("sig"), Layer::Sigmoid, &[]);
            }
        }
    }
    b.push("out", Layer::Dense { units: 36 }, &[]);
    b.finish("out", vec![]).unwrap()
}

/// `(trainable, non_trainable)` by counting instantiated weight elements.
pub fn brute_force_count(graph: &Graph, seed: u64) -> (usize, usize) {
    let w = Weights::random(graph, seed).unwrap();
    let mut t = 0;
    let mut nt = 0;
    for (name, a) in &w.arrays {
        let mut k = 0;
        for _ in a.iter() {
            k += 1;
        }
        if name.ends_with("/moving_mean") || name.ends_with("/moving_variance") {
            nt += k;
        } else {
            t += k;
        }
    }
    (t, nt)
}

// ---- metrics oracle ----

/// One raw event: (deci-second frame, class, azimuth°, elevation°).
pub type RawEvent = (usize, usize, f64, f64);

fn unit(az: f64, el: f64) -> [f64; 3] {
    let (a, e) = (az.to_radians(), el.to_radians());
    [a.sin() * e.cos(), a.cos() * e.cos(), e.sin()]
}

/// Angle via atan2(|u×v|, u·v), in degrees.
pub fn angle_deg(u: [f64; 3], v: [f64; 3]) -> f64 {
    let cx = [
        u[1] * v[2] - u[2] * v[1],
        u[2] * v[0] - u[0] * v[2],
        u[0] * v[1] - u[1] * v[0],
    ];
    let cross = (cx[0] * cx[0] + cx[1] * cx[1] + cx[2] * cx[2]).sqrt();
    let dot = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
    cross.atan2(dot).to_degrees()
}

#[derive(Debug, Clone, Copy)]
pub struct OracleReport {
    pub er: f64,
    pub f: f64,
    pub le: f64,
    pub lr: f64,
    pub seld: f64,
}

/// Straight from the definitions, for scenes with at most one event per
/// (frame, class).
pub fn oracle_metrics(
    reference: &[RawEvent],
    predicted: &[RawEvent],
    n_frames: usize,
) -> OracleReport {
    let n_seg = n_frames.div_ceil(10);
    let (mut tp, mut fp, mut fn_, mut nn) = (0usize, 0usize, 0usize, 0usize);
    let mut errors = 0usize;
    for s in 0..n_seg {
        let (mut stp, mut sfp, mut sfn, mut sn) = (0usize, 0usize, 0usize, 0usize);
        for c in 0..12 {
            let in_seg = |e: &&RawEvent| e.1 == c && e.0 / 10 == s;
            let r: Vec<&RawEvent> = reference.iter().filter(in_seg).collect();
            let p: Vec<&RawEvent> = predicted.iter().filter(in_seg).collect();
            if !r.is_empty() {
                sn += 1;
            }
            if !r.is_empty() && !p.is_empty() {
                let mut best = f64::INFINITY;
                for a in &r {
                    for b in &p {
                        best = best.min(angle_deg(unit(a.2, a.3), unit(b.2, b.3)));
                    }
                }
                if best < 20.0 {
                    stp += 1;
                } else {
                    sfp += 1;
                    sfn += 1;
                }
            } else if !r.is_empty() {
                sfn += 1;
            } else if !p.is_empty() {
                sfp += 1;
            }
        }
        let subs = sfn.min(sfp);
        errors += subs + (sfn - subs) + (sfp - subs);
        tp += stp;
        fp += sfp;
        fn_ += sfn;
        nn += sn;
    }
    let f = if 2 * tp + fp + fn_ == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    };
    let er = errors as f64 / nn as f64;

    let (mut sum, mut pairs, mut hit, mut active) = (0.0, 0usize, 0usize, 0usize);
    for r in reference {
        active += 1;
        if let Some(p) = predicted.iter().find(|p| p.0 == r.0 && p.1 == r.1) {
            sum += angle_deg(unit(r.2, r.3), unit(p.2, p.3));
            pairs += 1;
            hit += 1;
        }
    }
    let le = if pairs == 0 {
        180.0
    } else {
        sum / pairs as f64
    };
    let lr = if active == 0 {
        1.0
    } else {
        hit as f64 / active as f64
    };
    let sed = (er + 1.0 - f) / 2.0;
    let doa = (le / 180.0 + 1.0 - lr) / 2.0;
    OracleReport {
        er,
        f,
        le,
        lr,
        seld: (sed + doa) / 2.0,
    }
}

/// Random scene pair: ≤5 segments, ≤3 classes, one event per (frame, class).
pub fn random_scene(rng: &mut impl Rng) -> (Vec<RawEvent>, Vec<RawEvent>, usize) {
    let n_frames = 10 * rng.gen_range(1..=5);
    let classes: Vec<usize> = (0..rng.gen_range(1..=3))
        .map(|_| rng.gen_range(0..12))
        .collect();
    let mut reference = Vec::new();
    let mut predicted = Vec::new();
    for f in 0..n_frames {
        for c in 0..12 {
            if !classes.contains(&c) {
                continue;
            }
            let ref_on = rng.gen_bool(0.4);
            let az = rng.gen_range(-180.0..180.0);
            let el = rng.gen_range(-40.0..60.0);
            if ref_on {
                reference.push((f, c, az, el));
            }
            let pred_on = if ref_on {
                rng.gen_bool(0.8)
            } else {
                rng.gen_bool(0.15)
            };
            if pred_on {
                let (paz, pel) = if rng.gen_bool(0.7) {
                    (
                        az + rng.gen_range(-25.0..25.0),
                        (el + rng.gen_range(-10.0..10.0f64)).clamp(-89.0, 89.0),
                    )
                } else {
                    (rng.gen_range(-180.0..180.0), rng.gen_range(-40.0..60.0))
                };
                predicted.push((f, c, paz, pel));
            }
        }
    }
    if reference.is_empty() {
        reference.push((0, classes[0], 10.0, 0.0));
    }
    (reference, predicted, n_frames)
}

// ---- VAM oracle ----

/// Linear tail `out[t, j] = Σ_i W[t·36 + j, i] · p_i + b[t·36 + j]`.
pub struct LinearTail {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
    pub frames: usize,
}

impl LinearTail {
    pub fn apply(&self, p: &Array3<f64>) -> Array2<f64> {
        let flat: Array1<f64> = p.iter().copied().collect();
        let y = self.w.dot(&flat) + &self.b;
        y.into_shape_with_order((self.frames, 36)).unwrap()
    }
}

/// Closed-form VAM map of a linear tail: chain rule through the mean of
/// per-frame norms, then per-map averages, weighted sum and rectification.
pub fn analytic_linear_vam(tail: &LinearTail, p: &Array3<f64>, class_idx: usize) -> Array2<f64> {
    let (t, f, k) = p.dim();
    let out = tail.apply(p);
    let mut grad = Array1::<f64>::zeros(t * f * k);
    for fr in 0..tail.frames {
        let v: Vec<f64> = (0..3).map(|j| out[[fr, 3 * class_idx + j]]).collect();
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        for (j, vj) in v.iter().enumerate() {
            let row = tail.w.row(fr * 36 + 3 * class_idx + j);
            grad.scaled_add(vj / norm / tail.frames as f64, &row);
        }
    }
    let g = grad.into_shape_with_order((t, f, k)).unwrap();
    let mut weights = vec![0.0; k];
    for ((_, _, c), v) in g.indexed_iter() {
        weights[c] += v / (t * f) as f64;
    }
    Array2::from_shape_fn((t, f), |(i, j)| {
        let s: f64 = (0..k).map(|c| weights[c] * p[[i, j, c]]).sum();
        s.max(0.0)
    })
}

// ---- synthetic dataset inputs ----

/// Pure-delay HRIRs at `fs` for every configured direction.
pub fn write_synthetic_hrirs(dir: &Path, cfg: &SynthConfig) {
    std::fs::create_dir_all(dir).unwrap();
    let fs = cfg.hrir_fs as f64;
    for d in cfg.directions() {
        let itd = 0.0007 * d.azimuth_deg.to_radians().sin() * d.elevation_deg.to_radians().cos();
        let lag = (itd.abs() * fs).round() as usize;
        let mut l = vec![0.0; 512];
        let mut r = vec![0.0; 512];
        let (ld, rd) = if itd >= 0.0 {
            (40, 40 + lag)
        } else {
            (40 + lag, 40)
        };
        l[ld] = 0.8;
        r[rd] = 0.8;
        let pair = HrirPair::new(l, r, fs, Direction::new(d.azimuth_deg, d.elevation_deg)).unwrap();
        write_hrir_pair(
            dir.join(format!("{}.txt", hrir_file_stem(&pair.direction))),
            &pair,
        )
        .unwrap();
    }
}

/// `per_class` short tone bursts per class, named `<class><nn>.wav`.
pub fn write_synthetic_events(dir: &Path, per_class: usize, fs: u32, seconds: f64) {
    std::fs::create_dir_all(dir).unwrap();
    let n = (seconds * fs as f64) as usize;
    for (c, name) in CLASS_NAMES.iter().enumerate() {
        for i in 1..=per_class {
            let f0 = 200.0 + 150.0 * c as f64 + 10.0 * i as f64;
            let x: Vec<f64> = (0..n)
                .map(|k| 0.5 * (2.0 * std::f64::consts::PI * f0 * k as f64 / fs as f64).sin())
                .collect();
            write_wav_i16(dir.join(format!("{name}{i:02}.wav")), &[&x], fs).unwrap();
        }
    }
}
