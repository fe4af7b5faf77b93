//! Shared signal-processing primitives: FFT wrappers, FIR design,
//! zero-phase filtering, FFT convolution and rational resampling.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Unnormalized forward DFT of `x` zero-padded to `n_fft` points.
pub fn fft_real(x: &[f64], n_fft: usize) -> Result<Vec<Complex64>> {
    if n_fft < x.len() {
        return Err(Error::invalid(format!(
            "n_fft ({n_fft}) shorter than input ({})",
            x.len()
        )));
    }
    if n_fft == 0 {
        return Err(Error::invalid("n_fft must be positive"));
    }
    let mut buf: Vec<Complex64> = x
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n_fft)
        .collect();
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    Ok(buf)
}

/// Inverse DFT with 1/N scaling.
pub fn ifft(spectrum: &[Complex64]) -> Vec<Complex64> {
    let n = spectrum.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf = spectrum.to_vec();
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|c| *c *= scale);
    buf
}

/// Linear convolution of `x` with `h`, truncated to `x.len()` samples.
pub fn convolve_truncated(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return vec![0.0; x.len()];
    }
    if x.len().min(h.len()) <= 32 {
        return (0..x.len())
            .map(|n| {
                let lo = n.saturating_sub(h.len() - 1);
                (lo..=n).map(|k| x[k] * h[n - k]).sum()
            })
            .collect();
    }
    let full = x.len() + h.len() - 1;
    let n_fft = full.next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n_fft);
    let inv = planner.plan_fft_inverse(n_fft);
    let pad = |s: &[f64]| -> Vec<Complex64> {
        let mut v = vec![Complex64::new(0.0, 0.0); n_fft];
        for (dst, &src) in v.iter_mut().zip(s) {
            dst.re = src;
        }
        v
    };
    let mut a = pad(x);
    let mut b = pad(h);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    let scale = 1.0 / n_fft as f64;
    a[..x.len()].iter().map(|c| c.re * scale).collect()
}

/// Centered ("same") convolution with an odd-length kernel.
pub fn convolve_same(x: &[f64], h: &[f64]) -> Vec<f64> {
    debug_assert!(h.len() % 2 == 1);
    let half = h.len() / 2;
    let n = x.len();
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (j, &hj) in h.iter().enumerate() {
                // output i aligns kernel center with input i
                let k = i as isize + half as isize - j as isize;
                if k >= 0 && (k as usize) < n {
                    acc += hj * x[k as usize];
                }
            }
            acc
        })
        .collect()
}

/// Hamming-windowed sinc low-pass with unity DC gain.
/// `cutoff` is in cycles per sample (0, 0.5).
pub fn lowpass_fir(taps: usize, cutoff: f64) -> Result<Vec<f64>> {
    if taps == 0 || taps.is_multiple_of(2) {
        return Err(Error::invalid(format!(
            "FIR length must be odd, got {taps}"
        )));
    }
    if !(cutoff > 0.0 && cutoff < 0.5) {
        return Err(Error::invalid(format!(
            "normalized cutoff {cutoff} outside (0, 0.5)"
        )));
    }
    let m = (taps - 1) as f64;
    let mut h: Vec<f64> = (0..taps)
        .map(|n| {
            let t = n as f64 - m / 2.0;
            let w = if taps == 1 {
                1.0
            } else {
                0.54 - 0.46 * (2.0 * PI * n as f64 / m).cos()
            };
            2.0 * cutoff * sinc(2.0 * cutoff * t) * w
        })
        .collect();
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    Ok(h)
}

/// Symmetric FIR applied forward and backward; zero phase, squared magnitude.
pub fn zero_phase_filter(x: &[f64], h: &[f64]) -> Vec<f64> {
    let once = convolve_same(x, h);
    convolve_same(&once, h)
}

/// Zero-stuffing by `factor` followed by an anti-image low-pass with gain `factor`.
pub fn upsample(x: &[f64], factor: usize, h: &[f64]) -> Vec<f64> {
    if factor <= 1 {
        return x.to_vec();
    }
    let mut stuffed = vec![0.0; x.len() * factor];
    for (i, &v) in x.iter().enumerate() {
        stuffed[i * factor] = v * factor as f64;
    }
    convolve_same(&stuffed, h)
}

pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Periodic Hann window of length `n`.
pub fn hann_periodic(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Symmetric Hann window of length `n` (peak 1 at the center when `n` is odd).
pub fn hann_symmetric(n: usize) -> Vec<f64> {
    if n <= 1 {
        return vec![1.0; n];
    }
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos())
        .collect()
}

pub fn argmax_abs(x: &[f64]) -> Option<usize> {
    x.iter()
        .enumerate()
        .fold(None, |best: Option<(usize, f64)>, (i, &v)| match best {
            Some((_, b)) if v.abs() <= b => best,
            _ => Some((i, v.abs())),
        })
        .map(|(i, _)| i)
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Band-limited rational resampler (polyphase windowed sinc).
///
/// Output length is `round(len * fs_out / fs_in)`. Equal rates return the
/// input unchanged.
pub fn resample(x: &[f64], fs_in: u32, fs_out: u32) -> Result<Vec<f64>> {
    if fs_in == 0 || fs_out == 0 {
        return Err(Error::invalid("sampling rates must be positive"));
    }
    if fs_in == fs_out {
        return Ok(x.to_vec());
    }
    let g = gcd(fs_in as u64, fs_out as u64);
    let up = (fs_out as u64 / g) as usize;
    let down = (fs_in as u64 / g) as usize;
    let out_len = ((x.len() as u128 * fs_out as u128 + fs_in as u128 / 2) / fs_in as u128) as usize;

    // cutoff relative to the input Nyquist
    let rolloff = 0.95 * (fs_out as f64 / fs_in as f64).min(1.0);
    let half_width = (24.0 / rolloff).ceil() as isize;
    let taps = (2 * half_width + 1) as usize;

    // one kernel per output phase: phase p samples the kernel at offset p/up
    let phases: Vec<Vec<f64>> = (0..up)
        .map(|p| {
            let frac = p as f64 / up as f64;
            let mut k: Vec<f64> = (0..taps)
                .map(|j| {
                    let t = (j as isize - half_width) as f64 - frac;
                    let w = blackman(t / (half_width as f64 + 1.0));
                    rolloff * sinc(rolloff * t) * w
                })
                .collect();
            let s: f64 = k.iter().sum();
            k.iter_mut().for_each(|v| *v /= s);
            k
        })
        .collect();

    let y = (0..out_len)
        .map(|n| {
            let pos = n * down;
            let base = (pos / up) as isize;
            let kernel = &phases[pos % up];
            let mut acc = 0.0;
            for (j, &kj) in kernel.iter().enumerate() {
                let idx = base + j as isize - half_width;
                if idx >= 0 && (idx as usize) < x.len() {
                    acc += kj * x[idx as usize];
                }
            }
            acc
        })
        .collect();
    Ok(y)
}

fn blackman(u: f64) -> f64 {
    // u in [-1, 1]
    if u.abs() >= 1.0 {
        return 0.0;
    }
    let a = PI * (u + 1.0);
    0.42 - 0.5 * a.cos() + 0.08 * (2.0 * a).cos()
}
