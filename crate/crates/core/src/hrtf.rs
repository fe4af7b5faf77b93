//! HRIR/HRTF data model and post-processing.
//!
//! Covers the text database format (two columns, left then right), the
//! `a<AAA>e<±EE>` file naming, measurement time windowing, HRTF derivation
//! by complex division of binaural and origin transfer functions, and the
//! circular-shift compensation that makes ipsilateral HRIRs causal.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};

/// Default HRIR length in samples.
pub const HRIR_LEN: usize = 512;

/// Source direction. Azimuth is measured from the front towards the right
/// ear, elevation from the horizontal plane upwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl Direction {
    /// Normalizes azimuth into (−180, 180] and clamps elevation to [−90, 90].
    pub fn new(azimuth_deg: f64, elevation_deg: f64) -> Self {
        Direction {
            azimuth_deg: normalize_azimuth(azimuth_deg),
            elevation_deg: elevation_deg.clamp(-90.0, 90.0),
        }
    }

    /// Unit vector with x to the right ear, y to the front, z to the top.
    pub fn unit_vector(&self) -> [f64; 3] {
        let az = self.azimuth_deg.to_radians();
        let el = self.elevation_deg.to_radians();
        [el.cos() * az.sin(), el.cos() * az.cos(), el.sin()]
    }

    pub fn from_vector(v: [f64; 3]) -> Self {
        let [x, y, z] = v;
        let az = if x == 0.0 && y == 0.0 {
            0.0
        } else {
            x.atan2(y).to_degrees()
        };
        let el = z.atan2((x * x + y * y).sqrt()).to_degrees();
        Direction::new(az, el)
    }
}

pub fn normalize_azimuth(az: f64) -> f64 {
    let mut a = az % 360.0;
    if a <= -180.0 {
        a += 360.0;
    } else if a > 180.0 {
        a -= 360.0;
    }
    a
}

/// Left/right impulse responses for one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct HrirPair {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub fs: f64,
    pub direction: Direction,
}

impl HrirPair {
    pub fn new(left: Vec<f64>, right: Vec<f64>, fs: f64, direction: Direction) -> Result<Self> {
        if left.len() != right.len() {
            return Err(Error::shape(format!(
                "left has {} samples, right has {}",
                left.len(),
                right.len()
            )));
        }
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::invalid(format!(
                "sampling rate must be positive, got {fs}"
            )));
        }
        if left.iter().chain(&right).any(|v| !v.is_finite()) {
            return Err(Error::invalid("HRIR contains non-finite samples"));
        }
        Ok(HrirPair {
            left,
            right,
            fs,
            direction,
        })
    }

    pub fn len(&self) -> usize {
        self.left.len()
    }

    pub fn is_empty(&self) -> bool {
        self.left.is_empty()
    }

    /// Exchanges the two ears.
    pub fn swapped(&self) -> Self {
        HrirPair {
            left: self.right.clone(),
            right: self.left.clone(),
            fs: self.fs,
            direction: self.direction,
        }
    }
}

/// Complex spectrum with bin 0 at DC.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrum {
    pub bins: Vec<Complex64>,
    pub fs: f64,
}

impl ComplexSpectrum {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn bin_hz(&self) -> f64 {
        self.fs / self.bins.len() as f64
    }

    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.bin_hz()
    }

    /// Nearest bin to `hz`, limited to the non-negative half.
    pub fn nearest_bin(&self, hz: f64) -> usize {
        let k = (hz / self.bin_hz()).round().max(0.0) as usize;
        k.min(self.bins.len() / 2)
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.bins.iter().map(|c| c.norm()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowParams {
    pub pre_peak_ms: f64,
    pub min_post_peak_ms: f64,
    pub pad_to: usize,
}

impl Default for WindowParams {
    fn default() -> Self {
        WindowParams {
            pre_peak_ms: 1.0,
            min_post_peak_ms: 2.5,
            pad_to: HRIR_LEN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeadGeometry {
    pub head_radius_m: f64,
    pub speed_of_sound: f64,
}

impl Default for HeadGeometry {
    fn default() -> Self {
        HeadGeometry {
            head_radius_m: 0.0875,
            speed_of_sound: 343.0,
        }
    }
}

/// Parses `a<AAA>e<±EE>` (with or without directory and `.txt`).
pub fn parse_hrir_filename(name: &str) -> Result<Direction> {
    let stem = Path::new(name)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(name);
    let bad = || Error::invalid(format!("'{name}' does not match a<AAA>e<±EE>"));
    let rest = stem.strip_prefix('a').ok_or_else(bad)?;
    let (az_str, el_str) = rest.split_once('e').ok_or_else(bad)?;
    if az_str.len() != 3 || !az_str.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let az: u32 = az_str.parse().map_err(|_| bad())?;
    if az > 359 {
        return Err(bad());
    }
    let (sign, digits) = match el_str.as_bytes().first() {
        Some(b'+') => (1, &el_str[1..]),
        Some(b'-') => (-1, &el_str[1..]),
        _ => return Err(bad()),
    };
    if digits.len() != 2 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let el: i32 = digits.parse().map_err(|_| bad())?;
    if el > 90 {
        return Err(bad());
    }
    Ok(Direction::new(az as f64, (sign * el) as f64))
}

/// Inverse of [`parse_hrir_filename`] for integer-degree directions (no extension).
pub fn hrir_file_stem(direction: &Direction) -> String {
    let az = direction.azimuth_deg.round() as i64;
    let az = az.rem_euclid(360);
    let el = direction.elevation_deg.round() as i64;
    let sign = if el < 0 { '-' } else { '+' };
    format!("a{az:03}e{sign}{:02}", el.abs())
}

/// Parses the two-column text format. `expected_len` enforces a sample count.
pub fn parse_hrir_text(
    text: &str,
    path: &Path,
    fs: f64,
    direction: Direction,
    expected_len: Option<usize>,
) -> Result<HrirPair> {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let cols: Vec<&str> = trimmed.split_whitespace().collect();
        if cols.len() != 2 {
            return Err(err(format!("expected 2 columns, found {}", cols.len())));
        }
        let l: f64 = cols[0]
            .parse()
            .map_err(|_| err(format!("invalid number '{}'", cols[0])))?;
        let r: f64 = cols[1]
            .parse()
            .map_err(|_| err(format!("invalid number '{}'", cols[1])))?;
        left.push(l);
        right.push(r);
    }
    if left.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "empty file".into(),
        });
    }
    if let Some(n) = expected_len {
        if left.len() != n {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: left.len(),
                message: format!("expected {n} samples, found {}", left.len()),
            });
        }
    }
    HrirPair::new(left, right, fs, direction)
}

/// Loads a 512-sample HRIR text file.
pub fn load_hrir_pair(path: impl AsRef<Path>, fs: f64, direction: Direction) -> Result<HrirPair> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_hrir_text(&text, path, fs, direction, Some(HRIR_LEN))
}

/// Loads a database file, taking the direction from its name.
pub fn load_hrir_file(path: impl AsRef<Path>, fs: f64) -> Result<HrirPair> {
    let path = path.as_ref();
    let name = path
        .file_name()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::invalid(format!("bad path {}", path.display())))?;
    let direction = parse_hrir_filename(name)?;
    load_hrir_pair(path, fs, direction)
}

/// Loads every `a<AAA>e<±EE>.txt` in `dir`, sorted by (elevation, azimuth).
pub fn load_hrir_database(dir: impl AsRef<Path>, fs: f64) -> Result<Vec<HrirPair>> {
    let dir = dir.as_ref();
    let entries =
        fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
        let p = entry.path();
        let is_hrir = p.extension().is_some_and(|e| e == "txt")
            && p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| parse_hrir_filename(n).is_ok());
        if is_hrir {
            paths.push(p);
        }
    }
    paths.sort();
    let mut pairs = paths
        .iter()
        .map(|p| load_hrir_file(p, fs))
        .collect::<Result<Vec<_>>>()?;
    pairs.sort_by(|a, b| {
        (a.direction.elevation_deg, a.direction.azimuth_deg)
            .partial_cmp(&(b.direction.elevation_deg, b.direction.azimuth_deg))
            .unwrap()
    });
    Ok(pairs)
}

/// Writes the two-column text format.
pub fn write_hrir_pair(path: impl AsRef<Path>, pair: &HrirPair) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::with_capacity(pair.len() * 32);
    for (l, r) in pair.left.iter().zip(&pair.right) {
        writeln!(out, "{l:.10e} {r:.10e}").unwrap();
    }
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Result of [`apply_time_window`].
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedIr {
    /// Windowed and zero-padded samples, length `pad_to`.
    pub samples: Vec<f64>,
    /// Exclusive end of the kept segment in the source sequence.
    pub end_index: usize,
    /// No zero crossing was found after the cutoff; the full tail was kept.
    pub fallback: bool,
}

/// Start index shared by a set of responses: `pre_peak_ms` before the
/// earliest maximum-magnitude sample among them.
pub fn window_start(irs: &[&[f64]], fs: f64, params: &WindowParams) -> Result<usize> {
    let earliest = irs
        .iter()
        .filter_map(|ir| dsp::argmax_abs(ir))
        .min()
        .ok_or_else(|| Error::invalid("no responses to locate a peak in"))?;
    let pre = (params.pre_peak_ms * 1e-3 * fs).round() as usize;
    Ok(earliest.saturating_sub(pre))
}

/// Cuts `ir` from `start_index` to the first zero crossing occurring more
/// than `min_post_peak_ms` after its maximum-magnitude sample, then zero pads.
pub fn apply_time_window(
    ir: &[f64],
    fs: f64,
    start_index: usize,
    params: &WindowParams,
) -> Result<WindowedIr> {
    if ir.is_empty() {
        return Err(Error::invalid("empty impulse response"));
    }
    if start_index >= ir.len() {
        return Err(Error::invalid(format!(
            "start index {start_index} outside response of length {}",
            ir.len()
        )));
    }
    if !(params.pre_peak_ms > 0.0 && params.min_post_peak_ms > 0.0) {
        return Err(Error::invalid("window durations must be positive"));
    }
    let peak = dsp::argmax_abs(ir).unwrap();
    let post = (params.min_post_peak_ms * 1e-3 * fs).round() as usize;
    let first = peak + post + 1;
    let crossing =
        (first.max(1)..ir.len()).find(|&n| ir[n] == 0.0 || ir[n].signum() != ir[n - 1].signum());
    let (end, fallback) = match crossing {
        Some(n) => (n, false),
        None => (ir.len(), true),
    };
    let end = end.max(start_index);
    let seg = &ir[start_index..end];
    if seg.len() > params.pad_to {
        return Err(Error::invalid(format!(
            "windowed segment of {} samples exceeds pad_to = {}",
            seg.len(),
            params.pad_to
        )));
    }
    let mut samples = vec![0.0; params.pad_to];
    samples[..seg.len()].copy_from_slice(seg);
    Ok(WindowedIr {
        samples,
        end_index: end,
        fallback,
    })
}

pub fn forward_fft(x: &[f64], n_fft: usize, fs: f64) -> Result<ComplexSpectrum> {
    Ok(ComplexSpectrum {
        bins: dsp::fft_real(x, n_fft)?,
        fs,
    })
}

/// Real part of the inverse transform.
pub fn inverse_fft(spectrum: &ComplexSpectrum) -> Vec<f64> {
    dsp::ifft(&spectrum.bins)
        .into_iter()
        .map(|c| c.re)
        .collect()
}

/// Relative threshold below which an origin-transfer-function bin counts as zero.
pub const OTF_EPSILON: f64 = 1e-12;

/// Element-wise `btf / otf`.
pub fn derive_hrtf(btf: &ComplexSpectrum, otf: &ComplexSpectrum) -> Result<ComplexSpectrum> {
    if btf.len() != otf.len() {
        return Err(Error::shape(format!(
            "BTF has {} bins, OTF has {}",
            btf.len(),
            otf.len()
        )));
    }
    if btf.fs != otf.fs {
        return Err(Error::invalid(format!(
            "sampling rates differ: {} vs {}",
            btf.fs, otf.fs
        )));
    }
    let max = otf.bins.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let threshold = OTF_EPSILON * max;
    let mut bins = Vec::with_capacity(btf.len());
    for (k, (g, g0)) in btf.bins.iter().zip(&otf.bins).enumerate() {
        let m = g0.norm();
        if m <= threshold || m == 0.0 {
            return Err(Error::NearZero {
                bin: k,
                magnitude: m,
                threshold,
            });
        }
        bins.push(g / g0);
    }
    Ok(ComplexSpectrum { bins, fs: btf.fs })
}

/// Largest lead of the ipsilateral ear over the head center, `l / c` seconds.
pub fn max_noncausal_delay(geom: &HeadGeometry) -> f64 {
    geom.head_radius_m / geom.speed_of_sound
}

/// Smallest integer shift strictly greater than `τ_max · fs`.
pub fn min_compensation_shift(geom: &HeadGeometry, fs: f64) -> usize {
    (max_noncausal_delay(geom) * fs).floor() as usize + 1
}

/// Circular delay: `out[n] = in[(n - shift) mod N]`.
pub fn compensate_noncausality(hrir: &[f64], shift_samples: usize) -> Result<Vec<f64>> {
    let n = hrir.len();
    if shift_samples >= n {
        return Err(Error::invalid(format!(
            "shift {shift_samples} out of range for length {n}"
        )));
    }
    let mut out = hrir.to_vec();
    out.rotate_right(shift_samples);
    Ok(out)
}

/// Parameters for turning measured binaural/origin responses into a causal HRIR pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DerivationParams {
    pub window: WindowParams,
    /// Window start; computed from the earliest peak when `None`.
    pub start_index: Option<usize>,
    /// Circular shift; the minimal admissible shift when `None`.
    pub shift_samples: Option<usize>,
    pub geometry: HeadGeometry,
}

#[derive(Debug, Clone)]
pub struct DerivedHrir {
    pub pair: HrirPair,
    pub start_index: usize,
    pub shift_samples: usize,
    /// Set when any window fell back to the full tail.
    pub window_fallback: bool,
}

/// Window, transform, divide, invert and shift: measured BIRs plus OIR to HRIRs.
pub fn derive_hrir_pair(
    bir_left: &[f64],
    bir_right: &[f64],
    oir: &[f64],
    fs: f64,
    direction: Direction,
    params: &DerivationParams,
) -> Result<DerivedHrir> {
    let start = match params.start_index {
        Some(s) => s,
        None => window_start(&[bir_left, bir_right, oir], fs, &params.window)?,
    };
    let wl = apply_time_window(bir_left, fs, start, &params.window)?;
    let wr = apply_time_window(bir_right, fs, start, &params.window)?;
    let wo = apply_time_window(oir, fs, start, &params.window)?;
    let n = params.window.pad_to;
    let otf = forward_fft(&wo.samples, n, fs)?;
    let hl = derive_hrtf(&forward_fft(&wl.samples, n, fs)?, &otf)?;
    let hr = derive_hrtf(&forward_fft(&wr.samples, n, fs)?, &otf)?;
    let shift = params
        .shift_samples
        .unwrap_or_else(|| min_compensation_shift(&params.geometry, fs));
    let left = compensate_noncausality(&inverse_fft(&hl), shift)?;
    let right = compensate_noncausality(&inverse_fft(&hr), shift)?;
    Ok(DerivedHrir {
        pair: HrirPair::new(left, right, fs, direction)?,
        start_index: start,
        shift_samples: shift,
        window_fallback: wl.fallback || wr.fallback || wo.fallback,
    })
}
