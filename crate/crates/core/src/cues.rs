//! Binaural localization cues extracted from HRIR/HRTF pairs.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};
use crate::hrtf::{forward_fft, ComplexSpectrum, HrirPair};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ItdParams {
    pub max_lag_us: f64,
    pub lpf_cutoff_hz: f64,
    pub upsample: usize,
    pub lpf_taps: usize,
}

impl Default for ItdParams {
    fn default() -> Self {
        ItdParams {
            max_lag_us: 1000.0,
            lpf_cutoff_hz: 1500.0,
            upsample: 4,
            lpf_taps: 101,
        }
    }
}

/// Interaural time difference in seconds.
///
/// Both ears are low-passed (zero phase), upsampled, and the lag maximizing
/// the normalized cross-correlation `Σ hL[t]·hR[t−τ]` is returned. Positive
/// values mean the left ear lags the right one.
pub fn itd(pair: &HrirPair, params: &ItdParams) -> Result<f64> {
    if pair.is_empty() {
        return Err(Error::invalid("empty HRIR pair"));
    }
    let up = params.upsample.max(1);
    let fs_up = pair.fs * up as f64;
    let lpf = dsp::lowpass_fir(params.lpf_taps, params.lpf_cutoff_hz / pair.fs)?;
    let anti_image = dsp::lowpass_fir(
        params.lpf_taps * up + usize::from(up.is_multiple_of(2)),
        params.lpf_cutoff_hz / fs_up,
    )?;

    let prep = |x: &[f64]| {
        let filtered = dsp::zero_phase_filter(x, &lpf);
        dsp::upsample(&filtered, up, &anti_image)
    };
    let l = prep(&pair.left);
    let r = prep(&pair.right);
    let el = dsp::energy(&l);
    let er = dsp::energy(&r);
    if el == 0.0 || er == 0.0 {
        return Err(Error::ZeroEnergy(
            "ITD undefined for an all-zero channel".into(),
        ));
    }
    let norm = (el * er).sqrt();
    let max_lag = ((params.max_lag_us * 1e-6 * fs_up).floor() as usize).min(l.len() - 1);
    let lag = best_lag(&l, &r, max_lag, norm);
    Ok(lag as f64 / fs_up)
}

fn best_lag(l: &[f64], r: &[f64], max_lag: usize, norm: f64) -> isize {
    let n = l.len() as isize;
    let corr = |tau: isize| -> f64 {
        // Σ_t l[t] r[t - tau]
        let lo = tau.max(0);
        let hi = (n + tau).min(n);
        (lo..hi)
            .map(|t| l[t as usize] * r[(t - tau) as usize])
            .sum::<f64>()
            / norm
    };
    let mut best = (0isize, corr(0));
    for k in 1..=max_lag as isize {
        for tau in [-k, k] {
            let c = corr(tau);
            // strict improvement only: ties resolve towards the smaller |τ|
            if c > best.1 + 1e-12 * best.1.abs() {
                best = (tau, c);
            }
        }
    }
    best.0
}

/// HRTFs of both ears with the HRIRs zero-padded to `pad_to` samples.
pub fn hrtf_pair_spectra(
    pair: &HrirPair,
    pad_to: usize,
) -> Result<(ComplexSpectrum, ComplexSpectrum)> {
    let n = pad_to.max(pair.len());
    Ok((
        forward_fft(&pair.left, n, pair.fs)?,
        forward_fft(&pair.right, n, pair.fs)?,
    ))
}

fn check_pair(left: &ComplexSpectrum, right: &ComplexSpectrum) -> Result<()> {
    if left.len() != right.len() || left.fs != right.fs {
        return Err(Error::shape(format!(
            "spectra differ: {} bins @ {} Hz vs {} bins @ {} Hz",
            left.len(),
            left.fs,
            right.len(),
            right.fs
        )));
    }
    Ok(())
}

/// Per-bin `20·log10(|H_R| / |H_L|)` over the non-negative frequencies.
pub fn ild_narrowband(left: &ComplexSpectrum, right: &ComplexSpectrum) -> Result<Vec<f64>> {
    check_pair(left, right)?;
    let half = left.len() / 2 + 1;
    (0..half)
        .map(|k| {
            let (l, r) = (left.bins[k].norm(), right.bins[k].norm());
            if l == 0.0 || r == 0.0 {
                return Err(Error::NearZero {
                    bin: k,
                    magnitude: l.min(r),
                    threshold: 0.0,
                });
            }
            Ok(20.0 * (r.log10() - l.log10()))
        })
        .collect()
}

/// `10·log10` of the in-band energy ratio right over left.
pub fn ild_wideband(
    left: &ComplexSpectrum,
    right: &ComplexSpectrum,
    f_lo: f64,
    f_hi: f64,
) -> Result<f64> {
    check_pair(left, right)?;
    let nyquist = left.fs / 2.0;
    if !(f_lo >= 0.0 && f_lo < f_hi && f_hi <= nyquist) {
        return Err(Error::invalid(format!(
            "band [{f_lo}, {f_hi}] Hz not within Nyquist {nyquist} Hz"
        )));
    }
    let mut el = 0.0;
    let mut er = 0.0;
    for k in 0..=left.len() / 2 {
        let f = left.frequency(k);
        if f >= f_lo && f <= f_hi {
            el += left.bins[k].norm_sqr();
            er += right.bins[k].norm_sqr();
        }
    }
    if el == 0.0 {
        return Err(Error::ZeroEnergy(
            "left channel has no energy in band".into(),
        ));
    }
    if er == 0.0 {
        return Err(Error::ZeroEnergy(
            "right channel has no energy in band".into(),
        ));
    }
    Ok(10.0 * (er.log10() - el.log10()))
}

/// Pinna-related transfer function.
#[derive(Debug, Clone)]
pub struct Prtf {
    pub spectrum: ComplexSpectrum,
    /// The window extended past either end of the response and was cut.
    pub truncated: bool,
}

/// Hann window of `window_ms` centered on the maximum-magnitude sample
/// (zero elsewhere), then FFT at the response length.
pub fn extract_prtf(hrir: &[f64], fs: f64, window_ms: f64) -> Result<Prtf> {
    let peak = dsp::argmax_abs(hrir).ok_or_else(|| Error::invalid("empty HRIR"))?;
    let half = ((window_ms * 1e-3 * fs) / 2.0).round() as isize;
    let w = dsp::hann_symmetric((2 * half + 1) as usize);
    let mut windowed = vec![0.0; hrir.len()];
    let mut truncated = false;
    for (j, wj) in w.iter().enumerate() {
        let idx = peak as isize + j as isize - half;
        if idx < 0 || idx as usize >= hrir.len() {
            truncated = true;
            continue;
        }
        windowed[idx as usize] = hrir[idx as usize] * wj;
    }
    Ok(Prtf {
        spectrum: forward_fft(&windowed, hrir.len(), fs)?,
        truncated,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Peak,
    Notch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralFeature {
    pub kind: FeatureKind,
    pub frequency_hz: f64,
    pub level_db: f64,
    pub elevation_deg: f64,
    pub prominence_db: f64,
}

/// Default search band for pinna features.
pub const SC_BAND_HZ: (f64, f64) = (5000.0, 16000.0);
pub const DEFAULT_PROMINENCE_DB: f64 = 3.0;

/// Local maxima (peaks) and minima (notches) of the dB magnitude within
/// `band`, kept when their prominence reaches `min_prominence_db`.
pub fn find_spectral_features(
    prtf: &ComplexSpectrum,
    band: (f64, f64),
    min_prominence_db: f64,
    elevation_deg: f64,
) -> Result<Vec<SpectralFeature>> {
    let nyquist = prtf.fs / 2.0;
    if !(band.0 >= 0.0 && band.0 < band.1 && band.1 <= nyquist + 1e-9) {
        return Err(Error::invalid(format!(
            "band [{}, {}] Hz not within Nyquist {nyquist} Hz",
            band.0, band.1
        )));
    }
    let bins: Vec<usize> = (0..=prtf.len() / 2)
        .filter(|&k| {
            let f = prtf.frequency(k);
            f >= band.0 && f <= band.1
        })
        .collect();
    let db: Vec<f64> = bins
        .iter()
        .map(|&k| 20.0 * prtf.bins[k].norm().max(1e-12).log10())
        .collect();
    let extrema = local_extrema(&db, min_prominence_db);
    Ok(extrema
        .into_iter()
        .map(|(idx, kind, prominence)| SpectralFeature {
            kind,
            frequency_hz: prtf.frequency(bins[0]) + idx * prtf.bin_hz(),
            level_db: db[idx.round() as usize],
            elevation_deg,
            prominence_db: prominence,
        })
        .collect())
}

/// Interior extrema of `y` with plateau handling. Returns
/// (fractional index, kind, prominence) sorted by index.
pub fn local_extrema(y: &[f64], min_prominence: f64) -> Vec<(f64, FeatureKind, f64)> {
    let n = y.len();
    let mut out = Vec::new();
    if n < 3 {
        return out;
    }
    let mut i = 1;
    while i < n - 1 {
        // extend plateau
        let mut j = i;
        while j + 1 < n && y[j + 1] == y[i] {
            j += 1;
        }
        if j >= n - 1 {
            break;
        }
        let left = y[i - 1];
        let right = y[j + 1];
        let kind = if y[i] > left && y[i] > right {
            Some(FeatureKind::Peak)
        } else if y[i] < left && y[i] < right {
            Some(FeatureKind::Notch)
        } else {
            None
        };
        if let Some(kind) = kind {
            let sign = if kind == FeatureKind::Peak { 1.0 } else { -1.0 };
            let prom = prominence(y, i, j, sign);
            if prom >= min_prominence {
                out.push(((i + j) as f64 / 2.0, kind, prom));
            }
        }
        i = j + 1;
    }
    out
}

fn prominence(y: &[f64], start: usize, end: usize, sign: f64) -> f64 {
    let v = |k: usize| sign * y[k];
    let top = v(start);
    let mut left_min = top;
    for k in (0..start).rev() {
        if v(k) > top {
            break;
        }
        left_min = left_min.min(v(k));
    }
    let mut right_min = top;
    for k in end + 1..y.len() {
        if v(k) > top {
            break;
        }
        right_min = right_min.min(v(k));
    }
    top - left_min.max(right_min)
}

/// Horizontal-plane directivity at one frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamPattern {
    pub frequency_hz: f64,
    /// (azimuth in degrees, level in dB), in input order.
    pub levels: Vec<(f64, f64)>,
}

/// Levels of each horizontal HRTF relative to the frontal one at the bin
/// nearest `frequency_hz`.
pub fn hpd(horizontal: &[(f64, ComplexSpectrum)], frequency_hz: f64) -> Result<BeamPattern> {
    let front = horizontal
        .iter()
        .find(|(az, _)| *az == 0.0)
        .map(|(_, s)| s)
        .ok_or_else(|| Error::invalid("horizontal set lacks azimuth 0"))?;
    let k = front.nearest_bin(frequency_hz);
    let reference = front.bins[k].norm();
    if reference == 0.0 {
        return Err(Error::NearZero {
            bin: k,
            magnitude: 0.0,
            threshold: 0.0,
        });
    }
    let levels = horizontal
        .iter()
        .map(|(az, s)| {
            if s.len() != front.len() {
                return Err(Error::shape("HRTFs differ in length".to_string()));
            }
            let m: Complex64 = s.bins[k];
            Ok((*az, 20.0 * (m.norm() / reference).log10()))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BeamPattern {
        frequency_hz,
        levels,
    })
}
