//! Binaural time-frequency feature (BTFF).
//!
//! Eight T×64 maps stacked as channels `[MS_L, MS_R, V_L, V_R, ITD, ILD, SC_L, SC_R]`.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{s, Array2, Array3, ArrayView2, Axis};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};

pub const N_MEL: usize = 64;
pub const N_CHANNELS: usize = 8;
pub const CHANNEL_NAMES: [&str; N_CHANNELS] =
    ["ms_l", "ms_r", "v_l", "v_r", "itd", "ild", "sc_l", "sc_r"];
pub const AMP_FLOOR: f64 = 1e-8;
pub const ITD_BAND_HZ: f64 = 1500.0;
pub const HIGH_BAND_LO_HZ: f64 = 5000.0;

pub fn hz_to_mel(f: f64) -> Result<f64> {
    if !(f >= 0.0) {
        return Err(Error::invalid(format!("negative frequency {f}")));
    }
    Ok(1127.0 * (f / 700.0).ln_1p())
}

pub fn mel_to_hz(m: f64) -> Result<f64> {
    if !(m >= 0.0) {
        return Err(Error::invalid(format!("negative mel value {m}")));
    }
    Ok(700.0 * (m / 1127.0).exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftParams {
    pub fs: f64,
    pub win_length: usize,
    pub hop: usize,
    pub n_fft: usize,
}

impl Default for StftParams {
    fn default() -> Self {
        StftParams {
            fs: 32000.0,
            win_length: 1024,
            hop: 640,
            n_fft: 1024,
        }
    }
}

impl StftParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.fs > 0.0)
            || self.hop == 0
            || self.hop > self.win_length
            || self.win_length > self.n_fft
        {
            return Err(Error::invalid(format!(
                "need fs > 0 and 0 < hop <= win_length <= n_fft, got {self:?}"
            )));
        }
        Ok(())
    }

    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn n_frames(&self, len: usize) -> usize {
        if len < self.win_length {
            1
        } else {
            (len - self.win_length) / self.hop + 1
        }
    }

    pub fn bin_hz(&self, k: usize) -> f64 {
        k as f64 * self.fs / self.n_fft as f64
    }

    pub fn frame_hop_s(&self) -> f64 {
        self.hop as f64 / self.fs
    }
}

/// Short-time Fourier transform, `T × (n_fft/2 + 1)`, scaled by `1/n_fft`.
pub fn stft(x: &[f64], p: &StftParams) -> Result<Array2<Complex64>> {
    p.validate()?;
    if x.is_empty() {
        return Err(Error::invalid("empty signal"));
    }
    let t = p.n_frames(x.len());
    let k = p.n_bins();
    let window = dsp::hann_periodic(p.win_length);
    let fft = FftPlanner::new().plan_fft_forward(p.n_fft);
    let scale = 1.0 / p.n_fft as f64;
    let mut out = Array2::zeros((t, k));
    let mut buf = vec![Complex64::new(0.0, 0.0); p.n_fft];
    for m in 0..t {
        buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
        let start = m * p.hop;
        for (i, w) in window.iter().enumerate() {
            if let Some(v) = x.get(start + i) {
                buf[i].re = v * w;
            }
        }
        fft.process(&mut buf);
        for (dst, src) in out.row_mut(m).iter_mut().zip(&buf[..k]) {
            *dst = src * scale;
        }
    }
    Ok(out)
}

pub fn db_magnitude(p: &Array2<Complex64>) -> Array2<f64> {
    p.mapv(|c| 20.0 * c.norm().max(AMP_FLOOR).log10())
}

/// Triangular mel filterbank used as a row-normalized weighted average.
#[derive(Debug, Clone, PartialEq)]
pub struct MelBank {
    pub f_lo: f64,
    pub f_hi: f64,
    /// Center frequencies in Hz, strictly increasing.
    pub centers_hz: Vec<f64>,
    /// `n_mel × n_fft_bins`, rows sum to one.
    pub weights: Array2<f64>,
}

impl MelBank {
    /// `n_mel` rows with centers evenly spaced in mel from `f_lo` to `f_hi`
    /// inclusive. Each row is a hat between its neighbours' centers, so the
    /// rows tile `[f_lo, f_hi]`. A row too narrow to contain any FFT bin
    /// interpolates linearly between the two bins around its center.
    pub fn new(n_mel: usize, f_lo: f64, f_hi: f64, p: &StftParams) -> Result<MelBank> {
        p.validate()?;
        let nyquist = p.fs / 2.0;
        if n_mel < 2 || !(f_lo >= 0.0 && f_lo < f_hi && f_hi <= nyquist) {
            return Err(Error::invalid(format!(
                "mel band [{f_lo}, {f_hi}] Hz with {n_mel} bins invalid for Nyquist {nyquist}"
            )));
        }
        let (m_lo, m_hi) = (hz_to_mel(f_lo)?, hz_to_mel(f_hi)?);
        let centers_hz: Vec<f64> = (0..n_mel)
            .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_mel - 1) as f64))
            .collect::<Result<_>>()?;
        let n_bins = p.n_bins();
        let df = p.bin_hz(1);
        let mut weights = Array2::zeros((n_mel, n_bins));
        for i in 0..n_mel {
            let c = centers_hz[i];
            let lo = if i == 0 { c } else { centers_hz[i - 1] };
            let hi = if i + 1 == n_mel { c } else { centers_hz[i + 1] };
            let mut row = weights.row_mut(i);
            for k in 0..n_bins {
                let f = p.bin_hz(k);
                let w = if f == c {
                    1.0
                } else if f > lo && f < c {
                    (f - lo) / (c - lo)
                } else if f > c && f < hi {
                    (hi - f) / (hi - c)
                } else {
                    0.0
                };
                row[k] = w;
            }
            let sum: f64 = row.sum();
            if sum > 0.0 {
                row.mapv_inplace(|w| w / sum);
            } else {
                let pos = c / df;
                let k0 = (pos.floor() as usize).min(n_bins - 1);
                let frac = pos - k0 as f64;
                if k0 + 1 < n_bins && frac > 0.0 {
                    row[k0] = 1.0 - frac;
                    row[k0 + 1] = frac;
                } else {
                    row[k0] = 1.0;
                }
            }
        }
        Ok(MelBank {
            f_lo,
            f_hi,
            centers_hz,
            weights,
        })
    }

    pub fn n_mel(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_fft_bins(&self) -> usize {
        self.weights.ncols()
    }
}

/// Weighted mel average of a `T × K` value matrix.
pub fn mel_map(matrix: ArrayView2<f64>, bank: &MelBank) -> Result<Array2<f64>> {
    if matrix.ncols() != bank.n_fft_bins() {
        return Err(Error::shape(format!(
            "matrix has {} bins, mel bank expects {}",
            matrix.ncols(),
            bank.n_fft_bins()
        )));
    }
    Ok(matrix.dot(&bank.weights.t()))
}

/// Temporal velocity: forward difference at the first frame, central
/// difference inside, backward difference at the last frame.
pub fn v_map(s: ArrayView2<f64>) -> Result<Array2<f64>> {
    let t = s.nrows();
    if t < 2 {
        return Err(Error::invalid(format!(
            "velocity map needs at least 2 frames, got {t}"
        )));
    }
    let mut v = Array2::zeros(s.raw_dim());
    v.row_mut(0).assign(&(&s.row(1) - &s.row(0)));
    for m in 1..t - 1 {
        v.row_mut(m)
            .assign(&((&s.row(m + 1) - &s.row(m - 1)) * 0.5));
    }
    v.row_mut(t - 1).assign(&(&s.row(t - 1) - &s.row(t - 2)));
    Ok(v)
}

fn check_same<T>(a: &Array2<T>, b: &Array2<T>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!("{:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// Per-bin phase delay of the right ear relative to the left, in seconds.
/// Positive when the left ear lags. DC is zero.
pub fn phase_delay(
    pl: &Array2<Complex64>,
    pr: &Array2<Complex64>,
    p: &StftParams,
) -> Result<Array2<f64>> {
    check_same(pl, pr)?;
    let mut out = Array2::zeros(pl.dim());
    for ((m, k), d) in out.indexed_iter_mut() {
        if k == 0 {
            continue;
        }
        let (l, r) = (pl[[m, k]], pr[[m, k]]);
        let omega = 2.0 * PI * p.bin_hz(k);
        let num = l.re * r.im - l.im * r.re;
        let den = l.re * r.re + l.im * r.im;
        *d = if num == 0.0 && den == 0.0 {
            0.0
        } else {
            num.atan2(den) / omega
        };
    }
    Ok(out)
}

/// Mel-mapped phase delay below 1.5 kHz, in seconds.
pub fn itd_map(
    pl: &Array2<Complex64>,
    pr: &Array2<Complex64>,
    p: &StftParams,
) -> Result<Array2<f64>> {
    let bank = MelBank::new(N_MEL, 0.0, ITD_BAND_HZ, p)?;
    itd_map_with(pl, pr, p, &bank)
}

fn itd_map_with(
    pl: &Array2<Complex64>,
    pr: &Array2<Complex64>,
    p: &StftParams,
    bank: &MelBank,
) -> Result<Array2<f64>> {
    mel_map(phase_delay(pl, pr, p)?.view(), bank)
}

fn high_bank(p: &StftParams) -> Result<MelBank> {
    MelBank::new(N_MEL, HIGH_BAND_LO_HZ, p.fs / 2.0, p)
}

/// Mel-mapped `S_R − S_L` over [5 kHz, Nyquist], in dB.
pub fn ild_map(sl: &Array2<f64>, sr: &Array2<f64>, p: &StftParams) -> Result<Array2<f64>> {
    check_same(sl, sr)?;
    mel_map((sr - sl).view(), &high_bank(p)?)
}

/// Mel-mapped dB spectrum over [5 kHz, Nyquist].
pub fn sc_map(s: &Array2<f64>, p: &StftParams) -> Result<Array2<f64>> {
    mel_map(s.view(), &high_bank(p)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Btff {
    /// `T × 64 × 8`.
    pub tensor: Array3<f64>,
    pub frame_hop_s: f64,
}

impl Btff {
    pub fn n_frames(&self) -> usize {
        self.tensor.dim().0
    }

    pub fn channel(&self, c: usize) -> ArrayView2<'_, f64> {
        self.tensor.index_axis(Axis(2), c)
    }

    /// Zero-mean, unit-variance per channel. Constant channels are only centered.
    pub fn standardize(&mut self) {
        for c in 0..N_CHANNELS {
            let mut ch = self.tensor.index_axis_mut(Axis(2), c);
            let n = ch.len() as f64;
            let mean = ch.sum() / n;
            let var = ch.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            ch.mapv_inplace(|v| if sd > 0.0 { (v - mean) / sd } else { v - mean });
        }
    }

    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let file =
            File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        let (t, b, c) = self.tensor.dim();
        w.write_all(b"BTFF")?;
        w.write_u32::<LittleEndian>(t as u32)?;
        w.write_u32::<LittleEndian>(b as u32)?;
        w.write_u32::<LittleEndian>(c as u32)?;
        w.write_f32::<LittleEndian>(self.frame_hop_s as f32)?;
        // standard layout iterates (frame, bin, channel)
        for v in self.tensor.iter() {
            w.write_f32::<LittleEndian>(*v as f32)?;
        }
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Btff> {
        let file =
            File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
        Self::read_from(&mut BufReader::new(file))
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))
    }

    pub fn read_from(r: &mut impl Read) -> std::io::Result<Btff> {
        let bad = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string());
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"BTFF" {
            return Err(bad("missing BTFF magic"));
        }
        let t = r.read_u32::<LittleEndian>()? as usize;
        let b = r.read_u32::<LittleEndian>()? as usize;
        let c = r.read_u32::<LittleEndian>()? as usize;
        let hop = r.read_f32::<LittleEndian>()? as f64;
        let mut data = vec![0f32; t * b * c];
        r.read_f32_into::<LittleEndian>(&mut data)?;
        let tensor = Array3::from_shape_vec((t, b, c), data.into_iter().map(f64::from).collect())
            .map_err(|e| bad(&e.to_string()))?;
        Ok(Btff {
            tensor,
            frame_hop_s: hop,
        })
    }

    /// One `<stem>_<channel>.csv` per channel, frames as rows.
    pub fn write_csvs(&self, dir: &Path, stem: &str) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        let mut paths = Vec::new();
        for (c, name) in CHANNEL_NAMES.iter().enumerate() {
            let path = dir.join(format!("{stem}_{name}.csv"));
            let mut text = String::new();
            for row in self.channel(c).rows() {
                let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
                text.push_str(&line.join(","));
                text.push('\n');
            }
            std::fs::write(&path, text)
                .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
            paths.push(path);
        }
        Ok(paths)
    }
}

/// Mel banks for the three channel groups, reusable across files.
#[derive(Debug, Clone)]
pub struct BtffExtractor {
    pub params: StftParams,
    full: MelBank,
    itd: MelBank,
    high: MelBank,
}

impl BtffExtractor {
    pub fn new(params: StftParams) -> Result<Self> {
        Ok(BtffExtractor {
            full: MelBank::new(N_MEL, 0.0, params.fs / 2.0, &params)?,
            itd: MelBank::new(N_MEL, 0.0, ITD_BAND_HZ, &params)?,
            high: high_bank(&params)?,
            params,
        })
    }

    pub fn extract(&self, left: &[f64], right: &[f64]) -> Result<Btff> {
        if left.len() != right.len() {
            return Err(Error::shape(format!(
                "channel lengths differ: {} vs {}",
                left.len(),
                right.len()
            )));
        }
        let p = &self.params;
        let pl = stft(left, p)?;
        let pr = stft(right, p)?;
        let sl = db_magnitude(&pl);
        let sr = db_magnitude(&pr);
        let t = pl.nrows();
        // a single frame has no temporal neighbour; velocity is zero
        let velocity = |s: &Array2<f64>| {
            if t < 2 {
                Ok(Array2::zeros(s.raw_dim()))
            } else {
                v_map(s.view())
            }
        };
        let maps = [
            mel_map(sl.view(), &self.full)?,
            mel_map(sr.view(), &self.full)?,
            mel_map(velocity(&sl)?.view(), &self.full)?,
            mel_map(velocity(&sr)?.view(), &self.full)?,
            itd_map_with(&pl, &pr, p, &self.itd)?,
            mel_map((&sr - &sl).view(), &self.high)?,
            mel_map(sl.view(), &self.high)?,
            mel_map(sr.view(), &self.high)?,
        ];
        let mut tensor = Array3::zeros((t, N_MEL, N_CHANNELS));
        for (c, m) in maps.iter().enumerate() {
            tensor.slice_mut(s![.., .., c]).assign(m);
        }
        Ok(Btff {
            tensor,
            frame_hop_s: p.frame_hop_s(),
        })
    }
}

pub fn extract_btff(left: &[f64], right: &[f64], p: &StftParams) -> Result<Btff> {
    BtffExtractor::new(*p)?.extract(left, right)
}
