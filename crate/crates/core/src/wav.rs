//! WAV reading (any PCM/float layout) and 16-bit writing.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};

/// Decoded audio: one vector per channel, samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    pub channels: Vec<Vec<f64>>,
    pub fs: u32,
}

impl Audio {
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Channel average.
    pub fn to_mono(&self) -> Vec<f64> {
        let n = self.channels.len().max(1) as f64;
        (0..self.len())
            .map(|i| self.channels.iter().map(|c| c[i]).sum::<f64>() / n)
            .collect()
    }

    /// (left, right); a mono file is duplicated.
    pub fn to_stereo(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        match self.channels.len() {
            1 => Ok((self.channels[0].clone(), self.channels[0].clone())),
            2 => Ok((self.channels[0].clone(), self.channels[1].clone())),
            n => Err(Error::invalid(format!(
                "expected 1 or 2 channels, found {n}"
            ))),
        }
    }
}

fn wav_err(path: &Path) -> impl Fn(hound::Error) -> Error + '_ {
    move |source| Error::Wav {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Audio> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path).map_err(wav_err(path))?;
    let spec = reader.spec();
    let n_ch = spec.channels as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(wav_err(path))?,
        SampleFormat::Int => {
            let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(wav_err(path))?
        }
    };
    let mut channels = vec![Vec::with_capacity(interleaved.len() / n_ch.max(1)); n_ch];
    for (i, v) in interleaved.into_iter().enumerate() {
        channels[i % n_ch].push(v);
    }
    Ok(Audio {
        channels,
        fs: spec.sample_rate,
    })
}

/// 16-bit PCM, full scale 32768, values clipped.
pub fn write_wav_i16(path: impl AsRef<Path>, channels: &[&[f64]], fs: u32) -> Result<()> {
    let path = path.as_ref();
    let n = channels.first().map_or(0, |c| c.len());
    if channels.is_empty() || channels.iter().any(|c| c.len() != n) {
        return Err(Error::shape(
            "channels must be non-empty and of equal length",
        ));
    }
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate: fs,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(wav_err(path))?;
    for i in 0..n {
        for c in channels {
            let v = (c[i] * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
            writer.write_sample(v).map_err(wav_err(path))?;
        }
    }
    writer.finalize().map_err(wav_err(path))
}
