//! Tool configuration: one JSON file, every field optional.

use std::path::{Path, PathBuf};

use biseld::btff::StftParams;
use biseld::cues::{ItdParams, DEFAULT_PROMINENCE_DB, SC_BAND_HZ};
use biseld::dataset::SynthConfig;
use biseld::hrtf::{HeadGeometry, WindowParams};
use biseld::metrics::DEFAULT_THRESHOLD_DEG;
use biseld::net::decode::DEFAULT_THRESHOLD;
use biseld::speaker::RolloffReference;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Input locations used when the matching flag is absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub events: Option<PathBuf>,
    pub noise: Option<PathBuf>,
    pub hrirs: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Spatial threshold of the location-aware detection metrics.
    pub doa_deg: f64,
    /// Minimum class-vector length for a detection.
    pub detection: f64,
    pub prominence_db: f64,
    pub rolloff_drop_db: f64,
    pub rolloff_reference: RolloffReference,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            doa_deg: DEFAULT_THRESHOLD_DEG,
            detection: DEFAULT_THRESHOLD,
            prominence_db: DEFAULT_PROMINENCE_DB,
            rolloff_drop_db: 6.0,
            rolloff_reference: RolloffReference::Peak,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CueSettings {
    /// Sampling rate of HRIR text files.
    pub hrir_fs: f64,
    pub ild_band_hz: (f64, f64),
    pub prtf_window_ms: f64,
    pub sc_band_hz: (f64, f64),
    pub hpd_frequencies_hz: Vec<f64>,
}

impl Default for CueSettings {
    fn default() -> Self {
        CueSettings {
            hrir_fs: 48000.0,
            ild_band_hz: (20.0, 20000.0),
            prtf_window_ms: 2.0,
            sc_band_hz: SC_BAND_HZ,
            hpd_frequencies_hz: vec![500.0, 1000.0, 2000.0, 4000.0, 8000.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeakerSweep {
    pub f_lo_hz: f64,
    pub f_hi_hz: f64,
    pub points: usize,
}

impl Default for SpeakerSweep {
    fn default() -> Self {
        SpeakerSweep {
            f_lo_hz: 20.0,
            f_hi_hz: 20000.0,
            points: 2000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolConfig {
    pub paths: Paths,
    pub stft: StftParams,
    pub synth: SynthConfig,
    pub geometry: HeadGeometry,
    pub window: WindowParams,
    pub itd: ItdParams,
    pub cues: CueSettings,
    pub speaker: SpeakerSweep,
    pub thresholds: Thresholds,
    /// Overrides `synth.seed` when set.
    pub seed: Option<u64>,
}

impl ToolConfig {
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> Result<ToolConfig, CliError> {
        let mut cfg = match path {
            None => ToolConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text).map_err(|e| {
                    CliError::Config(format!("{}:{}:{}: {e}", p.display(), e.line(), e.column()))
                })?
            }
        };
        if seed.is_some() {
            cfg.seed = seed;
        }
        if let Some(s) = cfg.seed {
            cfg.synth.seed = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |field: &str, why: String| Err(CliError::Config(format!("{field}: {why}")));
        self.stft
            .validate()
            .or_else(|e| bad("stft", e.to_string()))?;
        self.synth
            .validate()
            .or_else(|e| bad("synth", e.to_string()))?;
        if !(self.cues.hrir_fs > 0.0) {
            return bad(
                "cues.hrir_fs",
                format!("must be positive, got {}", self.cues.hrir_fs),
            );
        }
        if !(self.cues.prtf_window_ms > 0.0) {
            return bad(
                "cues.prtf_window_ms",
                format!("must be positive, got {}", self.cues.prtf_window_ms),
            );
        }
        for (name, (lo, hi)) in [
            ("cues.ild_band_hz", self.cues.ild_band_hz),
            ("cues.sc_band_hz", self.cues.sc_band_hz),
        ] {
            if !(lo >= 0.0 && lo < hi) {
                return bad(name, format!("[{lo}, {hi}] is not an increasing band"));
            }
        }
        if self.itd.upsample == 0 || self.itd.lpf_taps == 0 || !(self.itd.max_lag_us > 0.0) {
            return bad(
                "itd",
                "upsample, lpf_taps and max_lag_us must be positive".into(),
            );
        }
        let t = &self.thresholds;
        if !(t.doa_deg > 0.0 && t.doa_deg <= 180.0) {
            return bad(
                "thresholds.doa_deg",
                format!("{} outside (0, 180]", t.doa_deg),
            );
        }
        if !(t.detection >= 0.0) || !(t.rolloff_drop_db > 0.0) || !(t.prominence_db >= 0.0) {
            return bad(
                "thresholds",
                "detection, prominence_db must be ≥ 0 and rolloff_drop_db > 0".into(),
            );
        }
        let s = &self.speaker;
        if !(s.f_lo_hz > 0.0 && s.f_lo_hz < s.f_hi_hz) || s.points < 2 {
            return bad(
                "speaker",
                "need 0 < f_lo_hz < f_hi_hz and at least 2 points".into(),
            );
        }
        Ok(())
    }
}
