//! Binaural dataset synthesis: spatialize isolated event clips through
//! HRIRs, arrange one clip per class into fixed-length mixtures, optionally
//! add background noise at a target SNR, and write WAV + label CSV pairs.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dsp;
use crate::error::{Error, Result};
use crate::hrtf::{hrir_file_stem, load_hrir_database, Direction, HrirPair};
use crate::wav;

pub use crate::dsp::resample;

pub const CLASS_NAMES: [&str; 12] = [
    "alarm",
    "baby",
    "cough",
    "crash",
    "dog",
    "femalescream",
    "femalespeech",
    "fire",
    "knock",
    "malescream",
    "malespeech",
    "phone",
];

/// One active (frame, class) record. Frames are deci-seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventLabel {
    pub frame_ds: u32,
    pub class_idx: usize,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub fs: u32,
    pub samples_per_class: usize,
    /// train / valid / test clips per class.
    pub split: [usize; 3],
    pub azimuths: Vec<f64>,
    pub elevations: Vec<f64>,
    pub segment_s: f64,
    pub mixture_s: f64,
    pub snr_db: Option<f64>,
    pub seed: u64,
    /// Sampling rate of the HRIR text files.
    pub hrir_fs: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            fs: 32000,
            samples_per_class: 20,
            split: [14, 3, 3],
            azimuths: (0..12)
                .map(|i| Direction::new(i as f64 * 30.0, 0.0).azimuth_deg)
                .collect(),
            elevations: vec![-30.0, 0.0, 30.0, 60.0],
            segment_s: 5.0,
            mixture_s: 60.0,
            snr_db: None,
            seed: 0,
            hrir_fs: 48000,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let n = CLASS_NAMES.len() as f64;
        if self.fs == 0 || self.hrir_fs == 0 {
            return Err(Error::invalid("sampling rates must be positive"));
        }
        if (self.mixture_s - n * self.segment_s).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "mixture length {} s must equal 12 × segment length {} s",
                self.mixture_s, self.segment_s
            )));
        }
        let frames = self.segment_s * 10.0;
        if !(self.segment_s > 0.0) || (frames - frames.round()).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "segment length {} s must be a positive whole number of deci-seconds",
                self.segment_s
            )));
        }
        if self.split.iter().sum::<usize>() != self.samples_per_class || self.split.contains(&0) {
            return Err(Error::invalid(format!(
                "split {:?} must be positive and sum to {}",
                self.split, self.samples_per_class
            )));
        }
        if self.azimuths.is_empty() || self.elevations.is_empty() {
            return Err(Error::invalid("direction grid is empty"));
        }
        Ok(())
    }

    pub fn frames_per_segment(&self) -> usize {
        (self.segment_s * 10.0).round() as usize
    }

    pub fn segment_len(&self) -> usize {
        (self.segment_s * self.fs as f64).round() as usize
    }

    /// Azimuth-major within each elevation.
    pub fn directions(&self) -> Vec<Direction> {
        self.elevations
            .iter()
            .flat_map(|&el| self.azimuths.iter().map(move |&az| Direction::new(az, el)))
            .collect()
    }

    pub fn horizontal_directions(&self) -> Vec<Direction> {
        self.directions()
            .into_iter()
            .filter(|d| d.elevation_deg == 0.0)
            .collect()
    }

    /// Frontal median plane (azimuth 0).
    pub fn frontal_median_directions(&self) -> Vec<Direction> {
        self.directions()
            .into_iter()
            .filter(|d| d.azimuth_deg == 0.0)
            .collect()
    }
}

/// Mono → stereo through an HRIR pair; output has the input's length.
pub fn spatialize(mono: &[f64], hrir: &HrirPair, fs: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if (hrir.fs - fs).abs() > 1e-9 {
        return Err(Error::invalid(format!(
            "HRIR sampled at {} Hz but signal at {fs} Hz",
            hrir.fs
        )));
    }
    Ok((
        dsp::convolve_truncated(mono, &hrir.left),
        dsp::convolve_truncated(mono, &hrir.right),
    ))
}

/// Root mean square over both channels jointly.
pub fn stereo_rms(l: &[f64], r: &[f64]) -> f64 {
    let n = (l.len() + r.len()) as f64;
    if n == 0.0 {
        return 0.0;
    }
    ((dsp::energy(l) + dsp::energy(r)) / n).sqrt()
}

/// Scales the event so its joint RMS sits `snr_db` above the noise, then adds.
pub fn mix_at_snr(
    event: (&[f64], &[f64]),
    noise: (&[f64], &[f64]),
    snr_db: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = event.0.len();
    if event.1.len() != n || noise.0.len() != n || noise.1.len() != n {
        return Err(Error::shape("event and noise segments differ in length"));
    }
    let pe = stereo_rms(event.0, event.1);
    let pn = stereo_rms(noise.0, noise.1);
    if pe == 0.0 {
        return Err(Error::ZeroEnergy("event segment is silent".into()));
    }
    if pn == 0.0 {
        return Err(Error::ZeroEnergy("noise segment is silent".into()));
    }
    let g = pn * 10f64.powf(snr_db / 20.0) / pe;
    let mix = |e: &[f64], z: &[f64]| e.iter().zip(z).map(|(a, b)| a * g + b).collect();
    Ok((mix(event.0, noise.0), mix(event.1, noise.1)))
}

/// A spatialized clip ready to be placed.
#[derive(Debug, Clone)]
pub struct BinauralClip {
    pub class_idx: usize,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub direction: Direction,
    /// Active intervals in seconds; `None` means active for the whole clip.
    pub active: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone)]
pub struct Mixture {
    pub left: Vec<f64>,
    pub right: Vec<f64>,
    pub labels: Vec<EventLabel>,
}

/// Places `clips[order[s]]` in slot `s`. Every clip must already be
/// `segment_len` samples long and the set must hold each class once.
pub fn build_mixture(
    clips: &[BinauralClip],
    order: &[usize],
    noise: Option<(&[f64], &[f64])>,
    snr_db: Option<f64>,
    frames_per_segment: usize,
) -> Result<Mixture> {
    let n = CLASS_NAMES.len();
    if clips.len() != n {
        return Err(Error::invalid(format!(
            "need {n} clips, got {}",
            clips.len()
        )));
    }
    let mut seen = [false; 12];
    for c in clips {
        if c.class_idx >= n || std::mem::replace(&mut seen[c.class_idx], true) {
            return Err(Error::invalid("clips must cover each class exactly once"));
        }
    }
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..n).collect::<Vec<_>>() {
        return Err(Error::invalid("slot order must be a permutation of 0..12"));
    }
    let seg = clips[0].left.len();
    if clips
        .iter()
        .any(|c| c.left.len() != seg || c.right.len() != seg)
    {
        return Err(Error::shape("clips differ in length"));
    }
    let total = seg * n;
    if let Some((nl, nr)) = noise {
        if nl.len() != total || nr.len() != total {
            return Err(Error::shape(format!(
                "noise must be {total} samples, got {}/{}",
                nl.len(),
                nr.len()
            )));
        }
        if snr_db.is_none() {
            return Err(Error::invalid("noise given without an SNR"));
        }
    }
    let mut left = Vec::with_capacity(total);
    let mut right = Vec::with_capacity(total);
    let mut labels = Vec::new();
    let seg_s = frames_per_segment as f64 / 10.0;
    for (slot, &ci) in order.iter().enumerate() {
        let clip = &clips[ci];
        let span = slot * seg..(slot + 1) * seg;
        match (noise, snr_db) {
            (Some((nl, nr)), Some(snr)) => {
                let (l, r) = mix_at_snr(
                    (&clip.left, &clip.right),
                    (&nl[span.clone()], &nr[span]),
                    snr,
                )?;
                left.extend(l);
                right.extend(r);
            }
            _ => {
                left.extend_from_slice(&clip.left);
                right.extend_from_slice(&clip.right);
            }
        }
        for f in 0..frames_per_segment {
            let (t0, t1) = (f as f64 / 10.0, (f + 1) as f64 / 10.0);
            let active = match &clip.active {
                None => true,
                Some(iv) => iv
                    .iter()
                    .any(|&(on, off)| on < t1 && off > t0 && on < seg_s),
            };
            if active {
                labels.push(EventLabel {
                    frame_ds: (slot * frames_per_segment + f) as u32,
                    class_idx: clip.class_idx,
                    azimuth_deg: clip.direction.azimuth_deg,
                    elevation_deg: clip.direction.elevation_deg,
                });
            }
        }
    }
    sort_labels(&mut labels);
    Ok(Mixture {
        left,
        right,
        labels,
    })
}

pub fn sort_labels(labels: &mut [EventLabel]) {
    labels.sort_by_key(|l| (l.frame_ds, l.class_idx));
}

/// `frame,class,azimuth,elevation` rows, integers, no header.
pub fn format_label_csv(labels: &[EventLabel]) -> String {
    let mut sorted = labels.to_vec();
    sort_labels(&mut sorted);
    let mut out = String::new();
    for l in &sorted {
        writeln!(
            out,
            "{},{},{},{}",
            l.frame_ds,
            l.class_idx,
            l.azimuth_deg.round() as i64,
            l.elevation_deg.round() as i64
        )
        .unwrap();
    }
    out
}

pub fn write_label_csv(labels: &[EventLabel], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_label_csv(labels))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn parse_label_csv(text: &str, path: &Path) -> Result<Vec<EventLabel>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(err(format!("expected 4 columns, found {}", cols.len())));
        }
        let int = |s: &str| {
            s.parse::<i64>()
                .map_err(|_| err(format!("'{s}' is not an integer")))
        };
        let frame = int(cols[0])?;
        let class = int(cols[1])?;
        if frame < 0 {
            return Err(err("negative frame".into()));
        }
        if !(0..CLASS_NAMES.len() as i64).contains(&class) {
            return Err(err(format!("class {class} outside 0..11")));
        }
        out.push(EventLabel {
            frame_ds: frame as u32,
            class_idx: class as usize,
            azimuth_deg: int(cols[2])? as f64,
            elevation_deg: int(cols[3])? as f64,
        });
    }
    Ok(out)
}

pub fn read_label_csv(path: impl AsRef<Path>) -> Result<Vec<EventLabel>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_label_csv(&text, path)
}

/// Onset/offset pairs (seconds), one per line, whitespace or comma separated.
pub fn parse_strong_labels(text: &str, path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let cols: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if cols.is_empty() {
            continue;
        }
        let parsed: Option<(f64, f64)> = match cols.as_slice() {
            [a, b, ..] => a.parse().ok().zip(b.parse().ok()),
            _ => None,
        };
        match parsed {
            Some((on, off)) if off >= on => out.push((on, off)),
            _ => {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    message: "expected '<onset> <offset>' in seconds".into(),
                })
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
    Test,
    TestH,
    TestV,
}

impl Split {
    pub const ALL: [Split; 5] = [
        Split::Train,
        Split::Valid,
        Split::Test,
        Split::TestH,
        Split::TestV,
    ];

    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
            Split::TestH => "test_h",
            Split::TestV => "test_v",
        }
    }
}

/// Event clip file names per class, sorted, truncated to `samples_per_class`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventInventory {
    pub clips: Vec<Vec<String>>,
}

/// Splits `alarm03.wav` into (`alarm` index, clip name).
pub fn parse_event_filename(name: &str) -> Option<usize> {
    let stem = name.strip_suffix(".wav")?;
    let class = stem.trim_end_matches(|c: char| c.is_ascii_digit());
    if class.len() == stem.len() {
        return None;
    }
    let class = class.to_ascii_lowercase();
    CLASS_NAMES.iter().position(|c| *c == class)
}

fn list_dir(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in
        fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?
    {
        let entry = entry.map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
        if let Some(n) = entry.file_name().to_str() {
            names.push(n.to_string());
        }
    }
    names.sort();
    Ok(names)
}

impl EventInventory {
    pub fn from_names<S: AsRef<str>>(names: &[S], samples_per_class: usize) -> Result<Self> {
        let mut clips = vec![Vec::new(); CLASS_NAMES.len()];
        for n in names {
            if let Some(c) = parse_event_filename(n.as_ref()) {
                clips[c].push(n.as_ref().to_string());
            }
        }
        for (c, list) in clips.iter_mut().enumerate() {
            list.sort();
            if list.len() < samples_per_class {
                return Err(Error::invalid(format!(
                    "class '{}' has {} clips, need {samples_per_class}",
                    CLASS_NAMES[c],
                    list.len()
                )));
            }
            list.truncate(samples_per_class);
        }
        Ok(EventInventory { clips })
    }

    pub fn scan(dir: &Path, samples_per_class: usize) -> Result<Self> {
        Self::from_names(&list_dir(dir)?, samples_per_class)
    }
}

/// Noise class names are file stems of the `.wav` files in the noise directory.
pub fn scan_noise_dir(dir: &Path) -> Result<Vec<String>> {
    Ok(list_dir(dir)?
        .into_iter()
        .filter_map(|n| n.strip_suffix(".wav").map(str::to_string))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotPlan {
    pub class_idx: usize,
    pub clip: String,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixturePlan {
    pub split: Split,
    pub stem: String,
    pub noise: Option<String>,
    /// Fraction of the usable noise length where the mixture's noise starts.
    pub noise_offset: f64,
    /// In slot order.
    pub slots: Vec<SlotPlan>,
}

impl MixturePlan {
    pub fn wav_path(&self) -> PathBuf {
        Path::new(self.split.dir_name()).join(format!("{}.wav", self.stem))
    }

    pub fn csv_path(&self) -> PathBuf {
        Path::new(self.split.dir_name()).join(format!("{}.csv", self.stem))
    }
}

fn split_ranges(cfg: &SynthConfig) -> [std::ops::Range<usize>; 3] {
    let [a, b, c] = cfg.split;
    [0..a, a..a + b, a + b..a + b + c]
}

/// Draws the full dataset layout from the seed. Pure in (config, inventory, noise names).
pub fn plan_dataset(
    cfg: &SynthConfig,
    inv: &EventInventory,
    noises: &[String],
) -> Result<Vec<MixturePlan>> {
    cfg.validate()?;
    if cfg.snr_db.is_some() && noises.is_empty() {
        return Err(Error::invalid(
            "SNR configured but no noise classes available",
        ));
    }
    let noise_opts: Vec<Option<&String>> = if cfg.snr_db.is_some() {
        noises.iter().map(Some).collect()
    } else {
        vec![None]
    };
    let n_classes = CLASS_NAMES.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dirs = cfg.directions();
    let mut plans = Vec::new();

    let mut emit =
        |rng: &mut ChaCha8Rng, split: Split, base: String, picks: Vec<(usize, Direction)>| {
            let mut order: Vec<usize> = (0..n_classes).collect();
            order.shuffle(rng);
            let slots: Vec<SlotPlan> = order
                .iter()
                .map(|&c| SlotPlan {
                    class_idx: c,
                    clip: inv.clips[c][picks[c].0].clone(),
                    azimuth_deg: picks[c].1.azimuth_deg,
                    elevation_deg: picks[c].1.elevation_deg,
                })
                .collect();
            for noise in &noise_opts {
                let stem = match noise {
                    Some(n) => base.replacen("{noise}", &format!("_{n}"), 1),
                    None => base.replacen("{noise}", "", 1),
                };
                plans.push(MixturePlan {
                    split,
                    stem,
                    noise: noise.map(|s| s.to_string()),
                    noise_offset: if noise.is_some() {
                        rng.gen::<f64>()
                    } else {
                        0.0
                    },
                    slots: slots.clone(),
                });
            }
        };

    let ranges = split_ranges(cfg);
    for (split, range) in [Split::Train, Split::Valid, Split::Test]
        .into_iter()
        .zip(ranges.clone())
    {
        let per_class: Vec<Vec<(usize, Direction)>> = (0..n_classes)
            .map(|_| {
                let mut v: Vec<(usize, Direction)> = range
                    .clone()
                    .flat_map(|ci| dirs.iter().map(move |d| (ci, *d)))
                    .collect();
                v.shuffle(&mut rng);
                v
            })
            .collect();
        let prefix = split.dir_name();
        for i in 0..per_class[0].len() {
            let picks = per_class.iter().map(|v| v[i]).collect();
            emit(
                &mut rng,
                split,
                format!("{prefix}{{noise}}_mix{:03}", i + 1),
                picks,
            );
        }
    }

    let test = ranges[2].clone();
    for (split, set) in [
        (Split::TestH, cfg.horizontal_directions()),
        (Split::TestV, cfg.frontal_median_directions()),
    ] {
        for d in set {
            let per_class: Vec<Vec<usize>> = (0..n_classes)
                .map(|_| {
                    let mut v: Vec<usize> = test.clone().collect();
                    v.shuffle(&mut rng);
                    v
                })
                .collect();
            for j in 0..test.len() {
                let picks = per_class.iter().map(|v| (v[j], d)).collect();
                let name = format!("test-{}{{noise}}_mix{}", hrir_file_stem(&d), j + 1);
                emit(&mut rng, split, name, picks);
            }
        }
    }
    Ok(plans)
}

pub fn count_by_split(plans: &[MixturePlan]) -> [usize; 5] {
    let mut counts = [0; 5];
    for p in plans {
        counts[Split::ALL.iter().position(|s| *s == p.split).unwrap()] += 1;
    }
    counts
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub split: Split,
    pub wav: String,
    pub csv: String,
    pub noise: Option<String>,
    pub snr_db: Option<f64>,
    /// Gain applied to reach the −1 dBFS peak.
    pub scale: f64,
    pub slots: Vec<SlotPlan>,
    pub label_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub config: SynthConfig,
    pub counts: HashMap<String, usize>,
    pub files: Vec<ManifestEntry>,
}

pub const PEAK_DBFS: f64 = -1.0;

/// Directory layout of the synthesis inputs.
#[derive(Debug, Clone)]
pub struct SynthInputs<'a> {
    pub events: &'a Path,
    pub noise: Option<&'a Path>,
    pub hrirs: &'a Path,
}

struct PreparedClip {
    mono: Vec<f64>,
    active: Option<Vec<(f64, f64)>>,
}

fn fit_length(mut x: Vec<f64>, n: usize) -> Vec<f64> {
    x.resize(n, 0.0);
    x
}

fn direction_key(d: &Direction) -> String {
    hrir_file_stem(d)
}

/// Runs the plan and writes every WAV/CSV pair plus `manifest.json`.
pub fn build_dataset(cfg: &SynthConfig, inputs: &SynthInputs, out_dir: &Path) -> Result<Manifest> {
    cfg.validate()?;
    let inv = EventInventory::scan(inputs.events, cfg.samples_per_class)?;
    let noise_names = match (cfg.snr_db, inputs.noise) {
        (Some(_), Some(dir)) => scan_noise_dir(dir)?,
        (Some(_), None) => {
            return Err(Error::invalid(
                "SNR configured but no noise directory given",
            ))
        }
        (None, _) => Vec::new(),
    };
    let plans = plan_dataset(cfg, &inv, &noise_names)?;
    let seg = cfg.segment_len();
    let total = seg * CLASS_NAMES.len();
    let fs = cfg.fs as f64;

    let mut hrirs: HashMap<String, HrirPair> = HashMap::new();
    for pair in load_hrir_database(inputs.hrirs, cfg.hrir_fs as f64)? {
        let key = direction_key(&pair.direction);
        let l = resample(&pair.left, cfg.hrir_fs, cfg.fs)?;
        let r = resample(&pair.right, cfg.hrir_fs, cfg.fs)?;
        hrirs.insert(key, HrirPair::new(l, r, fs, pair.direction)?);
    }
    for d in cfg.directions() {
        if !hrirs.contains_key(&direction_key(&d)) {
            return Err(Error::invalid(format!(
                "HRIR for {} missing in {}",
                direction_key(&d),
                inputs.hrirs.display()
            )));
        }
    }

    let clip_names: Vec<&String> = inv.clips.iter().flatten().collect();
    let prepared: HashMap<String, PreparedClip> = clip_names
        .par_iter()
        .map(|name| {
            let path = inputs.events.join(name);
            let audio = wav::read_wav(&path)?;
            let mono = fit_length(resample(&audio.to_mono(), audio.fs, cfg.fs)?, seg);
            let sidecar = inputs.events.join(format!("{name}.txt"));
            let active = if sidecar.exists() {
                let text = fs::read_to_string(&sidecar)
                    .map_err(|e| Error::io(format!("reading {}", sidecar.display()), e))?;
                Some(parse_strong_labels(&text, &sidecar)?)
            } else {
                None
            };
            Ok(((*name).clone(), PreparedClip { mono, active }))
        })
        .collect::<Result<_>>()?;

    let mut noises: HashMap<String, (Vec<f64>, Vec<f64>)> = HashMap::new();
    if let Some(dir) = inputs.noise {
        for n in &noise_names {
            let audio = wav::read_wav(dir.join(format!("{n}.wav")))?;
            let (l, r) = audio.to_stereo()?;
            noises.insert(
                n.clone(),
                (
                    resample(&l, audio.fs, cfg.fs)?,
                    resample(&r, audio.fs, cfg.fs)?,
                ),
            );
        }
    }

    for s in Split::ALL {
        let d = out_dir.join(s.dir_name());
        fs::create_dir_all(&d).map_err(|e| Error::io(format!("creating {}", d.display()), e))?;
    }

    let entries: Vec<ManifestEntry> = plans
        .par_iter()
        .map(|plan| {
            let clips: Vec<BinauralClip> = {
                let mut v: Vec<BinauralClip> = plan
                    .slots
                    .iter()
                    .map(|slot| {
                        let d = Direction::new(slot.azimuth_deg, slot.elevation_deg);
                        let prep = &prepared[&slot.clip];
                        let (left, right) = spatialize(&prep.mono, &hrirs[&direction_key(&d)], fs)?;
                        Ok(BinauralClip {
                            class_idx: slot.class_idx,
                            left,
                            right,
                            direction: d,
                            active: prep.active.clone(),
                        })
                    })
                    .collect::<Result<_>>()?;
                v.sort_by_key(|c| c.class_idx);
                v
            };
            let order: Vec<usize> = plan.slots.iter().map(|s| s.class_idx).collect();
            let noise_seg = plan
                .noise
                .as_ref()
                .map(|n| noise_segment(&noises[n], total, plan.noise_offset))
                .transpose()?;
            let mix = build_mixture(
                &clips,
                &order,
                noise_seg
                    .as_ref()
                    .map(|(l, r)| (l.as_slice(), r.as_slice())),
                cfg.snr_db,
                cfg.frames_per_segment(),
            )?;
            let peak = mix
                .left
                .iter()
                .chain(&mix.right)
                .fold(0.0f64, |m, v| m.max(v.abs()));
            let scale = if peak > 0.0 {
                10f64.powf(PEAK_DBFS / 20.0) / peak
            } else {
                1.0
            };
            let l: Vec<f64> = mix.left.iter().map(|v| v * scale).collect();
            let r: Vec<f64> = mix.right.iter().map(|v| v * scale).collect();
            wav::write_wav_i16(out_dir.join(plan.wav_path()), &[&l, &r], cfg.fs)?;
            write_label_csv(&mix.labels, out_dir.join(plan.csv_path()))?;
            Ok(ManifestEntry {
                split: plan.split,
                wav: plan.wav_path().to_string_lossy().into_owned(),
                csv: plan.csv_path().to_string_lossy().into_owned(),
                noise: plan.noise.clone(),
                snr_db: plan.noise.as_ref().and(cfg.snr_db),
                scale,
                slots: plan.slots.clone(),
                label_rows: mix.labels.len(),
            })
        })
        .collect::<Result<_>>()?;

    let counts = Split::ALL
        .iter()
        .zip(count_by_split(&plans))
        .map(|(s, n)| (s.dir_name().to_string(), n))
        .collect();
    let manifest = Manifest {
        seed: cfg.seed,
        config: cfg.clone(),
        counts,
        files: entries,
    };
    let path = out_dir.join("manifest.json");
    fs::write(&path, manifest_json(&manifest)?)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(manifest)
}

/// Pretty JSON with keys in a stable order.
pub fn manifest_json(m: &Manifest) -> Result<String> {
    let mut value = serde_json::to_value(m)?;
    if let Some(counts) = value.get_mut("counts") {
        let sorted: std::collections::BTreeMap<String, serde_json::Value> =
            serde_json::from_value(counts.take())?;
        *counts = serde_json::to_value(sorted)?;
    }
    Ok(serde_json::to_string_pretty(&value)?)
}

fn noise_segment(
    noise: &(Vec<f64>, Vec<f64>),
    n: usize,
    offset: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let len = noise.0.len();
    if len == 0 {
        return Err(Error::invalid("empty noise recording"));
    }
    let start = if len > n {
        (offset * (len - n) as f64).floor() as usize
    } else {
        0
    };
    // recordings shorter than a mixture are looped
    let take = |x: &[f64]| (0..n).map(|i| x[(start + i) % len]).collect();
    Ok((take(&noise.0), take(&noise.1)))
}
