use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use biseld::btff::{Btff, BtffExtractor};
use biseld::cues::{
    extract_prtf, find_spectral_features, hpd, hrtf_pair_spectra, ild_narrowband, ild_wideband, itd,
};
use biseld::dataset::{
    build_dataset, read_label_csv, sort_labels, write_label_csv, SynthInputs, CLASS_NAMES,
};
use biseld::dsp::resample;
use biseld::hrtf::{
    derive_hrir_pair, hrir_file_stem, load_hrir_database, parse_hrir_filename, parse_hrir_text,
    write_hrir_pair, DerivationParams, HrirPair,
};
use biseld::metrics::{Evaluator, FrameEvents};
use biseld::net::{self, biseldnet_v4, decode_sequence, GraphSpec, Network, V4Config, Weights};
use biseld::speaker::{log_grid, response, summarize, Air, SpeakerSetup, TspSet};
use biseld::vam::network_vam;
use biseld::wav::read_wav;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ToolConfig;
use crate::{io_err, CliError};

type Res<T = ()> = Result<T, CliError>;

fn create_dir(dir: &Path) -> Res {
    fs::create_dir_all(dir).map_err(|e| io_err(format!("creating {}", dir.display()), e))
}

fn write_text(path: &Path, text: &str) -> Res {
    fs::write(path, text).map_err(|e| io_err(format!("writing {}", path.display()), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Res {
    let mut text = serde_json::to_string_pretty(value).map_err(biseld::Error::from)?;
    text.push('\n');
    write_text(path, &text)
}

fn sorted_files(dir: &Path, keep: impl Fn(&Path) -> bool) -> Res<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| io_err(format!("listing {}", dir.display()), e))?;
    let mut out = Vec::new();
    for e in entries {
        let p = e
            .map_err(|e| io_err(format!("listing {}", dir.display()), e))?
            .path();
        if p.is_file() && keep(&p) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn read_column(path: &Path) -> Res<Vec<f64>> {
    let text =
        fs::read_to_string(path).map_err(|e| io_err(format!("reading {}", path.display()), e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let Some(tok) = line.split_whitespace().next() else {
            continue;
        };
        let v = tok.parse().map_err(|_| biseld::Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("invalid number '{tok}'"),
        })?;
        out.push(v);
    }
    if out.is_empty() {
        return Err(biseld::Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: "empty file".into(),
        }
        .into());
    }
    Ok(out)
}

pub fn derive_hrtf(cfg: &ToolConfig, bir_dir: &Path, oir_path: &Path, out: &Path) -> Res {
    let fs_hz = cfg.cues.hrir_fs;
    let oir = read_column(oir_path)?;
    let birs = sorted_files(bir_dir, |p| {
        p.extension().is_some_and(|e| e == "txt") && parse_hrir_filename(&file_name(p)).is_ok()
    })?;
    if birs.is_empty() {
        return Err(CliError::Usage(format!(
            "no a<AAA>e<±EE>.txt files in {}",
            bir_dir.display()
        )));
    }
    let params = DerivationParams {
        window: cfg.window,
        geometry: cfg.geometry,
        ..DerivationParams::default()
    };
    let derived: Vec<_> = birs
        .par_iter()
        .map(|p| -> Res<_> {
            let direction = parse_hrir_filename(&file_name(p))?;
            let text =
                fs::read_to_string(p).map_err(|e| io_err(format!("reading {}", p.display()), e))?;
            let bir = parse_hrir_text(&text, p, fs_hz, direction, None)?;
            Ok(derive_hrir_pair(
                &bir.left, &bir.right, &oir, fs_hz, direction, &params,
            )?)
        })
        .collect::<Res<_>>()?;

    create_dir(out)?;
    let mut log = String::from("azimuth,elevation,start_index,shift_samples,window_fallback\n");
    for d in &derived {
        let dir = &d.pair.direction;
        write_hrir_pair(out.join(format!("{}.txt", hrir_file_stem(dir))), &d.pair)?;
        writeln!(
            log,
            "{},{},{},{},{}",
            dir.azimuth_deg, dir.elevation_deg, d.start_index, d.shift_samples, d.window_fallback
        )
        .unwrap();
    }
    write_text(&out.join("derivation.csv"), &log)?;
    println!(
        "derived {} HRIR pairs into {}",
        derived.len(),
        out.display()
    );
    Ok(())
}

struct CueRow {
    azimuth: f64,
    elevation: f64,
    itd_us: f64,
    wideband_db: f64,
    narrowband_db: Vec<f64>,
}

pub fn analyze_cues(cfg: &ToolConfig, hrir_dir: &Path, out: &Path) -> Res {
    let c = &cfg.cues;
    let pairs = load_hrir_database(hrir_dir, c.hrir_fs)?;
    if pairs.is_empty() {
        return Err(CliError::Usage(format!(
            "no HRIR files in {}",
            hrir_dir.display()
        )));
    }
    let nyquist = c.hrir_fs / 2.0;
    let ild_band = (c.ild_band_hz.0, c.ild_band_hz.1.min(nyquist));
    let sc_band = (c.sc_band_hz.0, c.sc_band_hz.1.min(nyquist));
    let n_fft = pairs[0].len();

    let rows: Vec<CueRow> = pairs
        .par_iter()
        .map(|p| -> Res<CueRow> {
            let (hl, hr) = hrtf_pair_spectra(p, n_fft)?;
            Ok(CueRow {
                azimuth: p.direction.azimuth_deg,
                elevation: p.direction.elevation_deg,
                itd_us: itd(p, &cfg.itd)? * 1e6,
                wideband_db: ild_wideband(&hl, &hr, ild_band.0, ild_band.1)?,
                narrowband_db: ild_narrowband(&hl, &hr)?,
            })
        })
        .collect::<Res<_>>()?;

    create_dir(out)?;
    let mut itd_csv = String::from("azimuth,elevation,itd_us\n");
    for r in &rows {
        writeln!(itd_csv, "{},{},{}", r.azimuth, r.elevation, r.itd_us).unwrap();
    }
    write_text(&out.join("itd.csv"), &itd_csv)?;

    let bin_hz = c.hrir_fs / n_fft as f64;
    let mut ild_csv = String::from("azimuth,elevation,wideband_db");
    for k in 0..rows[0].narrowband_db.len() {
        write!(ild_csv, ",nb_{}", k as f64 * bin_hz).unwrap();
    }
    ild_csv.push('\n');
    for r in &rows {
        write!(ild_csv, "{},{},{}", r.azimuth, r.elevation, r.wideband_db).unwrap();
        for v in &r.narrowband_db {
            write!(ild_csv, ",{v}").unwrap();
        }
        ild_csv.push('\n');
    }
    write_text(&out.join("ild.csv"), &ild_csv)?;

    let median: Vec<&HrirPair> = pairs
        .iter()
        .filter(|p| p.direction.azimuth_deg == 0.0 || p.direction.azimuth_deg.abs() == 180.0)
        .collect();
    let mut sc_csv =
        String::from("azimuth,elevation,ear,kind,frequency_hz,level_db,prominence_db\n");
    for p in median {
        for (ear, h) in [("left", &p.left), ("right", &p.right)] {
            let prtf = extract_prtf(h, p.fs, c.prtf_window_ms)?;
            let feats = find_spectral_features(
                &prtf.spectrum,
                sc_band,
                cfg.thresholds.prominence_db,
                p.direction.elevation_deg,
            )?;
            for f in feats {
                let kind = match f.kind {
                    biseld::cues::FeatureKind::Peak => "peak",
                    biseld::cues::FeatureKind::Notch => "notch",
                };
                writeln!(
                    sc_csv,
                    "{},{},{ear},{kind},{},{},{}",
                    p.direction.azimuth_deg,
                    f.elevation_deg,
                    f.frequency_hz,
                    f.level_db,
                    f.prominence_db
                )
                .unwrap();
            }
        }
    }
    write_text(&out.join("sc.csv"), &sc_csv)?;

    let horizontal: Vec<&HrirPair> = pairs
        .iter()
        .filter(|p| p.direction.elevation_deg == 0.0)
        .collect();
    let mut hpd_csv = String::from("frequency_hz,ear,azimuth,level_db\n");
    if horizontal.iter().any(|p| p.direction.azimuth_deg == 0.0) {
        let spectra: Vec<_> = horizontal
            .iter()
            .map(|p| Ok((p.direction.azimuth_deg, hrtf_pair_spectra(p, n_fft)?)))
            .collect::<Res<_>>()?;
        for &f in &c.hpd_frequencies_hz {
            for ear in ["left", "right"] {
                let plane: Vec<_> = spectra
                    .iter()
                    .map(|(az, (l, r))| (*az, if ear == "left" { l.clone() } else { r.clone() }))
                    .collect();
                for (az, db) in hpd(&plane, f)?.levels {
                    writeln!(hpd_csv, "{f},{ear},{az},{db}").unwrap();
                }
            }
        }
    } else {
        eprintln!("note: no frontal horizontal HRIR, hpd.csv left empty");
    }
    write_text(&out.join("hpd.csv"), &hpd_csv)?;
    println!("analyzed {} directions into {}", rows.len(), out.display());
    Ok(())
}

pub fn extract_btff(cfg: &ToolConfig, input: &Path, output: &Path, csv: Option<&Path>) -> Res {
    let audio = read_wav(input)?;
    let (mut l, mut r) = audio.to_stereo()?;
    let target = cfg.stft.fs.round() as u32;
    if audio.fs != target {
        l = resample(&l, audio.fs, target)?;
        r = resample(&r, audio.fs, target)?;
    }
    let feature = BtffExtractor::new(cfg.stft)?.extract(&l, &r)?;
    feature.write_binary(output)?;
    if let Some(dir) = csv {
        let stem = input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "btff".into());
        feature.write_csvs(dir, &stem)?;
    }
    println!(
        "{} frames × 64 bins × 8 channels -> {}",
        feature.n_frames(),
        output.display()
    );
    Ok(())
}

pub fn synth_dataset(
    cfg: &ToolConfig,
    events: &Path,
    noise: Option<&Path>,
    hrirs: &Path,
    out: &Path,
) -> Res {
    let inputs = SynthInputs {
        events,
        noise,
        hrirs,
    };
    let manifest = build_dataset(&cfg.synth, &inputs, out)?;
    let mut counts: Vec<_> = manifest.counts.iter().collect();
    counts.sort();
    let summary: Vec<String> = counts.iter().map(|(k, v)| format!("{k} {v}")).collect();
    println!(
        "wrote {} mixtures (seed {}): {}",
        manifest.files.len(),
        manifest.seed,
        summary.join(", ")
    );
    Ok(())
}

#[derive(Serialize)]
struct SpeakerReport {
    tsp: TspSet,
    setup: SpeakerSetup,
    summary: biseld::speaker::ResponseSummary,
}

pub fn simulate_speaker(
    cfg: &ToolConfig,
    tsp: Option<&Path>,
    veg: f64,
    vbox: f64,
    r: f64,
    out: &Path,
) -> Res {
    let tsp: TspSet = match tsp {
        None => TspSet::default(),
        Some(p) => {
            let text =
                fs::read_to_string(p).map_err(|e| io_err(format!("reading {}", p.display()), e))?;
            serde_json::from_str(&text).map_err(|e| biseld::Error::Parse {
                path: p.to_path_buf(),
                line: e.line(),
                message: e.to_string(),
            })?
        }
    };
    let setup = SpeakerSetup {
        v_eg: veg,
        v_box_cc: vbox,
        distance_m: r,
    };
    let s = &cfg.speaker;
    let table = response(
        &tsp,
        &setup,
        &log_grid(s.f_lo_hz, s.f_hi_hz, s.points),
        &Air::default(),
    )?;
    let summary = summarize(
        &table,
        cfg.thresholds.rolloff_reference,
        cfg.thresholds.rolloff_drop_db,
    )?;

    create_dir(out)?;
    let mut csv = String::from("freq_hz,excursion_mm,volume_velocity,spl_db\n");
    for p in &table {
        writeln!(
            csv,
            "{},{},{},{}",
            p.freq_hz,
            p.excursion.norm() * 1e3,
            p.volume_velocity.norm(),
            p.spl_db
        )
        .unwrap();
    }
    write_text(&out.join("response.csv"), &csv)?;
    write_json(
        &out.join("summary.json"),
        &SpeakerReport {
            tsp,
            setup,
            summary,
        },
    )?;
    println!(
        "roll-off {:.2} Hz, excursion peak {:.1} Hz",
        summary.rolloff_hz, summary.peak_excursion_hz
    );
    Ok(())
}

pub fn count_params(graph: Option<&Path>) -> Res {
    let g = match graph {
        Some(p) => GraphSpec::load(p)?.compile()?,
        None => biseldnet_v4(&V4Config::default())?,
    };
    let counts = net::count_params(&g)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&counts).map_err(biseld::Error::from)?
    );
    Ok(())
}

fn load_network(graph: &Path, weights: &Path) -> Res<Network> {
    let g = GraphSpec::load(graph)?.compile()?;
    Ok(Network::new(g, Weights::load(weights)?)?)
}

pub fn infer(cfg: &ToolConfig, graph: &Path, weights: &Path, btff: &Path, out: &Path) -> Res {
    let net = load_network(graph, weights)?;
    let feature = Btff::read_binary(btff)?;
    let y = net.forward(&feature.tensor)?;
    let hop = feature.frame_hop_s * net.graph().time_reduction() as f64;
    let mut labels = decode_sequence(y.view(), hop, cfg.thresholds.detection)?;
    sort_labels(&mut labels);
    write_label_csv(&labels, out)?;
    println!(
        "{} output frames, {} event rows -> {}",
        y.nrows(),
        labels.len(),
        out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct EvaluationReport {
    files: Vec<String>,
    #[serde(flatten)]
    metrics: biseld::metrics::MetricReport,
}

pub fn evaluate(cfg: &ToolConfig, ref_dir: &Path, pred_dir: &Path, out: &Path) -> Res {
    let is_csv = |p: &Path| p.extension().is_some_and(|e| e == "csv");
    let names: BTreeSet<String> = sorted_files(ref_dir, is_csv)?
        .iter()
        .chain(&sorted_files(pred_dir, is_csv)?)
        .map(|p| file_name(p))
        .collect();
    if names.is_empty() {
        return Err(CliError::Usage("no label CSVs in either directory".into()));
    }
    let load = |dir: &Path, name: &str| -> Res<FrameEvents> {
        let p = dir.join(name);
        if !p.exists() {
            return Ok(FrameEvents::new(0));
        }
        Ok(FrameEvents::from_labels(&read_label_csv(&p)?)?)
    };
    let mut ev = Evaluator::new(cfg.thresholds.doa_deg);
    for name in &names {
        ev.add(&load(ref_dir, name)?, &load(pred_dir, name)?);
    }
    let report = EvaluationReport {
        files: names.into_iter().collect(),
        metrics: ev.report()?,
    };
    write_json(out, &report)?;
    let m = &report.metrics;
    println!(
        "ER {:.4}  F {:.4}  LE {:.2}°  LR {:.4}  SELD {:.4}",
        m.er20, m.f20, m.le_cd, m.lr_cd, m.seld_error
    );
    Ok(())
}

#[derive(Serialize)]
struct VamSidecar {
    class_idx: usize,
    class: String,
    pivot: String,
    vector_norm: f64,
    kink: bool,
    map_shape: [usize; 2],
    weights: Vec<f64>,
    detections: Vec<biseld::dataset::EventLabel>,
}

#[allow(clippy::too_many_arguments)]
pub fn vam(
    cfg: &ToolConfig,
    graph: &Path,
    weights: &Path,
    btff: &Path,
    class_idx: usize,
    pivot: &str,
    out: &Path,
) -> Res {
    if class_idx >= CLASS_NAMES.len() {
        return Err(CliError::Usage(format!(
            "--class {class_idx} outside 0..{}",
            CLASS_NAMES.len() - 1
        )));
    }
    let net = load_network(graph, weights)?;
    let feature = Btff::read_binary(btff)?;
    let res = network_vam(&net, &feature.tensor, class_idx, pivot)?;
    let y = net.forward(&feature.tensor)?;
    let hop = feature.frame_hop_s * net.graph().time_reduction() as f64;
    let detections = decode_sequence(y.view(), hop, cfg.thresholds.detection)?;

    let mut csv = String::new();
    for row in res.upscaled.rows() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        csv.push_str(&line.join(","));
        csv.push('\n');
    }
    write_text(out, &csv)?;
    let sidecar = VamSidecar {
        class_idx,
        class: CLASS_NAMES[class_idx].to_string(),
        pivot: pivot.to_string(),
        vector_norm: res.vector_norm,
        kink: res.kink,
        map_shape: [res.map.nrows(), res.map.ncols()],
        weights: res.weights.to_vec(),
        detections,
    };
    write_json(&out.with_extension("json"), &sidecar)?;
    if res.kink {
        eprintln!("note: class vector vanishes on some frame; gradients there are one-sided");
    }
    println!(
        "|v| = {:.4}, map {}×{} -> {}",
        res.vector_norm,
        res.map.nrows(),
        res.map.ncols(),
        out.display()
    );
    Ok(())
}
