//! Location-aware detection (ER/F within an angular threshold, per one-second
//! segment) and class-aware localization (LE/LR per frame) metrics.

use serde::{Deserialize, Serialize};

use crate::dataset::{EventLabel, CLASS_NAMES};
use crate::error::{Error, Result};
use crate::hrtf::Direction;

pub const N_CLASSES: usize = CLASS_NAMES.len();
pub const FRAMES_PER_SEGMENT: usize = 10;
pub const DEFAULT_THRESHOLD_DEG: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub class_idx: usize,
    /// Unit vector.
    pub vector: [f64; 3],
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if n == 0.0 {
        v
    } else {
        [v[0] / n, v[1] / n, v[2] / n]
    }
}

/// Events grouped by deci-second frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameEvents {
    pub frames: Vec<Vec<Event>>,
}

impl FrameEvents {
    pub fn new(n_frames: usize) -> Self {
        FrameEvents {
            frames: vec![Vec::new(); n_frames],
        }
    }

    pub fn push(&mut self, frame: usize, class_idx: usize, vector: [f64; 3]) -> Result<()> {
        if class_idx >= N_CLASSES {
            return Err(Error::invalid(format!(
                "class {class_idx} outside 0..{}",
                N_CLASSES - 1
            )));
        }
        if self.frames.len() <= frame {
            self.frames.resize(frame + 1, Vec::new());
        }
        self.frames[frame].push(Event {
            class_idx,
            vector: normalize(vector),
        });
        Ok(())
    }

    pub fn from_labels(labels: &[EventLabel]) -> Result<Self> {
        let mut fe = FrameEvents::default();
        for l in labels {
            let v = Direction::new(l.azimuth_deg, l.elevation_deg).unit_vector();
            fe.push(l.frame_ds as usize, l.class_idx, v)?;
        }
        Ok(fe)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    fn frame(&self, f: usize) -> &[Event] {
        self.frames.get(f).map_or(&[], Vec::as_slice)
    }

    fn class_vectors(&self, f: usize, class_idx: usize) -> Vec<[f64; 3]> {
        self.frame(f)
            .iter()
            .filter(|e| e.class_idx == class_idx)
            .map(|e| e.vector)
            .collect()
    }
}

/// Great-circle angle in degrees, `2·atan2(|u − v|, |u + v|)` on unit
/// vectors; exact at 0° and 180°.
pub fn angular_error(u: [f64; 3], v: [f64; 3]) -> f64 {
    let (u, v) = (normalize(u), normalize(v));
    let norm = |a: [f64; 3]| (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let diff = norm([u[0] - v[0], u[1] - v[1], u[2] - v[2]]);
    let sum = norm([u[0] + v[0], u[1] + v[1], u[2] + v[2]]);
    (2.0 * diff.atan2(sum)).to_degrees()
}

/// Detection counts of one segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SegmentCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub n: usize,
}

impl SegmentCounts {
    pub fn substitutions(&self) -> usize {
        self.fn_.min(self.fp)
    }

    pub fn deletions(&self) -> usize {
        self.fn_.saturating_sub(self.fp)
    }

    pub fn insertions(&self) -> usize {
        self.fp.saturating_sub(self.fn_)
    }
}

/// Counts per segment, and per class summed over segments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionCounts {
    pub segments: Vec<SegmentCounts>,
    pub per_class: Vec<SegmentCounts>,
}

fn min_cross_error(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    a.iter()
        .flat_map(|u| b.iter().map(move |v| angular_error(*u, *v)))
        .fold(f64::INFINITY, f64::min)
}

/// A class active in any frame of a segment is active in the segment. Both
/// active counts as TP when the closest reference/prediction pair inside the
/// segment is within `threshold_deg`, otherwise as one FP and one FN.
pub fn segment_counts(
    reference: &FrameEvents,
    predicted: &FrameEvents,
    threshold_deg: f64,
) -> DetectionCounts {
    let n_frames = reference.len().max(predicted.len());
    let n_seg = n_frames.div_ceil(FRAMES_PER_SEGMENT);
    let mut out = DetectionCounts {
        segments: Vec::with_capacity(n_seg),
        per_class: vec![SegmentCounts::default(); N_CLASSES],
    };
    for s in 0..n_seg {
        let frames = s * FRAMES_PER_SEGMENT..((s + 1) * FRAMES_PER_SEGMENT).min(n_frames);
        let mut seg = SegmentCounts::default();
        for c in 0..N_CLASSES {
            let r: Vec<[f64; 3]> = frames
                .clone()
                .flat_map(|f| reference.class_vectors(f, c))
                .collect();
            let p: Vec<[f64; 3]> = frames
                .clone()
                .flat_map(|f| predicted.class_vectors(f, c))
                .collect();
            let mut cc = SegmentCounts::default();
            match (r.is_empty(), p.is_empty()) {
                (false, false) => {
                    if min_cross_error(&r, &p) < threshold_deg {
                        cc.tp = 1;
                    } else {
                        cc.fp = 1;
                        cc.fn_ = 1;
                    }
                }
                (false, true) => cc.fn_ = 1,
                (true, false) => cc.fp = 1,
                (true, true) => {}
            }
            cc.n = usize::from(!r.is_empty());
            for (dst, add) in [(&mut seg, cc), (&mut out.per_class[c], cc)] {
                dst.tp += add.tp;
                dst.fp += add.fp;
                dst.fn_ += add.fn_;
                dst.n += add.n;
            }
        }
        out.segments.push(seg);
    }
    out
}

fn totals(segments: &[SegmentCounts]) -> SegmentCounts {
    segments
        .iter()
        .fold(SegmentCounts::default(), |a, s| SegmentCounts {
            tp: a.tp + s.tp,
            fp: a.fp + s.fp,
            fn_: a.fn_ + s.fn_,
            n: a.n + s.n,
        })
}

/// `2TP / (2TP + FP + FN)`; 1 when nothing is active on either side.
pub fn f_score(segments: &[SegmentCounts]) -> f64 {
    let t = totals(segments);
    let den = 2 * t.tp + t.fp + t.fn_;
    if den == 0 {
        1.0
    } else {
        2.0 * t.tp as f64 / den as f64
    }
}

/// `Σ(S + D + I) / ΣN` with S, D, I taken per segment.
pub fn error_rate(segments: &[SegmentCounts]) -> Result<f64> {
    let n: usize = segments.iter().map(|s| s.n).sum();
    if n == 0 {
        return Err(Error::invalid(
            "error rate undefined: no active reference events",
        ));
    }
    let e: usize = segments
        .iter()
        .map(|s| s.substitutions() + s.deletions() + s.insertions())
        .sum();
    Ok(e as f64 / n as f64)
}

/// Class-aware localization statistics accumulated over frames.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LocalizationStats {
    pub error_sum_deg: f64,
    pub pairs: usize,
    pub tp: usize,
    pub fn_: usize,
}

impl LocalizationStats {
    pub fn merge(&mut self, o: &LocalizationStats) {
        self.error_sum_deg += o.error_sum_deg;
        self.pairs += o.pairs;
        self.tp += o.tp;
        self.fn_ += o.fn_;
    }

    /// Mean matched error; 180° with `false` when there are no pairs.
    pub fn localization_error(&self) -> (f64, bool) {
        if self.pairs == 0 {
            (180.0, false)
        } else {
            (self.error_sum_deg / self.pairs as f64, true)
        }
    }

    /// `TP / (TP + FN)` over reference-active (frame, class) cells; 1 if none.
    pub fn localization_recall(&self) -> f64 {
        let den = self.tp + self.fn_;
        if den == 0 {
            1.0
        } else {
            self.tp as f64 / den as f64
        }
    }
}

/// Greedy matching by smallest angular error; returns matched errors.
pub fn greedy_match(reference: &[[f64; 3]], predicted: &[[f64; 3]]) -> Vec<f64> {
    let mut cand: Vec<(f64, usize, usize)> = reference
        .iter()
        .enumerate()
        .flat_map(|(i, u)| {
            predicted
                .iter()
                .enumerate()
                .map(move |(j, v)| (angular_error(*u, *v), i, j))
        })
        .collect();
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_r = vec![false; reference.len()];
    let mut used_p = vec![false; predicted.len()];
    let mut out = Vec::new();
    for (e, i, j) in cand {
        if !used_r[i] && !used_p[j] {
            used_r[i] = true;
            used_p[j] = true;
            out.push(e);
        }
    }
    out
}

/// Per class. A reference-active (frame, class) cell is a localization TP
/// when the prediction has the same number of instances of that class.
pub fn localization_stats(
    reference: &FrameEvents,
    predicted: &FrameEvents,
) -> Vec<LocalizationStats> {
    let n_frames = reference.len().max(predicted.len());
    let mut stats = vec![LocalizationStats::default(); N_CLASSES];
    for f in 0..n_frames {
        for (c, st) in stats.iter_mut().enumerate() {
            let r = reference.class_vectors(f, c);
            let p = predicted.class_vectors(f, c);
            for e in greedy_match(&r, &p) {
                st.error_sum_deg += e;
                st.pairs += 1;
            }
            if !r.is_empty() {
                if r.len() == p.len() {
                    st.tp += 1;
                } else {
                    st.fn_ += 1;
                }
            }
        }
    }
    stats
}

/// (SED error, DOA error, SELD error).
pub fn composite_errors(er: f64, f: f64, le_deg: f64, lr: f64) -> (f64, f64, f64) {
    let sed = (er + (1.0 - f)) / 2.0;
    let doa = (le_deg / 180.0 + (1.0 - lr)) / 2.0;
    (sed, doa, (sed + doa) / 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: String,
    pub er20: Option<f64>,
    pub f20: f64,
    pub le_cd: f64,
    pub lr_cd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub er20: f64,
    pub f20: f64,
    pub le_cd: f64,
    pub lr_cd: f64,
    pub sed_error: f64,
    pub doa_error: f64,
    pub seld_error: f64,
    /// False when no class-matched pairs existed and LE fell back to 180°.
    pub le_defined: bool,
    pub per_class: Vec<ClassReport>,
}

/// Accumulates counts over any number of (reference, prediction) files.
#[derive(Debug, Clone)]
pub struct Evaluator {
    pub threshold_deg: f64,
    segments: Vec<SegmentCounts>,
    class_segments: Vec<Vec<SegmentCounts>>,
    loc: Vec<LocalizationStats>,
}

impl Default for Evaluator {
    fn default() -> Self {
        Self::new(DEFAULT_THRESHOLD_DEG)
    }
}

impl Evaluator {
    pub fn new(threshold_deg: f64) -> Self {
        Evaluator {
            threshold_deg,
            segments: Vec::new(),
            class_segments: vec![Vec::new(); N_CLASSES],
            loc: vec![LocalizationStats::default(); N_CLASSES],
        }
    }

    pub fn add(&mut self, reference: &FrameEvents, predicted: &FrameEvents) {
        let n_frames = reference.len().max(predicted.len());
        let counts = segment_counts(reference, predicted, self.threshold_deg);
        self.segments.extend(&counts.segments);
        // per-class segment series for the breakdown
        for c in 0..N_CLASSES {
            let only = |fe: &FrameEvents| {
                let mut out = FrameEvents::new(n_frames);
                for (f, evs) in fe.frames.iter().enumerate() {
                    out.frames[f] = evs.iter().filter(|e| e.class_idx == c).copied().collect();
                }
                out
            };
            let cc = segment_counts(&only(reference), &only(predicted), self.threshold_deg);
            self.class_segments[c].extend(cc.segments);
        }
        for (acc, s) in self
            .loc
            .iter_mut()
            .zip(localization_stats(reference, predicted))
        {
            acc.merge(&s);
        }
    }

    pub fn report(&self) -> Result<MetricReport> {
        let er = error_rate(&self.segments)?;
        let f = f_score(&self.segments);
        let mut all = LocalizationStats::default();
        for s in &self.loc {
            all.merge(s);
        }
        let (le, le_defined) = all.localization_error();
        let lr = all.localization_recall();
        let (sed, doa, seld) = composite_errors(er, f, le, lr);
        let per_class = (0..N_CLASSES)
            .map(|c| ClassReport {
                class: CLASS_NAMES[c].to_string(),
                er20: error_rate(&self.class_segments[c]).ok(),
                f20: f_score(&self.class_segments[c]),
                le_cd: self.loc[c].localization_error().0,
                lr_cd: self.loc[c].localization_recall(),
            })
            .collect();
        Ok(MetricReport {
            er20: er,
            f20: f,
            le_cd: le,
            lr_cd: lr,
            sed_error: sed,
            doa_error: doa,
            seld_error: seld,
            le_defined,
            per_class,
        })
    }
}

pub fn evaluate(reference: &FrameEvents, predicted: &FrameEvents) -> Result<MetricReport> {
    let mut e = Evaluator::default();
    e.add(reference, predicted);
    e.report()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dir(az: f64, el: f64) -> [f64; 3] {
        Direction::new(az, el).unit_vector()
    }

    fn scene(entries: &[(usize, usize, f64)]) -> FrameEvents {
        let mut fe = FrameEvents::default();
        for &(f, c, az) in entries {
            fe.push(f, c, dir(az, 0.0)).unwrap();
        }
        fe
    }

    #[test]
    fn angular_examples() {
        assert_eq!(angular_error(dir(0.0, 0.0), dir(0.0, 0.0)), 0.0);
        assert_eq!(angular_error([0.0, 1.0, 0.0], [0.0, -1.0, 0.0]), 180.0);
        assert!((angular_error(dir(0.0, 0.0), dir(30.0, 0.0)) - 30.0).abs() < 1e-9);
    }

    #[test]
    fn perfect_prediction() {
        let r = scene(&[(0, 1, 30.0), (5, 2, -60.0), (15, 1, 90.0)]);
        let rep = evaluate(&r, &r).unwrap();
        assert_eq!(
            (rep.er20, rep.f20, rep.le_cd, rep.lr_cd),
            (0.0, 1.0, 0.0, 1.0)
        );
        assert_eq!(
            (rep.sed_error, rep.doa_error, rep.seld_error),
            (0.0, 0.0, 0.0)
        );
        let c = segment_counts(&r, &r, 20.0);
        assert!(c.segments.iter().all(|s| s.fp == 0 && s.fn_ == 0));
    }

    #[test]
    fn over_threshold_is_fp_and_fn() {
        let r = scene(&[(3, 4, 0.0)]);
        let p = scene(&[(3, 4, 30.0)]);
        let c = segment_counts(&r, &p, 20.0);
        assert_eq!(
            c.segments[0],
            SegmentCounts {
                tp: 0,
                fp: 1,
                fn_: 1,
                n: 1
            }
        );
    }

    #[test]
    fn single_active_frame_marks_segment() {
        let r = scene(&[(7, 0, 0.0)]);
        let c = segment_counts(&r, &FrameEvents::new(10), 20.0);
        assert_eq!(
            c.segments,
            vec![SegmentCounts {
                tp: 0,
                fp: 0,
                fn_: 1,
                n: 1
            }]
        );
    }

    #[test]
    fn insertion_example() {
        let s = [SegmentCounts {
            tp: 1,
            fp: 1,
            fn_: 0,
            n: 1,
        }];
        assert!((f_score(&s) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(error_rate(&s).unwrap(), 1.0);
        assert!(error_rate(&[SegmentCounts::default()]).is_err());
    }

    #[test]
    fn rotated_estimates_and_half_recall() {
        let r = scene(&[(0, 0, 0.0), (1, 0, 10.0), (2, 1, 50.0), (3, 1, -40.0)]);
        let p = scene(&[(0, 0, 20.0), (1, 0, -10.0), (2, 1, 70.0), (3, 1, -20.0)]);
        let st = localization_stats(&r, &p);
        let mut all = LocalizationStats::default();
        st.iter().for_each(|s| all.merge(s));
        assert!((all.localization_error().0 - 20.0).abs() < 1e-9);
        assert_eq!(all.localization_recall(), 1.0);

        let half = scene(&[(0, 0, 0.0), (2, 1, 50.0)]);
        let st = localization_stats(&r, &half);
        let mut all = LocalizationStats::default();
        st.iter().for_each(|s| all.merge(s));
        assert_eq!(all.localization_recall(), 0.5);
    }

    #[test]
    fn no_pairs_reports_worst_le() {
        let r = scene(&[(0, 0, 0.0)]);
        let rep = evaluate(&r, &FrameEvents::default()).unwrap();
        assert_eq!(rep.le_cd, 180.0);
        assert!(!rep.le_defined);
    }

    #[test]
    fn composite_examples() {
        assert_eq!(composite_errors(0.0, 1.0, 0.0, 1.0), (0.0, 0.0, 0.0));
        let (a, b, c) = composite_errors(0.2, 0.8, 18.0, 0.9);
        assert!((a - 0.2).abs() < 1e-12 && (b - 0.1).abs() < 1e-12 && (c - 0.15).abs() < 1e-12);
        assert_eq!(composite_errors(1.0, 0.0, 180.0, 0.0), (1.0, 1.0, 1.0));
    }

    #[test]
    fn greedy_prefers_closest() {
        let r = [dir(0.0, 0.0), dir(90.0, 0.0)];
        let p = [dir(85.0, 0.0), dir(5.0, 0.0)];
        let mut e = greedy_match(&r, &p);
        e.sort_by(f64::total_cmp);
        assert!((e[0] - 5.0).abs() < 1e-9 && (e[1] - 5.0).abs() < 1e-9);
    }

    fn unit(v: (f64, f64, f64)) -> [f64; 3] {
        normalize([v.0, v.1, v.2])
    }

    fn vec3() -> impl Strategy<Value = [f64; 3]> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter("nonzero", |(x, y, z)| x * x + y * y + z * z > 1e-6)
            .prop_map(unit)
    }

    proptest! {
        #[test]
        fn angular_symmetric_and_triangle(a in vec3(), b in vec3(), c in vec3()) {
            prop_assert_eq!(angular_error(a, b), angular_error(b, a));
            prop_assert!(angular_error(a, c) <= angular_error(a, b) + angular_error(b, c) + 1e-9);
            let e = angular_error(a, b);
            prop_assert!((0.0..=180.0).contains(&e));
        }

        #[test]
        fn decomposition_identity(tp in 0usize..5, fp in 0usize..5, fn_ in 0usize..5) {
            let s = SegmentCounts { tp, fp, fn_, n: tp + fn_ };
            prop_assert_eq!(s.substitutions() + s.deletions() + s.insertions(), fp.max(fn_));
        }

        #[test]
        fn composites_monotone(er in 0.0f64..2.0, f in 0.0f64..1.0, le in 0.0f64..180.0, lr in 0.0f64..1.0, d in 0.0f64..0.5) {
            let base = composite_errors(er, f, le, lr);
            let worse = [
                composite_errors(er + d, f, le, lr),
                composite_errors(er, (f - d).max(0.0), le, lr),
                composite_errors(er, f, (le + 100.0 * d).min(180.0), lr),
                composite_errors(er, f, le, (lr - d).max(0.0)),
            ];
            for w in worse {
                prop_assert!(w.0 >= base.0 && w.1 >= base.1 && w.2 >= base.2);
            }
        }
    }
}
