//! Scoring of detector output against recorded data and ground truth.
//!
//! Two harnesses live here. [`evaluate_detections`] scores the
//! treatment detector against the treatment records already in the
//! cohort: every detection either *matches* a recorded curative
//! treatment inside its drop-to-nadir window (splitting further into
//! agreeing/disagreeing modality) or is *newly estimated*. It reports
//! one breakdown overall and one per modality. [`evaluate_bcr`] scores
//! recurrence detection against a generated cohort's planted truth,
//! with a day tolerance for the date match.
//!
//! [`time_to_relapse_report`] bins detected recurrence events by time
//! from first curative treatment, overall and per grade group.

use crate::bcr::{detect_bcr, BcrEvent, BcrOptions, BcrSource};
use crate::config::RuleConfig;
use crate::error::{Error, Result};
use crate::imputation::{
    detect_missing_treatments, CurativeKind, DetectMode, DetectOptions, DropMode,
};
use crate::synth::{GroundTruth, PatientTruth};
use crate::timeline::{elapsed_days, PatientTimeline, Provenance, TxKind};
use std::collections::BTreeMap;

// ── Treatment-detection scoring ─────────────────────────────────────────

/// Counts for one slice (overall, RP-only or RT-only) of the
/// treatment-detection evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DetectionBreakdown {
    /// Patients with at least one recorded curative treatment of the
    /// slice's modality (any modality for the overall slice).
    pub available: usize,
    /// All detections attributed to the slice: `matched + new_estimated`.
    pub estimated: usize,
    /// Detections whose window contains a recorded curative treatment.
    pub matched: usize,
    /// Matched detections whose detected modality agrees with the record.
    pub true_class: usize,
    /// Matched detections whose detected modality disagrees with the
    /// record.
    pub false_class: usize,
    /// Detections with no recorded curative treatment in their window.
    pub new_estimated: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl DetectionBreakdown {
    /// Share of recorded-treatment patients the detector re-found.
    pub fn matched_fraction(&self) -> f64 {
        ratio(self.matched, self.available)
    }

    /// Share of matches with the correct modality.
    pub fn true_fraction(&self) -> f64 {
        ratio(self.true_class, self.matched)
    }

    /// Share of matches with the wrong modality.
    pub fn false_fraction(&self) -> f64 {
        ratio(self.false_class, self.matched)
    }

    /// Newly estimated treatments as a share of the enlarged treatment
    /// pool (recorded patients plus new detections).
    pub fn new_fraction(&self) -> f64 {
        ratio(self.new_estimated, self.available + self.new_estimated)
    }
}

/// Treatment-detection evaluation: one breakdown overall and one per
/// modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DetectionMetrics {
    pub overall: DetectionBreakdown,
    pub rp: DetectionBreakdown,
    pub rt: DetectionBreakdown,
}

/// Run the treatment detector with suppression disabled and score every
/// detection against the cohort's recorded curative treatments.
///
/// A detection *matches* when at least one recorded curative treatment
/// falls inside its drop-to-nadir window; the earliest such record
/// decides the modality slice and whether the detected modality counts
/// as agreeing (`true_class`) or disagreeing (`false_class`). Unmatched
/// detections are `new_estimated` and sliced by their detected modality.
/// `available` counts patients, so per-patient fractions are meaningful
/// with [`DropMode::First`].
pub fn evaluate_detections(
    cohort: &[PatientTimeline],
    drops: DropMode,
    cfg: &RuleConfig,
) -> Result<DetectionMetrics> {
    let detections = detect_missing_treatments(
        cohort,
        DetectOptions {
            mode: DetectMode::Evaluate,
            drops,
        },
        cfg,
    )?;

    let by_id: BTreeMap<&str, &PatientTimeline> =
        cohort.iter().map(|t| (t.patient_id.as_str(), t)).collect();

    let mut metrics = DetectionMetrics::default();
    for t in cohort {
        let has = |kind: TxKind| {
            t.treatments
                .iter()
                .any(|e| e.kind == kind && e.provenance == Provenance::Recorded)
        };
        let (has_rp, has_rt) = (has(TxKind::Rp), has(TxKind::Rt));
        if has_rp || has_rt {
            metrics.overall.available += 1;
        }
        if has_rp {
            metrics.rp.available += 1;
        }
        if has_rt {
            metrics.rt.available += 1;
        }
    }

    for d in &detections {
        let t = by_id
            .get(d.patient_id.as_str())
            .ok_or_else(|| Error::MissingTruth(d.patient_id.clone()))?;
        let recorded = t
            .treatments
            .iter()
            .filter(|e| {
                e.provenance == Provenance::Recorded
                    && e.kind.is_curative()
                    && e.date >= d.date
                    && e.date <= d.nadir_date
            })
            .min_by_key(|e| e.date);

        match recorded {
            Some(record) => {
                let slice = match record.kind {
                    TxKind::Rp => &mut metrics.rp,
                    _ => &mut metrics.rt,
                };
                let agree = d.kind.to_tx_kind() == record.kind;
                for b in [&mut metrics.overall, slice] {
                    b.matched += 1;
                    b.estimated += 1;
                    if agree {
                        b.true_class += 1;
                    } else {
                        b.false_class += 1;
                    }
                }
            }
            None => {
                let slice = match d.kind {
                    CurativeKind::Rp => &mut metrics.rp,
                    CurativeKind::Rt => &mut metrics.rt,
                };
                for b in [&mut metrics.overall, slice] {
                    b.new_estimated += 1;
                    b.estimated += 1;
                }
            }
        }
    }
    Ok(metrics)
}

// ── Recurrence scoring against ground truth ─────────────────────────────

/// Outcome of scoring recurrence detection against planted truth.
#[derive(Debug, Clone, PartialEq)]
pub struct BcrEvaluation {
    /// Patients with a detected recurrence.
    pub detected: usize,
    /// Detections per rule, in tie-break order.
    pub by_source: [(BcrSource, usize); 4],
    /// Detections within the day tolerance of a planted relapse.
    pub true_positives: usize,
    /// Detections for patients without a planted relapse, or outside the
    /// tolerance of the planted date.
    pub false_positives: usize,
    /// Planted relapses with no detection at all.
    pub misses: usize,
    /// Median absolute day error over the true positives.
    pub median_abs_error_days: Option<f64>,
}

fn median(sorted: &[f64]) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let mid = sorted.len() / 2;
    Some(if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    })
}

/// Detect recurrence for every cohort patient and score the dates
/// against the planted truth, within
/// [`RuleConfig::bcr_match_tolerance_days`]. Every cohort patient must
/// have a truth record.
pub fn evaluate_bcr(
    cohort: &[PatientTimeline],
    truth: &GroundTruth,
    options: BcrOptions,
    cfg: &RuleConfig,
) -> Result<BcrEvaluation> {
    let truth_by_id: BTreeMap<&str, &PatientTruth> = truth.by_id();
    let mut eval = BcrEvaluation {
        detected: 0,
        by_source: BcrSource::ALL.map(|s| (s, 0)),
        true_positives: 0,
        false_positives: 0,
        misses: 0,
        median_abs_error_days: None,
    };
    let mut abs_errors: Vec<f64> = Vec::new();

    for t in cohort {
        let planted = truth_by_id
            .get(t.patient_id.as_str())
            .ok_or_else(|| Error::MissingTruth(t.patient_id.clone()))?;
        let event = detect_bcr(t, options, cfg);
        if let Some(event) = &event {
            eval.detected += 1;
            for (source, count) in eval.by_source.iter_mut() {
                if *source == event.source {
                    *count += 1;
                }
            }
        }
        match (&event, &planted.relapse) {
            (Some(event), Some(relapse)) => {
                let err = elapsed_days(relapse.date, event.bcr_date).abs();
                if err <= cfg.bcr_match_tolerance_days {
                    eval.true_positives += 1;
                    abs_errors.push(err as f64);
                } else {
                    eval.false_positives += 1;
                }
            }
            (Some(_), None) => eval.false_positives += 1,
            (None, Some(_)) => eval.misses += 1,
            (None, None) => {}
        }
    }

    abs_errors.sort_by(|a, b| a.partial_cmp(b).expect("day errors are finite"));
    eval.median_abs_error_days = median(&abs_errors);
    Ok(eval)
}

// ── Time-to-relapse histogram ───────────────────────────────────────────

/// Histogram of time from first curative treatment to detected
/// recurrence, in fixed-width day buckets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeToRelapseReport {
    pub bucket_days: i64,
    /// Bucket counts over all events; bucket `i` covers
    /// `[i*bucket_days, (i+1)*bucket_days)`.
    pub overall: Vec<u64>,
    /// Per-grade-group rows (groups 1–5, padded to the overall length),
    /// present when any event's patient has a known grade group. Events
    /// of patients without a grade group count only in `overall`.
    pub by_grade: Option<Vec<(u8, Vec<u64>)>>,
}

/// Bin recurrence events by `time_to_relapse_days`. Grade groups are
/// looked up in `cohort`; events for patients absent from it (or without
/// a grade group) count only in the overall row.
pub fn time_to_relapse_report(
    events: &[BcrEvent],
    cohort: &[PatientTimeline],
    bucket_days: i64,
) -> Result<TimeToRelapseReport> {
    if bucket_days < 1 {
        return Err(Error::InvalidConfig(format!(
            "bucket width must be at least 1 day, got {bucket_days}"
        )));
    }
    let grade_by_id: BTreeMap<&str, Option<u8>> = cohort
        .iter()
        .map(|t| (t.patient_id.as_str(), t.grade_group))
        .collect();

    let mut overall: Vec<u64> = Vec::new();
    let mut by_grade: [Vec<u64>; 5] = Default::default();
    let mut any_grade = false;
    for event in events {
        let bucket = (event.time_to_relapse_days / bucket_days) as usize;
        if overall.len() <= bucket {
            overall.resize(bucket + 1, 0);
        }
        overall[bucket] += 1;
        if let Some(Some(gg)) = grade_by_id.get(event.patient_id.as_str()) {
            any_grade = true;
            let row = &mut by_grade[(*gg as usize) - 1];
            if row.len() <= bucket {
                row.resize(bucket + 1, 0);
            }
            row[bucket] += 1;
        }
    }

    let by_grade = any_grade.then(|| {
        by_grade
            .into_iter()
            .enumerate()
            .map(|(i, mut row)| {
                row.resize(overall.len(), 0);
                (i as u8 + 1, row)
            })
            .collect()
    });
    Ok(TimeToRelapseReport {
        bucket_days,
        overall,
        by_grade,
    })
}
