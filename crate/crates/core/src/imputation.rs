//! Imputation of missing curative treatments from significant PSA drops.
//!
//! A significant PSA collapse almost always marks a curative treatment.
//! How deep it goes separates the two modalities: prostatectomy removes
//! the PSA-producing tissue, so PSA becomes undetectable, while after
//! radiotherapy it settles on a low but measurable plateau. Where the
//! treatment record is silent across the drop interval, the detector
//! emits an imputed event at the drop date.

use crate::config::RuleConfig;
use crate::drops::{detect_all_drops, detect_significant_drop, SignificantDrop};
use crate::error::{Error, Result};
use crate::timeline::{PatientTimeline, Provenance, PsaMeasurement, TreatmentEvent, TxKind};
use chrono::NaiveDate;
use rayon::prelude::*;
use std::collections::BTreeMap;

/// The two curative treatment modalities a drop can be attributed to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CurativeKind {
    Rp,
    Rt,
}

impl CurativeKind {
    pub fn to_tx_kind(self) -> TxKind {
        match self {
            CurativeKind::Rp => TxKind::Rp,
            CurativeKind::Rt => TxKind::Rt,
        }
    }
}

/// One treatment event reconstructed from a PSA drop.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectedTreatment {
    pub patient_id: String,
    pub kind: CurativeKind,
    /// Date of the drop's peak measurement — the last value before the
    /// collapse, used as the treatment date.
    pub date: NaiveDate,
    pub nadir_date: NaiveDate,
    pub psa_min: f64,
}

/// Attribute a drop to a modality from its lowest PSA value: strictly
/// below the undetectable cutoff (0.1 ng/mL by default) means
/// prostatectomy, anything at or above it means radiotherapy.
pub fn classify_drop(psa_min: f64, cfg: &RuleConfig) -> CurativeKind {
    if psa_min < cfg.rp_nadir_max {
        CurativeKind::Rp
    } else {
        CurativeKind::Rt
    }
}

/// Whether any *recorded* curative treatment (RP/RT) falls inside the
/// inclusive window `[start, end]`. Hormonal therapy, chemotherapy and
/// previously imputed events never match.
///
/// Errors with [`Error::InvalidWindow`] when `start > end`.
pub fn curative_treatment_in_window(
    t: &PatientTimeline,
    start: NaiveDate,
    end: NaiveDate,
) -> Result<bool> {
    if start > end {
        return Err(Error::InvalidWindow { start, end });
    }
    Ok(t.treatments.iter().any(|e| {
        e.provenance == Provenance::Recorded
            && e.kind.is_curative()
            && e.date >= start
            && e.date <= end
    }))
}

/// Whether detection fills gaps or reports every drop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectMode {
    /// Emit a detection only when no recorded curative treatment already
    /// falls inside the drop interval — the record-repair setting.
    Impute,
    /// Emit every significant drop regardless of existing records, so
    /// detections can be scored against them.
    Evaluate,
}

/// Whether to stop at the first drop per patient or report all of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DropMode {
    First,
    All,
}

/// Settings for [`detect_missing_treatments`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectOptions {
    pub mode: DetectMode,
    pub drops: DropMode,
}

impl Default for DetectOptions {
    fn default() -> Self {
        DetectOptions {
            mode: DetectMode::Impute,
            drops: DropMode::First,
        }
    }
}

fn detect_for_patient(
    t: &PatientTimeline,
    opts: DetectOptions,
    cfg: &RuleConfig,
) -> Result<Vec<DetectedTreatment>> {
    // Only PSA from the diagnosis onward is attributable to treatment of
    // this cancer; earlier screening values are ignored when the
    // diagnosis date is known.
    let series: &[PsaMeasurement] = match t.diagnosis_date {
        Some(dx) => {
            let start = t.psa.partition_point(|m| m.date < dx);
            &t.psa[start..]
        }
        None => &t.psa,
    };

    let found: Vec<SignificantDrop> = match opts.drops {
        DropMode::First => detect_significant_drop(series, cfg)?.into_iter().collect(),
        DropMode::All => detect_all_drops(series, cfg)?,
    };

    let mut detections = Vec::new();
    for drop in found {
        if opts.mode == DetectMode::Impute
            && curative_treatment_in_window(t, drop.drop_date, drop.nadir_date)?
        {
            continue;
        }
        detections.push(DetectedTreatment {
            patient_id: t.patient_id.clone(),
            kind: classify_drop(drop.psa_min, cfg),
            date: drop.drop_date,
            nadir_date: drop.nadir_date,
            psa_min: drop.psa_min,
        });
    }
    Ok(detections)
}

/// Run drop detection over a cohort and return the detected treatments,
/// ordered by the cohort's patient order. Patients are independent, so
/// they are processed in parallel; the output is identical to a
/// sequential pass.
pub fn detect_missing_treatments(
    cohort: &[PatientTimeline],
    opts: DetectOptions,
    cfg: &RuleConfig,
) -> Result<Vec<DetectedTreatment>> {
    let per_patient: Vec<Vec<DetectedTreatment>> = cohort
        .par_iter()
        .map(|t| detect_for_patient(t, opts, cfg))
        .collect::<Result<_>>()?;
    Ok(per_patient.into_iter().flatten().collect())
}

/// Merge detections into their timelines as imputed treatment events
/// (kind from the classification, date = drop date). Returns a new cohort;
/// timelines without detections are copied unchanged.
pub fn apply_detections(
    cohort: &[PatientTimeline],
    detections: &[DetectedTreatment],
) -> Vec<PatientTimeline> {
    let mut by_patient: BTreeMap<&str, Vec<&DetectedTreatment>> = BTreeMap::new();
    for det in detections {
        by_patient
            .entry(det.patient_id.as_str())
            .or_default()
            .push(det);
    }
    cohort
        .iter()
        .map(|t| {
            let mut t = t.clone();
            if let Some(dets) = by_patient.get(t.patient_id.as_str()) {
                for det in dets {
                    t.treatments.push(TreatmentEvent {
                        patient_id: t.patient_id.clone(),
                        date: det.date,
                        kind: det.kind.to_tx_kind(),
                        provenance: Provenance::Imputed,
                    });
                }
                t.treatments.sort_by_key(|e| e.date);
            }
            t
        })
        .collect()
}
