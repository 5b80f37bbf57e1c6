//! Consolidated biochemical-recurrence (BCR) status per patient.
//!
//! The four relapse rules in [`crate::relapse`] each yield at most one
//! date. A patient's BCR date is the earliest of them; the rule that
//! produced it is reported as the event's source so downstream analysis
//! can distinguish PSA-evidenced from treatment-evidenced relapse.

use crate::config::RuleConfig;
use crate::relapse::{
    clinical_relapse_after_rp, clinical_relapse_after_rt, psa_relapse_after_rp,
    psa_relapse_after_rt,
};
use crate::timeline::{elapsed_days, PatientTimeline, TxSelector};
use chrono::NaiveDate;
use rayon::prelude::*;

/// Which relapse rule produced a BCR date.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BcrSource {
    /// PSA threshold crossing after prostatectomy.
    Prp,
    /// Secondary-treatment evidence after prostatectomy.
    Crp,
    /// PSA rise above nadir after radiotherapy.
    Prt,
    /// Secondary-treatment evidence after radiotherapy.
    Crt,
}

impl BcrSource {
    pub const ALL: [BcrSource; 4] = [
        BcrSource::Prp,
        BcrSource::Crp,
        BcrSource::Prt,
        BcrSource::Crt,
    ];
}

/// One consolidated recurrence finding.
#[derive(Debug, Clone, PartialEq)]
pub struct BcrEvent {
    pub patient_id: String,
    pub bcr_date: NaiveDate,
    pub source: BcrSource,
    /// Days from the earliest curative treatment to the BCR date; always
    /// positive, since every rule fires strictly after its treatment.
    pub time_to_relapse_days: i64,
}

/// Settings for BCR detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BcrOptions {
    /// Count imputed treatment events as treatments (both as the curative
    /// anchor and as secondary-treatment evidence). On by default.
    pub include_imputed: bool,
    /// Use only the PSA-evidence rules, ignoring secondary-treatment
    /// evidence. Off by default.
    pub psa_only: bool,
}

impl Default for BcrOptions {
    fn default() -> Self {
        BcrOptions {
            include_imputed: true,
            psa_only: false,
        }
    }
}

/// Dates produced by each individual relapse rule for one patient; the
/// raw material [`detect_bcr`] consolidates. Useful to explain a finding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BcrCandidates {
    pub psa_after_rp: Option<NaiveDate>,
    pub clinical_after_rp: Option<NaiveDate>,
    pub psa_after_rt: Option<NaiveDate>,
    pub clinical_after_rt: Option<NaiveDate>,
}

impl BcrCandidates {
    /// Candidates as (source, date) pairs, in source tie-break order.
    pub fn by_source(&self) -> [(BcrSource, Option<NaiveDate>); 4] {
        [
            (BcrSource::Prp, self.psa_after_rp),
            (BcrSource::Crp, self.clinical_after_rp),
            (BcrSource::Prt, self.psa_after_rt),
            (BcrSource::Crt, self.clinical_after_rt),
        ]
    }
}

/// Run all four relapse rules. The `psa_only` option blanks the
/// treatment-evidence rules; `include_imputed` is applied by the caller
/// (see [`detect_bcr`]).
pub fn bcr_candidates(t: &PatientTimeline, opts: BcrOptions, cfg: &RuleConfig) -> BcrCandidates {
    BcrCandidates {
        psa_after_rp: psa_relapse_after_rp(t, cfg),
        clinical_after_rp: if opts.psa_only {
            None
        } else {
            clinical_relapse_after_rp(t, cfg)
        },
        psa_after_rt: psa_relapse_after_rt(t, cfg),
        clinical_after_rt: if opts.psa_only {
            None
        } else {
            clinical_relapse_after_rt(t, cfg)
        },
    }
}

/// Consolidated BCR for one patient: the earliest date any rule yields.
///
/// Only patients with at least one curative treatment are eligible —
/// recurrence is undefined without one — so `None` means either "not
/// eligible" or "no relapse evidence". When two rules yield the same
/// earliest date, the source is chosen in the fixed order PRP, CRP, PRT,
/// CRT (PSA evidence before treatment evidence, surgery before
/// radiotherapy).
pub fn detect_bcr(t: &PatientTimeline, opts: BcrOptions, cfg: &RuleConfig) -> Option<BcrEvent> {
    let stripped;
    let t = if opts.include_imputed {
        t
    } else {
        stripped = t.without_imputed();
        &stripped
    };

    let first_curative = match (t.first_date(TxSelector::Rp), t.first_date(TxSelector::Rt)) {
        (Some(rp), Some(rt)) => rp.min(rt),
        (Some(rp), None) => rp,
        (None, Some(rt)) => rt,
        (None, None) => return None,
    };

    let mut best: Option<(NaiveDate, BcrSource)> = None;
    for (source, date) in bcr_candidates(t, opts, cfg).by_source() {
        if let Some(date) = date {
            if best.is_none_or(|(b, _)| date < b) {
                best = Some((date, source));
            }
        }
    }
    best.map(|(bcr_date, source)| BcrEvent {
        patient_id: t.patient_id.clone(),
        bcr_date,
        source,
        time_to_relapse_days: elapsed_days(first_curative, bcr_date),
    })
}

/// BCR detection over a whole cohort, in the cohort's patient order.
/// Patients without any curative treatment are skipped. Per-patient work
/// is independent and runs in parallel with output identical to a
/// sequential pass.
pub fn detect_bcr_cohort(
    cohort: &[PatientTimeline],
    opts: BcrOptions,
    cfg: &RuleConfig,
) -> Vec<BcrEvent> {
    cohort
        .par_iter()
        .filter_map(|t| detect_bcr(t, opts, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeline::{
        build_timeline, Assay, Provenance, PsaMeasurement, TreatmentEvent, TxKind,
    };
    use chrono::Days;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn psa_row(id: &str, date: NaiveDate, value: f64) -> PsaMeasurement {
        PsaMeasurement {
            patient_id: id.to_string(),
            date,
            value,
            assay: Assay::Standard,
        }
    }

    fn tx_row(id: &str, date: NaiveDate, kind: TxKind) -> TreatmentEvent {
        TreatmentEvent {
            patient_id: id.to_string(),
            date,
            kind,
            provenance: Provenance::Recorded,
        }
    }

    fn patient(
        id: &str,
        psa: Vec<PsaMeasurement>,
        treatments: Vec<TreatmentEvent>,
    ) -> PatientTimeline {
        build_timeline(id, psa, treatments, None, None)
            .unwrap()
            .timeline
    }

    #[test]
    fn earliest_rule_wins() {
        let cfg = RuleConfig::default();
        let rp = d(2015, 1, 1);
        // PSA crosses the threshold at day 400; salvage RT arrives day 500
        let t = patient(
            "p1",
            vec![
                psa_row("p1", rp + Days::new(90), 0.05),
                psa_row("p1", rp + Days::new(400), 0.6),
            ],
            vec![
                tx_row("p1", rp, TxKind::Rp),
                tx_row("p1", rp + Days::new(500), TxKind::Rt),
            ],
        );
        let event = detect_bcr(&t, BcrOptions::default(), &cfg).unwrap();
        assert_eq!(event.bcr_date, rp + Days::new(400));
        assert_eq!(event.source, BcrSource::Prp);
        assert_eq!(event.time_to_relapse_days, 400);
    }

    #[test]
    fn tie_breaks_follow_source_order() {
        let cfg = RuleConfig::default();
        let rt = d(2015, 1, 1);
        let relapse = rt + Days::new(400);
        // PSA rise and a second RT land on the same day
        let t = patient(
            "p1",
            vec![
                psa_row("p1", rt + Days::new(90), 1.0),
                psa_row("p1", relapse, 3.5),
            ],
            vec![
                tx_row("p1", rt, TxKind::Rt),
                tx_row("p1", relapse, TxKind::Rt),
            ],
        );
        let event = detect_bcr(&t, BcrOptions::default(), &cfg).unwrap();
        assert_eq!(event.bcr_date, relapse);
        assert_eq!(
            event.source,
            BcrSource::Prt,
            "PSA evidence outranks treatment evidence on ties"
        );
    }

    #[test]
    fn patient_without_curative_treatment_is_ineligible() {
        let cfg = RuleConfig::default();
        let t = patient(
            "p1",
            vec![psa_row("p1", d(2015, 1, 1), 25.0)],
            vec![tx_row("p1", d(2015, 2, 1), TxKind::Ht)],
        );
        assert_eq!(detect_bcr(&t, BcrOptions::default(), &cfg), None);
    }

    #[test]
    fn no_evidence_means_no_event() {
        let cfg = RuleConfig::default();
        let t = patient(
            "p1",
            vec![psa_row("p1", d(2015, 6, 1), 0.05)],
            vec![tx_row("p1", d(2015, 1, 1), TxKind::Rp)],
        );
        assert_eq!(detect_bcr(&t, BcrOptions::default(), &cfg), None);
    }

    #[test]
    fn psa_only_ignores_treatment_evidence() {
        let cfg = RuleConfig::default();
        let rp = d(2015, 1, 1);
        let t = patient(
            "p1",
            vec![psa_row("p1", rp + Days::new(90), 0.05)],
            vec![
                tx_row("p1", rp, TxKind::Rp),
                tx_row("p1", rp + Days::new(600), TxKind::Rt),
            ],
        );
        let full = detect_bcr(&t, BcrOptions::default(), &cfg).unwrap();
        assert_eq!(full.source, BcrSource::Crp);
        let psa_only = detect_bcr(
            &t,
            BcrOptions {
                psa_only: true,
                ..BcrOptions::default()
            },
            &cfg,
        );
        assert_eq!(psa_only, None);
    }

    #[test]
    fn imputed_treatments_can_be_excluded() {
        let cfg = RuleConfig::default();
        let rp = d(2015, 1, 1);
        let mut t = patient(
            "p1",
            vec![
                psa_row("p1", rp + Days::new(90), 0.05),
                psa_row("p1", rp + Days::new(400), 0.6),
            ],
            vec![],
        );
        t.treatments.push(TreatmentEvent {
            patient_id: "p1".into(),
            date: rp,
            kind: TxKind::Rp,
            provenance: Provenance::Imputed,
        });
        let with_imputed = detect_bcr(&t, BcrOptions::default(), &cfg).unwrap();
        assert_eq!(with_imputed.bcr_date, rp + Days::new(400));
        let without = detect_bcr(
            &t,
            BcrOptions {
                include_imputed: false,
                ..BcrOptions::default()
            },
            &cfg,
        );
        assert_eq!(
            without, None,
            "no curative anchor once imputed events are excluded"
        );
    }

    #[test]
    fn anchor_is_the_earliest_curative_treatment() {
        let cfg = RuleConfig::default();
        let rt = d(2014, 1, 1);
        let rp = d(2016, 1, 1);
        // RT first, salvage RP later, then PSA above threshold after RP
        let t = patient(
            "p1",
            vec![
                psa_row("p1", rt + Days::new(90), 1.0),
                psa_row("p1", rp + Days::new(200), 0.9),
            ],
            vec![tx_row("p1", rt, TxKind::Rt), tx_row("p1", rp, TxKind::Rp)],
        );
        let event = detect_bcr(&t, BcrOptions::default(), &cfg).unwrap();
        // the salvage RP itself is treatment evidence after RT
        assert_eq!(event.source, BcrSource::Crt);
        assert_eq!(event.bcr_date, rp);
        assert_eq!(
            event.time_to_relapse_days,
            crate::timeline::elapsed_days(rt, rp)
        );
        assert!(event.time_to_relapse_days > 0);
    }

    #[test]
    fn cohort_keeps_patient_order_and_skips_ineligible() {
        let cfg = RuleConfig::default();
        let rp = d(2015, 1, 1);
        let relapsing = patient(
            "p1",
            vec![psa_row("p1", rp + Days::new(200), 0.9)],
            vec![tx_row("p1", rp, TxKind::Rp)],
        );
        let untreated = patient("p2", vec![psa_row("p2", rp, 30.0)], vec![]);
        let quiet = patient(
            "p3",
            vec![psa_row("p3", rp + Days::new(200), 0.02)],
            vec![tx_row("p3", rp, TxKind::Rp)],
        );
        let events = detect_bcr_cohort(&[relapsing, untreated, quiet], BcrOptions::default(), &cfg);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].patient_id, "p1");
    }
}
