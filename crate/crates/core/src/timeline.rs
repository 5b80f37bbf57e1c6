//! Per-patient event model: PSA measurements, treatment events and the
//! calendar-day arithmetic and treatment-date queries every detection rule
//! is built on.

use crate::error::{Error, Result};
use chrono::NaiveDate;
use std::collections::HashSet;

// ── Core types ──────────────────────────────────────────────────────────

/// Laboratory assay used for a PSA measurement. Ultrasensitive assays
/// resolve values well below 0.1 ng/mL, which lowers the post-surgery
/// relapse threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Assay {
    Standard,
    Ultrasensitive,
}

/// Treatment modality of one treatment event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TxKind {
    /// Radical prostatectomy (curative surgery).
    Rp,
    /// Radiotherapy (curative irradiation).
    Rt,
    /// Hormonal therapy.
    Ht,
    /// Chemotherapy.
    Ct,
}

impl TxKind {
    /// True for the two curative modalities (RP/RT).
    pub fn is_curative(self) -> bool {
        matches!(self, TxKind::Rp | TxKind::Rt)
    }
}

/// Whether a treatment event came from the source record or was imputed
/// from a PSA drop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Provenance {
    Recorded,
    Imputed,
}

/// One PSA laboratory value.
#[derive(Debug, Clone, PartialEq)]
pub struct PsaMeasurement {
    pub patient_id: String,
    pub date: NaiveDate,
    /// Concentration in ng/mL; never negative.
    pub value: f64,
    pub assay: Assay,
}

/// One treatment administration.
#[derive(Debug, Clone, PartialEq)]
pub struct TreatmentEvent {
    pub patient_id: String,
    pub date: NaiveDate,
    pub kind: TxKind,
    pub provenance: Provenance,
}

/// All longitudinal data for one patient, with both series sorted by date.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientTimeline {
    pub patient_id: String,
    /// PSA measurements in non-decreasing date order; same-day values keep
    /// their input order.
    pub psa: Vec<PsaMeasurement>,
    /// Treatment events in non-decreasing date order.
    pub treatments: Vec<TreatmentEvent>,
    pub diagnosis_date: Option<NaiveDate>,
    /// Histological grade group, 1..=5, when known.
    pub grade_group: Option<u8>,
}

/// Result of [`build_timeline`]: the timeline plus how many exact duplicate
/// input rows were dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct TimelineBuild {
    pub timeline: PatientTimeline,
    pub duplicates_removed: usize,
}

// ── Construction ────────────────────────────────────────────────────────

/// Assemble one patient's timeline from raw rows.
///
/// Both series are stably sorted by date, so rows sharing a date keep
/// their input order. Rows that are exact duplicates (every field equal)
/// are removed and counted. Building a second time from an already-built
/// timeline's rows reproduces it unchanged.
///
/// Errors with [`Error::MixedPatient`] if any row carries a different
/// patient id, and [`Error::NegativeValue`] on a negative PSA value.
pub fn build_timeline(
    patient_id: &str,
    psa_rows: Vec<PsaMeasurement>,
    treatment_rows: Vec<TreatmentEvent>,
    diagnosis_date: Option<NaiveDate>,
    grade_group: Option<u8>,
) -> Result<TimelineBuild> {
    let mut duplicates_removed = 0usize;

    let mut seen_psa: HashSet<(NaiveDate, u64, Assay)> = HashSet::new();
    let mut psa = Vec::with_capacity(psa_rows.len());
    for row in psa_rows {
        if row.patient_id != patient_id {
            return Err(Error::MixedPatient {
                expected: patient_id.to_string(),
                found: row.patient_id,
            });
        }
        if row.value < 0.0 || row.value.is_nan() {
            return Err(Error::NegativeValue {
                patient_id: row.patient_id,
                date: row.date,
                value: row.value,
            });
        }
        if seen_psa.insert((row.date, row.value.to_bits(), row.assay)) {
            psa.push(row);
        } else {
            duplicates_removed += 1;
        }
    }

    let mut seen_tx: HashSet<(NaiveDate, TxKind, Provenance)> = HashSet::new();
    let mut treatments = Vec::with_capacity(treatment_rows.len());
    for row in treatment_rows {
        if row.patient_id != patient_id {
            return Err(Error::MixedPatient {
                expected: patient_id.to_string(),
                found: row.patient_id,
            });
        }
        if seen_tx.insert((row.date, row.kind, row.provenance)) {
            treatments.push(row);
        } else {
            duplicates_removed += 1;
        }
    }

    psa.sort_by_key(|m| m.date);
    treatments.sort_by_key(|e| e.date);

    Ok(TimelineBuild {
        timeline: PatientTimeline {
            patient_id: patient_id.to_string(),
            psa,
            treatments,
            diagnosis_date,
            grade_group,
        },
        duplicates_removed,
    })
}

// ── Day arithmetic ──────────────────────────────────────────────────────

/// Exact number of civil days from `from` to `to` (negative when `to` is
/// earlier). `elapsed_days(a, b) == -elapsed_days(b, a)` always holds.
pub fn elapsed_days(from: NaiveDate, to: NaiveDate) -> i64 {
    to.signed_duration_since(from).num_days()
}

// ── Treatment-date queries ──────────────────────────────────────────────

/// Which treatment kinds a query matches. Hormonal therapy and
/// chemotherapy are often interchangeable in relapse rules, so they can be
/// addressed as the single union `HtCt`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxSelector {
    Rp,
    Rt,
    Ht,
    Ct,
    /// Either hormonal therapy or chemotherapy.
    HtCt,
}

impl TxSelector {
    pub fn matches(self, kind: TxKind) -> bool {
        match self {
            TxSelector::Rp => kind == TxKind::Rp,
            TxSelector::Rt => kind == TxKind::Rt,
            TxSelector::Ht => kind == TxKind::Ht,
            TxSelector::Ct => kind == TxKind::Ct,
            TxSelector::HtCt => matches!(kind, TxKind::Ht | TxKind::Ct),
        }
    }
}

impl PatientTimeline {
    fn dates_of(&self, sel: TxSelector) -> impl Iterator<Item = NaiveDate> + '_ {
        self.treatments
            .iter()
            .filter(move |e| sel.matches(e.kind))
            .map(|e| e.date)
    }

    /// Date of the earliest event of the selected kind(s).
    pub fn first_date(&self, sel: TxSelector) -> Option<NaiveDate> {
        self.dates_of(sel).next()
    }

    /// Date of the latest event of the selected kind(s).
    pub fn last_date(&self, sel: TxSelector) -> Option<NaiveDate> {
        self.dates_of(sel).last()
    }

    /// Date of the second-earliest event of the selected kind(s); present
    /// only when at least two such events exist.
    pub fn second_date(&self, sel: TxSelector) -> Option<NaiveDate> {
        self.dates_of(sel).nth(1)
    }

    /// Earliest event of the selected kind(s) further than `min_gap_days`
    /// after `anchor`: strictly further when `strict`, at least that far
    /// otherwise. Absence is an ordinary outcome, not an error.
    pub fn first_date_after(
        &self,
        sel: TxSelector,
        anchor: NaiveDate,
        min_gap_days: i64,
        strict: bool,
    ) -> Option<NaiveDate> {
        self.dates_of(sel).find(|&date| {
            let gap = elapsed_days(anchor, date);
            if strict {
                gap > min_gap_days
            } else {
                gap >= min_gap_days
            }
        })
    }

    /// Whether any event of the selected kind(s) exists.
    pub fn has(&self, sel: TxSelector) -> bool {
        self.dates_of(sel).next().is_some()
    }

    /// Copy of this timeline with imputed treatment events removed.
    pub fn without_imputed(&self) -> PatientTimeline {
        let mut t = self.clone();
        t.treatments
            .retain(|e| e.provenance == Provenance::Recorded);
        t
    }
}

/// A treatment-date question against one timeline.
#[derive(Debug, Clone, PartialEq)]
pub enum TimelineQuery {
    FirstDate(TxSelector),
    LastDate(TxSelector),
    SecondDate(TxSelector),
    FirstDateAfter {
        kind: TxSelector,
        anchor: NaiveDate,
        min_gap_days: i64,
        strict: bool,
    },
    Exists(TxSelector),
}

/// Answer of [`timeline_query`]: a (possibly absent) date or a truth value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryAnswer {
    Date(Option<NaiveDate>),
    Truth(bool),
}

/// Run one [`TimelineQuery`]. All date queries report absence through
/// `Date(None)`; nothing here is an error.
pub fn timeline_query(t: &PatientTimeline, query: &TimelineQuery) -> QueryAnswer {
    match *query {
        TimelineQuery::FirstDate(sel) => QueryAnswer::Date(t.first_date(sel)),
        TimelineQuery::LastDate(sel) => QueryAnswer::Date(t.last_date(sel)),
        TimelineQuery::SecondDate(sel) => QueryAnswer::Date(t.second_date(sel)),
        TimelineQuery::FirstDateAfter {
            kind,
            anchor,
            min_gap_days,
            strict,
        } => QueryAnswer::Date(t.first_date_after(kind, anchor, min_gap_days, strict)),
        TimelineQuery::Exists(sel) => QueryAnswer::Truth(t.has(sel)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn psa(id: &str, date: NaiveDate, value: f64) -> PsaMeasurement {
        PsaMeasurement {
            patient_id: id.to_string(),
            date,
            value,
            assay: Assay::Standard,
        }
    }

    fn tx(id: &str, date: NaiveDate, kind: TxKind) -> TreatmentEvent {
        TreatmentEvent {
            patient_id: id.to_string(),
            date,
            kind,
            provenance: Provenance::Recorded,
        }
    }

    fn timeline_with(treatments: Vec<TreatmentEvent>) -> PatientTimeline {
        build_timeline("p1", vec![], treatments, None, None)
            .unwrap()
            .timeline
    }

    // ── elapsed_days ────────────────────────────────────────────────────

    #[test]
    fn elapsed_days_common_year() {
        assert_eq!(elapsed_days(d(2015, 1, 1), d(2016, 1, 1)), 365);
    }

    #[test]
    fn elapsed_days_leap_year() {
        assert_eq!(elapsed_days(d(2016, 1, 1), d(2017, 1, 1)), 366);
        assert_eq!(elapsed_days(d(2016, 2, 28), d(2016, 3, 1)), 2);
    }

    #[test]
    fn elapsed_days_identity_and_sign() {
        assert_eq!(elapsed_days(d(2015, 6, 1), d(2015, 6, 1)), 0);
        assert_eq!(elapsed_days(d(2016, 1, 1), d(2015, 1, 1)), -365);
    }

    #[test]
    fn elapsed_days_antisymmetric_fuzz() {
        let mut rng = ChaCha8Rng::seed_from_u64(0xE1A);
        let base = d(1970, 1, 1);
        for _ in 0..10_000 {
            let a = base + chrono::Days::new(rng.random_range(0..40_000));
            let b = base + chrono::Days::new(rng.random_range(0..40_000));
            assert_eq!(elapsed_days(a, b), -elapsed_days(b, a));
        }
    }

    // ── build_timeline ──────────────────────────────────────────────────

    #[test]
    fn build_sorts_both_series() {
        let built = build_timeline(
            "p1",
            vec![psa("p1", d(2016, 3, 1), 2.0), psa("p1", d(2015, 1, 1), 5.0)],
            vec![
                tx("p1", d(2016, 1, 1), TxKind::Rt),
                tx("p1", d(2015, 6, 1), TxKind::Rp),
            ],
            Some(d(2014, 12, 1)),
            Some(3),
        )
        .unwrap();
        let t = built.timeline;
        assert_eq!(t.psa[0].date, d(2015, 1, 1));
        assert_eq!(t.psa[1].date, d(2016, 3, 1));
        assert_eq!(t.treatments[0].kind, TxKind::Rp);
        assert_eq!(t.treatments[1].kind, TxKind::Rt);
        assert_eq!(built.duplicates_removed, 0);
    }

    #[test]
    fn build_removes_exact_duplicates_and_counts_them() {
        let built = build_timeline(
            "p1",
            vec![psa("p1", d(2015, 1, 1), 5.0), psa("p1", d(2015, 1, 1), 5.0)],
            vec![],
            None,
            None,
        )
        .unwrap();
        assert_eq!(built.timeline.psa.len(), 1);
        assert_eq!(built.duplicates_removed, 1);
    }

    #[test]
    fn same_day_psa_kept_in_input_order() {
        let built = build_timeline(
            "p1",
            vec![psa("p1", d(2015, 1, 1), 5.0), psa("p1", d(2015, 1, 1), 6.0)],
            vec![],
            None,
            None,
        )
        .unwrap();
        let values: Vec<f64> = built.timeline.psa.iter().map(|m| m.value).collect();
        assert_eq!(values, vec![5.0, 6.0]);
    }

    #[test]
    fn same_day_distinct_values_survive_dedup_even_when_interleaved() {
        // duplicate of the first row arrives after a different same-day row
        let built = build_timeline(
            "p1",
            vec![
                psa("p1", d(2015, 1, 1), 5.0),
                psa("p1", d(2015, 1, 1), 6.0),
                psa("p1", d(2015, 1, 1), 5.0),
            ],
            vec![],
            None,
            None,
        )
        .unwrap();
        let values: Vec<f64> = built.timeline.psa.iter().map(|m| m.value).collect();
        assert_eq!(values, vec![5.0, 6.0]);
        assert_eq!(built.duplicates_removed, 1);
    }

    #[test]
    fn build_rejects_rows_from_other_patients() {
        let err = build_timeline(
            "p1",
            vec![psa("p2", d(2015, 1, 1), 5.0)],
            vec![],
            None,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::MixedPatient { .. }));
    }

    #[test]
    fn build_rejects_negative_psa() {
        let err = build_timeline(
            "p1",
            vec![psa("p1", d(2015, 1, 1), -0.2)],
            vec![],
            None,
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NegativeValue { .. }));
    }

    #[test]
    fn rebuilding_a_built_timeline_is_identity() {
        let built = build_timeline(
            "p1",
            vec![
                psa("p1", d(2016, 3, 1), 2.0),
                psa("p1", d(2015, 1, 1), 5.0),
                psa("p1", d(2015, 1, 1), 5.0),
            ],
            vec![tx("p1", d(2015, 6, 1), TxKind::Rp)],
            None,
            Some(2),
        )
        .unwrap();
        let again = build_timeline(
            "p1",
            built.timeline.psa.clone(),
            built.timeline.treatments.clone(),
            built.timeline.diagnosis_date,
            built.timeline.grade_group,
        )
        .unwrap();
        assert_eq!(again.timeline, built.timeline);
        assert_eq!(again.duplicates_removed, 0);
    }

    // ── queries ─────────────────────────────────────────────────────────

    #[test]
    fn first_second_last_dates() {
        let t = timeline_with(vec![
            tx("p1", d(2015, 1, 1), TxKind::Rt),
            tx("p1", d(2016, 1, 1), TxKind::Rt),
            tx("p1", d(2017, 1, 1), TxKind::Rt),
            tx("p1", d(2014, 1, 1), TxKind::Rp),
        ]);
        assert_eq!(t.first_date(TxSelector::Rt), Some(d(2015, 1, 1)));
        assert_eq!(t.second_date(TxSelector::Rt), Some(d(2016, 1, 1)));
        assert_eq!(t.last_date(TxSelector::Rt), Some(d(2017, 1, 1)));
        assert_eq!(t.first_date(TxSelector::Rp), Some(d(2014, 1, 1)));
        assert_eq!(t.second_date(TxSelector::Rp), None);
        assert_eq!(t.first_date(TxSelector::Ct), None);
    }

    #[test]
    fn absence_is_an_answer_not_an_error() {
        let t = timeline_with(vec![]);
        assert_eq!(
            timeline_query(&t, &TimelineQuery::FirstDate(TxSelector::Rp)),
            QueryAnswer::Date(None)
        );
        assert_eq!(
            timeline_query(&t, &TimelineQuery::Exists(TxSelector::HtCt)),
            QueryAnswer::Truth(false)
        );
    }

    #[test]
    fn htct_union_selector() {
        let t = timeline_with(vec![
            tx("p1", d(2016, 5, 1), TxKind::Ct),
            tx("p1", d(2015, 12, 1), TxKind::Ht),
        ]);
        assert_eq!(t.first_date(TxSelector::HtCt), Some(d(2015, 12, 1)));
        assert_eq!(t.last_date(TxSelector::HtCt), Some(d(2016, 5, 1)));
        assert!(t.has(TxSelector::HtCt));
        assert!(!t.has(TxSelector::Rp));
    }

    #[test]
    fn first_date_after_strict_gap_excludes_short_gaps() {
        // HT 183 days after the anchor is not "more than a year after"
        let t = timeline_with(vec![tx("p1", d(2015, 12, 1), TxKind::Ht)]);
        assert_eq!(elapsed_days(d(2015, 6, 1), d(2015, 12, 1)), 183);
        assert_eq!(
            t.first_date_after(TxSelector::HtCt, d(2015, 6, 1), 365, true),
            None
        );
    }

    #[test]
    fn first_date_after_boundary_strict_vs_inclusive() {
        let t = timeline_with(vec![tx("p1", d(2016, 1, 1), TxKind::Rt)]);
        let anchor = d(2015, 1, 1); // exactly 365 days before
        assert_eq!(t.first_date_after(TxSelector::Rt, anchor, 365, true), None);
        assert_eq!(
            t.first_date_after(TxSelector::Rt, anchor, 365, false),
            Some(d(2016, 1, 1))
        );
    }

    #[test]
    fn first_date_after_skips_to_the_earliest_qualifying_event() {
        let t = timeline_with(vec![
            tx("p1", d(2015, 2, 1), TxKind::Ht),
            tx("p1", d(2016, 8, 1), TxKind::Ht),
            tx("p1", d(2017, 1, 1), TxKind::Ht),
        ]);
        assert_eq!(
            t.first_date_after(TxSelector::HtCt, d(2015, 1, 1), 365, true),
            Some(d(2016, 8, 1))
        );
    }

    #[test]
    fn query_dispatch_matches_methods() {
        let t = timeline_with(vec![
            tx("p1", d(2015, 1, 1), TxKind::Rt),
            tx("p1", d(2016, 1, 1), TxKind::Rt),
        ]);
        assert_eq!(
            timeline_query(&t, &TimelineQuery::SecondDate(TxSelector::Rt)),
            QueryAnswer::Date(Some(d(2016, 1, 1)))
        );
        assert_eq!(
            timeline_query(
                &t,
                &TimelineQuery::FirstDateAfter {
                    kind: TxSelector::Rt,
                    anchor: d(2015, 1, 1),
                    min_gap_days: 0,
                    strict: true
                }
            ),
            QueryAnswer::Date(Some(d(2016, 1, 1)))
        );
    }

    #[test]
    fn without_imputed_strips_only_imputed_events() {
        let mut events = vec![tx("p1", d(2015, 1, 1), TxKind::Rp)];
        events.push(TreatmentEvent {
            patient_id: "p1".into(),
            date: d(2016, 1, 1),
            kind: TxKind::Rt,
            provenance: Provenance::Imputed,
        });
        let t = timeline_with(events);
        let stripped = t.without_imputed();
        assert_eq!(stripped.treatments.len(), 1);
        assert_eq!(stripped.treatments[0].kind, TxKind::Rp);
        assert_eq!(t.treatments.len(), 2, "original untouched");
    }

    #[test]
    fn first_second_last_ordering_fuzz() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x71AE);
        let base = d(2000, 1, 1);
        for _ in 0..500 {
            let n = rng.random_range(0..8);
            let events: Vec<TreatmentEvent> = (0..n)
                .map(|_| {
                    tx(
                        "p1",
                        base + chrono::Days::new(rng.random_range(0..5000)),
                        TxKind::Rt,
                    )
                })
                .collect();
            let t = timeline_with(events);
            let (first, second, last) = (
                t.first_date(TxSelector::Rt),
                t.second_date(TxSelector::Rt),
                t.last_date(TxSelector::Rt),
            );
            assert_eq!(first.is_some(), t.has(TxSelector::Rt));
            if let (Some(f), Some(s)) = (first, second) {
                assert!(f <= s);
            }
            if let (Some(f), Some(l)) = (first, last) {
                assert!(f <= l);
            }
            if let (Some(s), Some(l)) = (second, last) {
                assert!(s <= l);
            }
        }
    }
}
