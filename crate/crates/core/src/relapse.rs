//! Relapse date rules after curative treatment.
//!
//! Biochemical recurrence shows up in two independent ways:
//!
//! - **PSA evidence**: after prostatectomy any confirmed PSA above a small
//!   threshold (the gland is gone, so there should be none); after
//!   radiotherapy a rise of more than 2 ng/mL above the lowest value seen
//!   so far (the post-irradiation nadir).
//! - **Treatment evidence**: a salvage or systemic therapy given long
//!   enough after the curative one that it cannot be part of the primary
//!   plan — e.g. radiotherapy more than a year after surgery, or hormonal
//!   therapy half a year after radiotherapy. Gaps shorter than those are
//!   treated as adjuvant/neoadjuvant scheduling, not relapse.
//!
//! Each rule returns the relapse date it supports, or `None`. The
//! treatment-evidence rules also expose their individual clause
//! candidates so a caller can see *why* a date was chosen.

use crate::config::RuleConfig;
use crate::timeline::{elapsed_days, Assay, PatientTimeline, TxSelector};
use chrono::NaiveDate;

// ── PSA evidence ────────────────────────────────────────────────────────

/// Relapse by PSA after radical prostatectomy: the date of the first PSA
/// measurement strictly after the first RP whose value strictly exceeds
/// the assay's threshold (0.4 ng/mL standard, 0.2 ng/mL ultrasensitive by
/// default). `None` when the patient has no RP or no value qualifies.
pub fn psa_relapse_after_rp(t: &PatientTimeline, cfg: &RuleConfig) -> Option<NaiveDate> {
    let rp = t.first_date(TxSelector::Rp)?;
    t.psa
        .iter()
        .filter(|m| m.date > rp)
        .find(|m| {
            let threshold = match m.assay {
                Assay::Ultrasensitive => cfg.psa_threshold_ultrasensitive,
                Assay::Standard => cfg.psa_threshold_standard,
            };
            m.value > threshold
        })
        .map(|m| m.date)
}

/// Relapse by PSA after radiotherapy: the date of the first measurement
/// strictly after the first RT that exceeds the running nadir by strictly
/// more than 2 ng/mL (default).
///
/// The nadir starts at the post-RT series maximum and is lowered to the
/// current value *before* each comparison, so a new low can never flag
/// relapse itself.
pub fn psa_relapse_after_rt(t: &PatientTimeline, cfg: &RuleConfig) -> Option<NaiveDate> {
    let rt = t.first_date(TxSelector::Rt)?;
    let after: Vec<_> = t.psa.iter().filter(|m| m.date > rt).collect();
    let mut nadir = after
        .iter()
        .map(|m| m.value)
        .fold(f64::NEG_INFINITY, f64::max);
    for m in after {
        if nadir > m.value {
            nadir = m.value;
        }
        if m.value - nadir > cfg.nadir_increase {
            return Some(m.date);
        }
    }
    None
}

// ── Treatment evidence ──────────────────────────────────────────────────

/// Which clause produced a treatment-evidence candidate after RP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpClinicalClause {
    /// Salvage radiotherapy more than a year after surgery.
    RtAfterOneYear,
    /// Hormonal/chemo therapy stretching at least two years past surgery,
    /// alongside later radiotherapy; dated from more than a year after
    /// surgery.
    HtCtAfterTwoYears,
    /// Hormonal/chemo therapy after surgery when no radiotherapy followed.
    HtCtDirect,
}

/// Which clause produced a treatment-evidence candidate after RT.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RtClinicalClause {
    /// Salvage prostatectomy after radiotherapy.
    RpAfterRt,
    /// A second radiotherapy more than a year after the first.
    SecondRtAfterOneYear,
    /// Hormonal/chemo therapy at least half a year after radiotherapy.
    HtCtAfterSixMonths,
    /// Hormonal/chemo therapy more than three years after radiotherapy.
    /// Every date this clause yields is already yielded by
    /// [`RtClinicalClause::HtCtAfterSixMonths`]; it is kept because the
    /// rule set defines it.
    HtCtAfterThreeYears,
}

/// All treatment-evidence candidates after radical prostatectomy, tagged
/// by clause. Empty when the patient has no RP or nothing qualifies.
///
/// With radiotherapy following surgery, a gap above one year marks the
/// earliest such RT as salvage; hormonal/chemo therapy reaching two years
/// past surgery adds its earliest administration more than a year out.
/// Without later radiotherapy, any hormonal/chemo therapy after surgery
/// counts directly.
pub fn rp_clinical_candidates(
    t: &PatientTimeline,
    cfg: &RuleConfig,
) -> Vec<(NaiveDate, RpClinicalClause)> {
    let Some(rp) = t.first_date(TxSelector::Rp) else {
        return Vec::new();
    };
    let mut candidates = Vec::new();
    let rt_after_rp = matches!(t.last_date(TxSelector::Rt), Some(last_rt) if last_rt > rp);
    if rt_after_rp {
        let last_rt = t.last_date(TxSelector::Rt).expect("checked above");
        if elapsed_days(rp, last_rt) > cfg.one_year_days {
            if let Some(date) = t.first_date_after(TxSelector::Rt, rp, cfg.one_year_days, true) {
                candidates.push((date, RpClinicalClause::RtAfterOneYear));
            }
        }
        if let Some(last_htct) = t.last_date(TxSelector::HtCt) {
            if last_htct > rp && elapsed_days(rp, last_htct) >= cfg.two_years_days {
                if let Some(date) =
                    t.first_date_after(TxSelector::HtCt, rp, cfg.one_year_days, true)
                {
                    candidates.push((date, RpClinicalClause::HtCtAfterTwoYears));
                }
            }
        }
    } else if let Some(last_htct) = t.last_date(TxSelector::HtCt) {
        if last_htct > rp {
            if let Some(date) = t.first_date_after(TxSelector::HtCt, rp, 0, true) {
                candidates.push((date, RpClinicalClause::HtCtDirect));
            }
        }
    }
    candidates
}

/// Relapse by treatment evidence after radical prostatectomy: the
/// earliest candidate from [`rp_clinical_candidates`].
pub fn clinical_relapse_after_rp(t: &PatientTimeline, cfg: &RuleConfig) -> Option<NaiveDate> {
    rp_clinical_candidates(t, cfg)
        .into_iter()
        .map(|(date, _)| date)
        .min()
}

/// All treatment-evidence candidates after radiotherapy, tagged by
/// clause. Empty when the patient has no RT or nothing qualifies.
pub fn rt_clinical_candidates(
    t: &PatientTimeline,
    cfg: &RuleConfig,
) -> Vec<(NaiveDate, RtClinicalClause)> {
    let Some(rt) = t.first_date(TxSelector::Rt) else {
        return Vec::new();
    };
    let mut candidates = Vec::new();
    if matches!(t.last_date(TxSelector::Rp), Some(last_rp) if last_rp > rt) {
        if let Some(date) = t.first_date_after(TxSelector::Rp, rt, 0, true) {
            candidates.push((date, RtClinicalClause::RpAfterRt));
        }
    }
    if let Some(second_rt) = t.second_date(TxSelector::Rt) {
        if elapsed_days(rt, second_rt) > cfg.one_year_days {
            candidates.push((second_rt, RtClinicalClause::SecondRtAfterOneYear));
        }
    }
    if let Some(first_htct) = t.first_date(TxSelector::HtCt) {
        if elapsed_days(rt, first_htct) >= cfg.six_months_days {
            candidates.push((first_htct, RtClinicalClause::HtCtAfterSixMonths));
        }
        if elapsed_days(rt, first_htct) > cfg.three_years_days {
            candidates.push((first_htct, RtClinicalClause::HtCtAfterThreeYears));
        }
    }
    candidates
}

/// Relapse by treatment evidence after radiotherapy: the earliest
/// candidate from [`rt_clinical_candidates`].
pub fn clinical_relapse_after_rt(t: &PatientTimeline, cfg: &RuleConfig) -> Option<NaiveDate> {
    rt_clinical_candidates(t, cfg)
        .into_iter()
        .map(|(date, _)| date)
        .min()
}
