//! Detection of significant PSA drops.
//!
//! A curative treatment (surgery or radiotherapy) collapses PSA from a
//! peak to a nadir within months. The scan below walks a patient's PSA
//! series once, tracking the most recent peak, and reports a significant
//! drop when a later value falls far enough below that peak — judged both
//! as a fraction of the peak and as an absolute difference, so that small
//! fluctuations on low absolute levels never qualify. A peak goes stale
//! after roughly a year without a qualifying drop and is then abandoned.

use crate::config::RuleConfig;
use crate::error::{Error, Result};
use crate::timeline::{elapsed_days, PsaMeasurement};
use chrono::NaiveDate;

/// One detected peak-to-nadir PSA collapse.
#[derive(Debug, Clone, PartialEq)]
pub struct SignificantDrop {
    /// Date of the peak measurement the drop started from.
    pub drop_date: NaiveDate,
    /// Date of the lowest value the drop reached.
    pub nadir_date: NaiveDate,
    /// Lowest PSA value reached, ng/mL.
    pub psa_min: f64,
}

/// Decide whether a fall from `peak_value` to `candidate_value` is a
/// significant drop.
///
/// With `beta = peak - candidate` (absolute fall, ng/mL) and
/// `alpha = beta / peak` (relative fall), the drop is significant when it
/// is either steep (`alpha >= 0.75` and `beta >= 3`) or somewhat shallower
/// but larger in absolute terms (`alpha >= 0.5` and `beta >= 4`), under
/// the default thresholds in [`RuleConfig`].
///
/// Errors with [`Error::ZeroPeak`] when `peak_value` is zero, since the
/// relative fall is undefined there.
pub fn is_significant_drop(
    peak_value: f64,
    candidate_value: f64,
    cfg: &RuleConfig,
) -> Result<bool> {
    if peak_value == 0.0 {
        return Err(Error::ZeroPeak);
    }
    let beta = peak_value - candidate_value;
    let alpha = beta / peak_value;
    Ok((alpha >= cfg.sig_alpha_high && beta >= cfg.sig_beta_high)
        || (alpha >= cfg.sig_alpha_low && beta >= cfg.sig_beta_low))
}

/// Outcome of one scan pass over a slice: indices are relative to the
/// scanned slice.
struct ScanHit {
    nadir_idx: usize,
    drop: SignificantDrop,
}

/// Walk `psa` once and return the first significant drop, if any.
///
/// The scan keeps the index of the current peak. For each adjacent pair
/// (current, candidate):
///
/// - candidate >= current (no fall): the peak moves to the candidate when
///   the candidate exceeds the peak value or the peak is older than the
///   drop window.
/// - candidate < current (fall): the fall from the peak is tested with
///   [`is_significant_drop`]. On success the drop is anchored at the peak
///   date and the nadir is extended forward through every subsequent
///   non-increasing value within the drop window of the triggering
///   measurement, taking the lowest value reached. On failure the peak is
///   abandoned to the candidate when it is older than the drop window, or
///   when the measurement after the candidate already lies beyond the
///   window — a stale peak can never anchor a drop anymore.
fn scan(psa: &[PsaMeasurement], cfg: &RuleConfig) -> Result<Option<ScanHit>> {
    for pair in psa.windows(2) {
        if pair[1].date < pair[0].date {
            let index = psa
                .windows(2)
                .position(|w| w[1].date < w[0].date)
                .expect("decreasing pair exists");
            return Err(Error::UnsortedSeries { index: index + 1 });
        }
    }
    if psa.len() < 2 {
        return Ok(None);
    }

    let mut peak_idx = 0usize;
    for j in 0..psa.len() - 1 {
        let current = &psa[j];
        let candidate = &psa[j + 1];
        let peak_age = elapsed_days(psa[peak_idx].date, candidate.date);

        if candidate.value >= current.value {
            if candidate.value > psa[peak_idx].value || peak_age > cfg.drop_window_days {
                peak_idx = j + 1;
            }
            continue;
        }

        if is_significant_drop(psa[peak_idx].value, candidate.value, cfg)? {
            // Extend the nadir: follow the non-increasing tail within the
            // drop window of the measurement that triggered detection.
            let trigger = j + 1;
            let mut end = trigger;
            let mut min_idx = trigger;
            while end + 1 < psa.len()
                && psa[end + 1].value <= psa[end].value
                && elapsed_days(psa[trigger].date, psa[end + 1].date) <= cfg.drop_window_days
            {
                end += 1;
                if psa[end].value < psa[min_idx].value {
                    min_idx = end;
                }
            }
            return Ok(Some(ScanHit {
                nadir_idx: min_idx,
                drop: SignificantDrop {
                    drop_date: psa[peak_idx].date,
                    nadir_date: psa[min_idx].date,
                    psa_min: psa[min_idx].value,
                },
            }));
        }

        // Abandon a stale peak: it already sits outside the drop window,
        // or the measurement after next would put it outside.
        if peak_age > cfg.drop_window_days
            || (j + 2 < psa.len()
                && elapsed_days(psa[peak_idx].date, psa[j + 2].date) > cfg.drop_window_days)
        {
            peak_idx = j + 1;
        }
    }
    Ok(None)
}

/// First significant drop in a date-sorted PSA series, or `None` when the
/// series has fewer than two points or no drop qualifies.
///
/// Errors with [`Error::UnsortedSeries`] if dates decrease anywhere.
pub fn detect_significant_drop(
    psa: &[PsaMeasurement],
    cfg: &RuleConfig,
) -> Result<Option<SignificantDrop>> {
    Ok(scan(psa, cfg)?.map(|hit| hit.drop))
}

/// Every significant drop in the series, in chronological order.
///
/// After each drop the scan restarts at the measurement following its
/// nadir, with the peak re-initialized there, so the reported
/// `[drop_date, nadir_date]` intervals never overlap.
pub fn detect_all_drops(psa: &[PsaMeasurement], cfg: &RuleConfig) -> Result<Vec<SignificantDrop>> {
    let mut drops = Vec::new();
    let mut offset = 0usize;
    while offset < psa.len() {
        match scan(&psa[offset..], cfg)? {
            Some(hit) => {
                offset += hit.nadir_idx + 1;
                drops.push(hit.drop);
            }
            None => break,
        }
    }
    Ok(drops)
}
