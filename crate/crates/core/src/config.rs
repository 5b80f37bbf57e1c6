//! Tunable rule constants.
//!
//! Every duration and PSA threshold used by the detectors lives here so a
//! sensitivity analysis can vary them without touching code. The defaults
//! are the clinically motivated values the detectors were designed around.
//! A config file is a plain text file of `name=value` lines; `#` starts a
//! comment and blank lines are ignored.

use crate::error::{Error, Result};
use std::fs;
use std::path::Path;

/// All rule constants in one record.
///
/// Durations are exact calendar-day counts (months/years are fixed to the
/// day counts below rather than civil-calendar months).
#[derive(Debug, Clone, PartialEq)]
pub struct RuleConfig {
    /// Window for peak staleness and nadir extension in the drop scan
    /// ("about a year" between peak and candidate), in days.
    pub drop_window_days: i64,
    /// One-year gap used by the secondary-treatment relapse rules, in days.
    pub one_year_days: i64,
    /// Six-month gap used by the secondary-treatment relapse rules, in days.
    pub six_months_days: i64,
    /// Two-year gap used by the secondary-treatment relapse rules, in days.
    pub two_years_days: i64,
    /// Three-year gap used by the secondary-treatment relapse rules, in days.
    pub three_years_days: i64,

    /// Drop significance, steep branch: minimum drop fraction of the peak.
    pub sig_alpha_high: f64,
    /// Drop significance, steep branch: minimum absolute drop in ng/mL.
    pub sig_beta_high: f64,
    /// Drop significance, shallow branch: minimum drop fraction of the peak.
    pub sig_alpha_low: f64,
    /// Drop significance, shallow branch: minimum absolute drop in ng/mL.
    pub sig_beta_low: f64,

    /// A detected drop whose lowest PSA is strictly below this value is
    /// classified as prostatectomy (PSA becomes undetectable), otherwise as
    /// radiotherapy. In ng/mL.
    pub rp_nadir_max: f64,
    /// Post-prostatectomy relapse threshold for standard assays, ng/mL.
    pub psa_threshold_standard: f64,
    /// Post-prostatectomy relapse threshold for ultrasensitive assays, ng/mL.
    pub psa_threshold_ultrasensitive: f64,
    /// Post-radiotherapy relapse: required rise above the running nadir,
    /// ng/mL.
    pub nadir_increase: f64,

    /// Tolerance when matching detected BCR dates against ground truth,
    /// in days.
    pub bcr_match_tolerance_days: i64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            drop_window_days: 365,
            one_year_days: 365,
            six_months_days: 183,
            two_years_days: 730,
            three_years_days: 1095,
            sig_alpha_high: 0.75,
            sig_beta_high: 3.0,
            sig_alpha_low: 0.5,
            sig_beta_low: 4.0,
            rp_nadir_max: 0.1,
            psa_threshold_standard: 0.4,
            psa_threshold_ultrasensitive: 0.2,
            nadir_increase: 2.0,
            bcr_match_tolerance_days: 60,
        }
    }
}

impl RuleConfig {
    /// Load defaults and apply overrides from a `name=value` file.
    pub fn from_file(path: impl AsRef<Path>) -> Result<RuleConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = RuleConfig::default();
        let file = path.display().to_string();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (name, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                file: file.clone(),
                line: line_no,
                reason: format!("expected name=value, got '{line}'"),
            })?;
            cfg.set(name.trim(), value.trim())
                .map_err(|reason| Error::Parse {
                    file: file.clone(),
                    line: line_no,
                    reason,
                })?;
        }
        cfg.validate().map_err(|reason| Error::Parse {
            file,
            line: 0,
            reason,
        })?;
        Ok(cfg)
    }

    /// Apply one `name=value` override.
    fn set(&mut self, name: &str, value: &str) -> std::result::Result<(), String> {
        fn days(value: &str) -> std::result::Result<i64, String> {
            value
                .parse::<i64>()
                .map_err(|_| format!("'{value}' is not a whole day count"))
        }
        fn level(value: &str) -> std::result::Result<f64, String> {
            value
                .parse::<f64>()
                .map_err(|_| format!("'{value}' is not a number"))
        }
        match name {
            "drop_window_days" => self.drop_window_days = days(value)?,
            "one_year_days" => self.one_year_days = days(value)?,
            "six_months_days" => self.six_months_days = days(value)?,
            "two_years_days" => self.two_years_days = days(value)?,
            "three_years_days" => self.three_years_days = days(value)?,
            "sig_alpha_high" => self.sig_alpha_high = level(value)?,
            "sig_beta_high" => self.sig_beta_high = level(value)?,
            "sig_alpha_low" => self.sig_alpha_low = level(value)?,
            "sig_beta_low" => self.sig_beta_low = level(value)?,
            "rp_nadir_max" => self.rp_nadir_max = level(value)?,
            "psa_threshold_standard" => self.psa_threshold_standard = level(value)?,
            "psa_threshold_ultrasensitive" => self.psa_threshold_ultrasensitive = level(value)?,
            "nadir_increase" => self.nadir_increase = level(value)?,
            "bcr_match_tolerance_days" => self.bcr_match_tolerance_days = days(value)?,
            other => return Err(format!("unknown setting '{other}'")),
        }
        Ok(())
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let day_fields = [
            ("drop_window_days", self.drop_window_days),
            ("one_year_days", self.one_year_days),
            ("six_months_days", self.six_months_days),
            ("two_years_days", self.two_years_days),
            ("three_years_days", self.three_years_days),
            ("bcr_match_tolerance_days", self.bcr_match_tolerance_days),
        ];
        for (name, v) in day_fields {
            if v < 0 {
                return Err(format!("{name} must be non-negative, got {v}"));
            }
        }
        let level_fields = [
            ("sig_beta_high", self.sig_beta_high),
            ("sig_beta_low", self.sig_beta_low),
            ("rp_nadir_max", self.rp_nadir_max),
            ("psa_threshold_standard", self.psa_threshold_standard),
            (
                "psa_threshold_ultrasensitive",
                self.psa_threshold_ultrasensitive,
            ),
            ("nadir_increase", self.nadir_increase),
        ];
        for (name, v) in level_fields {
            if !v.is_finite() || v < 0.0 {
                return Err(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        Ok(())
    }

    /// Fixed-order `(name, value)` pairs, used to echo the active constants
    /// into metric reports.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("drop_window_days", self.drop_window_days.to_string()),
            ("one_year_days", self.one_year_days.to_string()),
            ("six_months_days", self.six_months_days.to_string()),
            ("two_years_days", self.two_years_days.to_string()),
            ("three_years_days", self.three_years_days.to_string()),
            ("sig_alpha_high", self.sig_alpha_high.to_string()),
            ("sig_beta_high", self.sig_beta_high.to_string()),
            ("sig_alpha_low", self.sig_alpha_low.to_string()),
            ("sig_beta_low", self.sig_beta_low.to_string()),
            ("rp_nadir_max", self.rp_nadir_max.to_string()),
            (
                "psa_threshold_standard",
                self.psa_threshold_standard.to_string(),
            ),
            (
                "psa_threshold_ultrasensitive",
                self.psa_threshold_ultrasensitive.to_string(),
            ),
            ("nadir_increase", self.nadir_increase.to_string()),
            (
                "bcr_match_tolerance_days",
                self.bcr_match_tolerance_days.to_string(),
            ),
        ]
    }
}
