//! Plain-text file formats for cohorts, detections, events and metrics.
//!
//! All tabular files are simple comma-separated text: UTF-8, LF line
//! endings, one header line, a trailing newline, and no quoting (fields
//! never contain commas; patient ids are validated on write). Dates are
//! ISO `YYYY-MM-DD`; numbers use Rust's shortest round-trip formatting.
//! Writers sort rows by patient id and date, so writing the same data
//! twice produces byte-identical files.
//!
//! A cohort directory holds `patients.csv`, `psa.csv` and
//! `treatments.csv`, plus `ground_truth.csv` when the cohort is
//! synthetic. `treatments.csv` carries recorded treatments only;
//! detector output travels separately in `detected_treatments.csv`.

use crate::bcr::{BcrEvent, BcrSource};
use crate::config::RuleConfig;
use crate::error::{Error, Result};
use crate::eval::{BcrEvaluation, DetectionBreakdown, DetectionMetrics, TimeToRelapseReport};
use crate::imputation::{CurativeKind, DetectedTreatment};
use crate::synth::{GroundTruth, PatientTruth, RelapseMechanism, RelapseTruth};
use crate::timeline::{
    build_timeline, Assay, PatientTimeline, Provenance, PsaMeasurement, TreatmentEvent, TxKind,
};
use chrono::NaiveDate;
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

// ── File names ──────────────────────────────────────────────────────────

pub const PATIENTS_FILE: &str = "patients.csv";
pub const PSA_FILE: &str = "psa.csv";
pub const TREATMENTS_FILE: &str = "treatments.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";
pub const DETECTIONS_FILE: &str = "detected_treatments.csv";
pub const BCR_EVENTS_FILE: &str = "bcr_events.csv";

const PATIENTS_HEADER: &str = "patient_id,diagnosis_date,grade_group";
const PSA_HEADER: &str = "patient_id,date,value_ng_ml,assay";
const TREATMENTS_HEADER: &str = "patient_id,date,kind";
const GROUND_TRUTH_HEADER: &str = "patient_id,kind,treatment_date,relapse_date,mechanism,masked";
const DETECTIONS_HEADER: &str = "patient_id,kind,date,nadir_date,psa_min";
const BCR_EVENTS_HEADER: &str = "patient_id,bcr_date,source,time_to_relapse_days";
const HISTOGRAM_HEADER: &str = "group,bucket_start_days,bucket_end_days,count";

// ── Reading primitives ──────────────────────────────────────────────────

fn parse_error(file: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        file: file.display().to_string(),
        line,
        reason: reason.into(),
    }
}

/// Read a whole file into data lines, checking the header. Line numbers
/// in errors are 1-based file lines; the first data line is line 2.
fn read_rows(path: &Path, header: &str) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines: Vec<&str> = text.split('\n').collect();
    if lines.last() == Some(&"") {
        lines.pop();
    }
    let mut it = lines
        .into_iter()
        .map(|l| l.strip_suffix('\r').unwrap_or(l))
        .enumerate();
    match it.next() {
        Some((_, first)) if first == header => {}
        Some((_, first)) => {
            return Err(parse_error(
                path,
                1,
                format!("expected header '{header}', found '{first}'"),
            ))
        }
        None => return Err(parse_error(path, 1, format!("missing header '{header}'"))),
    }
    Ok(it.map(|(i, l)| (i + 1, l.to_string())).collect())
}

fn split_fields<'a>(row: &'a str, count: usize, path: &Path, line: usize) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = row.split(',').collect();
    if fields.len() != count {
        return Err(parse_error(
            path,
            line,
            format!("expected {count} fields, found {}", fields.len()),
        ));
    }
    Ok(fields)
}

fn parse_date(s: &str, col: &str, path: &Path, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .map_err(|_| parse_error(path, line, format!("bad date '{s}' in column '{col}'")))
}

fn parse_f64(s: &str, col: &str, path: &Path, line: usize) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| parse_error(path, line, format!("bad number '{s}' in column '{col}'")))
}

fn parse_i64(s: &str, col: &str, path: &Path, line: usize) -> Result<i64> {
    s.parse::<i64>()
        .map_err(|_| parse_error(path, line, format!("bad integer '{s}' in column '{col}'")))
}

fn parse_assay(s: &str, path: &Path, line: usize) -> Result<Assay> {
    match s {
        "standard" => Ok(Assay::Standard),
        "ultrasensitive" => Ok(Assay::Ultrasensitive),
        other => Err(parse_error(
            path,
            line,
            format!("unknown assay '{other}' (expected 'standard' or 'ultrasensitive')"),
        )),
    }
}

fn parse_tx_kind(s: &str, path: &Path, line: usize) -> Result<TxKind> {
    match s {
        "RP" => Ok(TxKind::Rp),
        "RT" => Ok(TxKind::Rt),
        "HT" => Ok(TxKind::Ht),
        "CT" => Ok(TxKind::Ct),
        other => Err(parse_error(
            path,
            line,
            format!("unknown treatment kind '{other}' (expected RP, RT, HT or CT)"),
        )),
    }
}

fn parse_curative_kind(s: &str, path: &Path, line: usize) -> Result<CurativeKind> {
    match s {
        "RP" => Ok(CurativeKind::Rp),
        "RT" => Ok(CurativeKind::Rt),
        other => Err(parse_error(
            path,
            line,
            format!("unknown curative kind '{other}' (expected RP or RT)"),
        )),
    }
}

fn parse_source(s: &str, path: &Path, line: usize) -> Result<BcrSource> {
    match s {
        "PRP" => Ok(BcrSource::Prp),
        "CRP" => Ok(BcrSource::Crp),
        "PRT" => Ok(BcrSource::Prt),
        "CRT" => Ok(BcrSource::Crt),
        other => Err(parse_error(
            path,
            line,
            format!("unknown rule '{other}' (expected PRP, CRP, PRT or CRT)"),
        )),
    }
}

// ── Writing primitives ──────────────────────────────────────────────────

fn open_out(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    Ok(BufWriter::new(
        fs::File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn wln(w: &mut impl Write, path: &Path, line: &str) -> Result<()> {
    writeln!(w, "{line}").map_err(|e| Error::io(path, e))
}

fn finish(mut w: BufWriter<fs::File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Patient ids are the only free-form fields; refuse ones the unquoted
/// format cannot carry.
fn check_id(id: &str, path: &Path) -> Result<()> {
    if id.is_empty() || id.contains([',', '"', '\n', '\r']) {
        return Err(parse_error(
            path,
            0,
            format!(
                "patient id {id:?} cannot be written (empty or contains ',', '\"' or a line break)"
            ),
        ));
    }
    Ok(())
}

fn assay_str(a: Assay) -> &'static str {
    match a {
        Assay::Standard => "standard",
        Assay::Ultrasensitive => "ultrasensitive",
    }
}

fn tx_kind_str(k: TxKind) -> &'static str {
    match k {
        TxKind::Rp => "RP",
        TxKind::Rt => "RT",
        TxKind::Ht => "HT",
        TxKind::Ct => "CT",
    }
}

fn curative_kind_str(k: CurativeKind) -> &'static str {
    match k {
        CurativeKind::Rp => "RP",
        CurativeKind::Rt => "RT",
    }
}

fn source_str(s: BcrSource) -> &'static str {
    match s {
        BcrSource::Prp => "PRP",
        BcrSource::Crp => "CRP",
        BcrSource::Prt => "PRT",
        BcrSource::Crt => "CRT",
    }
}

// ── Cohort directories ──────────────────────────────────────────────────

/// Write a cohort directory: `patients.csv`, `psa.csv`,
/// `treatments.csv` (recorded treatments only) and, when truth is
/// given, `ground_truth.csv`. Rows come out sorted by patient id and
/// date regardless of input order.
pub fn write_cohort(
    dir: &Path,
    cohort: &[PatientTimeline],
    truth: Option<&GroundTruth>,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut order: Vec<&PatientTimeline> = cohort.iter().collect();
    order.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));

    let path = dir.join(PATIENTS_FILE);
    let mut w = open_out(&path)?;
    wln(&mut w, &path, PATIENTS_HEADER)?;
    for t in &order {
        check_id(&t.patient_id, &path)?;
        let diagnosis = t.diagnosis_date.map(|d| d.to_string()).unwrap_or_default();
        let grade = t.grade_group.map(|g| g.to_string()).unwrap_or_default();
        wln(
            &mut w,
            &path,
            &format!("{},{},{}", t.patient_id, diagnosis, grade),
        )?;
    }
    finish(w, &path)?;

    let path = dir.join(PSA_FILE);
    let mut w = open_out(&path)?;
    wln(&mut w, &path, PSA_HEADER)?;
    for t in &order {
        for m in &t.psa {
            wln(
                &mut w,
                &path,
                &format!(
                    "{},{},{},{}",
                    t.patient_id,
                    m.date,
                    m.value,
                    assay_str(m.assay)
                ),
            )?;
        }
    }
    finish(w, &path)?;

    let path = dir.join(TREATMENTS_FILE);
    let mut w = open_out(&path)?;
    wln(&mut w, &path, TREATMENTS_HEADER)?;
    for t in &order {
        for e in t
            .treatments
            .iter()
            .filter(|e| e.provenance == Provenance::Recorded)
        {
            wln(
                &mut w,
                &path,
                &format!("{},{},{}", t.patient_id, e.date, tx_kind_str(e.kind)),
            )?;
        }
    }
    finish(w, &path)?;

    if let Some(truth) = truth {
        write_ground_truth(&dir.join(GROUND_TRUTH_FILE), truth)?;
    }
    Ok(())
}

/// Write `ground_truth.csv` on its own, sorted by patient id.
pub fn write_ground_truth(path: &Path, truth: &GroundTruth) -> Result<()> {
    let mut order: Vec<&PatientTruth> = truth.patients.iter().collect();
    order.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    let mut w = open_out(path)?;
    wln(&mut w, path, GROUND_TRUTH_HEADER)?;
    for p in order {
        check_id(&p.patient_id, path)?;
        let (relapse_date, mechanism) = match &p.relapse {
            Some(r) => (
                r.date.to_string(),
                match r.mechanism {
                    RelapseMechanism::PsaRise => "psa",
                    RelapseMechanism::SecondaryTreatment => "secondary",
                }
                .to_string(),
            ),
            None => (String::new(), String::new()),
        };
        wln(
            &mut w,
            path,
            &format!(
                "{},{},{},{},{},{}",
                p.patient_id,
                curative_kind_str(p.kind),
                p.treatment_date,
                relapse_date,
                mechanism,
                u8::from(p.masked)
            ),
        )?;
    }
    finish(w, path)
}

/// Diagnosis date and grade group, as parsed from the patients file.
type PatientAttrs = (Option<NaiveDate>, Option<u8>);

fn read_truth_rows(
    path: &Path,
    known_ids: Option<&BTreeMap<String, PatientAttrs>>,
) -> Result<GroundTruth> {
    let mut patients = Vec::new();
    for (line, row) in read_rows(path, GROUND_TRUTH_HEADER)? {
        let f = split_fields(&row, 6, path, line)?;
        let patient_id = f[0].to_string();
        if let Some(known) = known_ids {
            if !known.contains_key(&patient_id) {
                return Err(Error::OrphanRow {
                    file: path.display().to_string(),
                    line,
                    patient_id,
                });
            }
        }
        let kind = parse_curative_kind(f[1], path, line)?;
        let treatment_date = parse_date(f[2], "treatment_date", path, line)?;
        let relapse = match (f[3], f[4]) {
            ("", "") => None,
            ("", _) | (_, "") => {
                return Err(parse_error(
                    path,
                    line,
                    "relapse_date and mechanism must both be set or both be empty",
                ))
            }
            (date, mech) => Some(RelapseTruth {
                date: parse_date(date, "relapse_date", path, line)?,
                mechanism: match mech {
                    "psa" => RelapseMechanism::PsaRise,
                    "secondary" => RelapseMechanism::SecondaryTreatment,
                    other => {
                        return Err(parse_error(
                            path,
                            line,
                            format!("unknown mechanism '{other}' (expected 'psa' or 'secondary')"),
                        ))
                    }
                },
            }),
        };
        let masked = match f[5] {
            "0" => false,
            "1" => true,
            other => {
                return Err(parse_error(
                    path,
                    line,
                    format!("bad masked flag '{other}' (expected 0 or 1)"),
                ))
            }
        };
        patients.push(PatientTruth {
            patient_id,
            kind,
            treatment_date,
            relapse,
            masked,
        });
    }
    Ok(GroundTruth { patients })
}

/// Read `ground_truth.csv` from an arbitrary path.
pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    read_truth_rows(path, None)
}

/// Read a cohort directory written by [`write_cohort`]. Patients come
/// back sorted by id; PSA and treatment rows are attached to their
/// patient, and rows naming an id absent from `patients.csv` are
/// rejected. The ground-truth file is optional.
pub fn read_cohort(dir: &Path) -> Result<(Vec<PatientTimeline>, Option<GroundTruth>)> {
    let patients_path = dir.join(PATIENTS_FILE);
    let mut patients: BTreeMap<String, PatientAttrs> = BTreeMap::new();
    for (line, row) in read_rows(&patients_path, PATIENTS_HEADER)? {
        let f = split_fields(&row, 3, &patients_path, line)?;
        let id = f[0].to_string();
        if id.is_empty() {
            return Err(parse_error(&patients_path, line, "empty patient id"));
        }
        let diagnosis = match f[1] {
            "" => None,
            s => Some(parse_date(s, "diagnosis_date", &patients_path, line)?),
        };
        let grade = match f[2] {
            "" => None,
            s => {
                let g: u8 = s.parse().map_err(|_| {
                    parse_error(
                        &patients_path,
                        line,
                        format!("bad grade group '{s}' (expected 1-5)"),
                    )
                })?;
                if !(1..=5).contains(&g) {
                    return Err(parse_error(
                        &patients_path,
                        line,
                        format!("grade group {g} out of range 1-5"),
                    ));
                }
                Some(g)
            }
        };
        if patients.insert(id.clone(), (diagnosis, grade)).is_some() {
            return Err(parse_error(
                &patients_path,
                line,
                format!("duplicate patient id '{id}'"),
            ));
        }
    }

    let psa_path = dir.join(PSA_FILE);
    let mut psa_by_id: BTreeMap<String, Vec<PsaMeasurement>> = BTreeMap::new();
    for (line, row) in read_rows(&psa_path, PSA_HEADER)? {
        let f = split_fields(&row, 4, &psa_path, line)?;
        let patient_id = f[0].to_string();
        if !patients.contains_key(&patient_id) {
            return Err(Error::OrphanRow {
                file: psa_path.display().to_string(),
                line,
                patient_id,
            });
        }
        let m = PsaMeasurement {
            date: parse_date(f[1], "date", &psa_path, line)?,
            value: parse_f64(f[2], "value_ng_ml", &psa_path, line)?,
            assay: parse_assay(f[3], &psa_path, line)?,
            patient_id: patient_id.clone(),
        };
        psa_by_id.entry(patient_id).or_default().push(m);
    }

    let tx_path = dir.join(TREATMENTS_FILE);
    let mut tx_by_id: BTreeMap<String, Vec<TreatmentEvent>> = BTreeMap::new();
    for (line, row) in read_rows(&tx_path, TREATMENTS_HEADER)? {
        let f = split_fields(&row, 3, &tx_path, line)?;
        let patient_id = f[0].to_string();
        if !patients.contains_key(&patient_id) {
            return Err(Error::OrphanRow {
                file: tx_path.display().to_string(),
                line,
                patient_id,
            });
        }
        let e = TreatmentEvent {
            date: parse_date(f[1], "date", &tx_path, line)?,
            kind: parse_tx_kind(f[2], &tx_path, line)?,
            provenance: Provenance::Recorded,
            patient_id: patient_id.clone(),
        };
        tx_by_id.entry(patient_id).or_default().push(e);
    }

    let truth_path = dir.join(GROUND_TRUTH_FILE);
    let truth = if truth_path.exists() {
        Some(read_truth_rows(&truth_path, Some(&patients))?)
    } else {
        None
    };

    let mut cohort = Vec::with_capacity(patients.len());
    for (id, (diagnosis, grade)) in &patients {
        let build = build_timeline(
            id,
            psa_by_id.remove(id).unwrap_or_default(),
            tx_by_id.remove(id).unwrap_or_default(),
            *diagnosis,
            *grade,
        )?;
        cohort.push(build.timeline);
    }
    Ok((cohort, truth))
}

// ── Detections ──────────────────────────────────────────────────────────

/// Render detector output as file text, sorted by patient id and drop
/// date.
pub fn render_detections(detections: &[DetectedTreatment]) -> Result<String> {
    let label = Path::new(DETECTIONS_FILE);
    let mut order: Vec<&DetectedTreatment> = detections.iter().collect();
    order.sort_by(|a, b| (&a.patient_id, a.date).cmp(&(&b.patient_id, b.date)));
    let mut text = format!("{DETECTIONS_HEADER}\n");
    for d in order {
        check_id(&d.patient_id, label)?;
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            d.patient_id,
            curative_kind_str(d.kind),
            d.date,
            d.nadir_date,
            d.psa_min
        ));
    }
    Ok(text)
}

/// Write detector output, sorted by patient id and drop date.
pub fn write_detections(path: &Path, detections: &[DetectedTreatment]) -> Result<()> {
    let text = render_detections(detections)?;
    let mut w = open_out(path)?;
    w.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    finish(w, path)
}

pub fn read_detections(path: &Path) -> Result<Vec<DetectedTreatment>> {
    let mut detections = Vec::new();
    for (line, row) in read_rows(path, DETECTIONS_HEADER)? {
        let f = split_fields(&row, 5, path, line)?;
        detections.push(DetectedTreatment {
            patient_id: f[0].to_string(),
            kind: parse_curative_kind(f[1], path, line)?,
            date: parse_date(f[2], "date", path, line)?,
            nadir_date: parse_date(f[3], "nadir_date", path, line)?,
            psa_min: parse_f64(f[4], "psa_min", path, line)?,
        });
    }
    Ok(detections)
}

// ── Recurrence events ───────────────────────────────────────────────────

/// Render detected recurrence events as file text, sorted by patient id.
pub fn render_bcr_events(events: &[BcrEvent]) -> Result<String> {
    let label = Path::new(BCR_EVENTS_FILE);
    let mut order: Vec<&BcrEvent> = events.iter().collect();
    order.sort_by(|a, b| (&a.patient_id, a.bcr_date).cmp(&(&b.patient_id, b.bcr_date)));
    let mut text = format!("{BCR_EVENTS_HEADER}\n");
    for e in order {
        check_id(&e.patient_id, label)?;
        text.push_str(&format!(
            "{},{},{},{}\n",
            e.patient_id,
            e.bcr_date,
            source_str(e.source),
            e.time_to_relapse_days
        ));
    }
    Ok(text)
}

/// Write detected recurrence events, sorted by patient id.
pub fn write_bcr_events(path: &Path, events: &[BcrEvent]) -> Result<()> {
    let text = render_bcr_events(events)?;
    let mut w = open_out(path)?;
    w.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    finish(w, path)
}

pub fn read_bcr_events(path: &Path) -> Result<Vec<BcrEvent>> {
    let mut events = Vec::new();
    for (line, row) in read_rows(path, BCR_EVENTS_HEADER)? {
        let f = split_fields(&row, 4, path, line)?;
        events.push(BcrEvent {
            patient_id: f[0].to_string(),
            bcr_date: parse_date(f[1], "bcr_date", path, line)?,
            source: parse_source(f[2], path, line)?,
            time_to_relapse_days: parse_i64(f[3], "time_to_relapse_days", path, line)?,
        });
    }
    Ok(events)
}

// ── Metrics and histogram reports ───────────────────────────────────────

fn write_breakdown(
    w: &mut impl Write,
    path: &Path,
    prefix: &str,
    b: &DetectionBreakdown,
) -> Result<()> {
    wln(w, path, &format!("{prefix}.available={}", b.available))?;
    wln(w, path, &format!("{prefix}.estimated={}", b.estimated))?;
    wln(w, path, &format!("{prefix}.matched={}", b.matched))?;
    wln(w, path, &format!("{prefix}.true_class={}", b.true_class))?;
    wln(w, path, &format!("{prefix}.false_class={}", b.false_class))?;
    wln(
        w,
        path,
        &format!("{prefix}.new_estimated={}", b.new_estimated),
    )?;
    wln(
        w,
        path,
        &format!("{prefix}.matched_fraction={}", b.matched_fraction()),
    )?;
    wln(
        w,
        path,
        &format!("{prefix}.true_fraction={}", b.true_fraction()),
    )?;
    wln(
        w,
        path,
        &format!("{prefix}.false_fraction={}", b.false_fraction()),
    )?;
    wln(
        w,
        path,
        &format!("{prefix}.new_fraction={}", b.new_fraction()),
    )
}

/// Write a flat `key=value` metrics report: the treatment-detection
/// breakdowns, the truth-based recurrence scores when available, and an
/// echo of every rule constant in effect. Keys come out in a fixed
/// order.
pub fn write_metrics(
    path: &Path,
    detections: &DetectionMetrics,
    bcr: Option<&BcrEvaluation>,
    cfg: &RuleConfig,
) -> Result<()> {
    let mut w = open_out(path)?;
    write_breakdown(&mut w, path, "detection.overall", &detections.overall)?;
    write_breakdown(&mut w, path, "detection.rp", &detections.rp)?;
    write_breakdown(&mut w, path, "detection.rt", &detections.rt)?;
    if let Some(bcr) = bcr {
        wln(&mut w, path, &format!("bcr.detected={}", bcr.detected))?;
        for (source, count) in &bcr.by_source {
            wln(
                &mut w,
                path,
                &format!("bcr.by_rule.{}={}", source_str(*source), count),
            )?;
        }
        wln(
            &mut w,
            path,
            &format!("bcr.true_positives={}", bcr.true_positives),
        )?;
        wln(
            &mut w,
            path,
            &format!("bcr.false_positives={}", bcr.false_positives),
        )?;
        wln(&mut w, path, &format!("bcr.misses={}", bcr.misses))?;
        let median = bcr
            .median_abs_error_days
            .map(|m| m.to_string())
            .unwrap_or_default();
        wln(&mut w, path, &format!("bcr.median_abs_error_days={median}"))?;
    }
    for (key, value) in cfg.entries() {
        wln(&mut w, path, &format!("config.{key}={value}"))?;
    }
    finish(w, path)
}

/// Write a time-to-relapse histogram: one row per bucket for the
/// overall series, then per grade group (`gg1`…`gg5`) when grades are
/// known. Bucket bounds are inclusive day offsets.
pub fn write_histogram(path: &Path, report: &TimeToRelapseReport) -> Result<()> {
    let mut w = open_out(path)?;
    wln(&mut w, path, HISTOGRAM_HEADER)?;
    let write_row = |w: &mut BufWriter<fs::File>, group: &str, rows: &[u64]| -> Result<()> {
        for (i, count) in rows.iter().enumerate() {
            let start = i as i64 * report.bucket_days;
            let end = start + report.bucket_days - 1;
            wln(w, path, &format!("{group},{start},{end},{count}"))?;
        }
        Ok(())
    };
    write_row(&mut w, "overall", &report.overall)?;
    if let Some(by_grade) = &report.by_grade {
        for (grade, rows) in by_grade {
            write_row(&mut w, &format!("gg{grade}"), rows)?;
        }
    }
    finish(w, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn d(y: i32, m: u32, day: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, day).unwrap()
    }

    fn sample_cohort() -> (Vec<PatientTimeline>, GroundTruth) {
        let t1 = build_timeline(
            "a01",
            vec![
                PsaMeasurement {
                    patient_id: "a01".into(),
                    date: d(2015, 1, 1),
                    value: 6.5,
                    assay: Assay::Standard,
                },
                PsaMeasurement {
                    patient_id: "a01".into(),
                    date: d(2015, 4, 1),
                    value: 0.05,
                    assay: Assay::Ultrasensitive,
                },
            ],
            vec![TreatmentEvent {
                patient_id: "a01".into(),
                date: d(2015, 2, 15),
                kind: TxKind::Rp,
                provenance: Provenance::Recorded,
            }],
            Some(d(2014, 12, 1)),
            Some(3),
        )
        .unwrap()
        .timeline;
        let t2 = build_timeline(
            "b02",
            vec![PsaMeasurement {
                patient_id: "b02".into(),
                date: d(2016, 6, 1),
                value: 8.25,
                assay: Assay::Standard,
            }],
            vec![],
            None,
            None,
        )
        .unwrap()
        .timeline;
        let truth = GroundTruth {
            patients: vec![
                PatientTruth {
                    patient_id: "a01".into(),
                    kind: CurativeKind::Rp,
                    treatment_date: d(2015, 2, 15),
                    relapse: Some(RelapseTruth {
                        date: d(2017, 3, 1),
                        mechanism: RelapseMechanism::PsaRise,
                    }),
                    masked: false,
                },
                PatientTruth {
                    patient_id: "b02".into(),
                    kind: CurativeKind::Rt,
                    treatment_date: d(2016, 8, 1),
                    relapse: None,
                    masked: true,
                },
            ],
        };
        (vec![t1, t2], truth)
    }

    #[test]
    fn cohort_round_trips() {
        let dir = tempdir().unwrap();
        let (cohort, truth) = sample_cohort();
        write_cohort(dir.path(), &cohort, Some(&truth)).unwrap();
        let (read, read_truth) = read_cohort(dir.path()).unwrap();
        assert_eq!(read, cohort);
        assert_eq!(read_truth, Some(truth));
    }

    #[test]
    fn missing_truth_file_reads_as_none() {
        let dir = tempdir().unwrap();
        let (cohort, _) = sample_cohort();
        write_cohort(dir.path(), &cohort, None).unwrap();
        let (read, truth) = read_cohort(dir.path()).unwrap();
        assert_eq!(read.len(), 2);
        assert_eq!(truth, None);
    }

    #[test]
    fn writing_twice_is_byte_identical() {
        let a = tempdir().unwrap();
        let b = tempdir().unwrap();
        let (cohort, truth) = sample_cohort();
        write_cohort(a.path(), &cohort, Some(&truth)).unwrap();
        // reversed input order must not change the bytes
        let reversed: Vec<PatientTimeline> = cohort.iter().rev().cloned().collect();
        write_cohort(b.path(), &reversed, Some(&truth)).unwrap();
        for name in [PATIENTS_FILE, PSA_FILE, TREATMENTS_FILE, GROUND_TRUTH_FILE] {
            let x = fs::read(a.path().join(name)).unwrap();
            let y = fs::read(b.path().join(name)).unwrap();
            assert_eq!(x, y, "{name} differs");
            assert_eq!(x.last(), Some(&b'\n'), "{name} lacks trailing newline");
        }
    }

    #[test]
    fn empty_cohort_writes_header_only_files() {
        let dir = tempdir().unwrap();
        write_cohort(dir.path(), &[], None).unwrap();
        let text = fs::read_to_string(dir.path().join(PSA_FILE)).unwrap();
        assert_eq!(text, format!("{PSA_HEADER}\n"));
        let (cohort, truth) = read_cohort(dir.path()).unwrap();
        assert!(cohort.is_empty());
        assert_eq!(truth, None);
    }

    #[test]
    fn imputed_treatments_stay_out_of_the_treatments_file() {
        let dir = tempdir().unwrap();
        let (mut cohort, _) = sample_cohort();
        cohort[1].treatments.push(TreatmentEvent {
            patient_id: "b02".into(),
            date: d(2016, 8, 1),
            kind: TxKind::Rt,
            provenance: Provenance::Imputed,
        });
        write_cohort(dir.path(), &cohort, None).unwrap();
        let text = fs::read_to_string(dir.path().join(TREATMENTS_FILE)).unwrap();
        assert!(!text.contains("b02"));
    }

    #[test]
    fn bad_rows_name_the_file_and_line() {
        let dir = tempdir().unwrap();
        write_cohort(dir.path(), &[], None).unwrap();
        fs::write(
            dir.path().join(PATIENTS_FILE),
            format!("{PATIENTS_HEADER}\np1,2015-13-01,2\n"),
        )
        .unwrap();
        match read_cohort(dir.path()) {
            Err(Error::Parse { line, reason, .. }) => {
                assert_eq!(line, 2);
                assert!(reason.contains("2015-13-01"), "{reason}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_field_count_is_rejected() {
        let dir = tempdir().unwrap();
        write_cohort(dir.path(), &[], None).unwrap();
        fs::write(
            dir.path().join(PATIENTS_FILE),
            format!("{PATIENTS_HEADER}\np1,,3,extra\n"),
        )
        .unwrap();
        assert!(matches!(
            read_cohort(dir.path()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn unknown_assay_is_rejected() {
        let dir = tempdir().unwrap();
        write_cohort(dir.path(), &[], None).unwrap();
        fs::write(
            dir.path().join(PATIENTS_FILE),
            format!("{PATIENTS_HEADER}\np1,,\n"),
        )
        .unwrap();
        fs::write(
            dir.path().join(PSA_FILE),
            format!("{PSA_HEADER}\np1,2015-01-01,6.5,unknown\n"),
        )
        .unwrap();
        assert!(matches!(
            read_cohort(dir.path()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn orphan_psa_row_is_rejected() {
        let dir = tempdir().unwrap();
        write_cohort(dir.path(), &[], None).unwrap();
        fs::write(
            dir.path().join(PSA_FILE),
            format!("{PSA_HEADER}\nghost,2015-01-01,6.5,standard\n"),
        )
        .unwrap();
        assert!(matches!(
            read_cohort(dir.path()),
            Err(Error::OrphanRow { line: 2, patient_id, .. }) if patient_id == "ghost"
        ));
    }

    #[test]
    fn duplicate_patient_is_rejected() {
        let dir = tempdir().unwrap();
        write_cohort(dir.path(), &[], None).unwrap();
        fs::write(
            dir.path().join(PATIENTS_FILE),
            format!("{PATIENTS_HEADER}\np1,,\np1,,\n"),
        )
        .unwrap();
        assert!(matches!(
            read_cohort(dir.path()),
            Err(Error::Parse { line: 3, .. })
        ));
    }

    #[test]
    fn wrong_header_is_rejected() {
        let dir = tempdir().unwrap();
        write_cohort(dir.path(), &[], None).unwrap();
        fs::write(dir.path().join(PATIENTS_FILE), "id,diag,grade\n").unwrap();
        assert!(matches!(
            read_cohort(dir.path()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn missing_directory_is_an_io_error() {
        let dir = tempdir().unwrap();
        let missing = dir.path().join("nope");
        assert!(matches!(read_cohort(&missing), Err(Error::Io { .. })));
    }

    #[test]
    fn grade_out_of_range_is_rejected() {
        let dir = tempdir().unwrap();
        write_cohort(dir.path(), &[], None).unwrap();
        fs::write(
            dir.path().join(PATIENTS_FILE),
            format!("{PATIENTS_HEADER}\np1,,6\n"),
        )
        .unwrap();
        assert!(matches!(
            read_cohort(dir.path()),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn half_set_relapse_fields_are_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join(GROUND_TRUTH_FILE);
        fs::write(
            &path,
            format!("{GROUND_TRUTH_HEADER}\np1,RP,2015-01-01,2016-01-01,,0\n"),
        )
        .unwrap();
        assert!(matches!(
            read_ground_truth(&path),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn detections_round_trip_and_sort() {
        let dir = tempdir().unwrap();
        let path = dir.path().join(DETECTIONS_FILE);
        let detections = vec![
            DetectedTreatment {
                patient_id: "z".into(),
                kind: CurativeKind::Rt,
                date: d(2015, 1, 1),
                nadir_date: d(2015, 3, 1),
                psa_min: 1.25,
            },
            DetectedTreatment {
                patient_id: "a".into(),
                kind: CurativeKind::Rp,
                date: d(2016, 1, 1),
                nadir_date: d(2016, 2, 1),
                psa_min: 0.05,
            },
        ];
        write_detections(&path, &detections).unwrap();
        let read = read_detections(&path).unwrap();
        assert_eq!(read.len(), 2);
        assert_eq!(read[0].patient_id, "a");
        assert_eq!(read[1], detections[0]);
    }

    #[test]
    fn bcr_events_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join(BCR_EVENTS_FILE);
        let events = vec![BcrEvent {
            patient_id: "p1".into(),
            bcr_date: d(2017, 6, 15),
            source: BcrSource::Crt,
            time_to_relapse_days: 912,
        }];
        write_bcr_events(&path, &events).unwrap();
        assert_eq!(read_bcr_events(&path).unwrap(), events);
    }

    #[test]
    fn bad_rule_name_is_rejected() {
        let dir = tempdir().unwrap();
        let path = dir.path().join(BCR_EVENTS_FILE);
        fs::write(
            &path,
            format!("{BCR_EVENTS_HEADER}\np1,2017-06-15,XXX,912\n"),
        )
        .unwrap();
        assert!(matches!(
            read_bcr_events(&path),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn metrics_file_has_fixed_key_order() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("metrics.txt");
        let metrics = DetectionMetrics {
            overall: DetectionBreakdown {
                available: 4,
                estimated: 3,
                matched: 2,
                true_class: 1,
                false_class: 1,
                new_estimated: 1,
            },
            ..DetectionMetrics::default()
        };
        write_metrics(&path, &metrics, None, &RuleConfig::default()).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "detection.overall.available=4");
        assert_eq!(lines[1], "detection.overall.estimated=3");
        assert_eq!(lines[6], "detection.overall.matched_fraction=0.5");
        assert!(lines.contains(&"config.drop_window_days=365"));
        assert!(lines.contains(&"config.rp_nadir_max=0.1"));
        assert!(!text.contains("bcr."));
        // deterministic output
        let path2 = dir.path().join("metrics2.txt");
        write_metrics(&path2, &metrics, None, &RuleConfig::default()).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&path2).unwrap());
    }

    #[test]
    fn metrics_file_includes_recurrence_block_when_given() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("metrics.txt");
        let bcr = BcrEvaluation {
            detected: 3,
            by_source: BcrSource::ALL.map(|s| (s, usize::from(s == BcrSource::Prp) * 3)),
            true_positives: 2,
            false_positives: 1,
            misses: 0,
            median_abs_error_days: Some(12.5),
        };
        write_metrics(
            &path,
            &DetectionMetrics::default(),
            Some(&bcr),
            &RuleConfig::default(),
        )
        .unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("bcr.detected=3\n"));
        assert!(text.contains("bcr.by_rule.PRP=3\n"));
        assert!(text.contains("bcr.by_rule.CRT=0\n"));
        assert!(text.contains("bcr.median_abs_error_days=12.5\n"));
    }

    #[test]
    fn histogram_rows_cover_every_bucket() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("histogram.csv");
        let report = TimeToRelapseReport {
            bucket_days: 183,
            overall: vec![1, 0, 1, 0, 1],
            by_grade: None,
        };
        write_histogram(&path, &report).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let expected = "group,bucket_start_days,bucket_end_days,count\n\
                        overall,0,182,1\n\
                        overall,183,365,0\n\
                        overall,366,548,1\n\
                        overall,549,731,0\n\
                        overall,732,914,1\n";
        assert_eq!(text, expected);
    }

    #[test]
    fn histogram_includes_grade_rows_when_present() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("histogram.csv");
        let report = TimeToRelapseReport {
            bucket_days: 100,
            overall: vec![2],
            by_grade: Some((1..=5).map(|g| (g, vec![u64::from(g == 2)])).collect()),
        };
        write_histogram(&path, &report).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("gg2,0,99,1\n"));
        assert!(text.contains("gg5,0,99,0\n"));
    }

    #[test]
    fn unwritable_patient_id_is_rejected() {
        let dir = tempdir().unwrap();
        let (mut cohort, _) = sample_cohort();
        cohort[0].patient_id = "a,01".into();
        assert!(write_cohort(dir.path(), &cohort, None).is_err());
    }
}
