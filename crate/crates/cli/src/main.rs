//! `psatrace` — reconstruct curative prostate-cancer treatments and
//! biochemical recurrence from PSA time series.
//!
//! The subcommands form a pipeline over a cohort directory:
//!
//! ```text
//! psatrace synth      --out cohort/ --patients 500 --p-mask 0.3
//! psatrace detect-tx  --cohort cohort/ --out cohort/detected_treatments.csv
//! psatrace detect-bcr --cohort cohort/ --out cohort/bcr_events.csv
//! psatrace eval       --cohort cohort/ --out cohort/metrics.txt
//! psatrace report     --events cohort/bcr_events.csv --cohort cohort/ \
//!                     --out cohort/histogram.csv
//! ```
//!
//! Progress goes to stderr; row data goes to stdout when `--out` is
//! omitted. Exit codes: 0 on success, 2 for filesystem problems, 1 for
//! everything else.

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use psatrace::bcr::{detect_bcr_cohort, BcrOptions};
use psatrace::eval::{evaluate_bcr, evaluate_detections, time_to_relapse_report, BcrEvaluation};
use psatrace::imputation::{
    apply_detections, detect_missing_treatments, DetectMode, DetectOptions, DropMode,
};
use psatrace::io::{
    read_bcr_events, read_cohort, read_detections, read_ground_truth, render_bcr_events,
    render_detections, write_bcr_events, write_cohort, write_detections, write_histogram,
    write_metrics, DETECTIONS_FILE,
};
use psatrace::synth::{generate_masked_cohort, SynthConfig};
use psatrace::timeline::PatientTimeline;
use psatrace::{Error, Result, RuleConfig};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "psatrace",
    version,
    about = "Reconstruct curative prostate-cancer treatments and biochemical recurrence from PSA time series"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum ModeArg {
    /// Stop at the first significant drop per patient.
    #[default]
    First,
    /// Report every significant drop per patient.
    All,
}

impl From<ModeArg> for DropMode {
    fn from(m: ModeArg) -> DropMode {
        match m {
            ModeArg::First => DropMode::First,
            ModeArg::All => DropMode::All,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic cohort with ground truth
    Synth {
        /// Directory to write the cohort files into
        #[arg(long)]
        out: PathBuf,
        /// Number of patients
        #[arg(long, default_value_t = 100)]
        patients: usize,
        /// Master seed; same seed, same cohort
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Probability that a curative treatment record is withheld
        #[arg(long, default_value_t = 0.0)]
        p_mask: f64,
        /// Probability that a patient's treatment is surgery (RP)
        #[arg(long, default_value_t = 0.35)]
        p_rp: f64,
        /// Probability that a patient relapses
        #[arg(long, default_value_t = 0.3)]
        p_recurrence: f64,
        /// Probability that a relapse shows as a secondary treatment
        #[arg(long, default_value_t = 0.3)]
        p_secondary: f64,
        /// Log-scale standard deviation of measurement noise
        #[arg(long, default_value_t = 0.15)]
        noise_sd: f64,
        /// Nominal days between PSA draws
        #[arg(long, default_value_t = 90)]
        sampling_interval_days: i64,
    },
    /// Detect significant PSA drops and impute missing curative treatments
    DetectTx {
        /// Cohort directory to read
        #[arg(long)]
        cohort: PathBuf,
        /// How many drops to report per patient
        #[arg(long, value_enum, default_value_t)]
        mode: ModeArg,
        /// Output file; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
        /// Rule-constant overrides, one name=value per line
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Determine biochemical recurrence status and dates
    DetectBcr {
        /// Cohort directory to read
        #[arg(long)]
        cohort: PathBuf,
        /// Apply detected_treatments.csv from the cohort directory (when
        /// present) and count imputed treatments as treatments
        #[arg(long, action = clap::ArgAction::Set, default_value_t = true)]
        include_imputed: bool,
        /// Use only PSA evidence, ignoring secondary treatments
        #[arg(long)]
        psa_only: bool,
        /// Output file; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
        /// Rule-constant overrides, one name=value per line
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score treatment detection against records, and recurrence detection
    /// against ground truth when available
    Eval {
        /// Cohort directory to read
        #[arg(long)]
        cohort: PathBuf,
        /// Ground-truth file; defaults to the cohort's ground_truth.csv
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Metrics file to write
        #[arg(long)]
        out: PathBuf,
        /// Rule-constant overrides, one name=value per line
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Bin recurrence events into a time-to-relapse histogram
    Report {
        /// Recurrence events file (bcr_events.csv)
        #[arg(long)]
        events: PathBuf,
        /// Cohort directory, for grade groups
        #[arg(long)]
        cohort: PathBuf,
        /// Histogram bucket width in days
        #[arg(long, default_value_t = 183)]
        bucket_days: i64,
        /// Histogram file to write
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_rules(path: Option<&Path>) -> Result<RuleConfig> {
    match path {
        Some(p) => RuleConfig::from_file(p),
        None => Ok(RuleConfig::default()),
    }
}

/// Fold the detector's output file into the cohort as imputed treatment
/// events, when the file exists.
fn with_detections(dir: &Path, cohort: Vec<PatientTimeline>) -> Result<Vec<PatientTimeline>> {
    let path = dir.join(DETECTIONS_FILE);
    if !path.exists() {
        return Ok(cohort);
    }
    let detections = read_detections(&path)?;
    eprintln!(
        "applying {} detected treatment(s) from {}",
        detections.len(),
        path.display()
    );
    Ok(apply_detections(&cohort, &detections))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            out,
            patients,
            seed,
            p_mask,
            p_rp,
            p_recurrence,
            p_secondary,
            noise_sd,
            sampling_interval_days,
        } => {
            let cfg = SynthConfig {
                n_patients: patients,
                seed,
                p_rp,
                p_recurrence,
                p_secondary,
                noise_sd,
                sampling_interval_days,
                p_mask,
            };
            let (cohort, truth) = generate_masked_cohort(&cfg)?;
            write_cohort(&out, &cohort, Some(&truth))?;
            let masked = truth.patients.iter().filter(|p| p.masked).count();
            eprintln!(
                "wrote {} patient(s) ({} with withheld treatments) to {}",
                cohort.len(),
                masked,
                out.display()
            );
        }
        Command::DetectTx {
            cohort,
            mode,
            out,
            config,
        } => {
            let rules = load_rules(config.as_deref())?;
            let (timelines, _) = read_cohort(&cohort)?;
            let detections = detect_missing_treatments(
                &timelines,
                DetectOptions {
                    mode: DetectMode::Impute,
                    drops: mode.into(),
                },
                &rules,
            )?;
            eprintln!(
                "detected {} missing treatment(s) across {} patient(s)",
                detections.len(),
                timelines.len()
            );
            match out {
                Some(path) => write_detections(&path, &detections)?,
                None => print!("{}", render_detections(&detections)?),
            }
        }
        Command::DetectBcr {
            cohort,
            include_imputed,
            psa_only,
            out,
            config,
        } => {
            let rules = load_rules(config.as_deref())?;
            let (mut timelines, _) = read_cohort(&cohort)?;
            if include_imputed {
                timelines = with_detections(&cohort, timelines)?;
            }
            let events = detect_bcr_cohort(
                &timelines,
                BcrOptions {
                    include_imputed,
                    psa_only,
                },
                &rules,
            );
            eprintln!(
                "found biochemical recurrence in {} of {} patient(s)",
                events.len(),
                timelines.len()
            );
            match out {
                Some(path) => write_bcr_events(&path, &events)?,
                None => print!("{}", render_bcr_events(&events)?),
            }
        }
        Command::Eval {
            cohort,
            truth,
            out,
            config,
        } => {
            let rules = load_rules(config.as_deref())?;
            let (timelines, embedded_truth) = read_cohort(&cohort)?;
            let metrics = evaluate_detections(&timelines, DropMode::First, &rules)?;
            let truth = match truth {
                Some(path) => Some(read_ground_truth(&path)?),
                None => embedded_truth,
            };
            let bcr: Option<BcrEvaluation> = match &truth {
                Some(truth) => {
                    let timelines = with_detections(&cohort, timelines)?;
                    Some(evaluate_bcr(
                        &timelines,
                        truth,
                        BcrOptions::default(),
                        &rules,
                    )?)
                }
                None => {
                    eprintln!("no ground truth available; skipping recurrence scoring");
                    None
                }
            };
            write_metrics(&out, &metrics, bcr.as_ref(), &rules)?;
            eprintln!("wrote metrics to {}", out.display());
        }
        Command::Report {
            events,
            cohort,
            bucket_days,
            out,
        } => {
            let events = read_bcr_events(&events)?;
            let (timelines, _) = read_cohort(&cohort)?;
            let report = time_to_relapse_report(&events, &timelines, bucket_days)?;
            write_histogram(&out, &report)?;
            eprintln!(
                "binned {} event(s) into {} bucket(s) at {}",
                events.len(),
                report.overall.len(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let informational =
                matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let _ = e.print();
            return if informational {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Io { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
