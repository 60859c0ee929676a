//! `isocheck` command-line interface.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use isocheck::checker::{check_consistency_with, CheckOptions, SearchOptions};
use isocheck::io::{read_history, to_pretty_json, witness_report, Report, ReportStatus, WitnessReport};
use isocheck::opsem::{random_program, run_to_history, IsoMix, ProgramShape};
use isocheck::oracle::{brute_force_check, OracleBudget, OracleError};
use isocheck::sample::drop_rejected_edges;
use isocheck::Status;

const EXIT_INCONSISTENT: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_UNKNOWN: u8 = 3;
const EXIT_ORACLE_DISAGREES: u8 = 4;

#[derive(Parser)]
#[command(name = "isocheck", version)]
#[command(about = "Check transactional histories against per-transaction isolation levels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand)]
enum Command {
    /// Check history files. Exit status: 0 all consistent, 1 some
    /// inconsistent, 2 unreadable input, 3 some unknown, 4 the oracle
    /// disagrees.
    Check {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Also run the brute-force oracle and compare verdicts.
        #[arg(long)]
        oracle: bool,
        /// Give up (status unknown) after this many extensions.
        #[arg(long)]
        max_extensions: Option<u64>,
        /// Give up (status unknown) after exploring this many prefixes per
        /// extension.
        #[arg(long)]
        max_prefixes: Option<u64>,
        /// Files checked in parallel.
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
        jobs: u16,
        /// Include elapsed time in reports.
        #[arg(long)]
        stats: bool,
        /// Also write one pretty report per file into this directory.
        #[arg(long)]
        report_dir: Option<PathBuf>,
    },
    /// Generate histories by running random programs.
    Generate {
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        sessions: u32,
        /// Transactions per session.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        txns: u32,
        #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
        keys: u32,
        /// Weighted isolation levels, e.g. `SER:1,SI:1,RC:3`.
        #[arg(long, default_value = "SER:1,SI:1,RC:1")]
        iso: IsoMix,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
        count: u32,
        /// Share of instructions that are selects.
        #[arg(long, default_value_t = 0.4)]
        read_ratio: f64,
        /// Drop wr edges whose value the read rejects, yielding client
        /// histories.
        #[arg(long)]
        client: bool,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Decide a history by exhaustive search. Exit status: 0 consistent,
    /// 1 inconsistent, 2 unreadable input, 3 too large.
    Oracle { path: PathBuf },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ISOCHECK_LOG", "warn")).init();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Check { paths, format, oracle, max_extensions, max_prefixes, jobs, stats, report_dir } => {
            let options = CheckOptions { max_extensions, search: SearchOptions { use_seen: true, max_prefixes } };
            cmd_check(&paths, format, oracle, &options, jobs.into(), stats, report_dir.as_deref())
        }
        Command::Generate { sessions, txns, keys, iso, seed, count, read_ratio, client, output } => {
            let mut shape = ProgramShape::new(sessions as usize, txns as usize, keys as usize, iso);
            shape.read_ratio = read_ratio.clamp(0.0, 1.0);
            cmd_generate(&shape, seed, count, client, &output)
        }
        Command::Oracle { path } => cmd_oracle(&path),
    };
    ExitCode::from(code)
}

fn check_file(path: &Path, oracle: bool, options: &CheckOptions, stats: bool) -> Report {
    let name = path.display().to_string();
    let h = match read_history(path) {
        Ok(h) => h,
        Err(e) => return Report::from_error(&name, &e),
    };
    let verdict = check_consistency_with(&h, options);
    log::info!("{name}: {:?}", verdict.status);
    let report = Report::from_verdict(&name, &h, &verdict, stats);
    if !oracle {
        return report;
    }
    match brute_force_check(&h, &OracleBudget::default()) {
        Ok(o) => report.with_oracle(&o),
        Err(e) => {
            log::warn!("{name}: oracle skipped: {e}");
            report
        }
    }
}

fn cmd_check(
    paths: &[PathBuf],
    format: Format,
    oracle: bool,
    options: &CheckOptions,
    jobs: usize,
    stats: bool,
    report_dir: Option<&Path>,
) -> u8 {
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let reports: Vec<Report> =
        pool.install(|| paths.par_iter().map(|p| check_file(p, oracle, options, stats)).collect());

    let mut stdout = std::io::stdout().lock();
    for r in &reports {
        let text = match format {
            Format::Json => r.to_json_line() + "\n",
            Format::Text => r.to_text(),
        };
        let _ = stdout.write_all(text.as_bytes());
        if let Some(e) = &r.error {
            eprintln!("error: {}: {e}", r.file);
        }
    }
    if let Some(dir) = report_dir {
        for (path, r) in paths.iter().zip(&reports) {
            let stem = path.file_stem().map_or("report".into(), |s| s.to_string_lossy().into_owned());
            if let Err(e) = write_atomically(dir, &format!("{stem}.report.json"), &to_pretty_json(r)) {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        }
    }

    let any = |s: ReportStatus| reports.iter().any(|r| r.status == s);
    if any(ReportStatus::Error) {
        EXIT_USAGE
    } else if reports.iter().any(|r| r.oracle.as_ref().is_some_and(|o| !o.agrees)) {
        EXIT_ORACLE_DISAGREES
    } else if any(ReportStatus::Inconsistent) {
        EXIT_INCONSISTENT
    } else if any(ReportStatus::Unknown) {
        EXIT_UNKNOWN
    } else {
        0
    }
}

/// Writes `contents` to `dir/name` through a temporary file in `dir`.
fn write_atomically(dir: &Path, name: &str, contents: &str) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.persist(dir.join(name)).map_err(|e| e.error)?;
    Ok(())
}

fn cmd_generate(shape: &ProgramShape, seed: u64, count: u32, client: bool, output: &Path) -> u8 {
    for i in 0..count {
        let run_seed = seed.wrapping_add(i as u64);
        let program = random_program(shape, run_seed);
        let out = match run_to_history(&program, run_seed) {
            Ok(out) => out,
            Err(e) => {
                eprintln!("error: seed {run_seed}: {e}");
                return EXIT_USAGE;
            }
        };
        let raw = if client {
            let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
            drop_rejected_edges(&out.history, 0.5, &mut rng).to_raw()
        } else {
            out.raw
        };
        let name = format!("history-{run_seed}.json");
        if let Err(e) = write_atomically(output, &name, &to_pretty_json(&raw)) {
            eprintln!("error: cannot write {}: {e}", output.join(&name).display());
            return EXIT_USAGE;
        }
        log::info!("wrote {name} after {} schedule(s)", out.attempts);
    }
    0
}

#[derive(serde::Serialize)]
struct OracleOutput {
    file: String,
    status: ReportStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    witness: Option<WitnessReport>,
    witnesses_tried: u64,
    orders_tried: u64,
}

fn cmd_oracle(path: &Path) -> u8 {
    let h = match read_history(path) {
        Ok(h) => h,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return EXIT_USAGE;
        }
    };
    match brute_force_check(&h, &OracleBudget::default()) {
        Ok(v) => {
            let out = OracleOutput {
                file: path.display().to_string(),
                status: v.status.into(),
                witness: v.witness.as_ref().map(|w| witness_report(&h, w)),
                witnesses_tried: v.witnesses_tried,
                orders_tried: v.orders_tried,
            };
            println!("{}", serde_json::to_string(&out).expect("serializable"));
            if v.status == Status::Consistent {
                0
            } else {
                EXIT_INCONSISTENT
            }
        }
        Err(e @ OracleError::TooLarge(_)) => {
            eprintln!("error: {}: {e}", path.display());
            EXIT_UNKNOWN
        }
    }
}
