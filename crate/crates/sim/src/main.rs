use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gfree_core::frame_design;
use gfree_sim::config::{ConfigError, Scenario};
use gfree_sim::frame_io::{self, Sidecar};
use gfree_sim::harness::{self, HarnessError, Prepared};
use gfree_sim::{report, table};

const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(name = "gfree", version, about = "Grant-free massive access simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Design a pilot frame and write it with a JSON sidecar.
    DesignPilots {
        /// Pilot length.
        #[arg(long)]
        j: usize,
        /// Number of users (frame columns).
        #[arg(long)]
        l: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Designer sweeps over all columns.
        #[arg(long, default_value_t = 20)]
        outer_iterations: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// One trial per configured power.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full sweep; resumes from rows already in `--out`.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a results CSV.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        /// Write the summary here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum Format {
    Csv,
    Table,
    Json,
}

struct Failure {
    code: u8,
    msg: String,
}

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure { code: EXIT_CONFIG, msg: e.to_string() }
}

fn harness_err(e: HarnessError) -> Failure {
    let code = if e.is_numeric() { EXIT_NUMERIC } else { EXIT_CONFIG };
    Failure { code, msg: e.to_string() }
}

fn core_err(e: gfree_core::Error) -> Failure {
    let code = if e.is_numeric() { EXIT_NUMERIC } else { EXIT_CONFIG };
    Failure { code, msg: e.to_string() }
}

fn design(j: usize, l: usize, seed: u64, outer_iterations: usize, out: PathBuf) -> Result<(), Failure> {
    let cfg = frame_design::CsidcoConfig {
        seed,
        outer_iterations,
        ..Default::default()
    };
    let d = frame_design::design_pilots(j, l, &cfg).map_err(core_err)?;
    frame_io::save_frame(&out, &d.frame).map_err(config_err)?;
    let side = Sidecar::of(&d.frame).map_err(core_err)?;
    let json = serde_json::to_string_pretty(&side).expect("sidecar serializes");
    let sp = frame_io::sidecar_path(&out);
    std::fs::write(&sp, json).map_err(|e| config_err(format!("{}: {e}", sp.display())))?;
    println!(
        "wrote {} ({}x{}, coherence {:.6}, welch bound {:.6})",
        out.display(),
        j,
        l,
        side.coherence,
        side.welch_bound
    );
    Ok(())
}

fn simulate(config: PathBuf, out: PathBuf, full: bool) -> Result<(), Failure> {
    let scenario = Scenario::load(&config).map_err(|e: ConfigError| config_err(e))?;
    let threads = harness::thread_count().map_err(harness_err)?;
    let p = Prepared::new(scenario).map_err(harness_err)?;
    let summary = if full {
        harness::run_sweep(&p, &out, threads)
    } else {
        harness::run_single(&p, &out, threads)
    }
    .map_err(harness_err)?;
    harness::write_provenance(&p, &out).map_err(|e| config_err(format!("{}: {e}", out.display())))?;
    eprintln!(
        "{} trials run, {} resumed, {} receiver failures; results in {}",
        summary.executed,
        summary.resumed,
        summary.failures,
        out.display()
    );
    if summary.rows.iter().any(table::Row::failed) {
        return Err(Failure {
            code: EXIT_NUMERIC,
            msg: "some receivers failed numerically; their rows have empty metrics".into(),
        });
    }
    Ok(())
}

fn show(input: PathBuf, out: Option<PathBuf>, format: Format) -> Result<(), Failure> {
    let rows = table::read_rows(&input).map_err(config_err)?;
    let groups = report::summarize(&rows);
    let text = match format {
        Format::Csv => report::render_csv(&groups),
        Format::Table => report::render(&groups),
        Format::Json => serde_json::to_string_pretty(&groups).expect("report serializes") + "\n",
    };
    match out {
        Some(p) => std::fs::write(&p, text).map_err(|e| config_err(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    let res = match cli.cmd {
        Command::DesignPilots {
            j,
            l,
            seed,
            outer_iterations,
            out,
        } => design(j, l, seed, outer_iterations, out),
        Command::Run { config, out } => simulate(config, out, false),
        Command::Sweep { config, out } => simulate(config, out, true),
        Command::Report { input, out, format } => show(input, out, format),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
