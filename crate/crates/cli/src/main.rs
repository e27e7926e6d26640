use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use canvault_core::error::{ConfigError, ScenarioError};
use canvault_core::group::GroupId;
use canvault_core::harness::{
    comparison_csv, comparison_table, run_scenario, ParamFile, ScenarioConfig,
};
use clap::{Parser, Subcommand};

const EXIT_CONFIG: u8 = 2;
const EXIT_ASSERTION: u8 = 3;
const SEED_ENV: &str = "CANVAULT_SEED";

#[derive(Parser)]
#[command(
    name = "canvault",
    version,
    about = "Simulate CAN-FD group key establishment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write report.json.
    Run {
        config: PathBuf,
        /// Write the frame trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Directory for report.json.
        #[arg(short = 'o', long = "out-dir", default_value = ".")]
        out_dir: PathBuf,
    },
    /// Print message counts of the three schemes as CSV.
    Compare {
        #[arg(required = true, value_name = "N")]
        sizes: Vec<u64>,
    },
    /// Generate a provisioning file with N keypairs.
    Keygen {
        group: String,
        n: u16,
        /// Output file; standard output when absent.
        #[arg(short = 'o', long)]
        output: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

enum Failure {
    Config(String),
    Assertion(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn env_seed() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::Config(format!("{SEED_ENV}={s} is not a 64-bit integer"))),
        Err(_) => Ok(None),
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|source| {
        ConfigError::Io {
            path: path.display().to_string(),
            source,
        }
        .into()
    })
}

fn cmd_run(config: &Path, trace: Option<&Path>, out_dir: &Path) -> Result<(), Failure> {
    let mut cfg = ScenarioConfig::load(config)?;
    if let Some(seed) = env_seed()? {
        cfg.rng_seed = seed;
    }
    let base = config.parent().unwrap_or(Path::new("."));
    let run = run_scenario(&cfg, base).map_err(|e| match e {
        ScenarioError::Config(c) => Failure::Config(c.to_string()),
        ScenarioError::Sim(s) => Failure::Assertion(s.to_string()),
    })?;

    fs::create_dir_all(out_dir).map_err(|source| ConfigError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let report_path = out_dir.join("report.json");
    write(&report_path, &run.report.to_json())?;
    if let Some(t) = trace {
        write(t, &run.trace_csv())?;
    }

    let r = &run.report;
    println!(
        "{} N={} seed={}: {} messages ({} expected), {} frames, {} rejections",
        r.scenario.group,
        r.scenario.n_ecus,
        r.scenario.rng_seed,
        r.sim.logical_messages,
        r.expected_messages,
        r.sim.frames,
        r.sim.rejections.len()
    );
    for p in &r.sim.phases {
        println!(
            "  phase {}: {:.3} ms",
            p.phase,
            p.elapsed_us as f64 / 1000.0
        );
    }
    for c in &r.checks {
        let tag = match (c.passed, c.required) {
            (true, _) => "ok",
            (false, true) => "FAIL",
            (false, false) => "note",
        };
        println!("  [{tag}] {}: {}", c.name, c.detail);
    }
    println!("report written to {}", report_path.display());
    if r.passed {
        Ok(())
    } else {
        Err(Failure::Assertion(
            "one or more required checks failed".into(),
        ))
    }
}

fn cmd_compare(sizes: &[u64]) -> Result<(), Failure> {
    let rows = comparison_table(sizes).map_err(|e| Failure::Config(e.to_string()))?;
    print!("{}", comparison_csv(&rows));
    Ok(())
}

fn cmd_keygen(
    group: &str,
    n: u16,
    output: Option<&Path>,
    seed: Option<u64>,
) -> Result<(), Failure> {
    let group = group
        .parse::<GroupId>()
        .map_err(|e| Failure::Config(e.to_string()))?;
    if n == 0 {
        return Err(Failure::Config("n must be at least 1".into()));
    }
    let seed = match seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    // same key stream as an inline run with this seed
    let mut rng = ScenarioConfig::new(group, n, seed).keygen_rng();
    let file = ParamFile::generate(group, n, &mut rng);
    match output {
        Some(p) => {
            write(p, &file.to_json())?;
            eprintln!("{n} {group} keypairs written to {}", p.display());
        }
        None => println!("{}", file.to_json()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run {
            config,
            trace,
            out_dir,
        } => cmd_run(config, trace.as_deref(), out_dir),
        Command::Compare { sizes } => cmd_compare(sizes),
        Command::Keygen {
            group,
            n,
            output,
            seed,
        } => cmd_keygen(group, *n, output.as_deref(), *seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Assertion(m)) => {
            eprintln!("assertion failed: {m}");
            ExitCode::from(EXIT_ASSERTION)
        }
    }
}
