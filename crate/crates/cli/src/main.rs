use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mcac_core::acceptance::{self, AcceptanceOptions, Status};
use mcac_core::env::ServiceAssignment;
use mcac_core::experiment::{run_experiment, summarize, write_outputs, ExperimentConfig};
use mcac_core::movielens::{self, FixtureSpec, ParseMode};
use mcac_core::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_ACCEPTANCE: u8 = 3;

/// Context-aware proactive caching experiments.
#[derive(Parser)]
#[command(name = "mcac", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write series.csv and summary.json.
    Run(RunArgs),
    /// Parse MovieLens 1M files and export the hourly trace as CSV.
    Ingest(IngestArgs),
    /// Run the acceptance suite.
    Check(CheckArgs),
    /// Write a small MovieLens-format dataset for trying the pipeline.
    Fixture(FixtureArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML experiment config.
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, short, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Cache sizes, overriding `cache_sizes`.
    #[arg(long, value_delimiter = ',')]
    m: Vec<usize>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Policies, overriding `policies`.
    #[arg(long, value_delimiter = ',')]
    policy: Vec<String>,
    /// Replay the first run of every group and fail on any difference.
    #[arg(long)]
    verify: bool,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long)]
    users: PathBuf,
    /// CSV destination; only statistics are printed without it.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Skip malformed lines instead of aborting.
    #[arg(long)]
    lenient: bool,
    #[arg(long, default_value_t = movielens::HOURS_PER_YEAR)]
    horizon: u64,
    #[arg(long, default_value_t = movielens::SLOT_SECONDS)]
    slot_seconds: u64,
    /// Fraction of users given service type 1.
    #[arg(long, default_value_t = 0.0)]
    priority_fraction: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct CheckArgs {
    /// Directory with ratings.dat and users.dat; defaults to $MCAC_MOVIELENS_DIR.
    #[arg(long)]
    movielens_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Criteria to run, e.g. `1,3,10`; all by default.
    #[arg(long, value_delimiter = ',')]
    only: Vec<u8>,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    users: u32,
    #[arg(long, default_value_t = 800)]
    movies: u32,
    #[arg(long, default_value_t = 50_000)]
    ratings: usize,
    #[arg(long, default_value_t = 400)]
    days: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn exit_code(e: &Error) -> u8 {
    if e.is_data_error() {
        EXIT_DATA
    } else {
        EXIT_CONFIG
    }
}

fn run(args: RunArgs) -> Result<(), Error> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if !args.m.is_empty() {
        cfg.cache_sizes = args.m;
    }
    if !args.policy.is_empty() {
        cfg.policies = args.policy;
    }
    cfg.runs = args.runs.unwrap_or(cfg.runs);
    cfg.seed = args.seed.unwrap_or(cfg.seed);
    cfg.verify |= args.verify;
    cfg.validate()?;
    let result = run_experiment(&cfg, args.workers)?;
    write_outputs(&result, &args.out)?;
    for g in summarize(&result).groups {
        let o = g.overlap.map(|o| format!(" o={o}")).unwrap_or_default();
        let ratio = g
            .mcac_ratio
            .map(|r| format!(" mcac/x={r:.3}"))
            .unwrap_or_default();
        println!(
            "{:<18} m={:<4}{o} hits={:.1} weighted={:.1} efficiency={:.2}%{ratio}",
            g.policy.as_str(),
            g.m,
            g.cum_hits.mean,
            g.cum_weighted_hits.mean,
            g.efficiency.mean
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn ingest(args: IngestArgs) -> Result<(), Error> {
    let mode = if args.lenient {
        ParseMode::Lenient
    } else {
        ParseMode::Strict
    };
    let data = movielens::parse(&args.ratings, &args.users, mode)?;
    for d in &data.diagnostics {
        eprintln!("{}:{}: {}", d.path.display(), d.line, d.message);
    }
    let built = movielens::build_trace(
        &data.events,
        &data.profiles,
        args.slot_seconds,
        args.horizon,
    )?;
    println!("events: {}", data.events.len());
    println!("users: {}", data.profiles.len());
    println!("skipped lines: {}", data.diagnostics.len());
    println!("library size: {}", built.trace.library_size);
    println!(
        "retained: {} of {} ({:.4})",
        built.retained_events,
        built.total_events,
        built.retained_fraction()
    );
    if let Some(out) = args.out {
        let services = ServiceAssignment {
            priority_fraction: args.priority_fraction,
            seed: args.seed,
        };
        let file = File::create(&out).map_err(|e| Error::Io {
            path: out.clone(),
            source: e,
        })?;
        movielens::export_csv(&built.trace, services, &mut BufWriter::new(file))?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn check(args: CheckArgs) -> u8 {
    let mut opts = AcceptanceOptions::from_env();
    if args.movielens_dir.is_some() {
        opts.movielens_dir = args.movielens_dir;
    }
    opts.workers = args.workers;
    let wanted = |id: u8| args.only.is_empty() || args.only.contains(&id);
    let checks: [(u8, &dyn Fn() -> acceptance::Outcome); 10] = [
        (1, &acceptance::criterion_1),
        (2, &|| acceptance::criterion_2(&opts)),
        (3, &|| acceptance::criterion_3(&opts)),
        (4, &|| acceptance::criterion_4(&opts)),
        (5, &|| acceptance::criterion_5(&opts)),
        (6, &|| acceptance::criterion_6(&opts)),
        (7, &|| acceptance::criterion_7(&opts)),
        (8, &|| acceptance::criterion_8(&opts)),
        (9, &|| acceptance::criterion_9(&opts)),
        (10, &|| acceptance::criterion_10(&opts)),
    ];
    let mut failed = false;
    for (id, f) in checks.iter().filter(|(id, _)| wanted(*id)) {
        let outcome = f();
        debug_assert_eq!(outcome.id, *id);
        println!("{outcome}");
        failed |= outcome.status == Status::Fail;
    }
    if failed {
        EXIT_ACCEPTANCE
    } else {
        0
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Ingest(a) => ingest(a),
        Command::Check(a) => return ExitCode::from(check(a)),
        Command::Fixture(a) => movielens::write_fixture(
            &a.out,
            FixtureSpec {
                users: a.users,
                movies: a.movies,
                ratings: a.ratings,
                days: a.days,
            },
            a.seed,
        )
        .map(|_| println!("wrote {}", a.out.display())),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
