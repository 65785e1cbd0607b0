//! One line per acceptance criterion; fails if any criterion fails.
//! Criteria that need MovieLens 1M read it from `MCAC_MOVIELENS_DIR`.

use std::process::ExitCode;

use mcac_core::acceptance::{run_all, AcceptanceOptions, Status};

fn main() -> ExitCode {
    // `cargo test -- --list` and filters are not meaningful here.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let outcomes = run_all(&AcceptanceOptions::from_env());
    println!();
    for o in &outcomes {
        println!("{o}");
    }
    let failed = outcomes.iter().filter(|o| o.status == Status::Fail).count();
    let skipped = outcomes.iter().filter(|o| o.status == Status::Skipped).count();
    println!(
        "\nacceptance: {} passed, {failed} failed, {skipped} skipped\n",
        outcomes.len() - failed - skipped
    );
    if failed > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
