//! Runs every acceptance criterion and prints one PASS/FAIL line each.
//! Exits nonzero when any criterion fails.

use std::path::Path;
use std::process::ExitCode;

use ideal_cli::acceptance;

fn main() -> ExitCode {
    let bin = Path::new(env!("CARGO_BIN_EXE_ideal"));
    let ids: Vec<u8> = match std::env::var("IDEAL_ACCEPTANCE_ONLY") {
        Ok(list) => list.split(',').filter_map(|t| t.trim().parse().ok()).collect(),
        Err(_) => acceptance::ALL.to_vec(),
    };
    let outcomes = acceptance::run(&ids, Some(bin), |o| println!("{}", o.line()));
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    let total: f64 = outcomes.iter().map(|o| o.seconds).sum();
    println!("acceptance: {} passed, {} failed, {:.1}s", outcomes.len() - failed, failed, total);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
