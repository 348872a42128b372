//! Acceptance suite: one status line per criterion, details indented below.
//! Exits nonzero if any criterion fails.

use std::io::Write;
use std::process::ExitCode;

use tmdcorr::selftest::{run_criterion, CRITERIA};

fn main() -> ExitCode {
    let mut failed = Vec::new();
    for id in CRITERIA {
        let c = run_criterion(id).expect("known criterion");
        print!("{}", c.render());
        std::io::stdout().flush().ok();
        if !c.passed {
            failed.push(id);
        }
    }
    println!();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", CRITERIA.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} of {} criteria failed: {failed:?}", failed.len(), CRITERIA.len());
        ExitCode::FAILURE
    }
}
