//! Acceptance suite. Runs without the default harness so that every
//! criterion prints its verdict line even when it passes.

use std::process::ExitCode;

use tvstab::verify::{run_criterion, CRITERIA};
use tvstab::Seed;

const SEED: Seed = Seed(20_240_601);

fn main() -> ExitCode {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.trim_start_matches('C').parse().ok()).collect();
    let mut failures = 0;
    for (id, name) in CRITERIA {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        match run_criterion(id, SEED) {
            Ok(report) => {
                println!("{}", report.line());
                for m in &report.measurements {
                    println!(
                        "      {:<5} {}: {:.6} (ci {:.6}, bound {:.6})",
                        if m.pass { "ok" } else { "FAIL" },
                        m.quantity,
                        m.estimate,
                        m.ci,
                        m.bound
                    );
                }
                failures += !report.pass as usize;
            }
            Err(e) => {
                println!("[FAIL] C{id:<2} {name}: error {e}");
                failures += 1;
            }
        }
    }
    println!("acceptance: {failures} failing criteria");
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
