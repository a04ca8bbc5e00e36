//! Prints one PASS/FAIL line per acceptance criterion and exits nonzero on any failure.
//! Set `FNLSE_ACCEPTANCE_QUICK=1` to skip the slow critical-rotation sweep.

use fnlse::verify::criteria;

fn main() {
    let quick = std::env::var("FNLSE_ACCEPTANCE_QUICK").is_ok_and(|v| v == "1");
    let mut failed = 0;
    for c in criteria() {
        if quick && c.slow {
            println!("SKIP criterion {:>2} {}: slow, skipped by FNLSE_ACCEPTANCE_QUICK", c.id, c.title);
            continue;
        }
        let outcome = c.run();
        println!("{outcome}");
        if !outcome.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
