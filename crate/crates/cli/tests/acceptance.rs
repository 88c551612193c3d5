//! Acceptance criteria 1–9, one line per criterion. Exits nonzero when a
//! gating criterion fails.

use hyperimm_cli::suites::{run_criterion, SuiteConfig};

fn main() {
    let cfg = SuiteConfig::default();
    println!("acceptance: seed {}, level {}", cfg.seed, cfg.level);
    let mut failed = Vec::new();
    for k in 1..=9 {
        let r = run_criterion(k, &cfg);
        println!("{}", r.summary_line());
        for c in &r.checks {
            println!("    {} {} = {:.4e} {} {:.4e}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.value, c.relation, c.bound);
        }
        for (name, v) in &r.diagnostics {
            println!("    note {name} = {v:.4e}");
        }
        if r.gating && !r.passed {
            failed.push(k);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all gating criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
