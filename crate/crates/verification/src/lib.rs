//! Runner for the acceptance suite: each criterion is a named check that
//! yields a one-line verdict.

use std::panic::{self, AssertUnwindSafe};
use std::time::Instant;

/// Outcome of one criterion: whether it holds and the measured values.
#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict { pass, detail: detail.into() }
    }
}

pub type Check = Box<dyn FnOnce() -> Verdict>;

/// Runs `checks` in order, printing `ACCEPTANCE <id> PASS|FAIL <seconds>s <detail>`
/// per check. A panicking check counts as a failure. Returns the number of
/// failures.
pub fn run_all(checks: Vec<(&str, Check)>) -> usize {
    let mut failures = 0;
    for (id, check) in checks {
        let started = Instant::now();
        let verdict = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Verdict::new(false, format!("panicked: {msg}"))
        });
        if !verdict.pass {
            failures += 1;
        }
        println!(
            "ACCEPTANCE {id} {} {:.1}s {}",
            if verdict.pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64(),
            verdict.detail
        );
    }
    failures
}
