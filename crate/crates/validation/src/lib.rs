//! Pass/fail bookkeeping for the acceptance suite.
//!
//! Each criterion runs as a closure returning a verdict and a one-line
//! measurement. A criterion also fails if it exceeds its runtime budget or
//! panics. The suite prints one line per criterion and a final tally.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Option<Duration>,
}

impl Outcome {
    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        let timing = match self.budget {
            Some(b) => format!("{:.2} s of {} s", self.elapsed.as_secs_f64(), b.as_secs()),
            None => format!("{:.2} s", self.elapsed.as_secs_f64()),
        };
        format!("{verdict} [{:>2}] {} ({timing}): {}", self.id, self.name, self.detail)
    }
}

#[derive(Debug, Default)]
pub struct Suite {
    pub outcomes: Vec<Outcome>,
}

impl Suite {
    pub fn new() -> Self {
        Self::default()
    }

    /// Runs one criterion, prints its line and records the outcome.
    pub fn check(
        &mut self,
        id: usize,
        name: &'static str,
        budget: Option<Duration>,
        f: impl FnOnce() -> (bool, String),
    ) {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f));
        let elapsed = start.elapsed();
        let (mut passed, mut detail) = match result {
            Ok(v) => v,
            Err(payload) => {
                let msg = payload
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| payload.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_else(|| "unknown panic".into());
                (false, format!("panicked: {msg}"))
            }
        };
        if let Some(b) = budget {
            if elapsed > b {
                passed = false;
                detail.push_str("; over runtime budget");
            }
        }
        let outcome = Outcome { id, name, passed, detail, elapsed, budget };
        println!("{}", outcome.line());
        self.outcomes.push(outcome);
    }

    pub fn failures(&self) -> Vec<&Outcome> {
        self.outcomes.iter().filter(|o| !o.passed).collect()
    }

    pub fn tally(&self) -> String {
        let failed = self.failures();
        let ids: Vec<String> = failed.iter().map(|o| o.id.to_string()).collect();
        format!(
            "acceptance: {} passed, {} failed{}",
            self.outcomes.len() - failed.len(),
            failed.len(),
            if ids.is_empty() { String::new() } else { format!(" (criteria {})", ids.join(", ")) }
        )
    }
}
