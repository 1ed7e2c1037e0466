//! Scenario harness around the social-trust solvers.

pub mod abm;
pub mod error;
pub mod plot;
pub mod reproduce;
pub mod run;
pub mod scenario;
pub mod table;

pub use error::{HarnessError, Result};
pub use run::{execute, run_scenario, ResultBundle};
pub use scenario::{Overrides, Scenario};
