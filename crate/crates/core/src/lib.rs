//! Budget pacing with a single historical sample per period.
//!
//! The crate learns an empirical dual price and a per-period target
//! expenditure plan from one trace of requests, tracks that plan online with
//! dual Follow-The-Regularized-Leader, and measures the resulting regret
//! against exactly computed fluid and hindsight benchmarks.
//!
//! Module map:
//!
//! - [`model`]: requests, instance parameters, validated traces, the request metric
//! - [`oracle`]: profit-maximizing best response, the empirical dual objective,
//!   breakpoints and the brute-force dual minimizer
//! - [`traceplan`]: the linear-pass target-plan learner and its leave-one-out variant
//! - [`pacing`]: dual FTRL, the static learned-dual policy, the fixed-target baseline
//! - [`bench`]: FLUID, hindsight OPT, Wasserstein distances, regret reports
//! - [`sim`]: distribution families, seeded sampling, scenarios, Monte Carlo runs
//! - [`config`]: the scenario file format
//! - [`verify`]: the property suites behind `pacekit verify`

pub mod bench;
pub mod config;
pub mod csvio;
pub mod error;
pub mod model;
pub mod oracle;
pub mod pacing;
pub mod rng;
pub mod sim;
pub mod traceplan;
pub mod verify;

pub use error::{Error, Result};
pub use model::{request_distance, validate_instance, InstanceParams, Request, Trace};

/// Crate version, embedded in CSV provenance lines.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "PACEKIT_THREADS";

/// Size the global worker pool from `PACEKIT_THREADS`, if set. Must run
/// before any parallel work; later calls are no-ops.
pub fn init_thread_pool() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::InvalidParams(format!("{THREADS_ENV} must be a positive integer, got `{raw}`")))?;
    // an already initialized pool keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}
