//! File formats, corpus tooling and pipeline driver for the two-stage speech
//! emotion recognizer in `cascade-ser-core`.
//!
//! * [`wav`]: 16-bit PCM WAV reading and writing.
//! * [`manifest`]: JSON Lines corpus manifests.
//! * [`features`]: corpus featurization and the binary feature cache.
//! * [`models`]: versioned JSON model documents and system directories.
//! * [`pipeline`]: parallel training, recognition and evaluation reports.
//! * [`commands`]: the operations behind each CLI subcommand.

pub mod commands;
pub mod config;
mod error;
pub mod features;
pub mod manifest;
pub mod models;
pub mod pipeline;
pub mod wav;

pub use config::RunConfig;
pub use error::{Error, Result};

/// Runs `f` on a rayon pool with `jobs` threads (0 = one per core).
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {jobs} worker threads: {e}")))?;
    Ok(pool.install(f))
}
