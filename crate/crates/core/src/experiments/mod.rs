//! Experiment drivers, configuration, and result persistence.

pub mod bounds;
pub mod config;
pub mod output;
pub mod plot;
pub mod scan;
pub mod stats;
pub mod tails;
pub mod verify;

use num_complex::Complex64 as c64;

use crate::error::{Error, Result};
use crate::lattice::LatticeSpec;
use crate::perturb::{CutoffProfile, CutoffSpec};

pub use config::Threads;

/// The configured cutoff, revalidated, or the default derived from `β`.
pub fn resolve_cutoff(spec: &LatticeSpec, beta: c64, configured: Option<CutoffSpec>) -> Result<CutoffSpec> {
    match configured {
        Some(c) => CutoffSpec::new(c.plateau_radius, c.support_radius, c.profile),
        None => CutoffSpec::tbg_default(spec, beta, CutoffProfile::HardIndicator),
    }
}

/// Runs `f` on a pool of `threads` workers. Dense kernels stay
/// single-threaded so results do not depend on the worker count.
pub fn with_pool<T: Send>(threads: Threads, f: impl FnOnce() -> T + Send) -> Result<T> {
    faer::set_global_parallelism(faer::Par::Seq);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.resolve())
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
