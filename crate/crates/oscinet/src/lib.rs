//! Workbench for learning high-frequency operators with multi-scale
//! branch-trunk networks.
//!
//! The crate covers the full loop: dataset generation (a closed-form
//! oscillatory mapping and a 1-D scattering solver based on a volume
//! integral equation), float64 training with reverse-mode autodiff, and
//! spectral diagnostics that quantify how much high-frequency residual a
//! trained model leaves behind.

pub mod config;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod nets;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};

// `Complex64` appears in public signatures (scattered fields, kernels).
pub use num_complex::Complex64;

use std::sync::OnceLock;

/// Maximum internal parallelism.
///
/// Read once from `OSCINET_THREADS`; `0` (and `1`) select deterministic
/// single-thread mode, unset defaults to the available cores. Every parallel
/// code path in the crate is written so results are bit-identical for any
/// thread count; the cap only bounds resource use.
pub fn threads() -> usize {
    static THREADS: OnceLock<usize> = OnceLock::new();
    *THREADS.get_or_init(|| {
        match std::env::var("OSCINET_THREADS") {
            Ok(v) => match v.trim().parse::<usize>() {
                Ok(0) | Err(_) => 1,
                Ok(n) => n,
            },
            Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    })
}

/// Shared rayon pool sized by [`threads`].
pub(crate) fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads())
            .build()
            .expect("failed to build thread pool")
    })
}
