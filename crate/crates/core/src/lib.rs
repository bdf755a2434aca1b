//! Concept discovery and cross-representation alignment for vision feature
//! spaces.
//!
//! Feature matrices are embedded with a neighbor embedding, clustered with a
//! hierarchical density method into soft concept memberships, and compared
//! across representations with concept-based alignment (CBA).

mod error;
mod par;

pub mod align;
pub mod analysis;
pub mod baselines;
pub mod density;
pub mod distance;
pub mod embed;
pub mod metrics;
pub mod pipeline;
pub mod repr;
pub mod rng;
pub mod synth;
pub mod validity;

pub use error::{Error, Result, StageContext};

/// Sets the global worker count. Has no effect without the `parallel` feature.
pub fn set_workers(n: usize) -> Result<()> {
    error::ensure!(n >= 1, "worker count must be >= 1");
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Validation(format!("worker pool: {e}")))?;
    Ok(())
}
