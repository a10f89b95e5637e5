//! Packing unit-diameter spheres in the n-torus with the relax-reflect-reflect
//! (RRR) algorithm and divide-and-concur constraint splitting.
//!
//! The crate is organized bottom-up:
//!
//! * [`torus`]: coset reduction, torus distance and the torus forms of the
//!   reflect and increment operations.
//! * [`projection`]: the pair-separation and weighted-concurrence projectors.
//! * [`rrr`]: the iteration itself, metric auto-tuning and the monotonicity
//!   monitor.
//! * [`model`]: instances, volumes, densities and Ball's bound.
//! * [`analysis`]: torus-restricted tangency volume, packing validation,
//!   binary-code detection, coordinate modulation and pair correlation.
//! * [`harness`]: multi-trial campaigns and difficulty estimation.
//! * [`io`]: packing, series, checkpoint and summary files.

pub mod analysis;
pub mod error;
pub mod harness;
pub mod io;
pub mod model;
pub mod projection;
pub mod rrr;
pub mod special;
pub mod torus;

pub use error::{Error, Result};
pub use model::{Packing, PackingInstance};
pub use rrr::{run_trial, RrrParams, TrialOutcome, TrialStatus};
pub use torus::{TorusConfig, TorusVector};
