//! In-house optimization kernels: a limited-memory BFGS descent for the
//! discrete action and a golden-section search for one-dimensional
//! bracketed minimization.

mod golden;
mod lbfgs;

pub use golden::golden_section_minimize;
pub use lbfgs::{lbfgs_minimize, LbfgsOpts, LbfgsOutcome, LbfgsResult};
