//! Zero-range processes on arbitrary finite geometries.
//!
//! A zero-range process `zrp(P, r, m)` moves `m` particles on `n` sites: site
//! `x` holding `k` particles expels one at rate `r(x, k)`, which then jumps to
//! `y` with probability `P(x, y)`. This crate builds these processes exactly
//! (state space, generator, product-form stationary law), evaluates their
//! Dirichlet forms, Poincaré constants and comparison constants, evaluates the
//! closed-form bounds relating them to the single-particle chain `P`, computes
//! small-scale mixing times, and simulates larger systems.

pub mod bounds;
pub mod configspace;
pub mod error;
pub mod file;
pub mod forms;
pub mod instances;
pub mod mixing;
pub mod model;
pub mod simulate;
pub mod spectral;

pub use configspace::{neighbors, state_count, Config, ConfigIndex, ConfigSpace};
pub use error::{Result, ZrpError};
pub use model::{mean_field, JumpMatrix, Measure, RateSpec, ZrpModel};

/// Size limits for exact computations.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budget {
    /// Largest |Ω| for which the generator and μ are assembled.
    pub exact_states: usize,
    /// Largest |Ω| solved with a dense eigensolver; above this an iterative solver is used.
    pub dense_states: usize,
    /// Largest |Ω| for which dense transition kernels are formed.
    pub kernel_states: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget {
            exact_states: 200_000,
            dense_states: 4000,
            kernel_states: 3000,
        }
    }
}
