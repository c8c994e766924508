//! Truncated heavy-tailed jump kernels, iterated convolutions, and
//! semigroup evaluation on grids.
//!
//! The library discretizes jump intensities dominated by a rotation
//! invariant envelope `M phi(|y - x|) |y - x|^(-alpha - d)`, truncates jumps
//! shorter than a radius `eps`, and evaluates the resulting conservative
//! semigroup by uniformization. Every iterated kernel level carries an
//! exact escaped-mass ledger, so conservation is checked rather than
//! assumed. On top of the evaluator sit assumption checkers, envelope-bound
//! verifiers, a Monte Carlo path sampler for cross-validation, and a
//! parameter sweep over profile families.
//!
//! All numeric code is generic over the scalar type through [`Real`]
//! (implemented for `f32` and `f64`); the type aliases at the crate root
//! fix `f64`, which is what the command line tool and the test suite use.

pub mod assumptions;
pub mod bounds;
pub mod config;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod generator;
pub mod grid;
pub mod kernel;
pub mod profile;
pub mod quad;
pub mod report;
pub mod scalar;
pub mod sim;
pub mod sweep;

pub use assumptions::Verdict;
pub use error::{Error, Result};
pub use scalar::Real;

/// Decay profile with `f64` scalars.
pub type Profile = profile::PhiProfile<f64>;
/// Model parameters with `f64` scalars.
pub type Params = kernel::ModelParams<f64>;
/// Jump kernel with `f64` scalars.
pub type Kernel = kernel::JumpKernel<f64>;
/// Lattice with `f64` scalars.
pub type Lattice = grid::Grid<f64>;
/// Discretized kernel with `f64` scalars.
pub type LatticeKernel = engine::GridKernel<f64>;
/// Iterated kernel levels with `f64` scalars.
pub type Levels = engine::IteratedKernels<f64>;
/// Quadrature controls with `f64` scalars.
pub type QuadSpec = quad::QuadratureSpec<f64>;
/// Smooth compactly supported probe with `f64` scalars.
pub type Probe = generator::TestFunction<f64>;
