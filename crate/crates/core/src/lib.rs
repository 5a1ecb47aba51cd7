//! A numerical laboratory for the viability of smooth domains under
//! path-dependent SDEs.
//!
//! The pieces, bottom to top:
//!
//! - [`paths`]: cadlag step paths with exact restriction / extension / bump /
//!   concatenation operations and the pair metric `d_infinity`.
//! - [`calculus`]: non-anticipative functionals with horizontal and vertical
//!   (Dupire) derivatives by finite differences, the path-functional
//!   generator, and a change-of-variable residual verifier.
//! - [`domains`]: compact smooth domains via oriented distance functions
//!   (balls, ellipsoids, inner level-set approximations) and the log barrier
//!   `Psi = -log g` built on them.
//! - [`sde`]: seeded Euler-Maruyama simulation where drift and diffusion see
//!   the entire past path, with quadratic-variation accounting, hitting
//!   times, and reproducible parallel ensembles.
//! - [`viability`]: the executable checks — the boundary tangency/generator
//!   condition on sampled boundary paths, Monte Carlo exit statistics, the
//!   Lyapunov bound scan, the stopped-supermartingale inequality, and the
//!   round-trip consistency verdict combining them.
//!
//! Everything is deterministic given seeds: randomness flows through
//! counter-based generators ([`rng`]) keyed by `(seed, stream, counter)`, so
//! results are bit-identical under any thread count.

pub mod calculus;
pub mod domains;
pub mod error;
pub mod paths;
pub mod rng;
pub mod sde;
pub mod stats;
pub mod viability;

pub use error::{CoreError, Result};
