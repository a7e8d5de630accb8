//! Concentration bounds for vector-valued Lipschitz functions, instantiated
//! for stationary-measure estimation of finite ergodic Markov chains, with
//! exact and Monte Carlo verification machinery.
//!
//! The crate is organized around five building blocks:
//!
//! - [`measures`]: finite probability measures, KL divergence, total
//!   variation, the nonstationarity index and ℓ_p norms.
//! - [`transport`]: exact L¹-Wasserstein distances and optimal couplings on
//!   finite metric spaces; brute-force transportation-cost-inequality checks.
//! - [`markov`]: finite ergodic chains, stationary measures, the Dobrushin
//!   coefficient, seeded simulation and the plug-in occupation estimator.
//! - [`bounds`]: the closed-form tail bounds and sample complexities.
//! - [`experiments`]: empirical tails versus bounds, complexity tables.
//!
//! The `conclab` binary exposes all of it behind reproducible, seeded
//! subcommands; see [`cli`].

pub mod bounds;
pub mod cli;
pub mod error;
pub mod experiments;
pub mod markov;
pub mod measures;
pub mod rng;
pub mod transport;

pub use error::{Error, Result};
