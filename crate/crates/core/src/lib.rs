//! Riemannian-manifold Hamiltonian Monte Carlo with the soft-absolute
//! Hessian metric, for hierarchical reduced-rank Gaussian-process models.

pub mod error;
pub mod evidence;
pub mod metric;
pub mod model;
pub mod optim;
pub mod posterior;
pub mod sampler;

pub use error::{Error, Result};
pub use posterior::{Posterior, PosteriorState};
