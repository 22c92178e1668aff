pub mod cli;
pub mod correlation_kernels;
pub mod error;
pub mod field_simulator;
pub mod fredholm;
pub mod gibbs_ensemble;
pub mod path;
pub mod quadrature;
pub mod special_functions;
pub mod transition_kernels;
pub mod verification;

pub use error::{Error, Result};
pub use path::{Ordering, PathClass, PathPoint};
