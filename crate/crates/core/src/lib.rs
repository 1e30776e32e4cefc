//! Physics-informed networks with a learned Koopman generator: derivative
//! kernels, benchmark systems, reference solvers, training and metrics.

pub mod autodiff;
pub mod evaluation;
pub mod linalg;
pub mod model;
pub mod reference;
pub mod systems;
pub mod training;
