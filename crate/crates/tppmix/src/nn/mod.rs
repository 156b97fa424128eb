//! Minimal differentiable substrate: parameters, a recording graph for
//! reverse-mode gradients, dense and recurrent cells, a first-order
//! optimizer, a finite-difference oracle, and text checkpoints.

pub mod cell;
pub mod check;
pub mod checkpoint;
pub mod graph;
pub mod optim;
pub mod param;

pub use cell::{CellKind, CellState, Dense, RecurrentCell};
pub use check::finite_difference_check;
pub use graph::{sigmoid, softplus, softplus_inverse, Graph, Sc, Vc};
pub use optim::{optimizer_step, Method, OptimizerConfig};
pub use param::{GradStore, Init, ParamId, ParamSet, Parameter};
