//! Dense 2-D tensors with tape-based reverse-mode gradients.
//!
//! A [`Graph`] is built fresh for each forward pass. Parameters live in a
//! [`ParamStore`] outside the graph; [`Graph::param`] copies a parameter onto
//! the tape and [`Gradients::accumulate_into`] adds the resulting gradients
//! back into the store.

mod gradcheck;
mod graph;
mod lstm;
mod params;
mod scalar;
mod tensor;

pub use gradcheck::{grad_check, grad_check_params, relative_error, GradCheckReport};
pub use graph::{token_nll, Axis, Gradients, Graph, Var};
pub use lstm::{lstm_cell, lstm_step, LstmWeights};
pub use params::{ParamId, ParamStore, Parameter};
pub use scalar::Scalar;
pub use tensor::Tensor;
