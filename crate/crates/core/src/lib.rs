//! Differentiable quantum-circuit transforms.
//!
//! Circuits are recorded as [`Tape`]s whose gate parameters are [`Expr`]
//! graphs over a flat input vector. Transforms map tapes to tapes (or to a
//! batch of tapes plus a classical post-processing step) without ever
//! breaking the link between gate parameters and inputs, so gradients of
//! transformed circuits are always available.
//!
//! ```text
//!   inputs ──► Expr params ──► Tape ──► transforms ──► Tape(s) ──► Device
//!                                          │                         │
//!                                          └── post-processing ◄─────┘
//! ```
//!
//! Modules:
//! - [`expr`]: scalar expression graph with reverse-mode derivatives
//! - [`ir`]: gates, observables, measurements and tapes
//! - [`sim`]: statevector / density-matrix execution with shot sampling
//! - [`transform`]: single and batch transforms, composition, Hamiltonian expansion
//! - [`gradients`]: parameter-shift and finite-difference batch transforms
//! - [`compile`]: peephole passes and pipelines
//! - [`mitigation`]: noise insertion, unitary folding, ZNE and noise learning

pub mod compile;
pub mod expr;
pub mod gradients;
pub mod ir;
pub mod mitigation;
pub mod sim;
pub mod transform;

use thiserror::Error;

pub use expr::{Expr, ExprError, ExprKind};
pub use ir::{GateKind, Hamiltonian, IrError, Measurement, Operation, Pauli, PauliWord, Tape};
pub use sim::{Backend, Device, Executor, Shots, SimError};
pub use transform::{BatchResult, BatchTransform, Postprocess, SingleTransform};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Ir(#[from] IrError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no shift rule for trainable {gate} parameter (operation {op_index})")]
    UnsupportedRule { gate: GateKind, op_index: usize },
    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
