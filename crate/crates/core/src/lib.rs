//! Simulation and analysis toolkit for gravitationally mediated entanglement
//! between two path-superposed masses.
//!
//! The crate evolves the two-mass / field system under linearized quantum
//! gravity (a discrete gate model and the full multimode Hamiltonian), under
//! the rival classical-field theories, and computes the entanglement
//! diagnostics that discriminate between them.

pub mod analysis;
pub mod cli;
pub mod constants;
pub mod experiment;
pub mod fockspace;
pub mod gatemodel;
pub mod linearized;
pub mod numeric;
pub mod quadrature;
pub mod register;
pub mod rivals;

pub use constants::Constants;
pub use fockspace::{FockError, FockVector, ModeAmplitude, ModeOperator};
pub use gatemodel::{BranchState, GateParams};
pub use register::{PathLabel, TwoQubitDensity, TwoQubitOperator, TwoQubitState};
