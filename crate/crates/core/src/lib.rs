// Copyright 2026 qsens Contributors
// SPDX-License-Identifier: Apache-2.0

//! Differential sensitivity, worst-case uncertainty structures and
//! performance certificates for piecewise-constant quantum gate controls.
//!
//! The crate is organised bottom-up:
//!
//! - [`linalg`]: Hermitian exponentials, the coupling (Fréchet derivative)
//!   integral, norms and trace forms.
//! - [`system`]: control systems, propagation and gate fidelity.
//! - [`uncertainty`]: normalized Hermitian uncertainty structures.
//! - [`sensitivity`]: ζ, the Z/Γ decomposition and the bounds B1, B2, B3.
//! - [`certification`]: certified perturbation margins and δ sweeps.
//! - [`synthesis`]: exact-gradient pulse optimization.
//! - [`case_study`]: the three-spin Heisenberg chain and Haar targets.

pub mod case_study;
pub mod certification;
pub mod error;
pub mod linalg;
pub mod optimize;
pub mod parallel;
pub mod sensitivity;
pub mod synthesis;
pub mod system;
pub mod uncertainty;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, CouplingMethod, HermitianMatrix, UnitaryMatrix};
pub use system::{ControlSystem, FidelityValue, PropagationResult, PulseSequence};
pub use uncertainty::{
    DirectionVector, StructureBasis, StructureKind, Uncertainty, UncertaintyStructure,
};
