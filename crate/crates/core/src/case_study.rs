// Copyright 2026 qsens Contributors
// SPDX-License-Identifier: Apache-2.0

//! Three-spin Heisenberg chain with control on the first spin, plus Haar
//! random target gates.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::linalg::{kron, ComplexMatrix, HermitianMatrix, UnitaryMatrix};
use crate::system::ControlSystem;
use crate::uncertainty::StructureBasis;

pub const CASE_STUDY_SPINS: usize = 3;
pub const CASE_STUDY_STEPS: usize = 32;
pub const CASE_STUDY_GATE_TIME: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> ComplexMatrix {
        let z = Complex64::new(0.0, 0.0);
        let one = Complex64::new(1.0, 0.0);
        let i = Complex64::new(0.0, 1.0);
        let entries = match self {
            Pauli::I => [one, z, z, one],
            Pauli::X => [z, one, one, z],
            Pauli::Y => [z, -i, i, z],
            Pauli::Z => [one, z, z, -one],
        };
        ComplexMatrix::from_row_slice(2, 2, &entries)
    }
}

/// `σ` on spin `site` (zero-based, leftmost tensor factor first) of an
/// `n_spins` chain, identity elsewhere.
pub fn embed(op: Pauli, site: usize, n_spins: usize) -> ComplexMatrix {
    (0..n_spins).fold(ComplexMatrix::identity(1, 1), |acc, l| {
        let f = if l == site {
            op.matrix()
        } else {
            Pauli::I.matrix()
        };
        kron(&acc, &f)
    })
}

/// `½ Σ_ℓ (XX + YY + ZZ)` over nearest neighbours of an open chain.
pub fn heisenberg_chain(n_spins: usize) -> HermitianMatrix {
    let dim = 1 << n_spins;
    let mut h = ComplexMatrix::zeros(dim, dim);
    for l in 0..n_spins.saturating_sub(1) {
        for p in [Pauli::X, Pauli::Y, Pauli::Z] {
            h += embed(p, l, n_spins) * embed(p, l + 1, n_spins);
        }
    }
    HermitianMatrix::new(h * Complex64::new(0.5, 0.0)).expect("Heisenberg coupling is Hermitian")
}

/// The N = 8 chain: drift `½ Σ σ·σ`, controls `½σx` and `½σy` on the first
/// spin, κ = 32 steps over t_f = 15, with the normalized principal basis.
pub fn build_case_study() -> (ControlSystem, StructureBasis) {
    let half = Complex64::new(0.5, 0.0);
    let h1 = HermitianMatrix::new(embed(Pauli::X, 0, CASE_STUDY_SPINS) * half).expect("Hermitian");
    let h2 = HermitianMatrix::new(embed(Pauli::Y, 0, CASE_STUDY_SPINS) * half).expect("Hermitian");
    let sys = ControlSystem::with_gate_time(
        heisenberg_chain(CASE_STUDY_SPINS),
        vec![h1, h2],
        CASE_STUDY_STEPS,
        CASE_STUDY_GATE_TIME,
    )
    .expect("case-study grid is valid");
    let basis = StructureBasis::principal(&sys).expect("case-study structures are non-zero");
    (sys, basis)
}

/// Haar-distributed unitary: QR of a complex Gaussian matrix with the
/// phases of `diag(R)` moved into `Q`.
pub fn haar_random_unitary(n: usize, seed: u64) -> UnitaryMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    haar_random_unitary_with(n, &mut rng)
}

pub fn haar_random_unitary_with<R: rand::Rng>(n: usize, rng: &mut R) -> UnitaryMatrix {
    let g = DMatrix::from_fn(n, n, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im)
    });
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..n {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 {
            d / d.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let mut col = q.column_mut(j);
        col *= phase;
    }
    UnitaryMatrix::new(q).expect("QR factor is unitary")
}
