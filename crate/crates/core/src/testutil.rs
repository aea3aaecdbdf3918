// Copyright 2026 qsens Contributors
// SPDX-License-Identifier: Apache-2.0

use num_complex::Complex64;
use rand::Rng;

use crate::linalg::{ComplexMatrix, HermitianMatrix};
use crate::system::PulseSequence;

/// Random Hermitian matrix rescaled to Frobenius norm `scale`.
pub fn random_hermitian<R: Rng>(rng: &mut R, n: usize, scale: f64) -> HermitianMatrix {
    let a = ComplexMatrix::from_fn(n, n, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let h = &a + a.adjoint();
    let norm = h.norm();
    HermitianMatrix::new(h * Complex64::new(scale / norm, 0.0)).unwrap()
}

pub fn random_pulse<R: Rng>(rng: &mut R, m: usize, kappa: usize, scale: f64) -> PulseSequence {
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            (0..kappa)
                .map(|_| rng.random_range(-scale..scale))
                .collect()
        })
        .collect();
    PulseSequence::from_rows(&rows).unwrap()
}
