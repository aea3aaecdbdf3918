// Copyright 2026 qsens Contributors
// SPDX-License-Identifier: Apache-2.0

//! Differential sensitivity of the gate error to structured uncertainty.
//!
//! With `P_k = Φ^(k,0)·U_f†·Φ^(κ,k+1)` and `X_k(B)` the coupling integral of
//! step `k` in direction `B`, the derivative of the trace `g = Tr[U_f†Φ]` is
//! `Σ_k Tr[P_k X_k]`, and the error derivative is
//! `ζ = Re{−e^{−iφ}/N · Σ_k Tr[P_k X_k]}`. Splitting the sum by step and
//! basis slot gives the matrix `Z`, whose column sums `Γ` turn ζ into a dot
//! product with the direction coordinates.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{
    coupling_block, spectral_norm, trace_inner, trace_product, ComplexMatrix, CouplingMethod,
};
use crate::system::{
    gate_fidelity, propagate, ControlSystem, FidelityValue, PropagationResult, PulseSequence,
};
use crate::uncertainty::{StructureBasis, Uncertainty, UncertaintyStructure};
use crate::UnitaryMatrix;

/// Coupling integral of step `step` of `prop` in direction `b`.
pub fn coupling_on(
    prop: &PropagationResult,
    step: usize,
    b: &ComplexMatrix,
    method: CouplingMethod,
) -> Result<ComplexMatrix> {
    match method {
        CouplingMethod::Block => coupling_block(prop.hamiltonians[step].as_matrix(), b, prop.delta),
        CouplingMethod::Eigen => Ok(prop.eigen[step].coupling(b, prop.delta)),
    }
}

/// `∂Φ̃^(k+1,k)/∂δ` for the uncertainty's step generator (block route).
pub fn step_derivative(
    sys: &ControlSystem,
    pulse: &PulseSequence,
    step: usize,
    direction: &dyn Uncertainty,
) -> Result<ComplexMatrix> {
    if step >= sys.kappa() {
        return Err(Error::IndexOutOfRange {
            what: "time step",
            index: step,
            len: sys.kappa(),
        });
    }
    let h = crate::system::step_hamiltonian(sys, pulse, step)?;
    if direction.dim() != sys.dim() {
        return Err(dim_mismatch(
            "uncertainty structure",
            sys.dim(),
            direction.dim(),
        ));
    }
    let b = direction.step_generator(pulse, step)?;
    coupling_block(h.as_matrix(), b.as_matrix(), sys.delta())
}

fn check_step(prop: &PropagationResult, step: usize) -> Result<()> {
    if step >= prop.kappa() {
        return Err(Error::IndexOutOfRange {
            what: "time step",
            index: step,
            len: prop.kappa(),
        });
    }
    Ok(())
}

/// `P_k = Φ^(k,0)·U_f†·Φ^(κ,k+1)`.
fn sandwich(prop: &PropagationResult, target_adj: &ComplexMatrix, step: usize) -> ComplexMatrix {
    prop.prefix[step].as_matrix() * target_adj * prop.suffix[step + 1].as_matrix()
}

/// `Tr[P_k X_k(B)]` for each generator `B` of one step.
///
/// Shared by the Z assembly and the synthesis gradient.
pub fn step_trace_derivatives(
    prop: &PropagationResult,
    target_adj: &ComplexMatrix,
    step: usize,
    generators: &[ComplexMatrix],
    method: CouplingMethod,
) -> Result<Vec<Complex64>> {
    check_step(prop, step)?;
    let p = sandwich(prop, target_adj, step);
    match method {
        CouplingMethod::Block => generators
            .iter()
            .map(|b| {
                Ok(trace_product(
                    &p,
                    &coupling_block(prop.hamiltonians[step].as_matrix(), b, prop.delta)?,
                ))
            })
            .collect(),
        CouplingMethod::Eigen => {
            // Tr[P·V(B̃∘G)V†] = Σ_jl (V†PV)_lj B̃_jl G_jl
            let eig = &prop.eigen[step];
            let kernel = eig.divided_differences(prop.delta);
            let p_eig = eig.to_eigenbasis(&p);
            Ok(generators
                .iter()
                .map(|b| {
                    let b_eig = eig.to_eigenbasis(b);
                    let n = b_eig.nrows();
                    let mut acc = Complex64::new(0.0, 0.0);
                    for j in 0..n {
                        for l in 0..n {
                            acc += p_eig[(l, j)] * b_eig[(j, l)] * kernel[(j, l)];
                        }
                    }
                    acc
                })
                .collect())
        }
    }
}

fn nominal_phase(
    target: &UnitaryMatrix,
    prop: &PropagationResult,
) -> Result<(FidelityValue, Complex64)> {
    let fid = gate_fidelity(target, prop)?;
    let phase = fid.phase_factor()?;
    Ok((fid, phase))
}

/// ζ on an existing trajectory, assembled from the full `Λ^(κ,k)` matrices.
///
/// The trajectory may itself be perturbed; the phase is taken from it.
pub fn zeta_on(
    prop: &PropagationResult,
    pulse: &PulseSequence,
    target: &UnitaryMatrix,
    direction: &dyn Uncertainty,
    method: CouplingMethod,
) -> Result<f64> {
    if direction.dim() != prop.dim() {
        return Err(dim_mismatch(
            "uncertainty structure",
            prop.dim(),
            direction.dim(),
        ));
    }
    let (_, phase) = nominal_phase(target, prop)?;
    let n = prop.dim();
    let mut lambda_sum = ComplexMatrix::zeros(n, n);
    for k in 0..prop.kappa() {
        let b = direction.step_generator(pulse, k)?;
        let x = coupling_on(prop, k, b.as_matrix(), method)?;
        lambda_sum += prop.suffix[k + 1].as_matrix() * x * prop.prefix[k].as_matrix();
    }
    let tr = trace_inner(target.as_matrix(), &lambda_sum)?;
    Ok((-phase * tr / n as f64).re)
}

/// ζ at δ = 0 (block route).
pub fn zeta(
    sys: &ControlSystem,
    pulse: &PulseSequence,
    target: &UnitaryMatrix,
    direction: &dyn Uncertainty,
) -> Result<f64> {
    zeta_at(sys, pulse, target, direction, 0.0)
}

/// ζ on the trajectory perturbed by `δ0` along the same direction.
pub fn zeta_at(
    sys: &ControlSystem,
    pulse: &PulseSequence,
    target: &UnitaryMatrix,
    direction: &dyn Uncertainty,
    delta0: f64,
) -> Result<f64> {
    sys.check_target(target)?;
    let prop = propagate(sys, pulse, Some((delta0, direction)))?;
    zeta_on(&prop, pulse, target, direction, CouplingMethod::Block)
}

/// The κ×(M+1) matrix `Z` and its column sums `Γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZDecomposition {
    pub z: DMatrix<f64>,
    pub gamma: Vec<f64>,
}

impl ZDecomposition {
    pub fn from_z(z: DMatrix<f64>) -> Self {
        let gamma = z.column_iter().map(|c| c.sum()).collect();
        Self { z, gamma }
    }

    /// `Γ·s`: ζ for a static direction.
    pub fn static_sensitivity(&self, s: &[f64]) -> f64 {
        self.gamma.iter().zip(s).map(|(g, x)| g * x).sum()
    }

    /// `Σ_k Z^(k)·s^(k)`: ζ for a per-step direction sequence.
    pub fn sequence_sensitivity(&self, seq: &[Vec<f64>]) -> f64 {
        seq.iter()
            .enumerate()
            .map(|(k, s)| self.z.row(k).iter().zip(s).map(|(z, x)| z * x).sum::<f64>())
            .sum()
    }
}

/// `Z` on an existing (possibly perturbed) trajectory.
pub fn build_z_on(
    prop: &PropagationResult,
    pulse: &PulseSequence,
    target: &UnitaryMatrix,
    basis: &StructureBasis,
    method: CouplingMethod,
) -> Result<ZDecomposition> {
    if basis.dim() != prop.dim() {
        return Err(dim_mismatch("structure basis", prop.dim(), basis.dim()));
    }
    if pulse.n_steps() != prop.kappa() {
        return Err(dim_mismatch(
            "pulse table steps",
            prop.kappa(),
            pulse.n_steps(),
        ));
    }
    let (_, phase) = nominal_phase(target, prop)?;
    let scale = -phase / prop.dim() as f64;
    let target_adj = target.as_matrix().adjoint();
    let mut z = DMatrix::zeros(prop.kappa(), basis.len());
    for k in 0..prop.kappa() {
        let weights: Vec<f64> = basis
            .elements()
            .iter()
            .map(|e| e.alpha(pulse, k))
            .collect::<Result<_>>()?;
        let active: Vec<usize> = (0..basis.len()).filter(|&m| weights[m] != 0.0).collect();
        let gens: Vec<ComplexMatrix> = active
            .iter()
            .map(|&m| basis.slot(m).matrix.as_matrix() * Complex64::new(weights[m], 0.0))
            .collect();
        let traces = step_trace_derivatives(prop, &target_adj, k, &gens, method)?;
        for (&m, tr) in active.iter().zip(traces) {
            z[(k, m)] = (scale * tr).re;
        }
    }
    Ok(ZDecomposition::from_z(z))
}

/// `Z` and `Γ` at δ = 0 (block route).
pub fn build_z(
    sys: &ControlSystem,
    pulse: &PulseSequence,
    target: &UnitaryMatrix,
    basis: &StructureBasis,
) -> Result<ZDecomposition> {
    sys.check_target(target)?;
    let prop = propagate(sys, pulse, None)?;
    build_z_on(&prop, pulse, target, basis, CouplingMethod::Block)
}

/// `B1 = Δ·‖Ĥ‖₂·Σ_k |α^(k)|`.
pub fn bound_b1(
    sys: &ControlSystem,
    pulse: &PulseSequence,
    structure: &UncertaintyStructure,
) -> Result<f64> {
    sys.check_pulse(pulse)?;
    let alpha_sum = (0..sys.kappa())
        .map(|k| structure.alpha(pulse, k).map(f64::abs))
        .sum::<Result<f64>>()?;
    Ok(sys.delta() * spectral_norm(structure.matrix.as_matrix()) * alpha_sum)
}

/// `Δ·Σ_k ‖B^(k)‖₂` for any uncertainty; reduces to [`bound_b1`] for a
/// single structure.
pub fn bound_b1_general(
    sys: &ControlSystem,
    pulse: &PulseSequence,
    direction: &dyn Uncertainty,
) -> Result<f64> {
    sys.check_pulse(pulse)?;
    let mut total = 0.0;
    for k in 0..sys.kappa() {
        total += spectral_norm(direction.step_generator(pulse, k)?.as_matrix());
    }
    Ok(sys.delta() * total)
}

/// Static worst case: `B2 = ‖Γ‖₂` attained at `v̂ = Γᵀ/B2`.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticWorstCase {
    pub b2: f64,
    /// `None` when `Γ = 0` (flat sensitivity).
    pub direction: Option<Vec<f64>>,
}

impl StaticWorstCase {
    pub fn is_flat(&self) -> bool {
        self.direction.is_none()
    }
}

pub fn bound_b2_and_worst(gamma: &[f64]) -> StaticWorstCase {
    let b2 = gamma.iter().map(|g| g * g).sum::<f64>().sqrt();
    let direction = (b2 > 0.0).then(|| gamma.iter().map(|g| g / b2).collect());
    StaticWorstCase { b2, direction }
}

/// Time-varying worst case: `B3 = Σ_k ‖Z^(k)‖₂` attained at `s̄^(k) = Z^(k)ᵀ/‖Z^(k)‖₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceWorstCase {
    pub b3: f64,
    pub row_norms: Vec<f64>,
    pub directions: Vec<Vec<f64>>,
    /// Rows with `‖Z^(k)‖ = 0`; their direction is set to `e_0`.
    pub degenerate: Vec<bool>,
}

impl SequenceWorstCase {
    pub fn direction_vector(&self) -> crate::DirectionVector {
        crate::DirectionVector::Sequence(self.directions.clone())
    }
}

pub fn bound_b3_and_worst(z: &DMatrix<f64>) -> SequenceWorstCase {
    let width = z.ncols();
    let mut row_norms = Vec::with_capacity(z.nrows());
    let mut directions = Vec::with_capacity(z.nrows());
    let mut degenerate = Vec::with_capacity(z.nrows());
    for row in z.row_iter() {
        let norm = row.norm();
        row_norms.push(norm);
        if norm > 0.0 {
            directions.push(row.iter().map(|x| x / norm).collect());
            degenerate.push(false);
        } else {
            let mut e0 = vec![0.0; width];
            if width > 0 {
                e0[0] = 1.0;
            }
            directions.push(e0);
            degenerate.push(true);
        }
    }
    SequenceWorstCase {
        b3: row_norms.iter().sum(),
        row_norms,
        directions,
        degenerate,
    }
}

/// Everything the analysis computes for one controller.
#[derive(Debug, Clone)]
pub struct SensitivityReport {
    pub labels: Vec<String>,
    pub nominal: FidelityValue,
    /// ζ for each basis structure, in basis order.
    pub zeta: Vec<f64>,
    pub decomposition: ZDecomposition,
    pub b1: Vec<f64>,
    pub static_worst: StaticWorstCase,
    pub sequence_worst: SequenceWorstCase,
}

impl SensitivityReport {
    pub fn b2(&self) -> f64 {
        self.static_worst.b2
    }

    pub fn b3(&self) -> f64 {
        self.sequence_worst.b3
    }
}

/// Full sensitivity analysis of one controller against a basis.
pub fn analyze(
    sys: &ControlSystem,
    pulse: &PulseSequence,
    target: &UnitaryMatrix,
    basis: &StructureBasis,
    method: CouplingMethod,
) -> Result<SensitivityReport> {
    sys.check_target(target)?;
    let prop = propagate(sys, pulse, None)?;
    let nominal = gate_fidelity(target, &prop)?;
    let decomposition = build_z_on(&prop, pulse, target, basis, method)?;
    let zeta = basis
        .elements()
        .iter()
        .map(|s| zeta_on(&prop, pulse, target, s, method))
        .collect::<Result<Vec<_>>>()?;
    let b1 = basis
        .elements()
        .iter()
        .map(|s| bound_b1(sys, pulse, s))
        .collect::<Result<Vec<_>>>()?;
    let static_worst = bound_b2_and_worst(&decomposition.gamma);
    let sequence_worst = bound_b3_and_worst(&decomposition.z);
    Ok(SensitivityReport {
        labels: basis.labels(),
        nominal,
        zeta,
        decomposition,
        b1,
        static_worst,
        sequence_worst,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::HermitianMatrix;
    use crate::system::perturbed_fidelity;
    use crate::testutil::{random_hermitian, random_pulse};
    use crate::uncertainty::{
        compose_direction, normalize_structure, ComposedDirection, DirectionVector, StructureKind,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Fixture {
        sys: ControlSystem,
        pulse: PulseSequence,
        target: UnitaryMatrix,
        basis: StructureBasis,
    }

    fn fixture(seed: u64, n: usize, m: usize, kappa: usize) -> Fixture {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let drift = random_hermitian(&mut rng, n, 2.0);
        let controls: Vec<HermitianMatrix> =
            (0..m).map(|_| random_hermitian(&mut rng, n, 1.0)).collect();
        let sys = ControlSystem::new(drift, controls, kappa, 0.4).unwrap();
        let pulse = random_pulse(&mut rng, m, kappa, 1.5);
        let target = crate::case_study::haar_random_unitary(n, seed + 1000);
        let basis = StructureBasis::principal(&sys).unwrap();
        Fixture {
            sys,
            pulse,
            target,
            basis,
        }
    }

    fn fd_error(f: &Fixture, dir: &dyn Uncertainty, at: f64, h: f64) -> f64 {
        let e = |d: f64| {
            perturbed_fidelity(&f.sys, &f.pulse, &f.target, dir, d)
                .unwrap()
                .error
        };
        (e(at + h) - e(at - h)) / (2.0 * h)
    }

    fn max_abs(a: &ComplexMatrix) -> f64 {
        a.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn step_derivative_vanishes_for_unpulsed_control() {
        let mut f = fixture(1, 2, 1, 3);
        f.pulse = PulseSequence::from_rows(&[vec![0.4, 0.0, 1.0]]).unwrap();
        let s = f.basis.slot(1).clone();
        let x = step_derivative(&f.sys, &f.pulse, 1, &s).unwrap();
        assert_eq!(max_abs(&x), 0.0);
    }

    #[test]
    fn step_derivative_constant_integrand() {
        let h1 = HermitianMatrix::from_real_diagonal(&[1.0, -1.0]);
        let sys = ControlSystem::new(HermitianMatrix::zeros(2), vec![h1.clone()], 2, 0.3).unwrap();
        let pulse = PulseSequence::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let s = normalize_structure(&h1, StructureKind::Drift, "z").unwrap();
        let x = step_derivative(&sys, &pulse, 0, &s).unwrap();
        let expected = s.matrix.as_matrix() * Complex64::new(0.0, -0.3);
        assert!(max_abs(&(x - expected)) < 1e-15);
    }

    #[test]
    fn step_derivative_matches_finite_difference() {
        let f = fixture(2, 3, 2, 4);
        let s = f.basis.slot(2).clone();
        let k = 2;
        let h = 1e-6;
        let step_prop = |d: f64| {
            let hk = crate::system::step_hamiltonian(&f.sys, &f.pulse, k).unwrap();
            let b = s.step_generator(&f.pulse, k).unwrap();
            crate::linalg::expm_neg_i_hermitian(&hk.add_scaled(&b, d).unwrap(), f.sys.delta())
                .unwrap()
        };
        let fd =
            (step_prop(h).into_inner() - step_prop(-h).into_inner()) / Complex64::new(2.0 * h, 0.0);
        let x = step_derivative(&f.sys, &f.pulse, k, &s).unwrap();
        assert!(max_abs(&(x - fd)) < 1e-8);
    }

    #[test]
    fn identity_structure_has_no_sensitivity() {
        let f = fixture(3, 4, 2, 5);
        let s =
            normalize_structure(&HermitianMatrix::identity(4), StructureKind::Drift, "I").unwrap();
        let z = zeta(&f.sys, &f.pulse, &f.target, &s).unwrap();
        assert!(z.abs() < 1e-13, "ζ = {z}");
    }

    #[test]
    fn zeta_matches_central_difference() {
        for seed in 0..4 {
            let f = fixture(10 + seed, 3, 2, 5);
            for s in f.basis.elements() {
                let z = zeta(&f.sys, &f.pulse, &f.target, s).unwrap();
                let fd = fd_error(&f, s, 0.0, 1e-5);
                assert!(
                    (z - fd).abs() <= 1e-6 * z.abs().max(1e-3),
                    "ζ = {z}, fd = {fd}"
                );
            }
        }
    }

    #[test]
    fn zeta_at_matches_central_difference_off_nominal() {
        let f = fixture(20, 3, 2, 4);
        let s = f.basis.slot(0).clone();
        for &d0 in &[-0.3, 0.1, 0.25] {
            let z = zeta_at(&f.sys, &f.pulse, &f.target, &s, d0).unwrap();
            let fd = fd_error(&f, &s, d0, 1e-5);
            assert!(
                (z - fd).abs() <= 1e-6 * z.abs().max(1e-3),
                "δ0 = {d0}: ζ = {z}, fd = {fd}"
            );
        }
        assert_eq!(
            zeta_at(&f.sys, &f.pulse, &f.target, &s, 0.0).unwrap(),
            zeta(&f.sys, &f.pulse, &f.target, &s).unwrap()
        );
    }

    #[test]
    fn gamma_reproduces_pure_structure_zeta() {
        let f = fixture(30, 4, 2, 6);
        let zd = build_z(&f.sys, &f.pulse, &f.target, &f.basis).unwrap();
        for (m, s) in f.basis.elements().iter().enumerate() {
            let z = zeta(&f.sys, &f.pulse, &f.target, s).unwrap();
            assert!((zd.gamma[m] - z).abs() < 1e-10);
        }
    }

    #[test]
    fn block_and_eigen_routes_agree_on_z() {
        let f = fixture(31, 4, 2, 6);
        let prop = propagate(&f.sys, &f.pulse, None).unwrap();
        let a = build_z_on(&prop, &f.pulse, &f.target, &f.basis, CouplingMethod::Block).unwrap();
        let b = build_z_on(&prop, &f.pulse, &f.target, &f.basis, CouplingMethod::Eigen).unwrap();
        assert!((a.z - b.z).abs().max() < 1e-12);
    }

    #[test]
    fn zero_pulse_columns_vanish() {
        let mut f = fixture(32, 2, 2, 4);
        f.pulse = PulseSequence::from_rows(&[vec![0.0, 0.7, 0.0, 0.1], vec![0.3, 0.0, 0.0, 0.2]])
            .unwrap();
        let zd = build_z(&f.sys, &f.pulse, &f.target, &f.basis).unwrap();
        for k in 0..4 {
            for m in 0..2 {
                if f.pulse.get(m, k) == 0.0 {
                    assert_eq!(zd.z[(k, m + 1)], 0.0);
                }
            }
        }
    }

    #[test]
    fn gamma_is_linear_in_direction() {
        let f = fixture(33, 2, 2, 3);
        let zd = build_z(&f.sys, &f.pulse, &f.target, &f.basis).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let raw: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            let s: Vec<f64> = raw.iter().map(|x| x / norm).collect();
            let dir = compose_direction(&f.basis, &DirectionVector::new_static(s.clone()).unwrap())
                .unwrap();
            let direct = zeta(&f.sys, &f.pulse, &f.target, &dir).unwrap();
            assert!((zd.static_sensitivity(&s) - direct).abs() < 1e-9);
        }
        // raw, unnormalized coordinates
        let s1 = [0.3, -0.2, 0.9];
        let s2 = [1.1, 0.4, -0.5];
        let mix: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let lhs = zd.static_sensitivity(&mix);
        let rhs = 2.0 * zd.static_sensitivity(&s1) - 0.5 * zd.static_sensitivity(&s2);
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn b1_closed_forms() {
        let f = fixture(40, 3, 2, 5);
        let drift = f.basis.slot(0);
        let b1 = bound_b1(&f.sys, &f.pulse, drift).unwrap();
        let expected = f.sys.delta() * 5.0 * spectral_norm(drift.matrix.as_matrix());
        assert!((b1 - expected).abs() < 1e-14);

        let ctrl = f.basis.slot(1);
        let sum: f64 = (0..5).map(|k| f.pulse.get(0, k).abs()).sum();
        let expected = f.sys.delta() * spectral_norm(ctrl.matrix.as_matrix()) * sum;
        assert!((bound_b1(&f.sys, &f.pulse, ctrl).unwrap() - expected).abs() < 1e-14);
        assert!((bound_b1_general(&f.sys, &f.pulse, ctrl).unwrap() - expected).abs() < 1e-12);

        let zero = PulseSequence::zeros(2, 5);
        assert_eq!(bound_b1(&f.sys, &zero, ctrl).unwrap(), 0.0);
    }

    #[test]
    fn b2_three_four_five() {
        let w = bound_b2_and_worst(&[3.0, 4.0, 0.0]);
        assert_eq!(w.b2, 5.0);
        assert_eq!(w.direction.unwrap(), vec![0.6, 0.8, 0.0]);
        assert!(bound_b2_and_worst(&[0.0, 0.0]).is_flat());
    }

    #[test]
    fn b3_single_row_equals_b2() {
        let z = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 3.0, -4.0, 0.0, 0.0]);
        let zd = ZDecomposition::from_z(z);
        let w3 = bound_b3_and_worst(&zd.z);
        let w2 = bound_b2_and_worst(&zd.gamma);
        assert_eq!(w3.b3, 5.0);
        assert_eq!(w2.b2, 5.0);
        assert_eq!(w3.degenerate, vec![true, false, true]);
        assert_eq!(w3.directions[0], vec![1.0, 0.0]);
        assert!((zd.sequence_sensitivity(&w3.directions) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn worst_cases_are_attained_by_propagation() {
        let f = fixture(50, 3, 2, 6);
        let report = analyze(&f.sys, &f.pulse, &f.target, &f.basis, CouplingMethod::Block).unwrap();
        let v = report.static_worst.direction.clone().unwrap();
        let dir = compose_direction(&f.basis, &DirectionVector::new_static(v).unwrap()).unwrap();
        let z = zeta(&f.sys, &f.pulse, &f.target, &dir).unwrap();
        assert!((z - report.b2()).abs() <= 1e-9 * report.b2());

        let seq = report.sequence_worst.direction_vector();
        let dir = compose_direction(&f.basis, &seq).unwrap();
        let z = zeta(&f.sys, &f.pulse, &f.target, &dir).unwrap();
        assert!((z - report.b3()).abs() <= 1e-9 * report.b3());
        assert!(report.b2() <= report.b3() + 1e-12);
        for (zm, _) in report.zeta.iter().zip(&report.b1) {
            assert!(zm.abs() <= report.b2() + 1e-10);
        }
    }

    #[test]
    fn random_unit_directions_never_beat_b2() {
        let f = fixture(51, 2, 2, 4);
        let zd = build_z(&f.sys, &f.pulse, &f.target, &f.basis).unwrap();
        let w = bound_b2_and_worst(&zd.gamma);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..1000 {
            let raw: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
            let s: Vec<f64> = raw.iter().map(|x| x / norm).collect();
            assert!(zd.static_sensitivity(&s).abs() <= w.b2 + 1e-12);
        }
        assert!((zd.static_sensitivity(w.direction.as_ref().unwrap()) - w.b2).abs() < 1e-12);
    }

    #[test]
    fn zero_fidelity_is_refused() {
        let z = UnitaryMatrix::new(HermitianMatrix::from_real_diagonal(&[1.0, -1.0]).into_inner())
            .unwrap();
        let sys = ControlSystem::new(
            HermitianMatrix::zeros(2),
            vec![HermitianMatrix::identity(2)],
            1,
            1.0,
        )
        .unwrap();
        let pulse = PulseSequence::zeros(1, 1);
        let basis = StructureBasis::principal(
            &ControlSystem::new(
                HermitianMatrix::from_real_diagonal(&[1.0, 0.0]),
                vec![HermitianMatrix::identity(2)],
                1,
                1.0,
            )
            .unwrap(),
        )
        .unwrap();
        assert_eq!(
            zeta(&sys, &pulse, &z, basis.slot(0)),
            Err(Error::UndefinedPhase)
        );
        assert_eq!(
            build_z(&sys, &pulse, &z, &basis),
            Err(Error::UndefinedPhase)
        );
    }

    #[test]
    fn composed_sequence_matches_z_rows() {
        let f = fixture(52, 2, 1, 3);
        let zd = build_z(&f.sys, &f.pulse, &f.target, &f.basis).unwrap();
        let seq = vec![vec![0.6, 0.8], vec![-1.0, 0.0], vec![0.0, 1.0]];
        let dir =
            ComposedDirection::from_raw(&f.basis, DirectionVector::Sequence(seq.clone())).unwrap();
        let direct = zeta(&f.sys, &f.pulse, &f.target, &dir).unwrap();
        assert!((zd.sequence_sensitivity(&seq) - direct).abs() < 1e-10);
    }
}
