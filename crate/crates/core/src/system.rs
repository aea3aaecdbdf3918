// Copyright 2026 qsens Contributors
// SPDX-License-Identifier: Apache-2.0

//! Piecewise-constant control systems, their propagators and gate fidelity.
//!
//! Step indices are zero-based throughout: step `k` covers
//! `[k·Δ, (k+1)·Δ)` and uses the pulse column `k`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{trace_inner, HermitianEigen, HermitianMatrix, UnitaryMatrix};
use crate::uncertainty::Uncertainty;

/// Drift plus control Hamiltonians on a uniform time grid (ħ = 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSystem {
    drift: HermitianMatrix,
    interactions: Vec<HermitianMatrix>,
    kappa: usize,
    delta: f64,
}

impl ControlSystem {
    pub fn new(
        drift: HermitianMatrix,
        interactions: Vec<HermitianMatrix>,
        kappa: usize,
        delta: f64,
    ) -> Result<Self> {
        if kappa == 0 {
            return Err(Error::InvalidArgument(
                "number of time steps must be ≥ 1".into(),
            ));
        }
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "step length must be > 0, got {delta}"
            )));
        }
        let n = drift.dim();
        if n == 0 {
            return Err(Error::InvalidArgument(
                "Hilbert dimension must be ≥ 1".into(),
            ));
        }
        for h in &interactions {
            if h.dim() != n {
                return Err(dim_mismatch("interaction Hamiltonian", n, h.dim()));
            }
        }
        Ok(Self {
            drift,
            interactions,
            kappa,
            delta,
        })
    }

    /// Builds the grid from a gate time: `Δ = t_f / κ`.
    pub fn with_gate_time(
        drift: HermitianMatrix,
        interactions: Vec<HermitianMatrix>,
        kappa: usize,
        gate_time: f64,
    ) -> Result<Self> {
        if kappa == 0 {
            return Err(Error::InvalidArgument(
                "number of time steps must be ≥ 1".into(),
            ));
        }
        Self::new(drift, interactions, kappa, gate_time / kappa as f64)
    }

    pub fn dim(&self) -> usize {
        self.drift.dim()
    }

    pub fn drift(&self) -> &HermitianMatrix {
        &self.drift
    }

    pub fn interactions(&self) -> &[HermitianMatrix] {
        &self.interactions
    }

    /// Number of control fields `M`.
    pub fn n_controls(&self) -> usize {
        self.interactions.len()
    }

    pub fn kappa(&self) -> usize {
        self.kappa
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn gate_time(&self) -> f64 {
        self.kappa as f64 * self.delta
    }

    pub fn check_pulse(&self, pulse: &PulseSequence) -> Result<()> {
        let shape = (self.n_controls(), self.kappa);
        if pulse.shape() != shape {
            return Err(dim_mismatch(
                "pulse table",
                format!("{}x{}", shape.0, shape.1),
                format!("{}x{}", pulse.n_controls(), pulse.n_steps()),
            ));
        }
        Ok(())
    }

    pub fn check_target(&self, target: &UnitaryMatrix) -> Result<()> {
        if target.dim() != self.dim() {
            return Err(dim_mismatch("target unitary", self.dim(), target.dim()));
        }
        Ok(())
    }
}

/// Control amplitudes `f[m, k]`: one row per control field, one column per step.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    amplitudes: DMatrix<f64>,
}

impl PulseSequence {
    pub fn new(amplitudes: DMatrix<f64>) -> Result<Self> {
        if amplitudes.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument(
                "pulse amplitudes must be finite".into(),
            ));
        }
        Ok(Self { amplitudes })
    }

    /// From row-major `rows[m][k]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let kappa = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != kappa) {
            return Err(Error::InvalidArgument(
                "pulse rows have unequal lengths".into(),
            ));
        }
        Self::new(DMatrix::from_fn(m, kappa, |i, j| rows[i][j]))
    }

    pub fn zeros(n_controls: usize, n_steps: usize) -> Self {
        Self {
            amplitudes: DMatrix::zeros(n_controls, n_steps),
        }
    }

    pub fn n_controls(&self) -> usize {
        self.amplitudes.nrows()
    }

    pub fn n_steps(&self) -> usize {
        self.amplitudes.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.amplitudes.shape()
    }

    pub fn get(&self, control: usize, step: usize) -> f64 {
        self.amplitudes[(control, step)]
    }

    pub fn amplitudes(&self) -> &DMatrix<f64> {
        &self.amplitudes
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.amplitudes
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
}

/// `H^(k) = H0 + Σ_m f[m, k]·H_m`.
pub fn step_hamiltonian(
    sys: &ControlSystem,
    pulse: &PulseSequence,
    step: usize,
) -> Result<HermitianMatrix> {
    sys.check_pulse(pulse)?;
    if step >= sys.kappa {
        return Err(Error::IndexOutOfRange {
            what: "time step",
            index: step,
            len: sys.kappa,
        });
    }
    let mut h = sys.drift.clone();
    for (m, hm) in sys.interactions.iter().enumerate() {
        h.axpy(pulse.get(m, step), hm);
    }
    Ok(h)
}

pub fn step_hamiltonians(
    sys: &ControlSystem,
    pulse: &PulseSequence,
) -> Result<Vec<HermitianMatrix>> {
    (0..sys.kappa)
        .map(|k| step_hamiltonian(sys, pulse, k))
        .collect()
}

/// Step propagators with cached time-ordered prefix and suffix products.
#[derive(Debug, Clone)]
pub struct PropagationResult {
    pub(crate) hamiltonians: Vec<HermitianMatrix>,
    pub(crate) eigen: Vec<HermitianEigen>,
    pub(crate) delta: f64,
    /// `Φ^(k+1,k)` for each step.
    pub step_props: Vec<UnitaryMatrix>,
    /// `prefix[k] = Φ^(k,0)`, `prefix[0] = I`.
    pub prefix: Vec<UnitaryMatrix>,
    /// `suffix[k] = Φ^(κ,k)`, `suffix[κ] = I`.
    pub suffix: Vec<UnitaryMatrix>,
}

impl PropagationResult {
    /// The full propagator `Φ^(κ,0)`.
    pub fn total(&self) -> &UnitaryMatrix {
        self.prefix.last().expect("prefix always holds κ+1 entries")
    }

    pub fn kappa(&self) -> usize {
        self.step_props.len()
    }

    pub fn dim(&self) -> usize {
        self.total().dim()
    }

    /// Hamiltonians the steps were generated from (perturbed, if any).
    pub fn hamiltonians(&self) -> &[HermitianMatrix] {
        &self.hamiltonians
    }

    pub fn step_eigen(&self, step: usize) -> &HermitianEigen {
        &self.eigen[step]
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }
}

/// Propagates explicit step Hamiltonians over steps of length `delta`.
pub fn propagate_hamiltonians(
    hamiltonians: Vec<HermitianMatrix>,
    delta: f64,
) -> Result<PropagationResult> {
    let kappa = hamiltonians.len();
    if kappa == 0 {
        return Err(Error::InvalidArgument(
            "at least one step is required".into(),
        ));
    }
    let n = hamiltonians[0].dim();
    if let Some(h) = hamiltonians.iter().find(|h| h.dim() != n) {
        return Err(dim_mismatch("step Hamiltonian", n, h.dim()));
    }
    let eigen = hamiltonians
        .iter()
        .map(HermitianEigen::new)
        .collect::<Result<Vec<_>>>()?;
    let step_props: Vec<UnitaryMatrix> = eigen.iter().map(|e| e.exp_neg_i(delta)).collect();

    let mut prefix = Vec::with_capacity(kappa + 1);
    prefix.push(UnitaryMatrix::identity(n));
    for p in &step_props {
        let next = p.compose(prefix.last().unwrap());
        prefix.push(next);
    }
    let mut suffix = vec![UnitaryMatrix::identity(n); kappa + 1];
    for k in (1..kappa).rev() {
        suffix[k] = suffix[k + 1].compose(&step_props[k]);
    }
    suffix[0] = prefix[kappa].clone();
    Ok(PropagationResult {
        hamiltonians,
        eigen,
        delta,
        step_props,
        prefix,
        suffix,
    })
}

/// Propagates the system, optionally with `H̃^(k) = H^(k) + δ·B^(k)` where
/// `B^(k)` is the uncertainty's step generator.
pub fn propagate(
    sys: &ControlSystem,
    pulse: &PulseSequence,
    perturbation: Option<(f64, &dyn Uncertainty)>,
) -> Result<PropagationResult> {
    let mut hams = step_hamiltonians(sys, pulse)?;
    if let Some((delta, direction)) = perturbation {
        if direction.dim() != sys.dim() {
            return Err(dim_mismatch(
                "uncertainty structure",
                sys.dim(),
                direction.dim(),
            ));
        }
        if !delta.is_finite() {
            return Err(Error::InvalidArgument(
                "perturbation size must be finite".into(),
            ));
        }
        if delta != 0.0 {
            for (k, h) in hams.iter_mut().enumerate() {
                h.axpy(delta, &direction.step_generator(pulse, k)?);
            }
        }
    }
    propagate_hamiltonians(hams, sys.delta)
}

/// Gate fidelity `|Tr[U_f†Φ]|/N`, its error and phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidelityValue {
    pub fidelity: f64,
    pub error: f64,
    /// `∠Tr[U_f†Φ]`; `None` when the trace vanishes.
    pub phase: Option<f64>,
    pub trace: Complex64,
}

impl FidelityValue {
    pub fn from_trace(trace: Complex64, dim: usize) -> Self {
        let n = dim as f64;
        let fidelity = trace.norm() / n;
        let phase = (trace.norm() >= 1e-14 * n).then(|| trace.arg());
        Self {
            fidelity,
            error: 1.0 - fidelity,
            phase,
            trace,
        }
    }

    /// `e^{−iφ}`, or the undefined-phase error.
    pub fn phase_factor(&self) -> Result<Complex64> {
        self.phase
            .map(|p| Complex64::from_polar(1.0, -p))
            .ok_or(Error::UndefinedPhase)
    }
}

pub fn gate_fidelity(target: &UnitaryMatrix, prop: &PropagationResult) -> Result<FidelityValue> {
    if target.dim() != prop.dim() {
        return Err(dim_mismatch("target unitary", prop.dim(), target.dim()));
    }
    let tr = trace_inner(target.as_matrix(), prop.total().as_matrix())?;
    Ok(FidelityValue::from_trace(tr, target.dim()))
}

/// Perturbed error `ẽ(δ)` along `direction`.
pub fn perturbed_fidelity(
    sys: &ControlSystem,
    pulse: &PulseSequence,
    target: &UnitaryMatrix,
    direction: &dyn Uncertainty,
    delta: f64,
) -> Result<FidelityValue> {
    sys.check_target(target)?;
    let prop = propagate(sys, pulse, Some((delta, direction)))?;
    gate_fidelity(target, &prop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ComplexMatrix;
    use crate::testutil::{random_hermitian, random_pulse};
    use crate::uncertainty::{normalize_structure, StructureKind};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn max_abs(a: &ComplexMatrix) -> f64 {
        a.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn random_system(rng: &mut ChaCha8Rng, n: usize, m: usize, kappa: usize) -> ControlSystem {
        let drift = random_hermitian(rng, n, 1.0);
        let controls = (0..m).map(|_| random_hermitian(rng, n, 1.0)).collect();
        ControlSystem::new(drift, controls, kappa, 0.3).unwrap()
    }

    #[test]
    fn rejects_bad_grid() {
        let h = HermitianMatrix::zeros(2);
        assert!(ControlSystem::new(h.clone(), vec![], 0, 0.1).is_err());
        assert!(ControlSystem::new(h.clone(), vec![], 3, 0.0).is_err());
        assert!(ControlSystem::new(h, vec![HermitianMatrix::zeros(3)], 3, 0.1).is_err());
    }

    #[test]
    fn gate_time_is_kappa_times_delta() {
        let sys =
            ControlSystem::with_gate_time(HermitianMatrix::zeros(2), vec![], 32, 15.0).unwrap();
        assert_eq!(sys.delta(), 0.46875);
        assert_eq!(sys.gate_time(), 15.0);
    }

    #[test]
    fn step_hamiltonian_with_zero_pulse_is_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sys = random_system(&mut rng, 3, 2, 4);
        let h = step_hamiltonian(&sys, &PulseSequence::zeros(2, 4), 2).unwrap();
        assert_eq!(h, *sys.drift());
    }

    #[test]
    fn step_hamiltonian_is_linear_in_amplitude() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h1 = random_hermitian(&mut rng, 2, 1.0);
        let sys = ControlSystem::new(HermitianMatrix::zeros(2), vec![h1.clone()], 3, 0.5).unwrap();
        let pulse = PulseSequence::from_rows(&[vec![0.0, 2.0, 0.0]]).unwrap();
        let h = step_hamiltonian(&sys, &pulse, 1).unwrap();
        assert!(max_abs(&(h.as_matrix() - h1.as_matrix() * Complex64::new(2.0, 0.0))) < 1e-15);
        assert!(matches!(
            step_hamiltonian(&sys, &pulse, 3),
            Err(Error::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn trivial_system_propagates_to_identity() {
        let sys = ControlSystem::new(
            HermitianMatrix::zeros(2),
            vec![HermitianMatrix::zeros(2)],
            5,
            0.2,
        )
        .unwrap();
        let prop = propagate(&sys, &PulseSequence::zeros(1, 5), None).unwrap();
        for p in &prop.step_props {
            assert!(max_abs(&(p.as_matrix() - ComplexMatrix::identity(2, 2))) < 1e-15);
        }
        assert!(max_abs(&(prop.total().as_matrix() - ComplexMatrix::identity(2, 2))) < 1e-15);
    }

    #[test]
    fn zero_perturbation_is_bitwise_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sys = random_system(&mut rng, 4, 2, 6);
        let pulse = random_pulse(&mut rng, 2, 6, 1.0);
        let s = normalize_structure(sys.drift(), StructureKind::Drift, "H0").unwrap();
        let a = propagate(&sys, &pulse, None).unwrap();
        let b = propagate(&sys, &pulse, Some((0.0, &s))).unwrap();
        assert_eq!(a.total(), b.total());
    }

    #[test]
    fn two_step_product_is_time_ordered() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sys = random_system(&mut rng, 3, 1, 2);
        let pulse = random_pulse(&mut rng, 1, 2, 1.0);
        let prop = propagate(&sys, &pulse, None).unwrap();
        let direct = prop.step_props[1].as_matrix() * prop.step_props[0].as_matrix();
        assert!(max_abs(&(prop.total().as_matrix() - direct)) < 1e-12);
        let u0 = crate::linalg::expm_neg_i_hermitian(
            &step_hamiltonian(&sys, &pulse, 0).unwrap(),
            sys.delta(),
        )
        .unwrap();
        assert!(max_abs(&(prop.step_props[0].as_matrix() - u0.as_matrix())) < 1e-13);
    }

    #[test]
    fn prefix_and_suffix_compose_to_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let sys = random_system(&mut rng, 4, 2, 7);
        let pulse = random_pulse(&mut rng, 2, 7, 1.0);
        let prop = propagate(&sys, &pulse, None).unwrap();
        assert_eq!(prop.prefix[7], prop.suffix[0]);
        for k in 0..=7 {
            let prod = prop.suffix[k].as_matrix() * prop.prefix[k].as_matrix();
            assert!(max_abs(&(prod - prop.total().as_matrix())) < 1e-9);
        }
        for p in prop.step_props.iter().chain(std::iter::once(prop.total())) {
            assert!(p.defect() < 1e-10);
        }
    }

    #[test]
    fn fidelity_of_own_propagator_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sys = random_system(&mut rng, 4, 1, 3);
        let pulse = random_pulse(&mut rng, 1, 3, 1.0);
        let prop = propagate(&sys, &pulse, None).unwrap();
        let f = gate_fidelity(prop.total(), &prop).unwrap();
        assert!((f.fidelity - 1.0).abs() < 1e-12);
        assert!(f.error.abs() < 1e-12);
        assert!(f.phase.unwrap().abs() < 1e-12);

        let flipped = prop.total().with_phase(std::f64::consts::PI);
        let g = gate_fidelity(&flipped, &prop).unwrap();
        assert!((g.fidelity - 1.0).abs() < 1e-12);
        assert!((g.phase.unwrap().abs() - std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn fidelity_is_global_phase_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sys = random_system(&mut rng, 4, 2, 5);
        let pulse = random_pulse(&mut rng, 2, 5, 1.0);
        let prop = propagate(&sys, &pulse, None).unwrap();
        let target = crate::case_study::haar_random_unitary(4, 99);
        let base = gate_fidelity(&target, &prop).unwrap();
        for _ in 0..10 {
            let theta: f64 = rng.random_range(-3.0..3.0);
            let f = gate_fidelity(&target.with_phase(theta), &prop).unwrap();
            assert!((f.fidelity - base.fidelity).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_trace_flags_undefined_phase() {
        // Tr[Z† I] = 0 for the Pauli Z gate
        let z = UnitaryMatrix::new(HermitianMatrix::from_real_diagonal(&[1.0, -1.0]).into_inner())
            .unwrap();
        let sys = ControlSystem::new(HermitianMatrix::zeros(2), vec![], 1, 1.0).unwrap();
        let prop = propagate(&sys, &PulseSequence::zeros(0, 1), None).unwrap();
        let f = gate_fidelity(&z, &prop).unwrap();
        assert_eq!(f.fidelity, 0.0);
        assert!(f.phase.is_none());
        assert_eq!(f.phase_factor(), Err(Error::UndefinedPhase));
    }

    #[test]
    fn drift_perturbation_equals_shifted_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let sys = random_system(&mut rng, 4, 2, 5);
        let pulse = random_pulse(&mut rng, 2, 5, 1.0);
        let dir = random_hermitian(&mut rng, 4, 1.0);
        let s = normalize_structure(&dir, StructureKind::Drift, "d").unwrap();
        let delta = 0.137;
        let shifted = ControlSystem::new(
            sys.drift().add_scaled(&s.matrix, delta).unwrap(),
            sys.interactions().to_vec(),
            sys.kappa(),
            sys.delta(),
        )
        .unwrap();
        let a = propagate(&sys, &pulse, Some((delta, &s))).unwrap();
        let b = propagate(&shifted, &pulse, None).unwrap();
        assert!(max_abs(&(a.total().as_matrix() - b.total().as_matrix())) < 1e-12);
    }

    #[test]
    fn pulse_shape_is_checked() {
        let sys = ControlSystem::new(
            HermitianMatrix::zeros(2),
            vec![HermitianMatrix::zeros(2)],
            3,
            0.1,
        )
        .unwrap();
        assert!(matches!(
            propagate(&sys, &PulseSequence::zeros(1, 4), None),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(PulseSequence::from_rows(&[vec![1.0, f64::NAN]]).is_err());
    }
}
