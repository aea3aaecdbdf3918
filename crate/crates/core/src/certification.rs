// Copyright 2026 qsens Contributors
// SPDX-License-Identifier: Apache-2.0

//! Certified perturbation margins and δ sweeps of the perturbed error.
//!
//! Two margins are produced for a controller with nominal error below ε:
//! the analytic margin `δ̄ = (ε − e(0))/B1`, valid for any single structure,
//! and the iterative worst-case margin obtained by accumulating
//! `d·Σ_m α_m^(k) Ĥ_m s_m^(k)` along the current time-varying worst sequence
//! until the error reaches ε.

use crate::error::{Error, Result};
use crate::linalg::{CouplingMethod, HermitianMatrix, UnitaryMatrix};
use crate::parallel::{self, Execution};
use crate::sensitivity::{bound_b1, bound_b3_and_worst, build_z_on, zeta_on};
use crate::system::{
    gate_fidelity, perturbed_fidelity, propagate, propagate_hamiltonians, step_hamiltonians,
    ControlSystem, PropagationResult, PulseSequence,
};
use crate::uncertainty::{StructureBasis, UncertaintyStructure};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarginStatus {
    Certified,
    /// `e(0) ≥ ε`; the margin is 0.
    AlreadyViolating,
    /// `B1 = 0`: the structure has no first-order effect; the margin is `+∞`.
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Margin {
    pub delta_bar: f64,
    pub status: MarginStatus,
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "ε must lie in (0, 1], got {epsilon}"
        )));
    }
    Ok(())
}

/// `δ̄ = (ε − e0)/B1`.
pub fn analytic_margin(e0: f64, epsilon: f64, b1: f64) -> Result<Margin> {
    check_epsilon(epsilon)?;
    if !(b1 >= 0.0 && b1.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "B1 must be finite and ≥ 0, got {b1}"
        )));
    }
    if !e0.is_finite() {
        return Err(Error::InvalidArgument(
            "nominal error must be finite".into(),
        ));
    }
    Ok(if e0 >= epsilon {
        Margin {
            delta_bar: 0.0,
            status: MarginStatus::AlreadyViolating,
        }
    } else if b1 == 0.0 {
        Margin {
            delta_bar: f64::INFINITY,
            status: MarginStatus::Unbounded,
        }
    } else {
        Margin {
            delta_bar: (epsilon - e0) / b1,
            status: MarginStatus::Certified,
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterativeConfig {
    pub epsilon: f64,
    /// Increment `d` added per iteration.
    pub step: f64,
    /// Hard cap on the iteration count `n`.
    pub max_iterations: usize,
}

impl Default for IterativeConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            step: 1e-4,
            max_iterations: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterativeResult {
    pub epsilon: f64,
    pub step: f64,
    pub nominal_error: f64,
    /// `n̄ = n − 1` at the stopping iteration.
    pub n_bar: usize,
    /// `δ̄ = n̄·d`.
    pub delta_bar: f64,
    /// `(n·d, ẽ(n·d))`, starting at `(0, e(0))`.
    pub trace: Vec<(f64, f64)>,
    pub cap_exceeded: bool,
}

impl IterativeResult {
    /// Whether the recorded errors ever decrease between iterations.
    pub fn is_monotone(&self) -> bool {
        self.trace.windows(2).all(|w| w[1].1 >= w[0].1)
    }

    /// Error at the returned margin.
    pub fn error_at_delta_bar(&self) -> f64 {
        self.trace[self.n_bar].1
    }
}

/// `H̃^(k) += d·Σ_m α_m^(k) Ĥ_m s_m^(k)` for every step.
fn accumulate(
    hams: &mut [HermitianMatrix],
    basis: &StructureBasis,
    pulse: &PulseSequence,
    directions: &[Vec<f64>],
    d: f64,
) -> Result<()> {
    for (k, h) in hams.iter_mut().enumerate() {
        h.axpy(d, &basis.weighted_generator(&directions[k], pulse, k)?);
    }
    Ok(())
}

fn worst_directions(
    prop: &PropagationResult,
    pulse: &PulseSequence,
    target: &UnitaryMatrix,
    basis: &StructureBasis,
    method: CouplingMethod,
) -> Result<Vec<Vec<f64>>> {
    let z = build_z_on(prop, pulse, target, basis, method)?;
    Ok(bound_b3_and_worst(&z.z).directions)
}

/// Iterative worst-case margin. Worst sequences on perturbed trajectories
/// use the eigen route; the first one uses the block route.
pub fn iterative_margin(
    sys: &ControlSystem,
    pulse: &PulseSequence,
    target: &UnitaryMatrix,
    basis: &StructureBasis,
    config: &IterativeConfig,
) -> Result<IterativeResult> {
    check_epsilon(config.epsilon)?;
    if !(config.step > 0.0 && config.step.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "step d must be > 0, got {}",
            config.step
        )));
    }
    if config.max_iterations == 0 {
        return Err(Error::InvalidArgument("iteration cap must be ≥ 1".into()));
    }
    sys.check_target(target)?;
    if basis.dim() != sys.dim() {
        return Err(crate::error::dim_mismatch(
            "structure basis",
            sys.dim(),
            basis.dim(),
        ));
    }
    let nominal = propagate(sys, pulse, None)?;
    let e0 = gate_fidelity(target, &nominal)?.error;
    if e0 >= config.epsilon {
        return Err(Error::Precondition(format!(
            "nominal error {e0} is not below ε = {}",
            config.epsilon
        )));
    }

    let d = config.step;
    let mut trace = vec![(0.0, e0)];
    let mut s = worst_directions(&nominal, pulse, target, basis, CouplingMethod::Block)?;
    let mut hams = step_hamiltonians(sys, pulse)?;
    let mut n = 1usize;
    accumulate(&mut hams, basis, pulse, &s, d)?;
    let mut prop = propagate_hamiltonians(hams.clone(), sys.delta())?;
    let mut e = gate_fidelity(target, &prop)?.error;
    trace.push((d, e));
    let mut cap_exceeded = false;
    while e < config.epsilon {
        if n >= config.max_iterations {
            cap_exceeded = true;
            break;
        }
        n += 1;
        s = worst_directions(&prop, pulse, target, basis, CouplingMethod::Eigen)?;
        accumulate(&mut hams, basis, pulse, &s, d)?;
        prop = propagate_hamiltonians(hams.clone(), sys.delta())?;
        e = gate_fidelity(target, &prop)?.error;
        trace.push((n as f64 * d, e));
    }
    let n_bar = if cap_exceeded { n } else { n - 1 };
    Ok(IterativeResult {
        epsilon: config.epsilon,
        step: d,
        nominal_error: e0,
        n_bar,
        delta_bar: n_bar as f64 * d,
        trace,
        cap_exceeded,
    })
}

/// Perturbed error and sensitivity over a δ grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTrace {
    pub label: String,
    /// Strictly increasing; contains 0 whenever the range does.
    pub delta: Vec<f64>,
    pub error: Vec<f64>,
    /// `None` where the perturbed trace vanishes and the phase is undefined.
    pub zeta: Vec<Option<f64>>,
}

impl SweepTrace {
    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    pub fn max_abs_zeta(&self) -> f64 {
        self.zeta.iter().flatten().fold(0.0, |m, z| m.max(z.abs()))
    }
}

/// Uniform grid on `[d1, d2]`. A point within rounding of 0 is set to 0;
/// otherwise 0 is inserted when the range contains it.
pub fn sweep_grid(d1: f64, d2: f64, n_points: usize) -> Result<Vec<f64>> {
    if !(d1 < d2) || !d1.is_finite() || !d2.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "sweep range needs δ₁ < δ₂, got [{d1}, {d2}]"
        )));
    }
    if n_points < 2 {
        return Err(Error::InvalidArgument(
            "a sweep needs at least 2 points".into(),
        ));
    }
    let h = (d2 - d1) / (n_points - 1) as f64;
    let mut grid: Vec<f64> = (0..n_points)
        .map(|i| {
            if i == n_points - 1 {
                d2
            } else {
                d1 + i as f64 * h
            }
        })
        .collect();
    if d1 <= 0.0 && d2 >= 0.0 {
        let (i, x) = grid
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, x)| (i, *x))
            .unwrap();
        if x.abs() <= 1e-9 * h {
            grid[i] = 0.0;
        } else {
            let pos = grid.partition_point(|&g| g < 0.0);
            grid.insert(pos, 0.0);
        }
    }
    Ok(grid)
}

/// δ sweep with ζ from the eigen route.
pub fn error_sweep(
    sys: &ControlSystem,
    pulse: &PulseSequence,
    target: &UnitaryMatrix,
    structure: &UncertaintyStructure,
    d1: f64,
    d2: f64,
    n_points: usize,
) -> Result<SweepTrace> {
    error_sweep_with(
        Execution::Parallel,
        CouplingMethod::Eigen,
        sys,
        pulse,
        target,
        structure,
        d1,
        d2,
        n_points,
    )
}

#[allow(clippy::too_many_arguments)]
pub fn error_sweep_with(
    exec: Execution,
    method: CouplingMethod,
    sys: &ControlSystem,
    pulse: &PulseSequence,
    target: &UnitaryMatrix,
    structure: &UncertaintyStructure,
    d1: f64,
    d2: f64,
    n_points: usize,
) -> Result<SweepTrace> {
    sys.check_target(target)?;
    sys.check_pulse(pulse)?;
    let grid = sweep_grid(d1, d2, n_points)?;
    let points = parallel::map_with(exec, &grid, |&delta| -> Result<(f64, Option<f64>)> {
        let prop = propagate(sys, pulse, Some((delta, structure)))?;
        let fid = gate_fidelity(target, &prop)?;
        let zeta = match zeta_on(&prop, pulse, target, structure, method) {
            Ok(z) => Some(z),
            Err(Error::UndefinedPhase) => None,
            Err(e) => return Err(e),
        };
        Ok((fid.error, zeta))
    });
    let (error, zeta) = points
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .unzip();
    Ok(SweepTrace {
        label: structure.label.clone(),
        delta: grid,
        error,
        zeta,
    })
}

/// Both margins for one controller, with the perturbed errors that verify them.
#[derive(Debug, Clone, PartialEq)]
pub struct PerformanceCertificate {
    pub epsilon: f64,
    pub nominal_error: f64,
    pub labels: Vec<String>,
    pub b1: Vec<f64>,
    /// Analytic margin per basis structure.
    pub analytic: Vec<Margin>,
    /// `ẽ_μ(δ̄_μ)`, absent for unbounded margins.
    pub analytic_errors: Vec<Option<f64>>,
    pub iterative: IterativeResult,
    /// `ẽ_μ(δ̄_iter)` along each basis structure.
    pub iterative_errors: Vec<f64>,
}

impl PerformanceCertificate {
    /// `δ̄_iter / δ̄_μ` for structure `m`.
    pub fn ratio(&self, m: usize) -> f64 {
        self.iterative.delta_bar / self.analytic[m].delta_bar
    }
}

pub fn certify(
    sys: &ControlSystem,
    pulse: &PulseSequence,
    target: &UnitaryMatrix,
    basis: &StructureBasis,
    config: &IterativeConfig,
) -> Result<PerformanceCertificate> {
    let iterative = iterative_margin(sys, pulse, target, basis, config)?;
    let e0 = iterative.nominal_error;
    let mut b1 = Vec::with_capacity(basis.len());
    let mut analytic = Vec::with_capacity(basis.len());
    let mut analytic_errors = Vec::with_capacity(basis.len());
    let mut iterative_errors = Vec::with_capacity(basis.len());
    for s in basis.elements() {
        let b = bound_b1(sys, pulse, s)?;
        let margin = analytic_margin(e0, config.epsilon, b)?;
        let verified = match margin.status {
            MarginStatus::Unbounded => None,
            _ => Some(perturbed_fidelity(sys, pulse, target, s, margin.delta_bar)?.error),
        };
        b1.push(b);
        analytic.push(margin);
        analytic_errors.push(verified);
        iterative_errors
            .push(perturbed_fidelity(sys, pulse, target, s, iterative.delta_bar)?.error);
    }
    Ok(PerformanceCertificate {
        epsilon: config.epsilon,
        nominal_error: e0,
        labels: basis.labels(),
        b1,
        analytic,
        analytic_errors,
        iterative,
        iterative_errors,
    })
}
