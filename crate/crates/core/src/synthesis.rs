// Copyright 2026 qsens Contributors
// SPDX-License-Identifier: Apache-2.0

//! Fidelity-optimal pulse synthesis with exact gradients.
//!
//! The gradient of the gate error with respect to `f[m, k]` is the
//! sensitivity of the error to the direction `H_m` switched on in step `k`
//! only, so it reuses the same step-trace derivatives as the Z assembly.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, CouplingMethod, UnitaryMatrix};
use crate::optimize::{minimize, LbfgsOptions, Termination};
use crate::parallel::{self, Execution};
use crate::sensitivity::step_trace_derivatives;
use crate::system::{gate_fidelity, propagate, ControlSystem, PulseSequence};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConfig {
    /// Maximum number of random restarts.
    pub restarts: usize,
    /// Iteration cap per restart.
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// A restart stops (and is accepted) once its error drops below this.
    pub target_error: f64,
    /// Initial amplitudes are uniform in `[−scale, scale]`.
    pub initial_scale: f64,
    pub seed: u64,
    /// Optional amplitude box `|f| ≤ bound`.
    pub amplitude_bound: Option<f64>,
    /// Stop launching restarts once this many are accepted.
    pub wanted: Option<usize>,
    pub lbfgs_memory: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            restarts: 200,
            max_iterations: 3000,
            gradient_tolerance: 1e-10,
            target_error: 1e-4,
            initial_scale: 1.0,
            seed: 0,
            amplitude_bound: None,
            wanted: None,
            lbfgs_memory: 12,
        }
    }
}

impl SynthesisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.max_iterations == 0 || self.lbfgs_memory == 0 {
            return Err(Error::InvalidArgument(
                "synthesis counts must be ≥ 1".into(),
            ));
        }
        if !(self.gradient_tolerance > 0.0 && self.target_error > 0.0 && self.initial_scale > 0.0) {
            return Err(Error::InvalidArgument(
                "synthesis tolerances and scale must be > 0".into(),
            ));
        }
        if matches!(self.amplitude_bound, Some(b) if !(b > 0.0)) {
            return Err(Error::InvalidArgument("amplitude bound must be > 0".into()));
        }
        if self.wanted == Some(0) {
            return Err(Error::InvalidArgument(
                "wanted controller count must be ≥ 1".into(),
            ));
        }
        Ok(())
    }
}

/// One optimized pulse table with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub pulse: PulseSequence,
    pub nominal_error: f64,
    pub restart: usize,
    pub seed: u64,
    pub iterations: usize,
    pub termination: Termination,
    /// Whether `nominal_error < target_error`.
    pub accepted: bool,
}

/// Gate error and its exact gradient `∂e/∂f[m, k]`.
pub fn error_and_gradient(
    sys: &ControlSystem,
    pulse: &PulseSequence,
    target: &UnitaryMatrix,
) -> Result<(f64, DMatrix<f64>)> {
    sys.check_target(target)?;
    let prop = propagate(sys, pulse, None)?;
    let fid = gate_fidelity(target, &prop)?;
    let scale = -fid.phase_factor()? / sys.dim() as f64;
    let target_adj = target.as_matrix().adjoint();
    let gens: Vec<ComplexMatrix> = sys
        .interactions()
        .iter()
        .map(|h| h.as_matrix().clone())
        .collect();
    let mut grad = DMatrix::zeros(sys.n_controls(), sys.kappa());
    for k in 0..sys.kappa() {
        let traces = step_trace_derivatives(&prop, &target_adj, k, &gens, CouplingMethod::Eigen)?;
        for (m, tr) in traces.into_iter().enumerate() {
            grad[(m, k)] = (scale * tr).re;
        }
    }
    Ok((fid.error, grad))
}

/// Exact gradient of the gate error with respect to every amplitude.
pub fn fidelity_gradient(
    sys: &ControlSystem,
    pulse: &PulseSequence,
    target: &UnitaryMatrix,
) -> Result<DMatrix<f64>> {
    error_and_gradient(sys, pulse, target).map(|(_, g)| g)
}

fn unpack(x: &[f64], m: usize, kappa: usize) -> Result<PulseSequence> {
    PulseSequence::new(DMatrix::from_row_slice(m, kappa, x))
}

fn pack(g: &DMatrix<f64>) -> Vec<f64> {
    g.row_iter()
        .flat_map(|r| r.iter().copied().collect::<Vec<_>>())
        .collect()
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// Runs one restart; deterministic in `(config.seed, restart)`.
pub fn run_restart(
    sys: &ControlSystem,
    target: &UnitaryMatrix,
    config: &SynthesisConfig,
    restart: usize,
) -> Result<Controller> {
    let (m, kappa) = (sys.n_controls(), sys.kappa());
    let mut rng = restart_rng(config.seed, restart);
    let x0: Vec<f64> = (0..m * kappa)
        .map(|_| rng.random_range(-config.initial_scale..=config.initial_scale))
        .collect();
    let opts = LbfgsOptions {
        memory: config.lbfgs_memory,
        max_iterations: config.max_iterations,
        gradient_tolerance: config.gradient_tolerance,
        target_value: config.target_error,
        bound: config.amplitude_bound,
        ..Default::default()
    };
    let objective = |x: &[f64]| {
        let pulse = unpack(x, m, kappa)?;
        let (e, g) = error_and_gradient(sys, &pulse, target)?;
        Ok((e, pack(&g)))
    };
    let out = minimize(objective, x0, &opts)?;
    let pulse = unpack(&out.x, m, kappa)?;
    Ok(Controller {
        pulse,
        nominal_error: out.value,
        restart,
        seed: config.seed,
        iterations: out.iterations,
        termination: out.termination,
        accepted: out.value < config.target_error,
    })
}

/// Multi-start synthesis. Restarts run in parallel batches; results are
/// sorted by nominal error and independent of the thread count.
pub fn synthesize(
    sys: &ControlSystem,
    target: &UnitaryMatrix,
    config: &SynthesisConfig,
) -> Result<Vec<Controller>> {
    synthesize_with(Execution::Parallel, sys, target, config)
}

pub fn synthesize_with(
    exec: Execution,
    sys: &ControlSystem,
    target: &UnitaryMatrix,
    config: &SynthesisConfig,
) -> Result<Vec<Controller>> {
    config.validate()?;
    sys.check_target(target)?;
    const BATCH: usize = 8;
    let mut out: Vec<Controller> = Vec::new();
    let mut next = 0;
    while next < config.restarts {
        let end = (next + BATCH).min(config.restarts);
        let batch = parallel::map_range(exec, end - next, |i| {
            run_restart(sys, target, config, next + i)
        });
        for c in batch {
            match c {
                Ok(c) => out.push(c),
                // a restart that wanders onto a zero-trace point is dropped
                Err(Error::UndefinedPhase) => {}
                Err(e) => return Err(e),
            }
        }
        next = end;
        if let Some(w) = config.wanted {
            if out.iter().filter(|c| c.accepted).count() >= w {
                break;
            }
        }
    }
    if let Some(w) = config.wanted {
        // keep the first `w` accepted restarts in restart order
        let mut kept = 0;
        out.retain(|c| {
            if !c.accepted {
                return true;
            }
            kept += 1;
            kept <= w
        });
    }
    out.sort_by(|a, b| {
        a.nominal_error
            .total_cmp(&b.nominal_error)
            .then(a.restart.cmp(&b.restart))
    });
    Ok(out)
}

/// Nominal gate error of a pulse table.
pub fn recompute_error(
    sys: &ControlSystem,
    pulse: &PulseSequence,
    target: &UnitaryMatrix,
) -> Result<f64> {
    let prop = propagate(sys, pulse, None)?;
    Ok(gate_fidelity(target, &prop)?.error)
}
