// Copyright 2026 qsens Contributors
// SPDX-License-Identifier: Apache-2.0

//! Structured Hermitian uncertainty directions.
//!
//! A perturbation of size `δ` adds `δ·B^(k)` to the step-`k` Hamiltonian,
//! where the step generator `B^(k)` depends on where the uncertainty enters:
//! drift structures contribute `Ĥ` in every step, control structures are
//! weighted by the pulse amplitude of their field, `f[m, k]·Ĥ`.

use nalgebra::DMatrix;

use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{frobenius_norm, trace_inner, HermitianMatrix};
use crate::system::{ControlSystem, PulseSequence};

const UNIT_TOL: f64 = 1e-12;

/// Anything that supplies a per-step perturbation generator `B^(k)`.
pub trait Uncertainty: Sync {
    fn dim(&self) -> usize;

    fn step_generator(&self, pulse: &PulseSequence, step: usize) -> Result<HermitianMatrix>;
}

/// Where a structure enters the Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StructureKind {
    /// Scales with 1 in every step.
    Drift,
    /// Scales with the amplitude of control field `m` (zero-based pulse row).
    Control(usize),
}

/// Per-step weight: 1 for drift, `f[m, k]` for control field `m`.
pub fn alpha(kind: StructureKind, pulse: &PulseSequence, step: usize) -> Result<f64> {
    if step >= pulse.n_steps() {
        return Err(Error::IndexOutOfRange {
            what: "time step",
            index: step,
            len: pulse.n_steps(),
        });
    }
    match kind {
        StructureKind::Drift => Ok(1.0),
        StructureKind::Control(m) if m < pulse.n_controls() => Ok(pulse.get(m, step)),
        StructureKind::Control(m) => Err(Error::IndexOutOfRange {
            what: "control field",
            index: m,
            len: pulse.n_controls(),
        }),
    }
}

/// A unit-Frobenius-norm Hermitian direction `Ĥ` with its scaling rule.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyStructure {
    pub matrix: HermitianMatrix,
    pub kind: StructureKind,
    pub label: String,
}

/// `H/‖H‖_F` tagged with `kind`.
pub fn normalize_structure(
    h: &HermitianMatrix,
    kind: StructureKind,
    label: impl Into<String>,
) -> Result<UncertaintyStructure> {
    let norm = frobenius_norm(h.as_matrix());
    if !(norm > 0.0) {
        return Err(Error::DegenerateStructure(
            "cannot normalize a zero matrix".into(),
        ));
    }
    Ok(UncertaintyStructure {
        matrix: h.scaled(1.0 / norm),
        kind,
        label: label.into(),
    })
}

impl UncertaintyStructure {
    /// Wraps an already-normalized matrix, checking `‖Ĥ‖_F = 1`.
    pub fn new(
        matrix: HermitianMatrix,
        kind: StructureKind,
        label: impl Into<String>,
    ) -> Result<Self> {
        let norm = frobenius_norm(matrix.as_matrix());
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::DegenerateStructure(format!(
                "structure must have unit Frobenius norm, got {norm}"
            )));
        }
        Ok(Self {
            matrix,
            kind,
            label: label.into(),
        })
    }

    pub fn alpha(&self, pulse: &PulseSequence, step: usize) -> Result<f64> {
        alpha(self.kind, pulse, step)
    }
}

impl Uncertainty for UncertaintyStructure {
    fn dim(&self) -> usize {
        self.matrix.dim()
    }

    fn step_generator(&self, pulse: &PulseSequence, step: usize) -> Result<HermitianMatrix> {
        Ok(self.matrix.scaled(self.alpha(pulse, step)?))
    }
}

/// Ordered basis `{Ĥ_0, …, Ĥ_M}` of structures; slot 0 is conventionally
/// the drift structure.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureBasis {
    elements: Vec<UncertaintyStructure>,
}

impl StructureBasis {
    pub fn new(elements: Vec<UncertaintyStructure>) -> Result<Self> {
        let Some(first) = elements.first() else {
            return Err(Error::InvalidArgument("structure basis is empty".into()));
        };
        let n = first.matrix.dim();
        for e in &elements {
            if e.matrix.dim() != n {
                return Err(dim_mismatch("structure basis element", n, e.matrix.dim()));
            }
            let norm = frobenius_norm(e.matrix.as_matrix());
            if (norm - 1.0).abs() > UNIT_TOL {
                return Err(Error::DegenerateStructure(format!(
                    "basis element {} has Frobenius norm {norm}",
                    e.label
                )));
            }
        }
        if elements.len() > n * n {
            return Err(Error::InvalidArgument(format!(
                "{} basis elements exceed N² = {}",
                elements.len(),
                n * n
            )));
        }
        Ok(Self { elements })
    }

    /// Normalized drift followed by each normalized interaction Hamiltonian.
    pub fn principal(sys: &ControlSystem) -> Result<Self> {
        let mut elements = vec![normalize_structure(
            sys.drift(),
            StructureKind::Drift,
            "H0",
        )?];
        for (m, h) in sys.interactions().iter().enumerate() {
            elements.push(normalize_structure(
                h,
                StructureKind::Control(m),
                format!("H{}", m + 1),
            )?);
        }
        Self::new(elements)
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.elements[0].matrix.dim()
    }

    pub fn elements(&self) -> &[UncertaintyStructure] {
        &self.elements
    }

    pub fn slot(&self, m: usize) -> &UncertaintyStructure {
        &self.elements[m]
    }

    pub fn labels(&self) -> Vec<String> {
        self.elements.iter().map(|e| e.label.clone()).collect()
    }

    /// Gram matrix `Tr[Ĥ_i Ĥ_j]` (real for Hermitian elements).
    pub fn gram(&self) -> DMatrix<f64> {
        let p = self.len();
        DMatrix::from_fn(p, p, |i, j| {
            trace_inner(
                self.elements[i].matrix.as_matrix(),
                self.elements[j].matrix.as_matrix(),
            )
            .map(|z| z.re)
            .unwrap_or(f64::NAN)
        })
    }

    /// Largest |off-diagonal| Gram entry; zero for an orthonormal basis.
    pub fn orthogonality_defect(&self) -> f64 {
        let g = self.gram();
        let mut worst = 0.0_f64;
        for i in 0..g.nrows() {
            for j in 0..g.ncols() {
                if i != j {
                    worst = worst.max(g[(i, j)].abs());
                }
            }
        }
        worst
    }

    /// `Σ_m c_m α_m^(k) Ĥ_m` for one step.
    pub fn weighted_generator(
        &self,
        coeffs: &[f64],
        pulse: &PulseSequence,
        step: usize,
    ) -> Result<HermitianMatrix> {
        if coeffs.len() != self.len() {
            return Err(dim_mismatch(
                "direction coefficients",
                self.len(),
                coeffs.len(),
            ));
        }
        let mut out = HermitianMatrix::zeros(self.dim());
        for (c, e) in coeffs.iter().zip(&self.elements) {
            let w = c * e.alpha(pulse, step)?;
            if w != 0.0 {
                out.axpy(w, &e.matrix);
            }
        }
        Ok(out)
    }
}

/// Coordinates `s` of a direction in a [`StructureBasis`].
#[derive(Debug, Clone, PartialEq)]
pub enum DirectionVector {
    /// One vector for the whole evolution.
    Static(Vec<f64>),
    /// One vector per time step.
    Sequence(Vec<Vec<f64>>),
}

fn check_unit(v: &[f64]) -> Result<()> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if (norm - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidArgument(format!(
            "direction vector must have unit 2-norm, got {norm}"
        )));
    }
    Ok(())
}

impl DirectionVector {
    pub fn new_static(s: Vec<f64>) -> Result<Self> {
        check_unit(&s)?;
        Ok(Self::Static(s))
    }

    pub fn new_sequence(seq: Vec<Vec<f64>>) -> Result<Self> {
        for s in &seq {
            check_unit(s)?;
        }
        Ok(Self::Sequence(seq))
    }

    /// Unit vector on slot `m` of a basis with `len` slots.
    pub fn unit(len: usize, m: usize) -> Self {
        let mut s = vec![0.0; len];
        s[m] = 1.0;
        Self::Static(s)
    }

    pub fn coefficients(&self, step: usize) -> &[f64] {
        match self {
            Self::Static(s) => s,
            Self::Sequence(seq) => &seq[step],
        }
    }
}

/// `Σ_m s_m Ĥ_m` with every term keeping its own per-step weight.
#[derive(Debug, Clone)]
pub struct ComposedDirection<'a> {
    basis: &'a StructureBasis,
    coords: DirectionVector,
}

/// Composes a normalized direction; each vector must have unit 2-norm.
pub fn compose_direction<'a>(
    basis: &'a StructureBasis,
    s: &DirectionVector,
) -> Result<ComposedDirection<'a>> {
    match s {
        DirectionVector::Static(v) => check_unit(v)?,
        DirectionVector::Sequence(seq) => seq.iter().try_for_each(|v| check_unit(v))?,
    }
    ComposedDirection::from_raw(basis, s.clone())
}

impl<'a> ComposedDirection<'a> {
    /// Composes without the unit-norm check (linearity checks, scaled directions).
    pub fn from_raw(basis: &'a StructureBasis, coords: DirectionVector) -> Result<Self> {
        let check = |v: &[f64]| {
            if v.len() != basis.len() {
                Err(dim_mismatch("direction coefficients", basis.len(), v.len()))
            } else {
                Ok(())
            }
        };
        match &coords {
            DirectionVector::Static(v) => check(v)?,
            DirectionVector::Sequence(seq) => seq.iter().try_for_each(|v| check(v))?,
        }
        Ok(Self { basis, coords })
    }

    pub fn coords(&self) -> &DirectionVector {
        &self.coords
    }

    /// Unweighted composite matrix `Σ_m s_m^(k) Ĥ_m` for step `k`.
    pub fn matrix(&self, step: usize) -> HermitianMatrix {
        let mut out = HermitianMatrix::zeros(self.basis.dim());
        for (c, e) in self
            .coords
            .coefficients(step)
            .iter()
            .zip(self.basis.elements())
        {
            out.axpy(*c, &e.matrix);
        }
        out
    }
}

impl Uncertainty for ComposedDirection<'_> {
    fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn step_generator(&self, pulse: &PulseSequence, step: usize) -> Result<HermitianMatrix> {
        if let DirectionVector::Sequence(seq) = &self.coords {
            if step >= seq.len() {
                return Err(Error::IndexOutOfRange {
                    what: "direction sequence",
                    index: step,
                    len: seq.len(),
                });
            }
        }
        self.basis
            .weighted_generator(self.coords.coefficients(step), pulse, step)
    }
}
