// Copyright 2026 qsens Contributors
// SPDX-License-Identifier: Apache-2.0

//! Dense complex matrix kernel.
//!
//! Hermitian generators are exponentiated through their eigendecomposition,
//! which keeps propagators unitary to rounding. The coupling integral
//!
//! ```text
//! ∫₀^τ exp(−iH(τ−s)) (−iB) exp(−iHs) ds
//! ```
//!
//! is the Fréchet derivative of `exp(−iHτ)` in direction `B`. It is evaluated
//! either from the upper-right block of `exp(τ·[[−iH, −iB], [0, −iH]])`
//! (general scaling-and-squaring, Padé 13) or from divided differences of
//! `x ↦ exp(−ixτ)` on the spectrum of `H`. Both routes are kept so that each
//! can check the other.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{dim_mismatch, Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Relative tolerance for Hermiticity checks.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Per-dimension tolerance for unitarity checks.
pub const UNITARY_TOL: f64 = 1e-10;

/// Square matrix equal to its conjugate transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(ComplexMatrix);

/// Square matrix with `U†U = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix(ComplexMatrix);

fn ensure_finite(m: &ComplexMatrix, what: &str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("{what} has non-finite entries")))
    }
}

fn ensure_square(m: &ComplexMatrix, context: &'static str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::StructureViolation(format!(
            "{context}: matrix is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

impl HermitianMatrix {
    /// Validates `m` and snaps it onto the Hermitian subspace, `(m + m†)/2`,
    /// so downstream eigensolvers see an exactly Hermitian input.
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        ensure_square(&m, "HermitianMatrix")?;
        ensure_finite(&m, "HermitianMatrix")?;
        let adj = m.adjoint();
        let skew = (&m - &adj).norm();
        let scale = m.norm().max(1.0);
        if skew > HERMITIAN_TOL * scale {
            return Err(Error::StructureViolation(format!(
                "matrix is not Hermitian: ‖A − A†‖_F = {skew:.3e}"
            )));
        }
        Ok(Self((m + adj) * Complex64::new(0.5, 0.0)))
    }

    /// Real diagonal matrix.
    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d: Vec<Complex64> = diag.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        Self(ComplexMatrix::from_diagonal(&DVector::from_vec(d)))
    }

    pub fn zeros(n: usize) -> Self {
        Self(ComplexMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(ComplexMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_inner(self) -> ComplexMatrix {
        self.0
    }

    /// Real multiple `a·H` (stays Hermitian).
    pub fn scaled(&self, a: f64) -> Self {
        Self(&self.0 * Complex64::new(a, 0.0))
    }

    /// `self + a·other`.
    pub fn add_scaled(&self, other: &HermitianMatrix, a: f64) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(dim_mismatch("add_scaled", self.dim(), other.dim()));
        }
        let mut out = self.0.clone();
        out.zip_apply(&other.0, |x, y| *x += y * a);
        Ok(Self(out))
    }

    /// In-place `self += a·other`; dimensions must already agree.
    pub(crate) fn axpy(&mut self, a: f64, other: &HermitianMatrix) {
        self.0.zip_apply(&other.0, |x, y| *x += y * a);
    }

    pub fn eigen(&self) -> Result<HermitianEigen> {
        HermitianEigen::new(self)
    }
}

impl UnitaryMatrix {
    /// Validates `‖U†U − I‖_F ≤ 1e−10·N`.
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        ensure_square(&m, "UnitaryMatrix")?;
        ensure_finite(&m, "UnitaryMatrix")?;
        let dev = unitarity_defect(&m);
        if dev > UNITARY_TOL * m.nrows() as f64 {
            return Err(Error::StructureViolation(format!(
                "matrix is not unitary: ‖U†U − I‖_F = {dev:.3e}"
            )));
        }
        Ok(Self(m))
    }

    /// Wraps a product of unitaries without re-checking.
    pub(crate) fn from_trusted(m: ComplexMatrix) -> Self {
        Self(m)
    }

    pub fn identity(n: usize) -> Self {
        Self(ComplexMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_inner(self) -> ComplexMatrix {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    /// `self · rhs`.
    pub fn compose(&self, rhs: &UnitaryMatrix) -> Self {
        Self(&self.0 * &rhs.0)
    }

    /// Multiplies by the global phase `e^{iθ}`.
    pub fn with_phase(&self, theta: f64) -> Self {
        Self(&self.0 * Complex64::from_polar(1.0, theta))
    }

    /// `‖U†U − I‖_F`.
    pub fn defect(&self) -> f64 {
        unitarity_defect(&self.0)
    }
}

fn unitarity_defect(m: &ComplexMatrix) -> f64 {
    let n = m.nrows();
    (m.adjoint() * m - ComplexMatrix::identity(n, n)).norm()
}

/// Spectral decomposition `H = V·diag(λ)·V†` of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: ComplexMatrix,
}

impl HermitianEigen {
    pub fn new(h: &HermitianMatrix) -> Result<Self> {
        let n = h.dim();
        if n == 0 {
            return Ok(Self {
                values: Vec::new(),
                vectors: ComplexMatrix::zeros(0, 0),
            });
        }
        let eig = h.0.clone().symmetric_eigen();
        let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(
                "eigensolver returned non-finite eigenvalues".into(),
            ));
        }
        ensure_finite(&eig.eigenvectors, "eigenvector matrix")?;
        Ok(Self {
            values,
            vectors: eig.eigenvectors,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `exp(−iHτ) = V·diag(e^{−iλτ})·V†`.
    pub fn exp_neg_i(&self, tau: f64) -> UnitaryMatrix {
        let phases: Vec<Complex64> = self
            .values
            .iter()
            .map(|&l| Complex64::from_polar(1.0, -l * tau))
            .collect();
        let mut scaled = self.vectors.clone();
        for (j, mut col) in scaled.column_iter_mut().enumerate() {
            col *= phases[j];
        }
        UnitaryMatrix::from_trusted(scaled * self.vectors.adjoint())
    }

    /// `V†·A·V`.
    pub fn to_eigenbasis(&self, a: &ComplexMatrix) -> ComplexMatrix {
        self.vectors.adjoint() * a * &self.vectors
    }

    /// `V·A·V†`.
    pub fn from_eigenbasis(&self, a: &ComplexMatrix) -> ComplexMatrix {
        &self.vectors * a * self.vectors.adjoint()
    }

    /// Divided-difference kernel `G_jl = f[λ_j, λ_l]` for `f(x) = exp(−ixτ)`.
    pub fn divided_differences(&self, tau: f64) -> ComplexMatrix {
        let n = self.dim();
        ComplexMatrix::from_fn(n, n, |j, l| {
            let (a, b) = (self.values[j], self.values[l]);
            let half = 0.5 * (a - b) * tau;
            Complex64::from_polar(1.0, -0.5 * (a + b) * tau) * (-I * tau * sinc(half))
        })
    }

    /// Coupling integral in direction `b`, given in the eigenbasis of `H`.
    pub fn coupling_in_eigenbasis(
        &self,
        b_eig: &ComplexMatrix,
        kernel: &ComplexMatrix,
    ) -> ComplexMatrix {
        b_eig.component_mul(kernel)
    }

    /// Coupling integral `∫₀^τ e^{−iH(τ−s)}(−iB)e^{−iHs} ds` by divided differences.
    pub fn coupling(&self, b: &ComplexMatrix, tau: f64) -> ComplexMatrix {
        let kernel = self.divided_differences(tau);
        self.from_eigenbasis(&self.coupling_in_eigenbasis(&self.to_eigenbasis(b), &kernel))
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

/// `exp(−iHτ)` through the eigendecomposition of `H`.
///
/// Negative `τ` is accepted and yields the inverse propagator.
pub fn expm_neg_i_hermitian(h: &HermitianMatrix, tau: f64) -> Result<UnitaryMatrix> {
    if !tau.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "duration must be finite, got {tau}"
        )));
    }
    Ok(h.eigen()?.exp_neg_i(tau))
}

// Padé(13) numerator coefficients, Higham (2005).
const PADE13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371_920_351_148_152;

fn one_norm(a: &ComplexMatrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// General matrix exponential by scaling and squaring with a Padé(13)
/// approximant.
pub fn expm(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.nrows() != a.ncols() {
        return Err(Error::StructureViolation(
            "expm requires a square matrix".into(),
        ));
    }
    ensure_finite(a, "expm input")?;
    let n = a.nrows();
    if n == 0 {
        return Ok(a.clone());
    }
    let norm = one_norm(a);
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = a * Complex64::new(2f64.powi(-s), 0.0);

    let c = |x: f64| Complex64::new(x, 0.0);
    let id = ComplexMatrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;

    let u_inner = &a6 * (&a6 * c(b[13]) + &a4 * c(b[11]) + &a2 * c(b[9]))
        + &a6 * c(b[7])
        + &a4 * c(b[5])
        + &a2 * c(b[3])
        + &id * c(b[1]);
    let u = &a * u_inner;
    let v = &a6 * (&a6 * c(b[12]) + &a4 * c(b[10]) + &a2 * c(b[8]))
        + &a6 * c(b[6])
        + &a4 * c(b[4])
        + &a2 * c(b[2])
        + &id * c(b[0]);

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or_else(|| Error::Numerical("singular Padé denominator".into()))?;
    for _ in 0..s {
        r = &r * &r;
    }
    ensure_finite(&r, "expm result")?;
    Ok(r)
}

/// Route used to evaluate the coupling integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CouplingMethod {
    /// Upper-right block of the exponential of the augmented 2N×2N generator.
    #[default]
    Block,
    /// Divided differences on the eigendecomposition of `H`.
    Eigen,
}

/// `∫₀^τ exp(−iH(τ−s)) (−iB) exp(−iHs) ds`, augmented-block route.
pub fn coupling_integral(
    h: &HermitianMatrix,
    b: &HermitianMatrix,
    tau: f64,
) -> Result<ComplexMatrix> {
    coupling_integral_with(h, b, tau, CouplingMethod::Block)
}

pub fn coupling_integral_with(
    h: &HermitianMatrix,
    b: &HermitianMatrix,
    tau: f64,
    method: CouplingMethod,
) -> Result<ComplexMatrix> {
    if h.dim() != b.dim() {
        return Err(dim_mismatch("coupling_integral", h.dim(), b.dim()));
    }
    if !(tau.is_finite() && tau >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "duration must be ≥ 0, got {tau}"
        )));
    }
    match method {
        CouplingMethod::Block => coupling_block(h.as_matrix(), b.as_matrix(), tau),
        CouplingMethod::Eigen => Ok(h.eigen()?.coupling(b.as_matrix(), tau)),
    }
}

/// Block route on raw matrices; `b` need not be Hermitian (used for
/// α-weighted generators built on the fly).
pub(crate) fn coupling_block(
    h: &ComplexMatrix,
    b: &ComplexMatrix,
    tau: f64,
) -> Result<ComplexMatrix> {
    let n = h.nrows();
    let scale = -I * tau;
    let mut aug = ComplexMatrix::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(&(h * scale));
    aug.view_mut((n, n), (n, n)).copy_from(&(h * scale));
    aug.view_mut((0, n), (n, n)).copy_from(&(b * scale));
    let e = expm(&aug)?;
    Ok(e.view((0, n), (n, n)).into_owned())
}

pub fn frobenius_norm(a: &ComplexMatrix) -> f64 {
    a.norm()
}

/// Largest singular value.
pub fn spectral_norm(a: &ComplexMatrix) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Largest |eigenvalue| of a Hermitian matrix (its spectral norm).
pub fn hermitian_spectral_norm(h: &HermitianMatrix) -> Result<f64> {
    Ok(h.eigen()?
        .values
        .iter()
        .fold(0.0_f64, |m, v| m.max(v.abs())))
}

/// `Tr[A†B]`.
pub fn trace_inner(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<Complex64> {
    if a.shape() != b.shape() {
        return Err(dim_mismatch(
            "trace_inner",
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    Ok(a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum())
}

/// `Tr[A·B]` without forming the product.
pub fn trace_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Complex64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Kronecker product.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.kronecker(b)
}
