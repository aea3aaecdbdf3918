// Copyright 2026 qsens Contributors
// SPDX-License-Identifier: Apache-2.0

//! Experiment configuration (TOML).
//!
//! ```toml
//! seed = 2024
//!
//! [system]
//! builder = "heisenberg-chain-3"
//! kappa = 32
//! gate_time = 15.0
//!
//! [target]
//! haar_seed = 7
//!
//! [synthesis]
//! restarts = 200
//! controllers = 100
//!
//! [analysis]
//! epsilon = 0.01
//!
//! [output]
//! dir = "results"
//! ```
//!
//! Explicit systems replace `builder` with `drift` and `controls`, each
//! matrix a list of rows of `[re, im]` pairs.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use qsens_core::case_study::{embed, haar_random_unitary, heisenberg_chain, Pauli};
use qsens_core::certification::IterativeConfig;
use qsens_core::synthesis::SynthesisConfig;
use qsens_core::{ComplexMatrix, ControlSystem, HermitianMatrix, StructureBasis, UnitaryMatrix};

use crate::error::{CliError, CliResult};

pub type MatrixSpec = Vec<Vec<[f64; 2]>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Master seed for synthesis and, unless overridden, the Haar target.
    pub seed: u64,
    pub system: SystemSection,
    pub target: TargetSection,
    pub synthesis: SynthesisSection,
    pub analysis: AnalysisSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    /// `heisenberg-chain-<n>`; ignored when `drift` is given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub builder: Option<String>,
    pub kappa: usize,
    pub gate_time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift: Option<MatrixSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub controls: Option<Vec<MatrixSpec>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TargetSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub haar_seed: Option<u64>,
    /// `identity`, `x`, `y`, `z`, `h`, `cnot` or `toffoli`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gate: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisSection {
    pub restarts: usize,
    /// Accepted controllers wanted; synthesis stops launching restarts once reached.
    pub controllers: usize,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub target_error: f64,
    pub initial_scale: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude_bound: Option<f64>,
    pub lbfgs_memory: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub epsilon: f64,
    /// Subset of the principal structures by label (`H0`, `H1`, ...).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structures: Option<Vec<String>>,
    pub sweep_min: f64,
    pub sweep_max: f64,
    pub sweep_points: usize,
    pub alg1_step: f64,
    pub alg1_max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 2024,
            system: SystemSection::default(),
            target: TargetSection {
                haar_seed: Some(7),
                gate: None,
            },
            synthesis: SynthesisSection::default(),
            analysis: AnalysisSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            builder: Some("heisenberg-chain-3".into()),
            kappa: 32,
            gate_time: 15.0,
            drift: None,
            controls: None,
        }
    }
}

impl Default for SynthesisSection {
    fn default() -> Self {
        Self {
            restarts: 200,
            controllers: 100,
            max_iterations: 3000,
            gradient_tolerance: 1e-10,
            target_error: 1e-3,
            initial_scale: 1.0,
            amplitude_bound: None,
            lbfgs_memory: 12,
        }
    }
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            structures: None,
            sweep_min: -0.2,
            sweep_max: 0.2,
            sweep_points: 201,
            alg1_step: 1e-4,
            alg1_max_iterations: 1_000_000,
        }
    }
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("results"),
        }
    }
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

impl ExperimentConfig {
    pub fn parse(text: &str, path: &Path) -> CliResult<Self> {
        let config: Self = toml::from_str(text).map_err(|e| {
            let (line, column) = match e.span() {
                Some(span) => {
                    let (l, c) = line_col(text, span.start);
                    (Some(l), Some(c))
                }
                None => (None, None),
            };
            CliError::Config {
                path: path.to_path_buf(),
                line,
                column,
                message: e.message().trim().to_string(),
            }
        })?;
        config.validate(path)?;
        Ok(config)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(path, format!("cannot read file: {e}")))?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self, path: &Path) -> CliResult<()> {
        let err = |m: String| Err(CliError::config(path, m));
        let s = &self.synthesis;
        if s.restarts == 0 || s.controllers == 0 || s.max_iterations == 0 || s.lbfgs_memory == 0 {
            return err("[synthesis] counts must be ≥ 1".into());
        }
        if !(s.gradient_tolerance > 0.0 && s.target_error > 0.0 && s.initial_scale > 0.0) {
            return err("[synthesis] tolerances and initial_scale must be > 0".into());
        }
        let a = &self.analysis;
        if !(a.epsilon > 0.0 && a.epsilon <= 1.0) {
            return err(format!(
                "[analysis] epsilon must lie in (0, 1], got {}",
                a.epsilon
            ));
        }
        if !(a.sweep_min < a.sweep_max) || a.sweep_points < 2 {
            return err("[analysis] sweep needs sweep_min < sweep_max and sweep_points ≥ 2".into());
        }
        if !(a.alg1_step > 0.0) || a.alg1_max_iterations == 0 {
            return err("[analysis] alg1_step must be > 0 and alg1_max_iterations ≥ 1".into());
        }
        if self.target.haar_seed.is_some() && self.target.gate.is_some() {
            return err("[target] give either haar_seed or gate, not both".into());
        }
        if self.system.kappa == 0 || !(self.system.gate_time > 0.0) {
            return err("[system] kappa must be ≥ 1 and gate_time > 0".into());
        }
        Ok(())
    }

    pub fn synthesis_config(&self) -> SynthesisConfig {
        let s = &self.synthesis;
        SynthesisConfig {
            restarts: s.restarts,
            max_iterations: s.max_iterations,
            gradient_tolerance: s.gradient_tolerance,
            target_error: s.target_error,
            initial_scale: s.initial_scale,
            seed: self.seed,
            amplitude_bound: s.amplitude_bound,
            wanted: Some(s.controllers),
            lbfgs_memory: s.lbfgs_memory,
        }
    }

    pub fn iterative_config(&self) -> IterativeConfig {
        IterativeConfig {
            epsilon: self.analysis.epsilon,
            step: self.analysis.alg1_step,
            max_iterations: self.analysis.alg1_max_iterations,
        }
    }

    /// Builds the system, basis and target.
    pub fn build(&self, path: &Path) -> CliResult<Experiment> {
        let cfg_err = |m: String| CliError::config(path, m);
        let (drift, controls) = match (&self.system.drift, &self.system.controls) {
            (Some(d), c) => {
                let drift = hermitian(d).map_err(|m| cfg_err(format!("[system] drift: {m}")))?;
                let controls = c
                    .iter()
                    .flatten()
                    .enumerate()
                    .map(|(i, m)| {
                        hermitian(m).map_err(|e| cfg_err(format!("[system] controls[{i}]: {e}")))
                    })
                    .collect::<CliResult<Vec<_>>>()?;
                (drift, controls)
            }
            (None, Some(_)) => return Err(cfg_err("[system] controls given without drift".into())),
            (None, None) => {
                let name = self
                    .system
                    .builder
                    .as_deref()
                    .unwrap_or("heisenberg-chain-3");
                builder(name).map_err(cfg_err)?
            }
        };
        let sys = ControlSystem::with_gate_time(
            drift,
            controls,
            self.system.kappa,
            self.system.gate_time,
        )
        .map_err(|e| cfg_err(format!("[system] {e}")))?;
        let principal =
            StructureBasis::principal(&sys).map_err(|e| cfg_err(format!("[system] {e}")))?;
        let basis = match &self.analysis.structures {
            None => principal,
            Some(labels) => {
                let picked = labels
                    .iter()
                    .map(|l| {
                        principal
                            .elements()
                            .iter()
                            .find(|e| &e.label == l)
                            .cloned()
                            .ok_or_else(|| cfg_err(format!("[analysis] unknown structure {l:?}")))
                    })
                    .collect::<CliResult<Vec<_>>>()?;
                StructureBasis::new(picked).map_err(|e| cfg_err(format!("[analysis] {e}")))?
            }
        };
        let (target, target_desc) = match &self.target.gate {
            Some(g) => (
                named_gate(g, sys.dim()).map_err(cfg_err)?,
                format!("gate:{g}"),
            ),
            None => {
                let seed = self.target.haar_seed.unwrap_or(self.seed);
                (haar_random_unitary(sys.dim(), seed), format!("haar:{seed}"))
            }
        };
        let system_hash = system_hash(&sys, &target);
        Ok(Experiment {
            sys,
            basis,
            target,
            target_desc,
            system_hash,
        })
    }
}

/// A built experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub sys: ControlSystem,
    pub basis: StructureBasis,
    pub target: UnitaryMatrix,
    pub target_desc: String,
    /// SHA-256 over the system matrices, grid and target.
    pub system_hash: String,
}

fn hermitian(spec: &MatrixSpec) -> Result<HermitianMatrix, String> {
    let n = spec.len();
    if n == 0 || spec.iter().any(|r| r.len() != n) {
        return Err(format!("matrix must be square and non-empty, got {n} rows"));
    }
    let m = ComplexMatrix::from_fn(n, n, |i, j| Complex64::new(spec[i][j][0], spec[i][j][1]));
    HermitianMatrix::new(m).map_err(|e| e.to_string())
}

/// `heisenberg-chain-<n>`: drift `½Σ σ·σ`, controls `½σx`, `½σy` on spin 0.
fn builder(name: &str) -> Result<(HermitianMatrix, Vec<HermitianMatrix>), String> {
    let n: usize = name
        .strip_prefix("heisenberg-chain-")
        .and_then(|s| s.parse().ok())
        .filter(|n| (1..=6).contains(n))
        .ok_or_else(|| {
            format!("[system] unknown builder {name:?} (expected heisenberg-chain-<1..6>)")
        })?;
    let half = Complex64::new(0.5, 0.0);
    let controls = [Pauli::X, Pauli::Y]
        .into_iter()
        .map(|p| HermitianMatrix::new(embed(p, 0, n) * half).expect("Pauli is Hermitian"))
        .collect();
    Ok((heisenberg_chain(n), controls))
}

fn named_gate(name: &str, dim: usize) -> Result<UnitaryMatrix, String> {
    let c = |re: f64| Complex64::new(re, 0.0);
    let m = match (name, dim) {
        ("identity", n) => ComplexMatrix::identity(n, n),
        ("x", 2) => Pauli::X.matrix(),
        ("y", 2) => Pauli::Y.matrix(),
        ("z", 2) => Pauli::Z.matrix(),
        ("h", 2) => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            ComplexMatrix::from_row_slice(2, 2, &[c(s), c(s), c(s), c(-s)])
        }
        ("cnot" | "toffoli", _) => {
            let n = if name == "cnot" { 4 } else { 8 };
            if dim != n {
                return Err(format!(
                    "[target] gate {name:?} needs dimension {n}, system has {dim}"
                ));
            }
            let mut m = ComplexMatrix::identity(n, n);
            m.swap_rows(n - 2, n - 1);
            m
        }
        ("x" | "y" | "z" | "h", _) => {
            return Err(format!(
                "[target] gate {name:?} needs dimension 2, system has {dim}"
            ));
        }
        _ => return Err(format!("[target] unknown gate {name:?}")),
    };
    UnitaryMatrix::new(m).map_err(|e| e.to_string())
}

fn system_hash(sys: &ControlSystem, target: &UnitaryMatrix) -> String {
    let mut h = Sha256::new();
    h.update(b"qsens-system-v1");
    h.update((sys.dim() as u64).to_le_bytes());
    h.update((sys.kappa() as u64).to_le_bytes());
    h.update(sys.delta().to_bits().to_le_bytes());
    let mut feed = |m: &ComplexMatrix| {
        for z in m.iter() {
            h.update(z.re.to_bits().to_le_bytes());
            h.update(z.im.to_bits().to_le_bytes());
        }
    };
    feed(sys.drift().as_matrix());
    for c in sys.interactions() {
        feed(c.as_matrix());
    }
    feed(target.as_matrix());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        let mut cfg = ExperimentConfig::default();
        cfg.synthesis.amplitude_bound = Some(2.5);
        cfg.analysis.structures = Some(vec!["H0".into(), "H2".into()]);
        cfg.analysis.alg1_step = 1e-5;
        let text = cfg.to_toml();
        let back = ExperimentConfig::parse(&text, Path::new("x.toml")).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn explicit_system_round_trips() {
        let text = r#"
seed = 3
[system]
kappa = 4
gate_time = 1.0
drift = [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [-1.0, 0.0]]]
controls = [[[[0.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 0.0]]]]
[target]
gate = "x"
"#;
        let cfg = ExperimentConfig::parse(text, Path::new("q.toml")).unwrap();
        let again = ExperimentConfig::parse(&cfg.to_toml(), Path::new("q.toml")).unwrap();
        assert_eq!(cfg, again);
        let exp = cfg.build(Path::new("q.toml")).unwrap();
        assert_eq!(exp.sys.dim(), 2);
        assert_eq!(exp.basis.labels(), vec!["H0", "H1"]);
        assert_eq!(exp.target_desc, "gate:x");
    }

    #[test]
    fn defaults_build_the_case_study() {
        let exp = ExperimentConfig::default()
            .build(Path::new("d.toml"))
            .unwrap();
        let (sys, _) = qsens_core::case_study::build_case_study();
        assert_eq!(exp.sys, sys);
        assert_eq!(exp.target_desc, "haar:7");
        assert_eq!(exp.system_hash.len(), 64);
    }

    #[test]
    fn syntax_error_reports_line_and_column() {
        let text = "seed = 1\n[analysis]\nepsilon = \"big\"\n";
        match ExperimentConfig::parse(text, Path::new("bad.toml")) {
            Err(CliError::Config {
                path, line, column, ..
            }) => {
                assert_eq!(path, Path::new("bad.toml"));
                assert_eq!(line, Some(3));
                assert_eq!(column, Some(11));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn semantic_errors_are_config_errors() {
        let bad = "[analysis]\nepsilon = 2.0\n";
        assert!(matches!(
            ExperimentConfig::parse(bad, Path::new("e.toml")),
            Err(CliError::Config { .. })
        ));
        let unknown = "[analysis]\nepsilonn = 0.1\n";
        assert!(ExperimentConfig::parse(unknown, Path::new("e.toml")).is_err());
        let non_herm = "[system]\ndrift = [[[0.0, 0.0], [1.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]\n";
        let cfg = ExperimentConfig::parse(non_herm, Path::new("h.toml")).unwrap();
        assert!(matches!(
            cfg.build(Path::new("h.toml")),
            Err(CliError::Config { .. })
        ));
    }

    #[test]
    fn missing_file_names_path() {
        let err = ExperimentConfig::load(Path::new("/nonexistent/exp.toml")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("/nonexistent/exp.toml"));
    }

    #[test]
    fn hash_depends_on_target() {
        let mut cfg = ExperimentConfig::default();
        let a = cfg.build(Path::new("a")).unwrap().system_hash;
        cfg.target.haar_seed = Some(8);
        let b = cfg.build(Path::new("a")).unwrap().system_hash;
        assert_ne!(a, b);
    }
}
