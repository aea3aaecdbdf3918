// Copyright 2026 qsens Contributors
// SPDX-License-Identifier: Apache-2.0

//! Controller files, the synthesis manifest and CSV helpers.
//!
//! Controller file layout:
//!
//! ```text
//! # qsens controller v1
//! # system_hash: <sha-256 hex>
//! # seed: 2024
//! # target: haar:7
//! # restart: 12
//! # nominal_error: 9.6312345678901234e-4
//! # iterations: 251
//! # termination: TargetReached
//! # shape: 2 32
//! <one line per control, κ amplitudes each>
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use qsens_core::PulseSequence;

use crate::error::{CliError, CliResult};

const MAGIC: &str = "# qsens controller v1";

/// 17 significant digits; parses back to the same `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

pub fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerFile {
    pub system_hash: String,
    pub seed: u64,
    pub target: String,
    pub restart: usize,
    pub nominal_error: f64,
    pub iterations: usize,
    pub termination: String,
    pub pulse: PulseSequence,
}

impl ControllerFile {
    pub fn render(&self) -> String {
        let (m, k) = self.pulse.shape();
        let mut s = format!(
            "{MAGIC}\n# system_hash: {}\n# seed: {}\n# target: {}\n# restart: {}\n# nominal_error: {}\n\
             # iterations: {}\n# termination: {}\n# shape: {m} {k}\n",
            self.system_hash,
            self.seed,
            self.target,
            self.restart,
            fmt_f64(self.nominal_error),
            self.iterations,
            self.termination
        );
        for row in self.pulse.rows() {
            let cells: Vec<String> = row.iter().map(|&x| fmt_f64(x)).collect();
            s.push_str(&cells.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str, path: &Path) -> CliResult<Self> {
        let bad = |m: String| CliError::data(path, m);
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad("not a qsens controller file (missing header)".into()));
        }
        let mut header = std::collections::HashMap::new();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if let Some(h) = line.strip_prefix("# ") {
                let (k, v) = h
                    .split_once(": ")
                    .ok_or_else(|| bad(format!("line {}: malformed header", i + 2)))?;
                header.insert(k.to_string(), v.to_string());
            } else if !line.trim().is_empty() {
                let row = line
                    .split_whitespace()
                    .map(|t| parse_f64(t).filter(|x| x.is_finite()))
                    .collect::<Option<Vec<f64>>>()
                    .ok_or_else(|| bad(format!("line {}: invalid amplitude", i + 2)))?;
                rows.push(row);
            }
        }
        let get = |k: &str| {
            header
                .get(k)
                .ok_or_else(|| bad(format!("missing header field {k:?}")))
        };
        let num = |k: &str| -> CliResult<usize> {
            get(k)?
                .parse()
                .map_err(|_| bad(format!("header field {k:?} is not an integer")))
        };
        let shape: Vec<usize> = get("shape")?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("malformed shape".into())))
            .collect::<CliResult<_>>()?;
        if shape.len() != 2 || rows.len() != shape[0] || rows.iter().any(|r| r.len() != shape[1]) {
            return Err(bad(format!(
                "amplitude table does not match shape {shape:?}"
            )));
        }
        let flat: Vec<f64> = rows.concat();
        let pulse = PulseSequence::new(DMatrix::from_row_slice(shape[0], shape[1], &flat))
            .map_err(|e| bad(e.to_string()))?;
        Ok(Self {
            system_hash: get("system_hash")?.clone(),
            seed: get("seed")?
                .parse()
                .map_err(|_| bad("header field \"seed\" is not an integer".into()))?,
            target: get("target")?.clone(),
            restart: num("restart")?,
            nominal_error: parse_f64(get("nominal_error")?)
                .ok_or_else(|| bad("malformed nominal_error".into()))?,
            iterations: num("iterations")?,
            termination: get("termination")?.clone(),
            pulse,
        })
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::data(path, format!("cannot read: {e}")))?;
        Self::parse(&text, path)
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        fs::write(path, self.render())
            .map_err(|e| CliError::io(format!("writing {}", path.display()), e))
    }
}

pub fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(format!("creating {}", dir.display()), e))
}

/// CSV writer that always emits its header row.
pub struct Table {
    path: PathBuf,
    writer: csv::Writer<fs::File>,
}

impl Table {
    pub fn create(path: &Path, header: &[String]) -> CliResult<Self> {
        let writer = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        let mut t = Self {
            path: path.to_path_buf(),
            writer,
        };
        t.row(header)?;
        Ok(t)
    }

    pub fn row<S: AsRef<[u8]>>(&mut self, cells: &[S]) -> CliResult<()> {
        self.writer
            .write_record(cells)
            .map_err(|e| csv_io(&self.path, e))
    }

    pub fn finish(mut self) -> CliResult<()> {
        self.writer
            .flush()
            .map_err(|e| CliError::io(format!("writing {}", self.path.display()), e))
    }
}

fn csv_io(path: &Path, e: csv::Error) -> CliError {
    CliError::io(
        format!("writing {}", path.display()),
        std::io::Error::other(e),
    )
}

/// A CSV file loaded with its header.
#[derive(Debug, Clone)]
pub struct CsvData {
    pub path: PathBuf,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvData {
    pub fn read(path: &Path) -> CliResult<Self> {
        let mut r =
            csv::Reader::from_path(path).map_err(|e| CliError::data(path, e.to_string()))?;
        let header = r
            .headers()
            .map_err(|e| CliError::data(path, e.to_string()))?
            .iter()
            .map(String::from)
            .collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(String::from).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()
            .map_err(|e| CliError::data(path, e.to_string()))?;
        Ok(Self {
            path: path.to_path_buf(),
            header,
            rows,
        })
    }

    pub fn column(&self, name: &str) -> CliResult<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::data(&self.path, format!("missing column {name:?}")))
    }

    /// Labels `L` of every column named `<prefix>L`.
    pub fn labels_with_prefix(&self, prefix: &str) -> Vec<String> {
        self.header
            .iter()
            .filter_map(|h| h.strip_prefix(prefix).map(String::from))
            .collect()
    }

    /// Numeric column; empty cells become `None`.
    pub fn numbers(&self, name: &str) -> CliResult<Vec<Option<f64>>> {
        let c = self.column(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let cell = r.get(c).map(String::as_str).unwrap_or("");
                if cell.is_empty() {
                    Ok(None)
                } else {
                    parse_f64(cell).map(Some).ok_or_else(|| {
                        CliError::data(&self.path, format!("row {}: {name} is not a number", i + 2))
                    })
                }
            })
            .collect()
    }
}

/// Manifest entry for one stored controller.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub index: usize,
    pub file: String,
    pub restart: usize,
    pub nominal_error: f64,
}

pub const MANIFEST: &str = "manifest.csv";

pub fn manifest_header() -> Vec<String> {
    [
        "index",
        "file",
        "seed",
        "restart",
        "nominal_error",
        "iterations",
        "termination",
    ]
    .map(String::from)
    .to_vec()
}

pub fn read_manifest(dir: &Path) -> CliResult<Vec<ManifestEntry>> {
    let path = dir.join(MANIFEST);
    if !path.exists() {
        return Err(CliError::data(
            &path,
            "controller manifest not found (run `qsens synthesize` first)",
        ));
    }
    let data = CsvData::read(&path)?;
    let (ci, cf, cr) = (
        data.column("index")?,
        data.column("file")?,
        data.column("restart")?,
    );
    let errors = data.numbers("nominal_error")?;
    data.rows
        .iter()
        .zip(errors)
        .enumerate()
        .map(|(i, (r, e))| {
            let bad = || CliError::data(&path, format!("row {}: malformed entry", i + 2));
            Ok(ManifestEntry {
                index: r[ci].parse().map_err(|_| bad())?,
                file: r[cf].clone(),
                restart: r[cr].parse().map_err(|_| bad())?,
                nominal_error: e.ok_or_else(bad)?,
            })
        })
        .collect()
}
