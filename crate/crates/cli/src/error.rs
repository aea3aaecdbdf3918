// Copyright 2026 qsens Contributors
// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const INTERNAL: u8 = 1;
    pub const CONFIG: u8 = 2;
    pub const SYNTHESIS: u8 = 3;
    pub const DATA: u8 = 4;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {path}{}: {message}", location(*.line, *.column))]
    Config {
        path: PathBuf,
        line: Option<usize>,
        column: Option<usize>,
        message: String,
    },
    #[error("synthesis failure: {0}")]
    Synthesis(String),
    #[error("data error: {path}: {message}")]
    Data { path: PathBuf, message: String },
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] qsens_core::Error),
}

fn location(line: Option<usize>, column: Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!(":{l}:{c}"),
        (Some(l), None) => format!(":{l}"),
        _ => String::new(),
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => exit::CONFIG,
            CliError::Synthesis(_) => exit::SYNTHESIS,
            CliError::Data { .. } => exit::DATA,
            CliError::Io { .. } | CliError::Core(_) => exit::INTERNAL,
        }
    }

    pub fn config(path: &Path, message: impl Into<String>) -> Self {
        CliError::Config {
            path: path.to_path_buf(),
            line: None,
            column: None,
            message: message.into(),
        }
    }

    pub fn data(path: &Path, message: impl Into<String>) -> Self {
        CliError::Data {
            path: path.to_path_buf(),
            message: message.into(),
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io {
            context: context.into(),
            source,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
