//! System specification files.

use std::fs;
use std::path::Path;

use heis_core::derivation::structural_violation;
use heis_core::{LinearSystem, Matrix, DEFAULT_TOLERANCE};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("invalid derivation: {0}")]
    Derivation(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("internal inconsistency: {0}")]
    Internal(String),
}

impl CliError {
    /// 1 for bad input, 2 for internal inconsistencies.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Internal(_) => 2,
            _ => 1,
        }
    }
}

/// A linear system on H^n as stored on disk. Coordinates are ordered
/// `(x_1, y_1, ..., x_n, y_n, z)`; `derivation` is a list of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub schema_version: u32,
    pub n: usize,
    pub derivation: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

impl SystemSpec {
    pub fn tolerance(&self) -> f64 {
        self.tolerance.unwrap_or(DEFAULT_TOLERANCE)
    }

    pub fn dim(&self) -> usize {
        2 * self.n + 1
    }

    pub fn matrix(&self) -> Matrix {
        let dim = self.dim();
        Matrix::from_fn(dim, dim, |i, j| self.derivation[i][j])
    }

    /// Checks shape, tolerance and the derivation block conditions.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Invalid(format!(
                "unsupported schema_version {}, expected {SCHEMA_VERSION}",
                self.schema_version
            )));
        }
        if self.n == 0 {
            return Err(CliError::Invalid("n must be positive".into()));
        }
        let dim = self.dim();
        if self.derivation.len() != dim {
            return Err(CliError::Dimension(format!(
                "derivation has {} rows, expected {dim} for n = {}",
                self.derivation.len(),
                self.n
            )));
        }
        for (i, row) in self.derivation.iter().enumerate() {
            if row.len() != dim {
                return Err(CliError::Dimension(format!(
                    "derivation row {} has {} entries, expected {dim}",
                    i + 1,
                    row.len()
                )));
            }
        }
        if self.controls.is_empty() {
            return Err(CliError::Invalid("at least one control is required".into()));
        }
        for (k, c) in self.controls.iter().enumerate() {
            if c.len() != dim {
                return Err(CliError::Dimension(format!(
                    "control {} has {} entries, expected {dim}",
                    k + 1,
                    c.len()
                )));
            }
        }
        let tol = self.tolerance();
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(CliError::Invalid(format!("tolerance must be positive, got {tol}")));
        }
        if let Some(msg) = structural_violation(&self.matrix(), tol) {
            return Err(CliError::Derivation(msg));
        }
        Ok(())
    }

    pub fn system(&self) -> Result<LinearSystem, CliError> {
        self.validate()?;
        LinearSystem::from_raw(self.matrix(), &self.controls, self.tolerance())
            .map_err(|e| CliError::Invalid(e.to_string()))
    }
}

pub fn parse_spec(text: &str) -> Result<SystemSpec, CliError> {
    let spec: SystemSpec = serde_json::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
    spec.validate()?;
    Ok(spec)
}

pub fn load_spec(path: &Path) -> Result<SystemSpec, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_spec(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h1_text(center_col: f64) -> String {
        format!(
            r#"{{"schema_version": 1, "n": 1,
                "derivation": [[0, -1, {center_col}], [1, 0, 0], [0, 0, 0]],
                "controls": [[1, 0, 0]]}}"#
        )
    }

    #[test]
    fn loads_normal_form() {
        let spec = parse_spec(&h1_text(0.0)).unwrap();
        assert_eq!(spec.n, 1);
        assert_eq!(spec.tolerance(), DEFAULT_TOLERANCE);
        assert_eq!(spec.system().unwrap().m(), 1);
    }

    #[test]
    fn rejects_center_column() {
        let err = parse_spec(&h1_text(1.0)).unwrap_err();
        assert!(err.to_string().contains("center column must be (0,…,0,d)"), "{err}");
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn rejects_short_control() {
        let text = r#"{"schema_version": 1, "n": 2,
            "derivation": [[0,0,0,0,0],[0,0,0,0,0],[0,0,0,0,0],[0,0,0,0,0],[0,0,0,0,0]],
            "controls": [[1, 0, 0, 0]]}"#;
        let err = parse_spec(text).unwrap_err();
        assert!(matches!(err, CliError::Dimension(_)), "{err}");
        assert!(err.to_string().contains("control 1 has 4 entries, expected 5"));
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = parse_spec("{\"schema_version\": 1,\n \"n\": }").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
        let err = parse_spec(r#"{"schema_version": 1, "n": 1, "controls": []}"#).unwrap_err();
        assert!(err.to_string().contains("missing field `derivation`"), "{err}");
    }

    #[test]
    fn rejects_unknown_schema() {
        let text = h1_text(0.0).replace("\"schema_version\": 1", "\"schema_version\": 7");
        assert!(parse_spec(&text).unwrap_err().to_string().contains("schema_version 7"));
    }
}
