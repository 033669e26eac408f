//! Scenario configuration (JSON).

use std::path::{Path, PathBuf};

use cautious_core::{BasisSet, NoiseModel, Primitive, SymQuadSet};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PrimitiveSpec {
    Constant,
    /// Zero-based coordinate index.
    Coordinate { index: usize },
    Monomial { exponents: Vec<u32> },
    SquaredNorm,
    Gaussian { center: Vec<f64>, width: f64 },
}

impl PrimitiveSpec {
    fn to_primitive(&self) -> Primitive {
        match self {
            PrimitiveSpec::Constant => Primitive::Constant,
            PrimitiveSpec::Coordinate { index } => Primitive::Coordinate(*index),
            PrimitiveSpec::Monomial { exponents } => Primitive::Monomial(exponents.clone()),
            PrimitiveSpec::SquaredNorm => Primitive::SquaredNorm,
            PrimitiveSpec::Gaussian { center, width } => Primitive::Gaussian {
                center: DVector::from_column_slice(center),
                width: *width,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    /// `Π = diag(q, −I_T)`.
    Ball { q: f64 },
    /// Full `(1+T)×(1+T)` matrix, row-major.
    Matrix { pi: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModeSpec {
    Uniform,
    Constant,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleSpec {
    Synthetic {
        gamma_hat: Vec<f64>,
        noise_mode: NoiseModeSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        w_bar: Option<Vec<f64>>,
    },
    /// CSV rows `z_1,…,z_n,y`, grouped into batches of the stencil size.
    Replay { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub basis: Vec<PrimitiveSpec>,
    pub n: usize,
    pub noise: NoiseSpec,
    pub stencil: Vec<Vec<f64>>,
    pub z0: Vec<f64>,
    /// Extra starting points for `online`; defaults to `[z0]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_points: Option<Vec<Vec<f64>>>,
    pub iterations: usize,
    pub seed: u64,
    #[serde(default)]
    pub lambda: f64,
    pub oracle: OracleSpec,
    /// Vertices of the polytope for `optimize`; defaults to `z0 + conv(stencil)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polytope: Option<Vec<Vec<f64>>>,
    pub output_dir: PathBuf,
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ScenarioConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        // relative replay paths are taken relative to the config file
        if let OracleSpec::Replay { path: p } = &mut cfg.oracle {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Shape and range checks that do not need any numerics.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.n == 0 {
            return Err(invalid("n must be positive"));
        }
        if self.basis.is_empty() {
            return Err(invalid("basis must not be empty"));
        }
        if self.stencil.is_empty() {
            return Err(invalid("stencil must not be empty"));
        }
        if let Some(f) = self.stencil.iter().find(|f| f.len() != self.n) {
            return Err(invalid(format!("stencil offset {f:?} does not have length n = {}", self.n)));
        }
        if self.z0.len() != self.n {
            return Err(invalid(format!("z0 has length {}, n = {}", self.z0.len(), self.n)));
        }
        if let Some(p) = self.initial_points.iter().flatten().find(|p| p.len() != self.n) {
            return Err(invalid(format!("initial point {p:?} does not have length n = {}", self.n)));
        }
        if let Some(p) = self.polytope.iter().flatten().find(|p| p.len() != self.n) {
            return Err(invalid(format!("polytope vertex {p:?} does not have length n = {}", self.n)));
        }
        if matches!(&self.polytope, Some(p) if p.is_empty()) {
            return Err(invalid("polytope needs at least one vertex"));
        }
        if !(self.lambda >= 0.0) {
            return Err(invalid(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        match &self.noise {
            NoiseSpec::Ball { q } if !(*q >= 0.0) => return Err(invalid(format!("noise ball q must be nonnegative, got {q}"))),
            NoiseSpec::Matrix { pi } => {
                let t = self.stencil.len() + 1;
                if pi.len() != t || pi.iter().any(|r| r.len() != t) {
                    return Err(invalid(format!("noise matrix must be {t}×{t} for a stencil of {} points", t - 1)));
                }
            }
            _ => {}
        }
        if let OracleSpec::Synthetic { gamma_hat, noise_mode, w_bar } = &self.oracle {
            if gamma_hat.len() != self.basis.len() {
                return Err(invalid(format!(
                    "gamma_hat has length {}, basis has {} functions",
                    gamma_hat.len(),
                    self.basis.len()
                )));
            }
            match (noise_mode, w_bar) {
                (NoiseModeSpec::Constant, None) => return Err(invalid("noise_mode constant requires w_bar")),
                (NoiseModeSpec::Constant, Some(w)) if w.len() != self.stencil.len() => {
                    return Err(invalid(format!("w_bar has length {}, stencil has {} points", w.len(), self.stencil.len())))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn basis_set(&self) -> Result<BasisSet, CliError> {
        BasisSet::new(self.n, self.basis.iter().map(PrimitiveSpec::to_primitive).collect()).map_err(|e| invalid(e.to_string()))
    }

    pub fn noise_model(&self) -> Result<NoiseModel, CliError> {
        let t = self.stencil.len();
        let model = match &self.noise {
            NoiseSpec::Ball { q } => NoiseModel::ball(*q, t),
            NoiseSpec::Matrix { pi } => {
                let flat: Vec<f64> = pi.iter().flatten().copied().collect();
                let m = DMatrix::from_row_slice(t + 1, t + 1, &flat);
                SymQuadSet::new(m).and_then(NoiseModel::new)
            }
        };
        model.map_err(|e| invalid(e.to_string()))
    }

    pub fn z0_vec(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.z0)
    }

    pub fn offsets(&self) -> Vec<DVector<f64>> {
        self.stencil.iter().map(|f| DVector::from_column_slice(f)).collect()
    }

    pub fn starts(&self) -> Vec<DVector<f64>> {
        match &self.initial_points {
            Some(p) if !p.is_empty() => p.iter().map(|z| DVector::from_column_slice(z)).collect(),
            _ => vec![self.z0_vec()],
        }
    }
}

/// Parses replay rows `z_1,…,z_n,y`. Blank lines, `#` comments and a
/// non-numeric header line are skipped.
pub fn parse_replay(text: &str, n: usize) -> Result<Vec<(DVector<f64>, f64)>, CliError> {
    let rows = parse_rows(text, n + 1, "replay")?;
    Ok(rows.into_iter().map(|r| (DVector::from_column_slice(&r[..n]), r[n])).collect())
}

/// Parses a points file with `n` columns per row.
pub fn parse_points(text: &str, n: usize) -> Result<Vec<DVector<f64>>, CliError> {
    Ok(parse_rows(text, n, "points")?.into_iter().map(DVector::from_vec).collect())
}

fn parse_rows(text: &str, width: usize, what: &str) -> Result<Vec<Vec<f64>>, CliError> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(vals) if vals.len() == width && vals.iter().all(|x| x.is_finite()) => out.push(vals),
            Ok(vals) => {
                return Err(invalid(format!(
                    "{what} file line {}: expected {width} finite values, got {}",
                    lineno + 1,
                    vals.len()
                )))
            }
            Err(_) if out.is_empty() && lineno == 0 => continue,
            Err(e) => return Err(invalid(format!("{what} file line {}: {e}", lineno + 1))),
        }
    }
    if out.is_empty() {
        return Err(invalid(format!("{what} file has no rows")));
    }
    Ok(out)
}
