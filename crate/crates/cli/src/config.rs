//! Converter configuration file (JSON, SI units).

use std::path::Path;

use pwmcert::lmi::LmiOptions;
use pwmcert::model::{ControlConfig, PowerStageParams, RampParams, StateSpaceBlock};
use pwmcert::numerics::Matrix;
use pwmcert::periodic::{L1Policy, ModeSearch};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConverterConfig {
    pub power_stage: PowerStageParams<f64>,
    pub control: ControlSection,
    pub ramp: RampParams<f64>,
    #[serde(default)]
    pub options: Options,
}

/// Realisation given as nested row arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    #[serde(rename = "A", default)]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B", default)]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C", default)]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", deny_unknown_fields)]
pub enum ControlSection {
    Proportional {
        a: f64,
        #[serde(rename = "Vref")]
        vref: f64,
    },
    FullLoop {
        #[serde(rename = "Vref")]
        vref: f64,
        compensator: BlockConfig,
        sensor: BlockConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepOptions {
    /// Volts.
    pub resolution_v: f64,
    pub scan_points: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            resolution_v: 0.05,
            scan_points: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationOptions {
    pub enabled: bool,
    pub periods: usize,
    /// `"mode"`, `"mode*<factor>"` or a comma-separated state.
    pub x0: String,
    pub samples_per_period: usize,
    /// Deviation below which a run counts as converged (original units).
    pub convergence_tol: f64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            enabled: true,
            periods: 200,
            x0: "mode*1.5".into(),
            samples_per_period: 256,
            convergence_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct Options {
    pub modes: ModeSearch,
    pub lmi: LmiOptions,
    pub l1: L1Policy,
    pub sweep: SweepOptions,
    pub simulation: SimulationOptions,
}

fn rows_to_matrix(rows: &[Vec<f64>], n_rows: usize, n_cols: usize, what: &str) -> Result<Matrix<f64>, CliError> {
    if n_rows == 0 || n_cols == 0 {
        return Ok(Matrix::zeros(n_rows, n_cols));
    }
    let m = Matrix::from_rows(rows).map_err(|e| CliError::Config(format!("{what}: {e}")))?;
    if m.rows() != n_rows || m.cols() != n_cols {
        return Err(CliError::Config(format!(
            "{what}: expected {n_rows}x{n_cols}, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    Ok(m)
}

impl BlockConfig {
    fn to_block(&self, path: &str) -> Result<StateSpaceBlock<f64>, CliError> {
        let n = self.a.len();
        let a = rows_to_matrix(&self.a, n, n, &format!("{path}.A"))?;
        let b = rows_to_matrix(&self.b, n, 1, &format!("{path}.B"))?;
        let c = rows_to_matrix(&self.c, 1, n, &format!("{path}.C"))?;
        StateSpaceBlock::new(a, b, c, self.d).map_err(|e| CliError::Config(format!("{path}: {e}")))
    }
}

impl ConverterConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                CliError::Config(e.inner().to_string())
            } else {
                CliError::Config(format!("{path}: {}", e.inner()))
            }
        })?;
        cfg.power_stage
            .validate()
            .map_err(|e| CliError::Config(format!("power_stage: {e}")))?;
        cfg.ramp.validate().map_err(|e| CliError::Config(format!("ramp: {e}")))?;
        cfg.control_config()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::from_json(&text)
    }

    pub fn control_config(&self) -> Result<ControlConfig<f64>, CliError> {
        let c = match &self.control {
            ControlSection::Proportional { a, vref } => ControlConfig::Proportional { a: *a, vref: *vref },
            ControlSection::FullLoop {
                vref,
                compensator,
                sensor,
            } => ControlConfig::FullLoop {
                vref: *vref,
                compensator: compensator.to_block("control.compensator")?,
                sensor: sensor.to_block("control.sensor")?,
            },
        };
        c.validate().map_err(|e| CliError::Config(format!("control: {e}")))?;
        Ok(c)
    }
}
