//! Kernel execution-time models and their coefficient files.
//!
//! Each [`PerfModel`] predicts single-kernel time as a linear combination of
//! a kind-specific feature vector. FPGA models collapse to one feature, the
//! architecture's analytic cycle formula, scaled by a fitted factor `C`.

mod fit;
mod formulas;
mod stage;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Kernel, KernelKind};

pub use fit::{fit_model, lstsq, read_measurements, write_measurements, FitOptions, FitReport, Measurement};
pub use formulas::{
    gemm_gpu_features, gemm_gpu_time, spmm_fpga_time, spmm_gpu_features, spmm_gpu_time, winattn_fpga_time,
    winattn_gpu_gemms, winattn_gpu_time, SEXTANS_F_MHZ, SEXTANS_N_M, SWAT_F_MHZ, SWAT_T_INIT, SWAT_T_PIPELINE,
};
pub use stage::{allgather_time, f_perf, kernel_cost, KernelCost, StageExec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "spmm_gpu")]
    SpmmGpu,
    #[serde(rename = "spmm_fpga")]
    SpmmFpga,
    #[serde(rename = "gemm_gpu")]
    GemmGpu,
    #[serde(rename = "winattn_fpga")]
    WinAttnFpga,
    #[serde(rename = "winattn_gpu_dense")]
    WinAttnGpuDense,
}

const GEMM_NAMES: &[&str] = &["C1", "C2", "C3", "C4", "C5", "C6", "b"];

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::SpmmGpu,
        ModelKind::SpmmFpga,
        ModelKind::GemmGpu,
        ModelKind::WinAttnFpga,
        ModelKind::WinAttnGpuDense,
    ];

    pub fn kernel_kind(self) -> KernelKind {
        match self {
            ModelKind::SpmmGpu | ModelKind::SpmmFpga => KernelKind::SpMM,
            ModelKind::GemmGpu => KernelKind::Gemm,
            ModelKind::WinAttnFpga | ModelKind::WinAttnGpuDense => KernelKind::WindowAttention,
        }
    }

    pub fn coefficient_names(self) -> &'static [&'static str] {
        match self {
            ModelKind::SpmmGpu => &["C1", "C2", "C3", "C4"],
            ModelKind::SpmmFpga | ModelKind::WinAttnFpga => &["C"],
            ModelKind::GemmGpu | ModelKind::WinAttnGpuDense => GEMM_NAMES,
        }
    }

    pub fn default_constants(self) -> BTreeMap<String, f64> {
        let pairs: &[(&str, f64)] = match self {
            ModelKind::SpmmFpga => &[("F_mhz", SEXTANS_F_MHZ), ("N_M", SEXTANS_N_M)],
            ModelKind::WinAttnFpga => &[
                ("t_pipeline", SWAT_T_PIPELINE),
                ("t_init", SWAT_T_INIT),
                ("F_mhz", SWAT_F_MHZ),
            ],
            ModelKind::WinAttnGpuDense => &[("heads", 8.0), ("head_dim", 64.0)],
            ModelKind::SpmmGpu | ModelKind::GemmGpu => &[],
        };
        pairs.iter().map(|&(k, v)| (k.to_string(), v)).collect()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::SpmmGpu => "spmm_gpu",
            ModelKind::SpmmFpga => "spmm_fpga",
            ModelKind::GemmGpu => "gemm_gpu",
            ModelKind::WinAttnFpga => "winattn_fpga",
            ModelKind::WinAttnGpuDense => "winattn_gpu_dense",
        }
    }

    pub fn is_fpga(self) -> bool {
        matches!(self, ModelKind::SpmmFpga | ModelKind::WinAttnFpga)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown model kind `{s}`")))
    }
}

/// On-disk form: `{"kind":"spmm_fpga","coefficients":{"C":1.0},"constants":{"F_mhz":215,"N_M":640}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelFile {
    kind: ModelKind,
    coefficients: BTreeMap<String, f64>,
    #[serde(default)]
    constants: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelFile", into = "ModelFile")]
pub struct PerfModel {
    kind: ModelKind,
    coefficients: Vec<f64>,
    constants: BTreeMap<String, f64>,
}

impl TryFrom<ModelFile> for PerfModel {
    type Error = Error;

    fn try_from(file: ModelFile) -> Result<Self> {
        let names = file.kind.coefficient_names();
        if let Some(extra) = file.coefficients.keys().find(|k| !names.contains(&k.as_str())) {
            return Err(Error::Config(format!("{}: unknown coefficient `{extra}`", file.kind)));
        }
        let coefficients = names
            .iter()
            .map(|n| {
                file.coefficients
                    .get(*n)
                    .copied()
                    .ok_or_else(|| Error::Config(format!("{}: missing coefficient `{n}`", file.kind)))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut constants = file.kind.default_constants();
        for (k, v) in file.constants {
            if !constants.contains_key(&k) {
                return Err(Error::Config(format!("{}: unknown constant `{k}`", file.kind)));
            }
            constants.insert(k, v);
        }
        PerfModel::new(file.kind, coefficients, constants)
    }
}

impl From<PerfModel> for ModelFile {
    fn from(m: PerfModel) -> Self {
        ModelFile {
            kind: m.kind,
            coefficients: m
                .kind
                .coefficient_names()
                .iter()
                .map(|n| n.to_string())
                .zip(m.coefficients)
                .collect(),
            constants: m.constants,
        }
    }
}

impl PerfModel {
    /// Checks coefficient count, finiteness, and positive FPGA scale factors.
    pub fn new(kind: ModelKind, coefficients: Vec<f64>, constants: BTreeMap<String, f64>) -> Result<Self> {
        let expected = kind.coefficient_names().len();
        if coefficients.len() != expected {
            return Err(Error::Config(format!(
                "{kind}: {} coefficients given, {expected} expected",
                coefficients.len()
            )));
        }
        if coefficients.iter().chain(constants.values()).any(|c| !c.is_finite()) {
            return Err(Error::Config(format!("{kind}: non-finite coefficient or constant")));
        }
        if kind.is_fpga() && !(coefficients[0] > 0.0) {
            return Err(Error::Config(format!("{kind}: scale factor C must be positive")));
        }
        for (name, v) in &constants {
            if !(*v > 0.0) {
                return Err(Error::Config(format!("{kind}: constant `{name}` must be positive")));
            }
        }
        Ok(Self {
            kind,
            coefficients,
            constants,
        })
    }

    /// Model with the kind's default constants.
    pub fn with_coefficients(kind: ModelKind, coefficients: Vec<f64>) -> Result<Self> {
        Self::new(kind, coefficients, kind.default_constants())
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        let idx = self.kind.coefficient_names().iter().position(|n| *n == name)?;
        Some(self.coefficients[idx])
    }

    pub fn constants(&self) -> &BTreeMap<String, f64> {
        &self.constants
    }

    pub fn constant(&self, name: &str) -> f64 {
        self.constants
            .get(name)
            .copied()
            .or_else(|| self.kind.default_constants().get(name).copied())
            .unwrap_or(f64::NAN)
    }

    /// Same model with every coefficient replaced by `f(index, value)`.
    pub fn map_coefficients(&self, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        Self {
            coefficients: self.coefficients.iter().enumerate().map(|(i, &c)| f(i, c)).collect(),
            ..self.clone()
        }
    }

    /// Regression features of `kernel`; prediction is their dot product with the coefficients.
    pub fn features(&self, kernel: &Kernel) -> Vec<f64> {
        formulas::features(self, kernel, 1)
    }

    /// Unclamped single-device prediction, in seconds.
    pub fn predict(&self, kernel: &Kernel) -> f64 {
        self.predict_partitioned(kernel, 1)
    }

    /// Unclamped prediction for one of `parts` row partitions of `kernel`.
    pub fn predict_partitioned(&self, kernel: &Kernel, parts: u32) -> f64 {
        formulas::predict(self, kernel, parts)
    }
}

pub const DEFAULT_TIME_FLOOR: f64 = 1e-6;

fn default_floor() -> f64 {
    DEFAULT_TIME_FLOOR
}

/// Perf models grouped by the `perf_model_id` of a device type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSet {
    /// Lower clamp for predicted times, in seconds.
    #[serde(default = "default_floor")]
    pub floor_s: f64,
    pub models: BTreeMap<String, Vec<PerfModel>>,
}

impl ModelSet {
    pub fn new(models: BTreeMap<String, Vec<PerfModel>>) -> Self {
        Self {
            floor_s: DEFAULT_TIME_FLOOR,
            models,
        }
    }

    pub fn lookup(&self, model_id: &str, kind: KernelKind) -> Option<&PerfModel> {
        self.models.get(model_id)?.iter().find(|m| m.kind.kernel_kind() == kind)
    }

    pub fn lookup_kind(&self, model_id: &str, kind: ModelKind) -> Option<&PerfModel> {
        self.models.get(model_id)?.iter().find(|m| m.kind == kind)
    }

    /// Copy with every coefficient replaced by `f(coefficient)`, in a fixed
    /// traversal order (model id, then list order, then coefficient order).
    pub fn map_coefficients(&self, mut f: impl FnMut(f64) -> f64) -> Self {
        Self {
            floor_s: self.floor_s,
            models: self
                .models
                .iter()
                .map(|(id, list)| (id.clone(), list.iter().map(|m| m.map_coefficients(|_, c| f(c))).collect()))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.floor_s >= 0.0) {
            return Err(Error::Config("floor_s must be non-negative".into()));
        }
        for (id, list) in &self.models {
            let mut seen = std::collections::BTreeSet::new();
            for m in list {
                if !seen.insert(m.kind.kernel_kind()) {
                    return Err(Error::Config(format!(
                        "model set `{id}` has two models for {}",
                        m.kind.kernel_kind()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Bundled illustrative coefficients; GPU values are synthetic, FPGA constants are published ones.
    pub fn demo() -> &'static ModelSet {
        static CELL: OnceLock<ModelSet> = OnceLock::new();
        CELL.get_or_init(|| {
            serde_json::from_str(include_str!("../../data/demo_models.json")).expect("bundled demo_models.json parses")
        })
    }
}
