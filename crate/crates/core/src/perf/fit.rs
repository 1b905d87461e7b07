//! Ordinary least-squares fitting of model coefficients from measurements.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{ModelKind, PerfModel};
use crate::error::{Error, Result};
use crate::model::{Kernel, KernelKind};

#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    /// Single-device run of this kernel.
    pub kernel: Kernel,
    pub seconds: f64,
}

/// One CSV line: `kind,m,k,n,nnz,seq_len,window,seconds`.
#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    kind: ModelKind,
    m: u64,
    k: u64,
    n: u64,
    nnz: u64,
    seq_len: u64,
    window: u64,
    seconds: f64,
}

pub fn read_measurements<R: Read>(reader: R) -> Result<Vec<(ModelKind, Measurement)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for (line, row) in rdr.deserialize::<CsvRow>().enumerate() {
        let row = row?;
        if !(row.seconds > 0.0) {
            return Err(Error::Fit(format!("row {}: measured seconds must be positive", line + 1)));
        }
        let label = format!("row{}", line + 1);
        let gemm_row = row.kind == ModelKind::WinAttnGpuDense && row.seq_len == 0;
        let kernel = Kernel {
            kind: if gemm_row { KernelKind::Gemm } else { row.kind.kernel_kind() },
            m: row.m,
            k: row.k,
            n: row.n,
            nnz: row.nnz,
            seq_len: row.seq_len,
            window: row.window,
            label,
        };
        out.push((
            row.kind,
            Measurement {
                kernel,
                seconds: row.seconds,
            },
        ));
    }
    Ok(out)
}

pub fn write_measurements<W: Write>(writer: W, rows: &[(ModelKind, Measurement)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for (kind, m) in rows {
        wtr.serialize(CsvRow {
            kind: *kind,
            m: m.kernel.m,
            k: m.kernel.k,
            n: m.kernel.n,
            nnz: m.kernel.nnz,
            seq_len: m.kernel.seq_len,
            window: m.kernel.window,
            seconds: m.seconds,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct FitOptions {
    /// Formula constants for the fitted model; kind defaults when `None`.
    pub constants: Option<BTreeMap<String, f64>>,
    /// Fit the GEMM `KN` and `MKN` terms with one shared coefficient.
    pub tie_gemm_c5: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub model: PerfModel,
    pub rows: usize,
    pub rmse: f64,
    pub max_relative_error: f64,
}

/// Feature row of one training kernel. The dense-attention model is a GEMM
/// model, so it also trains on plain GEMM timings.
fn training_features(template: &PerfModel, kernel: &Kernel) -> Result<Vec<f64>> {
    let kind = template.kind();
    if kernel.kind == kind.kernel_kind() {
        return Ok(template.features(kernel));
    }
    if kind == ModelKind::WinAttnGpuDense && kernel.kind == KernelKind::Gemm {
        return Ok(super::formulas::gemm_gpu_features(kernel.m, kernel.k, kernel.n).to_vec());
    }
    Err(Error::Fit(format!("{}: {} kernel in a {kind} data set", kernel.label, kernel.kind)))
}

/// Ordinary least squares over the kind's features. Dense-attention data
/// may mix attention rows with GEMM rows; attention rows alone only pin
/// three combinations of the seven coefficients.
pub fn fit_model(kind: ModelKind, data: &[Measurement], opts: &FitOptions) -> Result<FitReport> {
    let constants = opts.constants.clone().unwrap_or_else(|| kind.default_constants());
    let names = kind.coefficient_names();
    let template = PerfModel::new(kind, vec![1.0; names.len()], constants.clone())?;

    let mut design = Vec::with_capacity(data.len());
    let mut y = Vec::with_capacity(data.len());
    for m in data {
        if !(m.seconds > 0.0) {
            return Err(Error::Fit(format!("{}: measured seconds must be positive", m.kernel.label)));
        }
        design.push(training_features(&template, &m.kernel)?);
        y.push(m.seconds);
    }

    let tied = opts.tie_gemm_c5 && matches!(kind, ModelKind::GemmGpu | ModelKind::WinAttnGpuDense);
    let coefficients = if tied {
        // Columns: K, N, MN, MK, KN + MKN, 1.
        let merged: Vec<Vec<f64>> = design
            .iter()
            .map(|r| vec![r[0], r[1], r[2], r[3], r[4] + r[5], r[6]])
            .collect();
        let c = lstsq(&merged, &y, &["C1", "C2", "C3", "C4", "C5=C6", "b"])?;
        vec![c[0], c[1], c[2], c[3], c[4], c[4], c[5]]
    } else {
        lstsq(&design, &y, names)?
    };

    let model = PerfModel::new(kind, coefficients, constants)?;
    let mut sq = 0.0;
    let mut max_rel: f64 = 0.0;
    for (x, m) in design.iter().zip(data) {
        let err = super::formulas::dot(model.coefficients(), x) - m.seconds;
        sq += err * err;
        max_rel = max_rel.max((err / m.seconds).abs());
    }
    Ok(FitReport {
        model,
        rows: data.len(),
        rmse: (sq / data.len() as f64).sqrt(),
        max_relative_error: max_rel,
    })
}

/// Gaussian elimination with complete pivoting on a square system.
struct Factorization {
    lu: Vec<Vec<f64>>,
    row_perm: Vec<usize>,
    col_perm: Vec<usize>,
}

const PIVOT_TOLERANCE: f64 = 1e-13;

impl Factorization {
    fn new(mut a: Vec<Vec<f64>>, names: &[&str]) -> Result<Self> {
        let p = a.len();
        let mut row_perm: Vec<usize> = (0..p).collect();
        let mut col_perm: Vec<usize> = (0..p).collect();
        let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for k in 0..p {
            let (mut pi, mut pj, mut best) = (k, k, -1.0);
            for (i, row) in a.iter().enumerate().skip(k) {
                for (j, v) in row.iter().enumerate().skip(k) {
                    if v.abs() > best {
                        (pi, pj, best) = (i, j, v.abs());
                    }
                }
            }
            if best <= PIVOT_TOLERANCE * scale {
                let collinear: Vec<&str> = col_perm[k..].iter().map(|&c| names[c]).collect();
                return Err(Error::Fit(format!(
                    "rank-deficient design matrix; collinear features: {}",
                    collinear.join(", ")
                )));
            }
            a.swap(k, pi);
            row_perm.swap(k, pi);
            for row in a.iter_mut() {
                row.swap(k, pj);
            }
            col_perm.swap(k, pj);
            let pivot = a[k][k];
            for i in (k + 1)..p {
                let factor = a[i][k] / pivot;
                a[i][k] = factor;
                for j in (k + 1)..p {
                    a[i][j] -= factor * a[k][j];
                }
            }
        }
        Ok(Self {
            lu: a,
            row_perm,
            col_perm,
        })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let p = self.lu.len();
        let mut z: Vec<f64> = self.row_perm.iter().map(|&r| b[r]).collect();
        for i in 0..p {
            for j in 0..i {
                z[i] -= self.lu[i][j] * z[j];
            }
        }
        for i in (0..p).rev() {
            for j in (i + 1)..p {
                z[i] -= self.lu[i][j] * z[j];
            }
            z[i] /= self.lu[i][i];
        }
        let mut x = vec![0.0; p];
        for (k, &c) in self.col_perm.iter().enumerate() {
            x[c] = z[k];
        }
        x
    }
}

fn normal_rhs(rows: &[Vec<f64>], r: &[f64], p: usize) -> Vec<f64> {
    let mut b = vec![0.0; p];
    for (x, yi) in rows.iter().zip(r) {
        for j in 0..p {
            b[j] += x[j] * yi;
        }
    }
    b
}

/// Least squares via the normal equations on column-equilibrated features,
/// with two rounds of residual refinement. Deterministic for fixed input.
pub fn lstsq(rows: &[Vec<f64>], y: &[f64], names: &[&str]) -> Result<Vec<f64>> {
    let p = names.len();
    if rows.len() < p {
        return Err(Error::Fit(format!(
            "underdetermined: {} rows for {p} coefficients",
            rows.len()
        )));
    }
    if rows.iter().any(|r| r.len() != p) || rows.len() != y.len() {
        return Err(Error::Fit("design matrix shape mismatch".into()));
    }
    let mut scale = vec![0.0f64; p];
    for r in rows {
        for j in 0..p {
            scale[j] = scale[j].max(r[j].abs());
        }
    }
    if let Some(j) = scale.iter().position(|&s| s == 0.0 || !s.is_finite()) {
        return Err(Error::Fit(format!(
            "rank-deficient design matrix; collinear features: {} (identically zero or non-finite)",
            names[j]
        )));
    }
    let scaled: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&scale).map(|(v, s)| v / s).collect())
        .collect();

    let mut gram = vec![vec![0.0; p]; p];
    for x in &scaled {
        for i in 0..p {
            for j in 0..p {
                gram[i][j] += x[i] * x[j];
            }
        }
    }
    let factor = Factorization::new(gram, names)?;
    let mut beta = factor.solve(&normal_rhs(&scaled, y, p));
    for _ in 0..2 {
        let residual: Vec<f64> = scaled
            .iter()
            .zip(y)
            .map(|(x, yi)| yi - x.iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let delta = factor.solve(&normal_rhs(&scaled, &residual, p));
        for (b, d) in beta.iter_mut().zip(delta) {
            *b += d;
        }
    }
    Ok(beta.iter().zip(&scale).map(|(b, s)| b / s).collect())
}
