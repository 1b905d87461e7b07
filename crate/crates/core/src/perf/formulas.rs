use super::{ModelKind, PerfModel};
use crate::model::Kernel;

/// Customized Sextans SpMM design clock.
pub const SEXTANS_F_MHZ: f64 = 215.0;
/// Multiply-accumulate units of the Sextans design.
pub const SEXTANS_N_M: f64 = 640.0;
/// SWAT window-attention pipeline initiation cycles per token.
pub const SWAT_T_PIPELINE: f64 = 201.0;
/// SWAT fill latency in cycles.
pub const SWAT_T_INIT: f64 = 904.0;
pub const SWAT_F_MHZ: f64 = 421.0;

fn ceil_div(x: u64, parts: u32) -> u64 {
    x.div_ceil(parts.max(1) as u64)
}

pub(super) fn dot(coefficients: &[f64], features: &[f64]) -> f64 {
    coefficients.iter().zip(features).fold(0.0, |acc, (c, f)| acc + c * f)
}

fn spmm_gpu_features_dims(m: u64, n: u64, nnz: u64) -> [f64; 4] {
    let (m, n, nnz) = (m as f64, n as f64, nnz as f64);
    let gflop = (2.0 * nnz * n - m * n) * 1e-9;
    let arm = gflop * 1e9 / (8.0 * (nnz + m * n));
    [n, nnz, gflop, arm]
}

/// `[N, nnz, GFLOP, arm]` for an SpMM kernel.
pub fn spmm_gpu_features(k: &Kernel) -> [f64; 4] {
    spmm_gpu_features_dims(k.m, k.n, k.nnz)
}

pub fn spmm_gpu_time(k: &Kernel, model: &PerfModel) -> f64 {
    debug_assert_eq!(model.kind(), ModelKind::SpmmGpu);
    model.predict(k)
}

/// Sextans cycle formula in milliseconds, before the scale factor.
fn sextans_ms(m: u64, n: u64, nnz: u64, f_mhz: f64, n_m: f64) -> f64 {
    (nnz as f64 + 13.0 * m as f64) * n as f64 / (f_mhz * n_m * 1e3)
}

/// Seconds for an SpMM on one FPGA running the Sextans design.
pub fn spmm_fpga_time(k: &Kernel, model: &PerfModel) -> f64 {
    debug_assert_eq!(model.kind(), ModelKind::SpmmFpga);
    model.predict(k)
}

/// `[K, N, MN, MK, KN, MKN, 1]`.
pub fn gemm_gpu_features(m: u64, k: u64, n: u64) -> [f64; 7] {
    let (m, k, n) = (m as f64, k as f64, n as f64);
    [k, n, m * n, m * k, k * n, m * k * n, 1.0]
}

pub fn gemm_gpu_time(k: &Kernel, model: &PerfModel) -> f64 {
    debug_assert!(matches!(model.kind(), ModelKind::GemmGpu | ModelKind::WinAttnGpuDense));
    dot(model.coefficients(), &gemm_gpu_features(k.m, k.k, k.n))
}

/// SWAT cycle formula in microseconds, before the scale factor.
fn swat_us(seq_len: u64, window: u64, t_pipeline: f64, t_init: f64, f_mhz: f64) -> f64 {
    (seq_len as f64 * t_pipeline + t_init) * (window as f64 / 1024.0) / f_mhz
}

/// Seconds for one window-attention layer kernel on one FPGA running SWAT.
pub fn winattn_fpga_time(k: &Kernel, model: &PerfModel) -> f64 {
    debug_assert_eq!(model.kind(), ModelKind::WinAttnFpga);
    model.predict(k)
}

/// Dense-attention decomposition as `(M, K, N)` GEMM shapes: per head, `Q K^T`
/// then `S' V`, for the query rows owned by one of `parts` partitions.
pub fn winattn_gpu_gemms(k: &Kernel, heads: u64, head_dim: u64, parts: u32) -> Vec<(u64, u64, u64)> {
    let rows = ceil_div(k.seq_len, parts);
    let seq = k.seq_len;
    (0..heads)
        .flat_map(|_| [(rows, head_dim, seq), (rows, seq, head_dim)])
        .collect()
}

/// Dense attention on a GPU, summed through the GEMM model; independent of the window.
pub fn winattn_gpu_time(k: &Kernel, model: &PerfModel) -> f64 {
    debug_assert_eq!(model.kind(), ModelKind::WinAttnGpuDense);
    model.predict(k)
}

fn heads_and_dim(model: &PerfModel) -> (u64, u64) {
    (model.constant("heads") as u64, model.constant("head_dim") as u64)
}

pub(super) fn features(model: &PerfModel, k: &Kernel, parts: u32) -> Vec<f64> {
    match model.kind() {
        ModelKind::SpmmGpu => spmm_gpu_features_dims(ceil_div(k.m, parts), k.n, ceil_div(k.nnz, parts)).to_vec(),
        ModelKind::SpmmFpga => vec![
            sextans_ms(
                ceil_div(k.m, parts),
                k.n,
                ceil_div(k.nnz, parts),
                model.constant("F_mhz"),
                model.constant("N_M"),
            ) * 1e-3,
        ],
        ModelKind::GemmGpu => gemm_gpu_features(ceil_div(k.m, parts), k.k, k.n).to_vec(),
        ModelKind::WinAttnFpga => vec![
            swat_us(
                ceil_div(k.seq_len, parts),
                k.window,
                model.constant("t_pipeline"),
                model.constant("t_init"),
                model.constant("F_mhz"),
            ) * 1e-6,
        ],
        ModelKind::WinAttnGpuDense => {
            let (heads, head_dim) = heads_and_dim(model);
            let mut acc = vec![0.0; 7];
            for (m, kk, n) in winattn_gpu_gemms(k, heads, head_dim, parts) {
                for (a, f) in acc.iter_mut().zip(gemm_gpu_features(m, kk, n)) {
                    *a += f;
                }
            }
            acc
        }
    }
}

pub(super) fn predict(model: &PerfModel, k: &Kernel, parts: u32) -> f64 {
    match model.kind() {
        ModelKind::WinAttnGpuDense => {
            let (heads, head_dim) = heads_and_dim(model);
            winattn_gpu_gemms(k, heads, head_dim, parts)
                .into_iter()
                .fold(0.0, |acc, (m, kk, n)| acc + dot(model.coefficients(), &gemm_gpu_features(m, kk, n)))
        }
        _ => dot(model.coefficients(), &features(model, k, parts)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fpga_spmm(c: f64) -> PerfModel {
        PerfModel::with_coefficients(ModelKind::SpmmFpga, vec![c]).unwrap()
    }

    fn swat(c: f64) -> PerfModel {
        PerfModel::with_coefficients(ModelKind::WinAttnFpga, vec![c]).unwrap()
    }

    fn gemm(coeffs: [f64; 7]) -> PerfModel {
        PerfModel::with_coefficients(ModelKind::GemmGpu, coeffs.to_vec()).unwrap()
    }

    #[test]
    fn spmm_gpu_feature_values() {
        let [n, nnz, gflop, arm] = spmm_gpu_features(&Kernel::spmm("a", 100_000, 100_000, 128, 1_000_000));
        assert_eq!((n, nnz), (128.0, 1e6));
        assert_relative_eq!(gflop, 0.24320, max_relative = 1e-5);
        assert_relative_eq!(arm, 2.20290, max_relative = 1e-5);

        let m = 5000;
        let [_, _, gflop, _] = spmm_gpu_features(&Kernel::spmm("b", m, m, 1, m));
        assert_relative_eq!(gflop, m as f64 * 1e-9, max_relative = 1e-12);

        let [_, _, gflop, _] = spmm_gpu_features(&Kernel::spmm("oa", 170_000, 170_000, 128, 1_270_000));
        assert_relative_eq!(gflop, 0.30336, max_relative = 1e-5);
    }

    #[test]
    fn sextans_formula() {
        let k = Kernel::spmm("oa", 170_000, 170_000, 128, 1_100_000);
        assert_relative_eq!(spmm_fpga_time(&k, &fpga_spmm(1.0)), 3.0791e-3, max_relative = 1e-4);
        assert_eq!(spmm_fpga_time(&k, &fpga_spmm(2.0)), 2.0 * spmm_fpga_time(&k, &fpga_spmm(1.0)));
        assert_eq!(sextans_ms(170_000, 0, 1_100_000, SEXTANS_F_MHZ, SEXTANS_N_M), 0.0);
    }

    #[test]
    fn swat_formula() {
        let k = Kernel::window_attention("w", 1024, 1024);
        assert_relative_eq!(winattn_fpga_time(&k, &swat(1.0)), 491.04e-6, max_relative = 1e-4);
        let half = Kernel::window_attention("w", 1024, 512);
        assert_relative_eq!(
            winattn_fpga_time(&half, &swat(1.0)),
            0.5 * winattn_fpga_time(&k, &swat(1.0)),
            max_relative = 1e-15
        );
        let init_only = swat_us(0, 512, SWAT_T_PIPELINE, SWAT_T_INIT, SWAT_F_MHZ);
        assert_relative_eq!(init_only, 904.0 * 0.5 / 421.0, max_relative = 1e-15);
    }

    #[test]
    fn gemm_terms() {
        let k = Kernel::gemm("g", 1000, 1000, 1000);
        assert_eq!(gemm_gpu_time(&k, &gemm([0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 7.0])), 7.0);
        assert_relative_eq!(
            gemm_gpu_time(&k, &gemm([0.0, 0.0, 0.0, 0.0, 0.0, 1e-12, 0.0])),
            1e-3,
            max_relative = 1e-15
        );
    }

    #[test]
    fn dense_attention_on_gpu() {
        let k = Kernel::window_attention("w", 1024, 512);
        assert_eq!(winattn_gpu_gemms(&k, 8, 64, 1).len(), 16);
        let intercept_only = PerfModel::with_coefficients(
            ModelKind::WinAttnGpuDense,
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.25],
        )
        .unwrap();
        assert_eq!(winattn_gpu_time(&k, &intercept_only), 16.0 * 0.25);

        let m = PerfModel::with_coefficients(
            ModelKind::WinAttnGpuDense,
            vec![1e-8, 2e-8, 3e-12, 4e-12, 5e-12, 1e-13, 1e-5],
        )
        .unwrap();
        let wide = Kernel::window_attention("w", 1024, 1024);
        assert_eq!(winattn_gpu_time(&k, &m), winattn_gpu_time(&wide, &m));

        // Summing GEMM times and dotting summed features are two routes to one value.
        let by_features: f64 = m.coefficients().iter().zip(m.features(&k)).map(|(c, f)| c * f).sum();
        assert_relative_eq!(winattn_gpu_time(&k, &m), by_features, max_relative = 1e-12);
    }
}
