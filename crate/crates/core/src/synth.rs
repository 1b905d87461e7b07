//! Seeded random scheduling instances for property tests and benchmarks.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::{
    DeviceType, Generation, InterconnectSpec, Kernel, KernelKind, SystemSpec, Workload, ELEMENT_BYTES,
};
use crate::perf::{ModelKind, ModelSet, PerfModel};

/// Size limits for [`random_instance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub max_kernels: usize,
    pub max_fpgas: u32,
    pub max_gpus: u32,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            max_kernels: 6,
            max_fpgas: 3,
            max_gpus: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub workload: Workload,
    pub system: SystemSpec,
    pub models: ModelSet,
}

/// A dimensionally consistent chain of up to `max_kernels` kernels over a
/// shared row count.
pub fn random_workload<R: Rng>(rng: &mut R, max_kernels: usize) -> Workload {
    let len = rng.gen_range(1..=max_kernels.max(1));
    let rows: u64 = rng.gen_range(256..=20_000);
    let mut width: u64 = rng.gen_range(8..=256);
    let input_bytes = ELEMENT_BYTES * rows * width;
    let mut kernels = Vec::with_capacity(len);
    let mut outputs = Vec::with_capacity(len);
    let mut replication = Vec::with_capacity(len);
    for i in 0..len {
        let label = format!("k{i}");
        let kind = *[KernelKind::SpMM, KernelKind::Gemm, KernelKind::WindowAttention]
            .choose(rng)
            .expect("non-empty");
        let kernel = match kind {
            KernelKind::SpMM => {
                let nnz = rng.gen_range(rows..=rows * rows.min(64));
                replication.push(true);
                Kernel::spmm(label, rows, rows, width, nnz)
            }
            KernelKind::Gemm => {
                let n = rng.gen_range(8..=256);
                let k = Kernel::gemm(label, rows, width, n);
                width = n;
                replication.push(false);
                k
            }
            KernelKind::WindowAttention => {
                replication.push(false);
                Kernel::window_attention(label, rows, rng.gen_range(1..=rows.min(4096)))
            }
        };
        kernels.push(kernel);
        outputs.push(ELEMENT_BYTES * rows * width);
    }
    let output_bytes = outputs.pop().expect("at least one kernel");
    Workload {
        kernels,
        edge_bytes: outputs,
        input_bytes,
        output_bytes,
        replication_input: replication,
    }
}

fn device<R: Rng>(rng: &mut R, name: &str, count: u32, eligible: BTreeSet<KernelKind>, bw: (f64, f64)) -> DeviceType {
    DeviceType {
        name: name.into(),
        count_available: count,
        link_bandwidth: rng.gen_range(bw.0..bw.1),
        p_static: rng.gen_range(10.0..80.0),
        p_dynamic: eligible.iter().map(|&k| (k, rng.gen_range(20.0..400.0))).collect(),
        p_transfer_dynamic: if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..30.0) },
        eligible,
        perf_model_id: name.to_lowercase(),
    }
}

/// An FPGA pool of `0..=max_fpgas` devices and a GPU pool of `1..=max_gpus`
/// with random powers, bandwidths and interconnect settings. GPUs run every
/// kind unless the FPGA pool can take it over.
pub fn random_system<R: Rng>(rng: &mut R, max_fpgas: u32, max_gpus: u32) -> SystemSpec {
    let fpgas = rng.gen_range(0..=max_fpgas);
    let gpus = rng.gen_range(1..=max_gpus.max(1));
    let mut fpga_kinds = BTreeSet::new();
    while fpga_kinds.is_empty() {
        for kind in [KernelKind::SpMM, KernelKind::WindowAttention] {
            if rng.gen_bool(0.7) {
                fpga_kinds.insert(kind);
            }
        }
    }
    let mut gpu_kinds: BTreeSet<KernelKind> = [KernelKind::SpMM, KernelKind::Gemm, KernelKind::WindowAttention].into();
    for kind in &fpga_kinds {
        if fpgas > 0 && rng.gen_bool(0.15) {
            gpu_kinds.remove(kind);
        }
    }
    let generation = *[Generation::Pcie4, Generation::Pcie5, Generation::Cxl3].choose(rng).expect("non-empty");
    let interconnect = InterconnectSpec {
        p2p_enabled: rng.gen_bool(0.7),
        cpu_route_factor: rng.gen_range(1.0..3.0),
        p2p_fixed_latency: rng.gen_range(0.0..20e-6),
        cpu_fixed_latency: rng.gen_range(0.0..80e-6),
        ..InterconnectSpec::new(generation)
    };
    SystemSpec {
        device_types: vec![
            device(rng, "FPGA", fpgas, fpga_kinds, (8e9, 20e9)),
            device(rng, "GPU", gpus, gpu_kinds, (16e9, 40e9)),
        ],
        interconnect,
    }
}

/// The bundled coefficients, each scaled by a random factor in `[0.2, 5)`.
pub fn random_models<R: Rng>(rng: &mut R) -> ModelSet {
    ModelSet::demo().map_coefficients(|c| c * rng.gen_range(0.2..5.0))
}

/// A model whose coefficients are drawn independently around typical magnitudes.
pub fn random_model<R: Rng>(rng: &mut R, kind: ModelKind) -> PerfModel {
    let scale: &[f64] = match kind {
        ModelKind::SpmmGpu => &[5e-5, 1e-10, 1e-3, 1e-5],
        ModelKind::SpmmFpga | ModelKind::WinAttnFpga => &[1.0],
        ModelKind::GemmGpu | ModelKind::WinAttnGpuDense => &[1e-8, 1e-8, 4e-12, 4e-12, 4e-12, 1e-13, 1e-5],
    };
    let coefficients = scale.iter().map(|s| s * rng.gen_range(0.1..10.0)).collect();
    PerfModel::with_coefficients(kind, coefficients).expect("positive finite coefficients")
}

pub fn random_instance<R: Rng>(rng: &mut R, cfg: &SynthConfig) -> Instance {
    let workload = random_workload(rng, cfg.max_kernels);
    let system = random_system(rng, cfg.max_fpgas, cfg.max_gpus);
    let models = if rng.gen_bool(0.5) {
        random_models(rng)
    } else {
        let mut models = BTreeMap::new();
        models.insert(
            "fpga".to_string(),
            vec![random_model(rng, ModelKind::SpmmFpga), random_model(rng, ModelKind::WinAttnFpga)],
        );
        models.insert(
            "gpu".to_string(),
            vec![
                random_model(rng, ModelKind::SpmmGpu),
                random_model(rng, ModelKind::GemmGpu),
                random_model(rng, ModelKind::WinAttnGpuDense),
            ],
        );
        ModelSet::new(models)
    };
    Instance {
        workload,
        system,
        models,
    }
}
