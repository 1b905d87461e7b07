//! Shared domain vocabulary: kernels, workloads, device catalogs and schedules.
//!
//! All types are plain data, immutable once built, and serialize to JSON with
//! snake_case field names.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Issue, Result};

/// Bytes per tensor element. Every activation is FP32.
pub const ELEMENT_BYTES: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum KernelKind {
    #[serde(rename = "spmm")]
    SpMM,
    #[serde(rename = "gemm")]
    Gemm,
    #[serde(rename = "window_attention")]
    WindowAttention,
}

impl KernelKind {
    pub const ALL: [KernelKind; 3] = [KernelKind::SpMM, KernelKind::Gemm, KernelKind::WindowAttention];

    pub fn as_str(self) -> &'static str {
        match self {
            KernelKind::SpMM => "spmm",
            KernelKind::Gemm => "gemm",
            KernelKind::WindowAttention => "window_attention",
        }
    }
}

impl fmt::Display for KernelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "spmm" => Ok(KernelKind::SpMM),
            "gemm" => Ok(KernelKind::Gemm),
            "window_attention" | "winattn" | "attention" => Ok(KernelKind::WindowAttention),
            other => Err(Error::Parse(format!("unknown kernel kind `{other}`"))),
        }
    }
}

/// One compute step of a workload chain.
///
/// SpMM multiplies an `m x k` sparse matrix holding `nnz` nonzeros by a dense
/// `k x n` operand. GEMM is a dense `m x k` by `k x n` product. Window attention
/// uses only `seq_len` and `window`; its matrix dimensions stay zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Kernel {
    pub kind: KernelKind,
    #[serde(default)]
    pub m: u64,
    #[serde(default)]
    pub k: u64,
    #[serde(default)]
    pub n: u64,
    #[serde(default)]
    pub nnz: u64,
    #[serde(default)]
    pub seq_len: u64,
    #[serde(default)]
    pub window: u64,
    pub label: String,
}

impl Kernel {
    pub fn spmm(label: impl Into<String>, m: u64, k: u64, n: u64, nnz: u64) -> Self {
        Self {
            kind: KernelKind::SpMM,
            m,
            k,
            n,
            nnz,
            seq_len: 0,
            window: 0,
            label: label.into(),
        }
    }

    pub fn gemm(label: impl Into<String>, m: u64, k: u64, n: u64) -> Self {
        Self {
            kind: KernelKind::Gemm,
            m,
            k,
            n,
            nnz: 0,
            seq_len: 0,
            window: 0,
            label: label.into(),
        }
    }

    pub fn window_attention(label: impl Into<String>, seq_len: u64, window: u64) -> Self {
        Self {
            kind: KernelKind::WindowAttention,
            m: 0,
            k: 0,
            n: 0,
            nnz: 0,
            seq_len,
            window,
            label: label.into(),
        }
    }

    /// `(rows, cols)` of the produced tensor; columns are unknown for attention.
    pub fn output_shape(&self) -> (u64, Option<u64>) {
        match self.kind {
            KernelKind::SpMM | KernelKind::Gemm => (self.m, Some(self.n)),
            KernelKind::WindowAttention => (self.seq_len, None),
        }
    }

    /// `(rows, cols)` of the streamed input tensor.
    pub fn input_shape(&self) -> (u64, Option<u64>) {
        match self.kind {
            KernelKind::SpMM => (self.k, Some(self.n)),
            KernelKind::Gemm => (self.m, Some(self.k)),
            KernelKind::WindowAttention => (self.seq_len, None),
        }
    }

    /// Bytes of the dense operand replicated across row partitions.
    pub fn replicated_operand_bytes(&self) -> u64 {
        match self.kind {
            KernelKind::SpMM | KernelKind::Gemm => ELEMENT_BYTES * self.k * self.n,
            KernelKind::WindowAttention => 0,
        }
    }

    fn issues(&self) -> Vec<Issue> {
        let mut out = Vec::new();
        let bad = |msg: &str| Issue::new(self.label.clone(), msg);
        match self.kind {
            KernelKind::SpMM | KernelKind::Gemm => {
                if self.m == 0 || self.k == 0 || self.n == 0 {
                    out.push(bad("matrix dimensions must be at least 1"));
                }
                if self.kind == KernelKind::SpMM {
                    if self.nnz == 0 {
                        out.push(bad("SpMM needs at least one nonzero"));
                    }
                    if (self.nnz as u128) > (self.m as u128) * (self.k as u128) {
                        out.push(bad("nnz exceeds matrix capacity"));
                    }
                }
            }
            KernelKind::WindowAttention => {
                if self.seq_len == 0 || self.window == 0 {
                    out.push(bad("seq_len and window must be at least 1"));
                }
                if self.window > self.seq_len {
                    out.push(bad("window exceeds seq_len"));
                }
                if self.m != 0 || self.k != 0 || self.n != 0 {
                    out.push(bad("window attention must leave m, k, n at 0"));
                }
            }
        }
        out
    }
}

/// An ordered kernel chain with the tensor sizes flowing between kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workload {
    pub kernels: Vec<Kernel>,
    /// `edge_bytes[i]` flows from kernel `i` to kernel `i + 1`.
    pub edge_bytes: Vec<u64>,
    pub input_bytes: u64,
    pub output_bytes: u64,
    /// Per kernel: whether the streamed operand is all-gathered under row partitioning.
    pub replication_input: Vec<bool>,
}

impl Workload {
    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let issues = validate_workload(self);
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(issues))
        }
    }
}

fn tensor_bytes(rows: u64, cols: u64) -> u128 {
    ELEMENT_BYTES as u128 * rows as u128 * cols as u128
}

fn check_bytes(subject: &str, bytes: u64, rows: u64, cols: Option<u64>, what: &str) -> Option<Issue> {
    match cols {
        Some(c) if bytes as u128 != tensor_bytes(rows, c) => Some(Issue::new(
            subject,
            format!("{what} is {bytes} B, expected {} B", tensor_bytes(rows, c)),
        )),
        None if rows > 0 && !bytes.is_multiple_of(ELEMENT_BYTES * rows) => Some(Issue::new(
            subject,
            format!("{what} is {bytes} B, not a whole number of {rows}-row FP32 tensors"),
        )),
        _ => None,
    }
}

/// Returns every violated workload invariant, each tagged with a kernel label.
pub fn validate_workload(wl: &Workload) -> Vec<Issue> {
    let mut issues = Vec::new();
    if wl.kernels.is_empty() {
        issues.push(Issue::new("workload", "empty workload"));
        return issues;
    }
    let n = wl.kernels.len();
    if wl.edge_bytes.len() != n - 1 {
        issues.push(Issue::new(
            "workload",
            format!("edge_bytes has {} entries, expected {}", wl.edge_bytes.len(), n - 1),
        ));
    }
    if wl.replication_input.len() != n {
        issues.push(Issue::new(
            "workload",
            format!("replication_input has {} entries, expected {n}", wl.replication_input.len()),
        ));
    }
    let mut seen = HashSet::new();
    for k in &wl.kernels {
        if !seen.insert(k.label.as_str()) {
            issues.push(Issue::new(k.label.clone(), "duplicate label"));
        }
        issues.extend(k.issues());
    }

    let first = &wl.kernels[0];
    let (rows, cols) = first.input_shape();
    issues.extend(check_bytes(&first.label, wl.input_bytes, rows, cols, "input_bytes"));

    for (i, pair) in wl.kernels.windows(2).enumerate() {
        let (prev, next) = (&pair[0], &pair[1]);
        let (out_rows, out_cols) = prev.output_shape();
        let (in_rows, in_cols) = next.input_shape();
        if out_rows != in_rows {
            issues.push(Issue::new(
                next.label.clone(),
                format!("dimension-chain mismatch: {} rows in, {} produces {out_rows}", in_rows, prev.label),
            ));
        }
        if let (Some(a), Some(b)) = (out_cols, in_cols) {
            if a != b {
                issues.push(Issue::new(
                    next.label.clone(),
                    format!("dimension-chain mismatch: {b} cols in, {} produces {a}", prev.label),
                ));
            }
        }
        if let Some(&bytes) = wl.edge_bytes.get(i) {
            issues.extend(check_bytes(&prev.label, bytes, out_rows, out_cols, "edge_bytes"));
        }
    }

    let last = &wl.kernels[n - 1];
    let (rows, cols) = last.output_shape();
    issues.extend(check_bytes(&last.label, wl.output_bytes, rows, cols, "output_bytes"));
    issues
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceType {
    pub name: String,
    pub count_available: u32,
    /// Bytes per second per device.
    pub link_bandwidth: f64,
    /// Watts drawn by every allocated device for the whole period.
    pub p_static: f64,
    /// Extra watts while executing a kernel of the given kind.
    pub p_dynamic: BTreeMap<KernelKind, f64>,
    /// Extra watts while transferring.
    #[serde(default)]
    pub p_transfer_dynamic: f64,
    pub eligible: BTreeSet<KernelKind>,
    pub perf_model_id: String,
}

impl DeviceType {
    /// Letter used in schedule mnemonics (`F` for FPGA, `G` for GPU).
    pub fn initial(&self) -> char {
        self.name.chars().next().map(|c| c.to_ascii_uppercase()).unwrap_or('?')
    }

    pub fn is_eligible(&self, kind: KernelKind) -> bool {
        self.eligible.contains(&kind)
    }

    pub fn dynamic_power(&self, kind: KernelKind) -> f64 {
        self.p_dynamic.get(&kind).copied().unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generation {
    Pcie4,
    Pcie5,
    Cxl3,
    Custom,
}

impl Generation {
    /// Link bandwidth multiplier relative to the PCIe 4.0 testbed.
    pub fn default_scale(self) -> Option<f64> {
        match self {
            Generation::Pcie4 => Some(1.0),
            Generation::Pcie5 => Some(2.0),
            Generation::Cxl3 => Some(4.0),
            Generation::Custom => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Generation::Pcie4 => "pcie4",
            Generation::Pcie5 => "pcie5",
            Generation::Cxl3 => "cxl3",
            Generation::Custom => "custom",
        }
    }
}

impl FromStr for Generation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pcie4" => Ok(Generation::Pcie4),
            "pcie5" => Ok(Generation::Pcie5),
            "cxl3" => Ok(Generation::Cxl3),
            "custom" => Ok(Generation::Custom),
            other => Err(Error::Parse(format!("unknown interconnect generation `{other}`"))),
        }
    }
}

pub const DEFAULT_CPU_ROUTE_FACTOR: f64 = 2.0;
pub const DEFAULT_P2P_LATENCY: f64 = 10e-6;
pub const DEFAULT_CPU_LATENCY: f64 = 50e-6;

fn default_true() -> bool {
    true
}
fn default_route_factor() -> f64 {
    DEFAULT_CPU_ROUTE_FACTOR
}
fn default_p2p_latency() -> f64 {
    DEFAULT_P2P_LATENCY
}
fn default_cpu_latency() -> f64 {
    DEFAULT_CPU_LATENCY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterconnectSpec {
    pub generation: Generation,
    /// Overrides the generation's multiplier; required for `custom`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth_scale: Option<f64>,
    #[serde(default = "default_true")]
    pub p2p_enabled: bool,
    #[serde(default = "default_route_factor")]
    pub cpu_route_factor: f64,
    #[serde(default = "default_p2p_latency")]
    pub p2p_fixed_latency: f64,
    #[serde(default = "default_cpu_latency")]
    pub cpu_fixed_latency: f64,
    /// Per-link host bandwidth for ingest and egress; defaults to the GPU link.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub host_bandwidth: Option<f64>,
}

impl InterconnectSpec {
    pub fn new(generation: Generation) -> Self {
        Self {
            generation,
            bandwidth_scale: None,
            p2p_enabled: true,
            cpu_route_factor: DEFAULT_CPU_ROUTE_FACTOR,
            p2p_fixed_latency: DEFAULT_P2P_LATENCY,
            cpu_fixed_latency: DEFAULT_CPU_LATENCY,
            host_bandwidth: None,
        }
    }

    /// Zero fixed latencies; handy for hand-checkable examples.
    pub fn ideal(generation: Generation) -> Self {
        Self {
            p2p_fixed_latency: 0.0,
            cpu_fixed_latency: 0.0,
            ..Self::new(generation)
        }
    }

    pub fn scale(&self) -> f64 {
        self.bandwidth_scale
            .or(self.generation.default_scale())
            .unwrap_or(f64::NAN)
    }

    /// Same settings on another bus generation; an explicit scale is dropped.
    pub fn with_generation(&self, generation: Generation) -> Self {
        Self {
            generation,
            bandwidth_scale: if generation == Generation::Custom {
                self.bandwidth_scale
            } else {
                None
            },
            ..self.clone()
        }
    }

    fn issues(&self) -> Vec<Issue> {
        let mut out = Vec::new();
        let scale = self.scale();
        if !(scale > 0.0 && scale.is_finite()) {
            out.push(Issue::new("interconnect.bandwidth_scale", "must be a positive number (required for custom)"));
        }
        if !(self.cpu_route_factor >= 1.0) {
            out.push(Issue::new("interconnect.cpu_route_factor", "must be at least 1"));
        }
        if !(self.p2p_fixed_latency >= 0.0) || !(self.cpu_fixed_latency >= 0.0) {
            out.push(Issue::new("interconnect", "latencies must be non-negative"));
        }
        if let Some(bw) = self.host_bandwidth {
            if !(bw > 0.0) {
                out.push(Issue::new("interconnect.host_bandwidth", "must be positive"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub device_types: Vec<DeviceType>,
    pub interconnect: InterconnectSpec,
}

impl SystemSpec {
    /// Bundled three-FPGA, two-GPU testbed on PCIe 4.0.
    pub fn demo() -> &'static SystemSpec {
        static CELL: std::sync::OnceLock<SystemSpec> = std::sync::OnceLock::new();
        CELL.get_or_init(|| {
            serde_json::from_str(include_str!("../data/demo_system.json")).expect("bundled demo_system.json parses")
        })
    }

    pub fn type_index(&self, name: &str) -> Option<usize> {
        self.device_types.iter().position(|d| d.name == name)
    }

    pub fn device(&self, name: &str) -> Option<&DeviceType> {
        self.device_types.iter().find(|d| d.name == name)
    }

    pub fn total_devices(&self) -> u32 {
        self.device_types.iter().map(|d| d.count_available).sum()
    }

    /// Host link bandwidth before interconnect scaling.
    pub fn host_bandwidth(&self) -> f64 {
        if let Some(bw) = self.interconnect.host_bandwidth {
            return bw;
        }
        self.device_types
            .iter()
            .find(|d| d.name.eq_ignore_ascii_case("gpu"))
            .or_else(|| {
                self.device_types
                    .iter()
                    .max_by(|a, b| a.link_bandwidth.total_cmp(&b.link_bandwidth))
            })
            .map(|d| d.link_bandwidth)
            .unwrap_or(f64::NAN)
    }

    pub fn with_interconnect(&self, interconnect: InterconnectSpec) -> Self {
        Self {
            interconnect,
            ..self.clone()
        }
    }

    /// Copy of the system with every other device type's count set to zero.
    pub fn restricted_to(&self, name: &str) -> Self {
        let mut out = self.clone();
        for d in &mut out.device_types {
            if d.name != name {
                d.count_available = 0;
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let mut issues = self.interconnect.issues();
        let mut names = HashSet::new();
        let mut initials = HashSet::new();
        for d in &self.device_types {
            if !names.insert(d.name.as_str()) {
                issues.push(Issue::new(d.name.clone(), "duplicate device-type name"));
            }
            if d.name.is_empty() {
                issues.push(Issue::new("device_types", "empty device-type name"));
            } else if !initials.insert(d.initial()) {
                issues.push(Issue::new(d.name.clone(), "mnemonic initial collides with another device type"));
            }
            if !(d.link_bandwidth > 0.0) {
                issues.push(Issue::new(d.name.clone(), "link_bandwidth must be positive"));
            }
            if !(d.p_static > 0.0) {
                issues.push(Issue::new(d.name.clone(), "p_static must be positive"));
            }
            if !(d.p_transfer_dynamic >= 0.0) {
                issues.push(Issue::new(d.name.clone(), "p_transfer_dynamic must be non-negative"));
            }
            for kind in &d.eligible {
                match d.p_dynamic.get(kind) {
                    Some(&p) if p > 0.0 => {}
                    _ => issues.push(Issue::new(
                        d.name.clone(),
                        format!("p_dynamic for eligible kind {kind} must be positive"),
                    )),
                }
            }
        }
        if self.device_types.is_empty() {
            issues.push(Issue::new("device_types", "no device types"));
        }
        let host = self.host_bandwidth();
        if !(host > 0.0) {
            issues.push(Issue::new("interconnect.host_bandwidth", "cannot derive a positive host bandwidth"));
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(issues))
        }
    }
}

/// Seconds of kernel execution split by kernel kind.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct KindTimes {
    pub spmm: f64,
    pub gemm: f64,
    pub window_attention: f64,
}

impl KindTimes {
    pub fn get(&self, kind: KernelKind) -> f64 {
        match kind {
            KernelKind::SpMM => self.spmm,
            KernelKind::Gemm => self.gemm,
            KernelKind::WindowAttention => self.window_attention,
        }
    }

    pub fn add(&mut self, kind: KernelKind, t: f64) {
        match kind {
            KernelKind::SpMM => self.spmm += t,
            KernelKind::Gemm => self.gemm += t,
            KernelKind::WindowAttention => self.window_attention += t,
        }
    }
}

/// A contiguous kernel range executed by a dedicated group of same-type devices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub kernel_range: Range<usize>,
    pub device_type: String,
    pub device_count: u32,
    /// Kernel execution plus intra-stage gather/scatter.
    pub t_exec: f64,
    /// The gather/scatter share of `t_exec`.
    pub t_gather: f64,
    pub kernel_seconds: KindTimes,
    pub t_comm_in: f64,
    pub t_comm_out: f64,
    pub t_stage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSchedule {
    pub stages: Vec<Stage>,
    pub period: f64,
    pub latency: f64,
    pub devices_used: BTreeMap<String, u32>,
    pub energy_per_period: f64,
    pub mnemonic: String,
}

impl PipelineSchedule {
    pub fn throughput(&self) -> f64 {
        1.0 / self.period
    }

    pub fn total_devices(&self) -> u32 {
        self.devices_used.values().sum()
    }

    /// Structural checks against the system and workload length.
    pub fn validate(&self, sys: &SystemSpec, workload_len: usize) -> Result<()> {
        let mut issues = Vec::new();
        let mut cursor = 0;
        let mut used: BTreeMap<&str, u32> = BTreeMap::new();
        for (i, s) in self.stages.iter().enumerate() {
            let subject = format!("stage {i}");
            if s.kernel_range.start != cursor || s.kernel_range.is_empty() {
                issues.push(Issue::new(subject.clone(), "kernel ranges must be non-empty and contiguous"));
            }
            cursor = s.kernel_range.end;
            if s.device_count == 0 {
                issues.push(Issue::new(subject.clone(), "device_count must be at least 1"));
            }
            match sys.device(&s.device_type) {
                None => issues.push(Issue::new(subject, format!("unknown device type `{}`", s.device_type))),
                Some(_) => *used.entry(s.device_type.as_str()).or_default() += s.device_count,
            }
        }
        if cursor != workload_len {
            issues.push(Issue::new("stages", format!("cover {cursor} kernels, workload has {workload_len}")));
        }
        for (name, n) in used {
            let avail = sys.device(name).map(|d| d.count_available).unwrap_or(0);
            if n > avail {
                issues.push(Issue::new(name, format!("{n} devices used, {avail} available")));
            }
        }
        let longest = self.stages.iter().map(|s| s.t_stage).fold(0.0, f64::max);
        if longest != self.period {
            issues.push(Issue::new("period", "must equal the longest stage time"));
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(issues))
        }
    }
}

/// One point of the throughput/energy trade-off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub throughput: f64,
    pub energy_per_inference: f64,
    pub schedule: PipelineSchedule,
}

impl ParetoPoint {
    pub fn from_schedule(schedule: PipelineSchedule) -> Self {
        Self {
            throughput: schedule.throughput(),
            energy_per_inference: schedule.energy_per_period,
            schedule,
        }
    }

    pub fn efficiency(&self) -> f64 {
        1.0 / self.energy_per_inference
    }
}

/// Per-stage `<count><type initial>` concatenated in stage order, e.g. `3F2G`.
pub fn mnemonic(stages: &[Stage]) -> String {
    stages
        .iter()
        .map(|s| format!("{}{}", s.device_count, s.device_type.chars().next().map(|c| c.to_ascii_uppercase()).unwrap_or('?')))
        .collect()
}

/// Inverse of [`mnemonic`]: `"2F1G"` becomes `[(2, 'F'), (1, 'G')]`.
pub fn parse_mnemonic(text: &str) -> Result<Vec<(u32, char)>> {
    let mut out = Vec::new();
    let mut digits = String::new();
    for c in text.chars() {
        if c.is_ascii_digit() {
            digits.push(c);
        } else if c.is_ascii_alphabetic() {
            if digits.is_empty() {
                return Err(Error::Parse(format!("mnemonic `{text}`: `{c}` has no device count")));
            }
            let count = digits
                .parse()
                .map_err(|_| Error::Parse(format!("mnemonic `{text}`: bad count `{digits}`")))?;
            out.push((count, c));
            digits.clear();
        } else {
            return Err(Error::Parse(format!("mnemonic `{text}`: unexpected `{c}`")));
        }
    }
    if !digits.is_empty() || out.is_empty() {
        return Err(Error::Parse(format!("mnemonic `{text}` is incomplete")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stage(count: u32, ty: &str) -> Stage {
        Stage {
            kernel_range: 0..1,
            device_type: ty.into(),
            device_count: count,
            t_exec: 0.0,
            t_gather: 0.0,
            kernel_seconds: KindTimes::default(),
            t_comm_in: 0.0,
            t_comm_out: 0.0,
            t_stage: 0.0,
        }
    }

    #[test]
    fn mnemonic_matches_table_notation() {
        assert_eq!(mnemonic(&[stage(3, "FPGA"), stage(2, "GPU")]), "3F2G");
        assert_eq!(
            mnemonic(&[stage(2, "FPGA"), stage(1, "GPU"), stage(1, "FPGA"), stage(1, "GPU")]),
            "2F1G1F1G"
        );
        assert_eq!(mnemonic(&[stage(1, "GPU")]), "1G");
    }

    #[test]
    fn mnemonic_parses_back() {
        assert_eq!(parse_mnemonic("2F1G1F1G").unwrap(), vec![(2, 'F'), (1, 'G'), (1, 'F'), (1, 'G')]);
        assert_eq!(parse_mnemonic("12G").unwrap(), vec![(12, 'G')]);
        assert!(parse_mnemonic("F2").is_err());
        assert!(parse_mnemonic("3").is_err());
        assert!(parse_mnemonic("").is_err());
    }

    fn one_gemm() -> Workload {
        Workload {
            kernels: vec![Kernel::gemm("g", 1, 1, 1)],
            edge_bytes: vec![],
            input_bytes: 4,
            output_bytes: 4,
            replication_input: vec![false],
        }
    }

    #[test]
    fn minimal_chain_is_valid() {
        assert!(validate_workload(&one_gemm()).is_empty());
    }

    #[test]
    fn nnz_over_capacity_is_rejected() {
        let wl = Workload {
            kernels: vec![Kernel::spmm("a", 3, 4, 2, 13)],
            edge_bytes: vec![],
            input_bytes: 4 * 4 * 2,
            output_bytes: 4 * 3 * 2,
            replication_input: vec![true],
        };
        let issues = validate_workload(&wl);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].subject, "a");
        assert_eq!(issues[0].message, "nnz exceeds matrix capacity");
    }

    #[test]
    fn empty_and_mismatched_chains_are_rejected() {
        let empty = Workload {
            kernels: vec![],
            edge_bytes: vec![],
            input_bytes: 0,
            output_bytes: 0,
            replication_input: vec![],
        };
        assert_eq!(validate_workload(&empty)[0].message, "empty workload");

        let wl = Workload {
            kernels: vec![Kernel::gemm("a", 8, 4, 4), Kernel::gemm("b", 8, 5, 4)],
            edge_bytes: vec![4 * 8 * 4],
            input_bytes: 4 * 8 * 4,
            output_bytes: 4 * 8 * 4,
            replication_input: vec![false, false],
        };
        let issues = validate_workload(&wl);
        assert!(issues.iter().any(|i| i.subject == "b" && i.message.contains("dimension-chain")));
    }

    #[test]
    fn duplicate_labels_are_reported() {
        let mut wl = one_gemm();
        wl.kernels.push(Kernel::gemm("g", 1, 1, 1));
        wl.edge_bytes.push(4);
        wl.replication_input.push(false);
        assert!(validate_workload(&wl).iter().any(|i| i.message == "duplicate label"));
    }

    #[test]
    fn generation_scales() {
        assert_eq!(InterconnectSpec::new(Generation::Pcie4).scale(), 1.0);
        assert_eq!(InterconnectSpec::new(Generation::Pcie5).scale(), 2.0);
        assert_eq!(InterconnectSpec::new(Generation::Cxl3).scale(), 4.0);
        assert!(InterconnectSpec::new(Generation::Custom).scale().is_nan());
        let custom = InterconnectSpec {
            bandwidth_scale: Some(3.0),
            ..InterconnectSpec::new(Generation::Custom)
        };
        assert_eq!(custom.scale(), 3.0);
    }
}
