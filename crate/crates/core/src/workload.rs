//! Kernel-chain builders for GCN, GIN and sliding-window transformers.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Issue, Result};
use crate::model::{Kernel, Workload, ELEMENT_BYTES};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphSpec {
    pub vertices: u64,
    pub edges: u64,
    pub feature_len: u64,
    pub name: String,
}

impl GraphSpec {
    pub fn new(name: impl Into<String>, vertices: u64, edges: u64, feature_len: u64) -> Self {
        Self {
            vertices,
            edges,
            feature_len,
            name: name.into(),
        }
    }

    /// Nonzeros of the adjacency matrix once self-loops are inserted.
    pub fn nnz_with_self_loops(&self) -> u64 {
        self.edges + self.vertices
    }

    pub fn sparsity(&self) -> f64 {
        1.0 - self.edges as f64 / (self.vertices as f64 * self.vertices as f64)
    }

    fn issues(&self) -> Vec<Issue> {
        let mut out = Vec::new();
        if self.vertices == 0 || self.feature_len == 0 {
            out.push(Issue::new(self.name.clone(), "vertices and feature_len must be at least 1"));
        } else if (self.nnz_with_self_loops() as u128) > (self.vertices as u128).pow(2) {
            out.push(Issue::new(self.name.clone(), "edges plus self-loops exceed vertices^2"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GnnArch {
    Gcn,
    Gin,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GnnSpec {
    pub arch: GnnArch,
    pub layers: u32,
    pub hidden: u64,
    /// Width of the final layer; `None` means `hidden`.
    pub out_dim: Option<u64>,
    /// GEMMs per GIN layer.
    pub mlp_depth: u32,
}

impl GnnSpec {
    pub fn gcn() -> Self {
        Self {
            arch: GnnArch::Gcn,
            layers: 2,
            hidden: 128,
            out_dim: None,
            mlp_depth: 2,
        }
    }

    pub fn gin() -> Self {
        Self {
            arch: GnnArch::Gin,
            ..Self::gcn()
        }
    }

    fn out_dim(&self) -> u64 {
        self.out_dim.unwrap_or(self.hidden)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerSpec {
    pub layers: u32,
    pub d_model: u64,
    pub heads: u64,
    pub ffn_hidden: u64,
    pub seq_len: u64,
    pub window: u64,
    /// Emit Q, K and V as three GEMMs instead of one fused projection.
    #[serde(default)]
    pub split_qkv: bool,
}

impl TransformerSpec {
    /// 32 layers, width 512, 8 heads, FFN 2048.
    pub fn bigbird(seq_len: u64, window: u64) -> Self {
        Self {
            layers: 32,
            d_model: 512,
            heads: 8,
            ffn_hidden: 2048,
            seq_len,
            window,
            split_qkv: false,
        }
    }
}

/// Chain accumulator that keeps edge sizes in step with kernels.
struct ChainBuilder {
    kernels: Vec<Kernel>,
    outputs: Vec<u64>,
    replication: Vec<bool>,
}

impl ChainBuilder {
    fn new() -> Self {
        Self {
            kernels: Vec::new(),
            outputs: Vec::new(),
            replication: Vec::new(),
        }
    }

    fn push(&mut self, kernel: Kernel, out_rows: u64, out_cols: u64, replicated: bool) {
        self.kernels.push(kernel);
        self.outputs.push(ELEMENT_BYTES * out_rows * out_cols);
        self.replication.push(replicated);
    }

    fn finish(mut self, input_bytes: u64) -> Workload {
        let output_bytes = self.outputs.pop().unwrap_or(0);
        Workload {
            kernels: self.kernels,
            edge_bytes: self.outputs,
            input_bytes,
            output_bytes,
            replication_input: self.replication,
        }
    }
}

fn check_gnn(g: &GraphSpec, s: &GnnSpec, arch: GnnArch) -> Result<()> {
    let mut issues = g.issues();
    if s.arch != arch {
        issues.push(Issue::new("gnn.arch", format!("expected {arch:?}, got {:?}", s.arch)));
    }
    if s.layers == 0 || s.hidden == 0 || s.out_dim() == 0 {
        issues.push(Issue::new("gnn", "layers, hidden and out_dim must be at least 1"));
    }
    if arch == GnnArch::Gin && s.mlp_depth == 0 {
        issues.push(Issue::new("gnn.mlp_depth", "must be at least 1"));
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(issues))
    }
}

/// Feature width entering and leaving each layer.
fn layer_dims(g: &GraphSpec, s: &GnnSpec) -> Vec<(u64, u64)> {
    (0..s.layers)
        .map(|l| {
            let input = if l == 0 { g.feature_len } else { s.hidden };
            let output = if l + 1 == s.layers { s.out_dim() } else { s.hidden };
            (input, output)
        })
        .collect()
}

/// Each layer is an SpMM aggregation over the self-looped adjacency followed
/// by one GEMM weight transform.
pub fn build_gcn(g: &GraphSpec, s: &GnnSpec) -> Result<Workload> {
    check_gnn(g, s, GnnArch::Gcn)?;
    let v = g.vertices;
    let nnz = g.nnz_with_self_loops();
    let mut chain = ChainBuilder::new();
    for (l, (fin, fout)) in layer_dims(g, s).into_iter().enumerate() {
        chain.push(Kernel::spmm(format!("l{l}.spmm"), v, v, fin, nnz), v, fin, true);
        chain.push(Kernel::gemm(format!("l{l}.gemm"), v, fin, fout), v, fout, false);
    }
    Ok(chain.finish(ELEMENT_BYTES * v * g.feature_len))
}

/// Each layer is an SpMM aggregation followed by `mlp_depth` GEMMs.
pub fn build_gin(g: &GraphSpec, s: &GnnSpec) -> Result<Workload> {
    check_gnn(g, s, GnnArch::Gin)?;
    let v = g.vertices;
    let nnz = g.nnz_with_self_loops();
    let mut chain = ChainBuilder::new();
    for (l, (fin, fout)) in layer_dims(g, s).into_iter().enumerate() {
        chain.push(Kernel::spmm(format!("l{l}.spmm"), v, v, fin, nnz), v, fin, true);
        let mut width = fin;
        for d in 0..s.mlp_depth {
            let next = if d + 1 == s.mlp_depth { fout } else { s.hidden };
            chain.push(Kernel::gemm(format!("l{l}.mlp{d}"), v, width, next), v, next, false);
            width = next;
        }
    }
    Ok(chain.finish(ELEMENT_BYTES * v * g.feature_len))
}

pub fn build_gnn(g: &GraphSpec, s: &GnnSpec) -> Result<Workload> {
    match s.arch {
        GnnArch::Gcn => build_gcn(g, s),
        GnnArch::Gin => build_gin(g, s),
    }
}

/// Per layer: QKV projection, window attention, and a two-GEMM FFN.
/// Softmax and masking are part of the attention kernel.
pub fn build_transformer(s: &TransformerSpec) -> Result<Workload> {
    let mut issues = Vec::new();
    if s.layers == 0 || s.d_model == 0 || s.heads == 0 || s.ffn_hidden == 0 {
        issues.push(Issue::new("transformer", "layers, d_model, heads and ffn_hidden must be at least 1"));
    }
    if s.seq_len == 0 || s.window == 0 {
        issues.push(Issue::new("transformer", "seq_len and window must be at least 1"));
    }
    if s.window > s.seq_len {
        issues.push(Issue::new("transformer.window", "window exceeds seq_len"));
    }
    if !issues.is_empty() {
        return Err(Error::Validation(issues));
    }

    let (seq, d) = (s.seq_len, s.d_model);
    let mut chain = ChainBuilder::new();
    for l in 0..s.layers {
        if s.split_qkv {
            // Chained as three seq x d projections; only the immediate output is
            // charged as transfer volume between them.
            for name in ["q", "k", "v"] {
                chain.push(Kernel::gemm(format!("l{l}.{name}"), seq, d, d), seq, d, false);
            }
        } else {
            chain.push(Kernel::gemm(format!("l{l}.qkv"), seq, d, 3 * d), seq, 3 * d, false);
        }
        chain.push(Kernel::window_attention(format!("l{l}.attn"), seq, s.window), seq, d, false);
        chain.push(Kernel::gemm(format!("l{l}.ffn1"), seq, d, s.ffn_hidden), seq, s.ffn_hidden, false);
        chain.push(Kernel::gemm(format!("l{l}.ffn2"), seq, s.ffn_hidden, d), seq, d, false);
    }
    Ok(chain.finish(ELEMENT_BYTES * seq * d))
}

#[derive(Debug, Clone, Deserialize)]
pub struct DatasetPreset {
    pub short: String,
    pub name: String,
    pub vertices: u64,
    pub edges: u64,
    pub feature_len: u64,
}

impl DatasetPreset {
    pub fn graph(&self) -> GraphSpec {
        GraphSpec::new(self.name.clone(), self.vertices, self.edges, self.feature_len)
    }
}

#[derive(Deserialize)]
struct DatasetFile {
    datasets: Vec<DatasetPreset>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TransformerPreset {
    pub layers: u32,
    pub d_model: u64,
    pub heads: u64,
    pub ffn_hidden: u64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TransformerPresets {
    pub presets: std::collections::BTreeMap<String, TransformerPreset>,
    pub windows: Vec<u64>,
    pub seq_lens: Vec<u64>,
}

impl TransformerPresets {
    /// Every `(seq_len, window)` pair of the sweep with `window <= seq_len`.
    pub fn grid(&self) -> Vec<(u64, u64)> {
        let mut out = Vec::new();
        for &seq in &self.seq_lens {
            for &w in &self.windows {
                if w <= seq {
                    out.push((seq, w));
                }
            }
        }
        out
    }
}

pub fn datasets() -> &'static [DatasetPreset] {
    static CELL: OnceLock<Vec<DatasetPreset>> = OnceLock::new();
    CELL.get_or_init(|| {
        let file: DatasetFile =
            serde_json::from_str(include_str!("../data/datasets.json")).expect("bundled datasets.json parses");
        file.datasets
    })
}

pub fn transformer_presets() -> &'static TransformerPresets {
    static CELL: OnceLock<TransformerPresets> = OnceLock::new();
    CELL.get_or_init(|| {
        serde_json::from_str(include_str!("../data/transformers.json")).expect("bundled transformers.json parses")
    })
}

/// Looks a dataset up by short name (`OA`) or full name (`ogbn-arxiv`).
pub fn dataset(name: &str) -> Result<GraphSpec> {
    datasets()
        .iter()
        .find(|d| d.short.eq_ignore_ascii_case(name) || d.name.eq_ignore_ascii_case(name))
        .map(DatasetPreset::graph)
        .ok_or_else(|| Error::Config(format!("unknown dataset `{name}`")))
}

/// Named presets used by the comparison and robustness commands. Every entry
/// is small enough for exhaustive search.
pub const DEMO_SUITE: &[&str] = &[
    "gcn:OA",
    "gcn:OP",
    "gcn:S1",
    "gcn:S2",
    "gcn:S3",
    "gcn:S4",
    "gin:OA",
    "transformer:4096:512:1",
    "transformer:16384:2048:1",
];

pub fn demo_suite() -> Result<Vec<(String, Workload)>> {
    DEMO_SUITE
        .iter()
        .map(|p| Ok((p.to_string(), WorkloadConfig::from_preset(p)?.build()?)))
        .collect()
}

/// CLI-facing workload description, e.g.
/// `{"model":"gcn","dataset":"ogbn-arxiv","layers":2,"hidden":128}`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadConfig {
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph: Option<GraphSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dim: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mlp_depth: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_model: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heads: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ffn_hidden: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq_len: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<u64>,
    #[serde(default)]
    pub split_qkv: bool,
}

impl WorkloadConfig {
    pub fn build(&self) -> Result<Workload> {
        match self.model.to_ascii_lowercase().as_str() {
            "gcn" | "gin" => {
                let graph = match (&self.graph, &self.dataset) {
                    (Some(g), _) => g.clone(),
                    (None, Some(name)) => dataset(name)?,
                    (None, None) => return Err(Error::Config("GNN workload needs `dataset` or `graph`".into())),
                };
                let mut spec = if self.model.eq_ignore_ascii_case("gcn") {
                    GnnSpec::gcn()
                } else {
                    GnnSpec::gin()
                };
                if let Some(v) = self.layers {
                    spec.layers = v;
                }
                if let Some(v) = self.hidden {
                    spec.hidden = v;
                }
                spec.out_dim = self.out_dim;
                if let Some(v) = self.mlp_depth {
                    spec.mlp_depth = v;
                }
                build_gnn(&graph, &spec)
            }
            "transformer" => {
                let presets = transformer_presets();
                let base = presets
                    .presets
                    .get(self.preset.as_deref().unwrap_or("bigbird"))
                    .ok_or_else(|| Error::Config(format!("unknown transformer preset {:?}", self.preset)))?;
                let seq_len = self
                    .seq_len
                    .ok_or_else(|| Error::Config("transformer workload needs `seq_len`".into()))?;
                let spec = TransformerSpec {
                    layers: self.layers.unwrap_or(base.layers),
                    d_model: self.d_model.unwrap_or(base.d_model),
                    heads: self.heads.unwrap_or(base.heads),
                    ffn_hidden: self.ffn_hidden.unwrap_or(base.ffn_hidden),
                    seq_len,
                    window: self.window.unwrap_or(seq_len.min(512)),
                    split_qkv: self.split_qkv,
                };
                build_transformer(&spec)
            }
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }

    /// Parses `gcn:OA`, `gin:ogbn-products`, `transformer:<seq>:<window>[:<layers>]`.
    pub fn from_preset(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(':').collect();
        let bad = || Error::Parse(format!("bad workload preset `{text}`"));
        match parts.as_slice() {
            [model, ds] if model.eq_ignore_ascii_case("gcn") || model.eq_ignore_ascii_case("gin") => Ok(Self {
                model: model.to_ascii_lowercase(),
                dataset: Some((*ds).to_string()),
                ..Self::default()
            }),
            [model, seq, window, rest @ ..] if model.eq_ignore_ascii_case("transformer") && rest.len() <= 1 => {
                Ok(Self {
                    model: "transformer".into(),
                    seq_len: Some(seq.parse().map_err(|_| bad())?),
                    window: Some(window.parse().map_err(|_| bad())?),
                    layers: match rest.first() {
                        Some(l) => Some(l.parse().map_err(|_| bad())?),
                        None => None,
                    },
                    ..Self::default()
                })
            }
            _ => Err(bad()),
        }
    }
}
