use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hetsched_core::model::{Kernel, SystemSpec, Workload};
use hetsched_core::perf::{write_measurements, Measurement, ModelKind, ModelSet};
use hetsched_core::schedule::{StageSpec, PARETO_CSV_HEADER};
use hetsched_core::sim::TRACE_CSV_HEADER;
use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn example(name: &str) -> String {
    root().join("docs/examples").join(name).to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetsched")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&ok(args)).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    csv::Reader::from_reader(text.as_bytes())
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect()
}

#[test]
fn gcn_arxiv_perf_matches_golden() {
    let golden = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/gcn_oa_perf.mnemonic")).unwrap();
    let v = json(&["schedule", "--workload", "gcn:OA", "--mode", "perf"]);
    assert_eq!(v["selected"]["mnemonic"], golden.trim());
}

#[test]
fn gpu_only_uses_gpus_only() {
    let v = json(&["schedule", "--workload", "transformer:4096:512:2", "--baseline", "gpu-only"]);
    let stages = v["selected"]["stages"].as_array().unwrap();
    assert!(!stages.is_empty());
    assert!(stages.iter().all(|s| s["device_type"] == "GPU"));
    assert!(v["selected"]["mnemonic"].as_str().unwrap().chars().filter(char::is_ascii_alphabetic).all(|c| c == 'G'));
}

#[test]
fn balanced_at_full_fraction_is_perf() {
    for wl in ["gcn:OA", "gcn:S3", "transformer:4096:512:1"] {
        let perf = json(&["schedule", "--workload", wl, "--mode", "perf"]);
        let bal = json(&["schedule", "--workload", wl, "--mode", "balanced", "--fraction", "1.0"]);
        assert_eq!(perf["selected"], bal["selected"], "{wl}");
    }
}

#[test]
fn outputs_are_byte_identical() {
    let args = ["schedule", "--workload", "gin:OA", "--mode", "energy"];
    assert_eq!(ok(&args), ok(&args));
    let args = ["compare", "--workload", "gcn:OA", "--interconnect", "pcie5"];
    assert_eq!(ok(&args), ok(&args));
}

#[test]
fn pareto_rows_are_non_dominated() {
    let text = ok(&["pareto", "--workload", &example("workload_two_kernel.json")]);
    assert_eq!(text.lines().next().unwrap(), PARETO_CSV_HEADER);
    let rows: Vec<(f64, f64)> = csv_rows(&text).iter().map(|r| (r[0].parse().unwrap(), r[1].parse().unwrap())).collect();
    assert!(!rows.is_empty());
    for (i, a) in rows.iter().enumerate() {
        for (j, b) in rows.iter().enumerate() {
            let dominates = b.0 >= a.0 && b.1 <= a.1 && (b.0 > a.0 || b.1 < a.1);
            assert!(i == j || !dominates, "row {i} dominated by row {j}");
        }
    }
}

#[test]
fn compare_dype_perf_is_never_slower() {
    let text = ok(&["compare"]);
    let header = text.lines().next().unwrap();
    assert_eq!(
        header,
        "workload,interconnect,baseline,status,mnemonic,throughput,energy_per_inference,dype_throughput,\
         dype_energy_per_inference,dype_speedup,dype_energy_ratio"
    );
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 9 * 3 * 7);
    let mut checked = 0;
    for r in rows.iter().filter(|r| r[3] == "ok") {
        let (tp, dype): (f64, f64) = (r[5].parse().unwrap(), r[7].parse().unwrap());
        assert!(dype >= tp, "{r:?}");
        checked += 1;
    }
    assert!(checked > 150);
}

#[test]
fn fit_recovers_generating_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let demo = ModelSet::demo();
    let mut rows = Vec::new();
    for i in 0..40u64 {
        let m = 2_000 + 7_919 * i;
        let spmm = Kernel::spmm("s", m, m, 16 + 11 * i, m * (2 + i % 17));
        let gemm = Kernel::gemm("g", 512 + 97 * i, 256 + 61 * (i % 13), 128 + 37 * (i % 7));
        let attn = Kernel::window_attention("w", 1024 + 256 * i, 64 + 32 * (i % 9));
        for (id, kind, k) in [
            ("fpga", ModelKind::SpmmFpga, &spmm),
            ("gpu", ModelKind::SpmmGpu, &spmm),
            ("gpu", ModelKind::GemmGpu, &gemm),
            ("fpga", ModelKind::WinAttnFpga, &attn),
        ] {
            let model = demo.lookup_kind(id, kind).unwrap();
            rows.push((kind, Measurement { kernel: k.clone(), seconds: model.predict(k) }));
        }
    }
    let csv_path = dir.path().join("m.csv");
    write_measurements(std::fs::File::create(&csv_path).unwrap(), &rows).unwrap();
    let text = std::fs::read_to_string(&csv_path).unwrap();
    assert_eq!(text.lines().next().unwrap(), "kind,m,k,n,nnz,seq_len,window,seconds");

    let out = dir.path().join("fitted.json");
    ok(&["fit", "--measurements", csv_path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let fitted: ModelSet = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    for (id, kind) in [
        ("fpga", ModelKind::SpmmFpga),
        ("gpu", ModelKind::SpmmGpu),
        ("gpu", ModelKind::GemmGpu),
        ("fpga", ModelKind::WinAttnFpga),
    ] {
        let (a, b) = (fitted.lookup_kind(id, kind).unwrap(), demo.lookup_kind(id, kind).unwrap());
        for (x, y) in a.coefficients().iter().zip(b.coefficients()) {
            assert!((x - y).abs() <= 1e-9 * y.abs(), "{kind}: {x} vs {y}");
        }
    }
}

#[test]
fn simulate_matches_schedule_and_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let sched = json(&["schedule", "--workload", "gcn:OA"]);
    let sim = json(&["simulate", "--workload", "gcn:OA", "--trace", trace.to_str().unwrap()]);
    let (a, b) = (sim["steady_period"].as_f64().unwrap(), sched["selected"]["period_s"].as_f64().unwrap());
    assert!((a - b).abs() <= 1e-9 * b);
    let text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().next().unwrap(), TRACE_CSV_HEADER);
    assert!(text.lines().count() > 100);
}

#[test]
fn robustness_at_zero_epsilon_is_exact() {
    let v = json(&["robustness", "--workload", "gcn:OA", "--workload", "gcn:S4", "--epsilon", "0", "--trials", "3"]);
    assert_eq!(v["perf"]["sub_optimal"], 0);
    assert_eq!(v["energy"]["sub_optimal"], 0);
    assert_eq!(v["perf"]["runs"], 6);
}

#[test]
fn gen_workload_round_trips() {
    let wl: Workload = serde_json::from_str(&ok(&["gen-workload", "--workload", "transformer:1024:512"])).unwrap();
    assert_eq!(wl.len(), 128);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wl.json");
    std::fs::write(&path, serde_json::to_string(&wl).unwrap()).unwrap();
    let again: Workload = serde_json::from_str(&ok(&["gen-workload", "--workload", path.to_str().unwrap()])).unwrap();
    assert_eq!(wl, again);
}

fn exit_code(args: &[&str]) -> (i32, Value) {
    let out = run(args);
    let diag = serde_json::from_slice(&out.stderr).unwrap_or(Value::Null);
    (out.status.code().unwrap(), diag)
}

#[test]
fn exit_codes_follow_the_scheme() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("system.json");
    std::fs::write(&bad, r#"{"device_types":[{"name":"GPU","count_available":0,"link_bandwidth":-1,"p_static":1,"p_dynamic":{},"p_transfer_dynamic":0,"eligible":["gemm"],"perf_model_id":"gpu"}],"interconnect":{"generation":"pcie4"}}"#).unwrap();
    let (code, diag) = exit_code(&["schedule", "--workload", "gcn:OA", "--system", bad.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(!diag["issues"].as_array().unwrap().is_empty());

    assert_eq!(exit_code(&["schedule", "--workload", "gcn:nope"]).0, 2);
    assert_eq!(exit_code(&["schedule", "--workload", "gcn:OA", "--mode", "balanced", "--fraction", "1.5"]).0, 2);

    let (code, diag) = exit_code(&["schedule", "--workload", "gcn:OA", "--baseline", "fpga-only"]);
    assert_eq!(code, 3);
    assert!(!diag["blocking_kernels"].as_array().unwrap().is_empty());

    assert_eq!(exit_code(&["robustness", "--workload", "transformer:1024:512"]).0, 4);
}

#[test]
fn documented_examples_validate() {
    let dir = root().join("docs/examples");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        let text = std::fs::read_to_string(&path).unwrap();
        if name.starts_with("system") {
            serde_json::from_str::<SystemSpec>(&text).unwrap().validate().unwrap();
        } else if name.starts_with("models") {
            serde_json::from_str::<ModelSet>(&text).unwrap().validate().unwrap();
        } else if name.starts_with("static_stages") {
            let stages: Vec<StageSpec> = serde_json::from_str(&text).unwrap();
            assert!(!stages.is_empty());
            let p = path.to_str().unwrap();
            ok(&["schedule", "--workload", &example("workload_two_kernel.json"), "--baseline", "static", "--stages", p]);
        } else if name.starts_with("workload") {
            let wl: Workload = serde_json::from_str(&ok(&["gen-workload", "--workload", path.to_str().unwrap()])).unwrap();
            wl.validate().unwrap();
        } else {
            panic!("unrecognised example {name}");
        }
        seen += 1;
    }
    assert!(seen >= 6);
}

/// JSON schema blocks of `docs/formats.md`, keyed by their heading.
fn documented_schemas() -> Vec<(String, Value)> {
    let text = std::fs::read_to_string(root().join("docs/formats.md")).unwrap();
    let mut out = Vec::new();
    let mut heading = String::new();
    let mut lines = text.lines();
    while let Some(line) = lines.next() {
        if let Some(h) = line.strip_prefix("## ").or_else(|| line.strip_prefix("### ")) {
            heading = h.to_string();
        } else if line == "```json" {
            let body: Vec<&str> = lines.by_ref().take_while(|l| *l != "```").collect();
            out.push((heading.clone(), serde_json::from_str(&body.join("\n")).unwrap()));
        }
    }
    out
}

#[test]
fn examples_match_documented_schemas() {
    let schemas = documented_schemas();
    assert_eq!(schemas.len(), 8);
    let schema = |prefix: &str| {
        let (_, s) = schemas.iter().find(|(h, _)| h.starts_with(prefix)).unwrap_or_else(|| panic!("{prefix}"));
        jsonschema::JSONSchema::compile(s).unwrap()
    };
    let cases = [
        ("system.json", "System"),
        ("system_cpu_routed.json", "System"),
        ("models.json", "Perf models"),
        ("workload_gcn.json", "Workload config"),
        ("workload_gin_custom_graph.json", "Workload config"),
        ("workload_transformer.json", "Workload config"),
        ("workload_two_kernel.json", "Kernel chain"),
        ("static_stages.json", "Static stages"),
    ];
    for (file, section) in cases {
        let doc: Value = serde_json::from_str(&std::fs::read_to_string(example(file)).unwrap()).unwrap();
        let compiled = schema(section);
        let msgs: Vec<String> = match compiled.validate(&doc) {
            Ok(()) => Vec::new(),
            Err(errors) => errors.map(|e| format!("{} at {}", e, e.instance_path)).collect(),
        };
        assert!(msgs.is_empty(), "{file}: {msgs:?}");
    }
    let out: Value = serde_json::from_str(&ok(&["schedule", "--workload", "gcn:OA"])).unwrap();
    assert!(schema("Schedule output").is_valid(&out));
    let out: Value = serde_json::from_str(&ok(&["simulate", "--workload", "gcn:S4"])).unwrap();
    assert!(schema("Simulation output").is_valid(&out));
    let out: Value = serde_json::from_str(&ok(&["gen-workload", "--workload", "gin:OA"])).unwrap();
    assert!(schema("Kernel chain").is_valid(&out));
}
