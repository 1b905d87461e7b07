use std::time::{Duration, Instant};

use hetsched_core::model::SystemSpec;
use hetsched_core::perf::ModelSet;
use hetsched_core::schedule::{dype_front, CostModel};
use hetsched_core::workload::WorkloadConfig;

#[test]
fn transformer_128_kernels_under_a_second() {
    for (seq, w) in [(1024u64, 512u64), (4096, 512), (4096, 4096), (16384, 512), (16384, 4096)] {
        let wl = WorkloadConfig::from_preset(&format!("transformer:{seq}:{w}")).unwrap().build().unwrap();
        assert_eq!(wl.len(), 128);
        let t = Instant::now();
        let cost = CostModel::new(&wl, SystemSpec::demo(), ModelSet::demo()).unwrap();
        let (front, _) = dype_front(&cost).unwrap();
        let elapsed = t.elapsed();
        assert!(!front.is_empty());
        assert!(elapsed < Duration::from_secs(1), "seq {seq} window {w}: {elapsed:?}");
    }
}
