use hetsched_core::comm::transfer_time;
use hetsched_core::model::{parse_mnemonic, Generation, InterconnectSpec, Kernel, SystemSpec, Workload};
use hetsched_core::perf::{ModelKind, ModelSet};
use hetsched_core::schedule::{dype_front, oracle_front, Candidate, CostModel, OracleLimits, ParetoFront, StageSpec};
use hetsched_core::sim::{simulate, SimEventKind, SimOptions};
use hetsched_core::synth::{random_instance, SynthConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn interconnect() -> impl Strategy<Value = InterconnectSpec> {
    (
        prop_oneof![Just(Generation::Pcie4), Just(Generation::Pcie5), Just(Generation::Cxl3)],
        1.0..4.0f64,
        0.0..20e-6f64,
        0.0..40e-6f64,
    )
        .prop_map(|(g, factor, p2p, extra)| InterconnectSpec {
            p2p_enabled: true,
            cpu_route_factor: factor,
            p2p_fixed_latency: p2p,
            cpu_fixed_latency: p2p + extra,
            ..InterconnectSpec::new(g)
        })
}

fn instance(seed: u64) -> hetsched_core::synth::Instance {
    random_instance(&mut ChaCha8Rng::seed_from_u64(seed), &SynthConfig::default())
}

fn candidate() -> impl Strategy<Value = Candidate> {
    (1u32..20, 1u32..20, prop::collection::vec((1u32..4, any::<bool>()), 1..4)).prop_map(|(p, e, stages)| {
        let specs = stages
            .iter()
            .enumerate()
            .map(|(i, &(count, fpga))| StageSpec {
                kernels: i..i + 1,
                device_type: if fpga { "FPGA" } else { "GPU" }.into(),
                device_count: count,
            })
            .collect();
        Candidate::new(p as f64, e as f64, specs)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn transfer_is_symmetric(bytes in 0u64..1 << 34, a in 1e9..64e9f64, b in 1e9..64e9f64, ic in interconnect(), host: bool) {
        prop_assert_eq!(transfer_time(bytes, a, b, host, &ic), transfer_time(bytes, b, a, host, &ic));
    }

    #[test]
    fn transfer_grows_with_bytes(bytes in 0u64..1 << 34, more in 0u64..1 << 30, a in 1e9..64e9f64, b in 1e9..64e9f64, ic in interconnect()) {
        prop_assert!(transfer_time(bytes, a, b, false, &ic) <= transfer_time(bytes + more, a, b, false, &ic));
    }

    #[test]
    fn p2p_never_slower_than_cpu_routing(bytes in 0u64..1 << 34, a in 1e9..64e9f64, b in 1e9..64e9f64, ic in interconnect()) {
        let routed = InterconnectSpec { p2p_enabled: false, ..ic.clone() };
        prop_assert!(transfer_time(bytes, a, b, false, &ic) <= transfer_time(bytes, a, b, false, &routed));
    }

    #[test]
    fn spmm_time_grows_with_nnz(m in 1_000u64..200_000, n in 8u64..512, density in 1u64..50, extra in 0u64..1_000_000) {
        let nnz = m * density;
        for (id, kind) in [("fpga", ModelKind::SpmmFpga), ("gpu", ModelKind::SpmmGpu)] {
            let model = ModelSet::demo().lookup_kind(id, kind).unwrap();
            let small = model.predict(&Kernel::spmm("a", m, m, n, nnz));
            let large = model.predict(&Kernel::spmm("a", m, m, n, nnz + extra));
            prop_assert!(small <= large, "{kind}: {small} > {large}");
        }
    }

    #[test]
    fn gemm_time_grows_with_each_dim(m in 1u64..8192, k in 1u64..8192, n in 1u64..8192, d in 1u64..1024) {
        let model = ModelSet::demo().lookup_kind("gpu", ModelKind::GemmGpu).unwrap();
        let base = model.predict(&Kernel::gemm("g", m, k, n));
        for grown in [Kernel::gemm("g", m + d, k, n), Kernel::gemm("g", m, k + d, n), Kernel::gemm("g", m, k, n + d)] {
            prop_assert!(base <= model.predict(&grown));
        }
    }

    #[test]
    fn attention_time_grows_with_window(seq in 256u64..16_384, w in 1u64..16_384, d in 1u64..4096) {
        let w = w.min(seq);
        let w2 = (w + d).min(seq);
        for (id, kind) in [("fpga", ModelKind::WinAttnFpga), ("gpu", ModelKind::WinAttnGpuDense)] {
            let model = ModelSet::demo().lookup_kind(id, kind).unwrap();
            prop_assert!(model.predict(&Kernel::window_attention("w", seq, w)) <= model.predict(&Kernel::window_attention("w", seq, w2)));
        }
    }

    #[test]
    fn pareto_front_is_non_dominated_and_order_free(mut cands in prop::collection::vec(candidate(), 1..40), seed: u64) {
        let mut front = ParetoFront::new();
        for c in &cands {
            front.insert(c.clone());
        }
        let pts = front.points();
        for w in pts.windows(2) {
            prop_assert!(w[0].period < w[1].period && w[0].energy > w[1].energy);
        }
        for c in &cands {
            prop_assert!(pts.iter().any(|p| p.period <= c.period && p.energy <= c.energy));
        }
        use rand::seq::SliceRandom;
        cands.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut other = ParetoFront::new();
        for c in cands {
            other.insert(c);
        }
        prop_assert_eq!(front.points(), other.points());
    }

    #[test]
    fn mnemonic_round_trip(stages in prop::collection::vec((1u32..64, prop::sample::select(vec!['F', 'G', 'T'])), 1..8)) {
        let text: String = stages.iter().map(|(n, c)| format!("{n}{c}")).collect();
        prop_assert_eq!(parse_mnemonic(&text).unwrap(), stages);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn json_round_trip(seed: u64) {
        let inst = instance(seed);
        let wl: Workload = serde_json::from_str(&serde_json::to_string(&inst.workload).unwrap()).unwrap();
        let sys: SystemSpec = serde_json::from_str(&serde_json::to_string(&inst.system).unwrap()).unwrap();
        let models: ModelSet = serde_json::from_str(&serde_json::to_string(&inst.models).unwrap()).unwrap();
        prop_assert_eq!(wl, inst.workload);
        prop_assert_eq!(sys, inst.system);
        prop_assert_eq!(models, inst.models);
    }

    #[test]
    fn dp_front_equals_exhaustive_front(seed: u64) {
        let inst = instance(seed);
        let cost = CostModel::new(&inst.workload, &inst.system, &inst.models).unwrap();
        let (oracle, _) = oracle_front(&cost, OracleLimits::default()).unwrap();
        prop_assume!(!oracle.is_empty());
        let (dp, _) = dype_front(&cost).unwrap();
        let values = |f: &ParetoFront| f.points().iter().map(|c| (c.period, c.energy)).collect::<Vec<_>>();
        prop_assert_eq!(values(&dp), values(&oracle));
    }

    #[test]
    fn simulation_is_causal_and_conserves_time(seed: u64) {
        let inst = instance(seed);
        let cost = CostModel::new(&inst.workload, &inst.system, &inst.models).unwrap();
        let (front, _) = dype_front(&cost).unwrap_or_default();
        prop_assume!(!front.is_empty());
        let schedule = cost.assemble(&front.points()[0].stages).unwrap();
        let opts = SimOptions { trace: true, ..SimOptions::default() };
        let rep = simulate(&schedule, &inst.system, &opts).unwrap();
        let trace = rep.trace.as_ref().unwrap();
        prop_assert!(trace.windows(2).all(|w| w[0].time <= w[1].time));
        // per (stage, iteration): start <= end <= xfer start <= xfer end
        let at = |kind, stage, it| trace.iter().find(|e| e.kind == kind && e.stage == stage && e.iteration == it).map(|e| e.time);
        for s in 0..schedule.stages.len() {
            for it in [0, rep.iterations / 2, rep.iterations - 1] {
                let seq = [SimEventKind::StageStart, SimEventKind::StageEnd, SimEventKind::XferStart, SimEventKind::XferEnd]
                    .map(|k| at(k, s, it).unwrap());
                prop_assert!(seq.windows(2).all(|w| w[0] <= w[1]), "stage {s} iteration {it}: {seq:?}");
                if s > 0 {
                    prop_assert!(at(SimEventKind::XferEnd, s - 1, it).unwrap() <= seq[0]);
                }
            }
        }
        for d in &rep.devices {
            prop_assert!(d.busy_s + d.transfer_s + d.idle_s >= rep.makespan * (1.0 - 1e-12));
            prop_assert!(d.busy_s + d.transfer_s <= rep.makespan * (1.0 + 1e-12));
        }
        prop_assert!(rep.latency >= schedule.period * (1.0 - 1e-12));
    }
}
