//! Discrete-event replay of a pipeline schedule.
//!
//! Each stage owns a device group that cycles through receive, execute and
//! send. A transfer between neighbouring stages starts once the receiver is
//! idle and the sender holds a finished batch, and it occupies both groups
//! for its whole duration. Ingest and egress talk to the host, which is never
//! a bottleneck. Buffers between stages hold one batch.
//!
//! One extra batch per stage follows the requested iterations so the pipeline
//! stays full until the last measured completion.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::comm::stagger_offset;
use crate::energy::{exec_energy, static_power_of};
use crate::error::{Error, Result};
use crate::model::{DeviceType, PipelineSchedule, SystemSpec};

pub const TRACE_CSV_HEADER: &str = "time_s,event,stage,iteration,device_type";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimEventKind {
    Ingest,
    XferEnd,
    StageStart,
    StageEnd,
    XferStart,
}

impl SimEventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SimEventKind::Ingest => "ingest",
            SimEventKind::XferStart => "xfer_start",
            SimEventKind::XferEnd => "xfer_end",
            SimEventKind::StageStart => "stage_start",
            SimEventKind::StageEnd => "stage_end",
        }
    }
}

/// Trace record. Transfer events carry the sending stage; `device_type` names
/// the receiving side, `host` for egress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time: f64,
    pub kind: SimEventKind,
    pub stage: usize,
    pub iteration: usize,
    pub device_type: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Total iterations; zero picks enough for the measured minimum.
    pub iterations: usize,
    /// Defaults to three iterations per stage.
    pub warmup: Option<usize>,
    pub trace: bool,
}

/// Minimum number of measured inter-completion gaps used by the defaults.
pub const MIN_MEASURED: usize = 20;

/// Occupancy of one stage's device group over the whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceStats {
    pub stage: usize,
    pub device_type: String,
    pub device_count: u32,
    pub busy_s: f64,
    pub transfer_s: f64,
    pub idle_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub iterations: usize,
    pub warmup: usize,
    /// Mean gap between consecutive completions after warmup.
    pub steady_period: f64,
    /// Mean ingest-start to egress-end time of the measured iterations.
    pub latency: f64,
    pub makespan: f64,
    /// Static draw between the warmup completion and the last completion,
    /// plus the dynamic draw of the batches completed in that window.
    pub energy: f64,
    pub measured_iterations: usize,
    pub devices: Vec<DeviceStats>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<SimEvent>>,
}

impl SimReport {
    pub fn energy_per_iteration(&self) -> f64 {
        self.energy / self.measured_iterations as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    Receiving,
    Executing,
    Holding,
    Sending,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Action {
    /// Transfer into stage `dst` finished; `dst == stages` is egress.
    XferDone { dst: usize },
    ExecDone { stage: usize },
    IngestRelease,
}

impl Action {
    fn rank(self) -> u8 {
        match self {
            Action::XferDone { .. } => 0,
            Action::ExecDone { .. } => 1,
            Action::IngestRelease => 2,
        }
    }

    fn stage(self) -> usize {
        match self {
            Action::XferDone { dst } => dst,
            Action::ExecDone { stage } => stage,
            Action::IngestRelease => 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Queued {
    time: f64,
    iteration: usize,
    action: Action,
}

impl Queued {
    fn key(&self) -> (usize, usize, u8) {
        (self.iteration, self.action.stage(), self.action.rank())
    }
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then_with(|| self.key().cmp(&other.key()))
    }
}

struct Group<'s> {
    dtype: &'s DeviceType,
    count: u32,
    t_exec: f64,
    t_in: f64,
    t_out: f64,
    exec_watts: f64,
    xfer_watts: f64,
    phase: Phase,
    iteration: usize,
    /// `(start, end, iteration)` of each execution.
    busy: Vec<(f64, f64, usize)>,
    /// `(start, end, iteration)` of each transfer touching the group.
    xfers: Vec<(f64, f64, usize)>,
}

struct Sim<'s> {
    groups: Vec<Group<'s>>,
    queue: BinaryHeap<Reverse<Queued>>,
    iterations: usize,
    next_ingest: usize,
    ingest_release: f64,
    stagger: f64,
    ingest_start: Vec<f64>,
    completion: Vec<f64>,
    trace: Option<Vec<SimEvent>>,
}

impl<'s> Sim<'s> {
    fn push(&mut self, time: f64, iteration: usize, action: Action) {
        self.queue.push(Reverse(Queued { time, iteration, action }));
    }

    fn log(&mut self, time: f64, kind: SimEventKind, stage: usize, iteration: usize, device_type: &str) {
        if let Some(trace) = &mut self.trace {
            trace.push(SimEvent {
                time,
                kind,
                stage,
                iteration,
                device_type: device_type.to_string(),
            });
        }
    }

    /// Records a transfer window on a group, refusing overlap with its previous one.
    fn occupy(&mut self, stage: usize, start: f64, end: f64, iteration: usize) -> Result<()> {
        let g = &mut self.groups[stage];
        if let Some(&(a, b, _)) = g.xfers.last() {
            if start < b {
                return Err(Error::TransferConflict {
                    stage,
                    a_start: a,
                    a_end: b,
                    b_start: start,
                    b_end: end,
                });
            }
        }
        g.xfers.push((start, end, iteration));
        Ok(())
    }

    /// Starts every transfer whose endpoints are ready.
    fn dispatch(&mut self, now: f64) -> Result<()> {
        let n = self.groups.len();
        let g0 = &self.groups[0];
        if g0.phase == Phase::Idle && self.next_ingest < self.iterations && now >= self.ingest_release {
            let t = self.next_ingest;
            let end = now + g0.t_in;
            let name = g0.dtype.name.clone();
            self.groups[0].phase = Phase::Receiving;
            self.groups[0].iteration = t;
            self.next_ingest += 1;
            self.ingest_start.push(now);
            self.log(now, SimEventKind::Ingest, 0, t, &name);
            self.occupy(0, now, end, t)?;
            self.push(end, t, Action::XferDone { dst: 0 });
        }
        for dst in 1..=n {
            let src = dst - 1;
            if self.groups[src].phase != Phase::Holding || (dst < n && self.groups[dst].phase != Phase::Idle) {
                continue;
            }
            let t = self.groups[src].iteration;
            let end = now + self.groups[src].t_out;
            let to = if dst < n {
                self.groups[dst].dtype.name.clone()
            } else {
                "host".to_string()
            };
            self.groups[src].phase = Phase::Sending;
            self.occupy(src, now, end, t)?;
            if dst < n {
                self.groups[dst].phase = Phase::Receiving;
                self.groups[dst].iteration = t;
                self.occupy(dst, now, end, t)?;
            }
            self.log(now, SimEventKind::XferStart, src, t, &to);
            self.push(end, t, Action::XferDone { dst });
        }
        Ok(())
    }

    fn step(&mut self, ev: Queued) -> Result<()> {
        let now = ev.time;
        let n = self.groups.len();
        let t = ev.iteration;
        match ev.action {
            Action::XferDone { dst } => {
                if dst > 0 {
                    let src = dst - 1;
                    let to = if dst < n {
                        self.groups[dst].dtype.name.clone()
                    } else {
                        "host".to_string()
                    };
                    self.log(now, SimEventKind::XferEnd, src, t, &to);
                    self.groups[src].phase = Phase::Idle;
                    if src == 0 && t == 0 {
                        self.ingest_release = now + self.stagger;
                        if self.stagger > 0.0 {
                            self.push(self.ingest_release, 1, Action::IngestRelease);
                        }
                    }
                }
                if dst == n {
                    self.completion.push(now);
                } else {
                    let g = &mut self.groups[dst];
                    g.phase = Phase::Executing;
                    let end = now + g.t_exec;
                    g.busy.push((now, end, t));
                    let name = g.dtype.name.clone();
                    self.log(now, SimEventKind::StageStart, dst, t, &name);
                    self.push(end, t, Action::ExecDone { stage: dst });
                }
            }
            Action::ExecDone { stage } => {
                self.groups[stage].phase = Phase::Holding;
                let name = self.groups[stage].dtype.name.clone();
                self.log(now, SimEventKind::StageEnd, stage, t, &name);
            }
            Action::IngestRelease => {}
        }
        self.dispatch(now)
    }
}

/// Replays `schedule` for `opts.iterations` batches and measures its steady state.
pub fn simulate(schedule: &PipelineSchedule, sys: &SystemSpec, opts: &SimOptions) -> Result<SimReport> {
    let n = schedule.stages.len();
    if n == 0 {
        return Err(Error::Simulation("schedule has no stages".into()));
    }
    let warmup = opts.warmup.unwrap_or(3 * n);
    let iterations = if opts.iterations == 0 {
        warmup + MIN_MEASURED + 1
    } else {
        opts.iterations
    };
    if warmup < 2 * n {
        return Err(Error::Simulation(format!("warmup {warmup} is below twice the stage count {n}")));
    }
    if iterations < warmup + 2 {
        return Err(Error::Simulation(format!(
            "{iterations} iterations leave no measured gap after {warmup} warmup iterations"
        )));
    }
    let mut groups = Vec::with_capacity(n);
    for (i, s) in schedule.stages.iter().enumerate() {
        let dtype = sys
            .device(&s.device_type)
            .ok_or_else(|| Error::Simulation(format!("stage {i}: unknown device type `{}`", s.device_type)))?;
        if !(s.t_exec > 0.0) {
            return Err(Error::Simulation(format!("stage {i}: execution time must be positive")));
        }
        if i > 0 && s.t_comm_in != schedule.stages[i - 1].t_comm_out {
            return Err(Error::Simulation(format!(
                "stage {i}: incoming transfer time differs from stage {}'s outgoing time",
                i - 1
            )));
        }
        groups.push(Group {
            dtype,
            count: s.device_count,
            t_exec: s.t_exec,
            t_in: s.t_comm_in,
            t_out: s.t_comm_out,
            exec_watts: exec_energy(dtype, s.device_count, &s.kernel_seconds, s.t_gather) / s.t_exec,
            xfer_watts: s.device_count as f64 * dtype.p_transfer_dynamic,
            phase: Phase::Idle,
            iteration: 0,
            busy: Vec::with_capacity(iterations + n),
            xfers: Vec::with_capacity(2 * (iterations + n)),
        });
    }
    let mut sim = Sim {
        groups,
        queue: BinaryHeap::new(),
        iterations: iterations + n,
        next_ingest: 0,
        ingest_release: 0.0,
        stagger: stagger_offset(schedule),
        ingest_start: Vec::with_capacity(iterations),
        completion: Vec::with_capacity(iterations),
        trace: opts.trace.then(Vec::new),
    };
    if n == 1 {
        sim.stagger = 0.0;
    }
    sim.dispatch(0.0)?;
    while let Some(Reverse(ev)) = sim.queue.pop() {
        sim.step(ev)?;
    }
    if sim.completion.len() != iterations + n {
        return Err(Error::Simulation(format!(
            "{} of {} batches completed",
            sim.completion.len(),
            iterations + n
        )));
    }

    let measured = iterations - 1 - warmup;
    let (lo, hi) = (sim.completion[warmup], sim.completion[iterations - 1]);
    let steady_period = (hi - lo) / measured as f64;
    let latency = ((warmup + 1)..iterations)
        .map(|t| sim.completion[t] - sim.ingest_start[t])
        .sum::<f64>()
        / measured as f64;

    let measured_batch = |t: usize| t > warmup && t < iterations;
    let span = |v: &[(f64, f64, usize)]| -> f64 {
        v.iter().filter(|x| measured_batch(x.2)).map(|&(a, b, _)| b - a).sum()
    };
    let mut dynamic = 0.0;
    for g in &sim.groups {
        dynamic += span(&g.busy) * g.exec_watts;
        dynamic += span(&g.xfers) * g.xfer_watts;
    }
    let energy = static_power_of(sys, &schedule.devices_used) * (hi - lo) + dynamic;

    let makespan = *sim.completion.last().expect("batches completed");
    let devices = schedule
        .stages
        .iter()
        .zip(&sim.groups)
        .enumerate()
        .map(|(i, (s, g))| {
            let busy_s: f64 = g.busy.iter().map(|&(a, b, _)| b - a).sum();
            let transfer_s: f64 = g.xfers.iter().map(|&(a, b, _)| b - a).sum();
            DeviceStats {
                stage: i,
                device_type: s.device_type.clone(),
                device_count: g.count,
                busy_s,
                transfer_s,
                idle_s: (makespan - busy_s - transfer_s).max(0.0),
            }
        })
        .collect();

    let trace = sim.trace.map(|mut t| {
        t.sort_by(|a, b| {
            a.time
                .total_cmp(&b.time)
                .then(a.iteration.cmp(&b.iteration))
                .then(a.stage.cmp(&b.stage))
                .then(a.kind.cmp(&b.kind))
        });
        t
    });

    Ok(SimReport {
        iterations,
        warmup,
        steady_period,
        latency,
        makespan,
        energy,
        measured_iterations: measured,
        devices,
        trace,
    })
}

/// Writes `time_s,event,stage,iteration,device_type` rows.
pub fn emit_trace<W: Write>(writer: W, events: &[SimEvent]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_CSV_HEADER.split(','))?;
    for e in events {
        w.write_record([
            e.time.to_string(),
            e.kind.as_str().to_string(),
            e.stage.to_string(),
            e.iteration.to_string(),
            e.device_type.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{mnemonic, Generation, InterconnectSpec, KernelKind, KindTimes, Stage};
    use approx::assert_relative_eq;
    use std::collections::BTreeMap;

    fn dev(name: &str, count: u32) -> DeviceType {
        DeviceType {
            name: name.into(),
            count_available: count,
            link_bandwidth: 1e9,
            p_static: 10.0,
            p_dynamic: [(KernelKind::Gemm, 100.0)].into_iter().collect(),
            p_transfer_dynamic: 5.0,
            eligible: [KernelKind::Gemm].into_iter().collect(),
            perf_model_id: name.to_lowercase(),
        }
    }

    fn system() -> SystemSpec {
        SystemSpec {
            device_types: vec![dev("FPGA", 2), dev("GPU", 2)],
            interconnect: InterconnectSpec::ideal(Generation::Pcie4),
        }
    }

    fn stage(range: std::ops::Range<usize>, ty: &str, exec: f64, t_in: f64, t_out: f64) -> Stage {
        Stage {
            kernel_range: range,
            device_type: ty.into(),
            device_count: 1,
            t_exec: exec,
            t_gather: 0.0,
            kernel_seconds: KindTimes {
                gemm: exec,
                ..KindTimes::default()
            },
            t_comm_in: t_in,
            t_comm_out: t_out,
            t_stage: (exec + t_in) + t_out,
        }
    }

    fn schedule(stages: Vec<Stage>) -> PipelineSchedule {
        let sys = system();
        let mut used = BTreeMap::new();
        for s in &stages {
            *used.entry(s.device_type.clone()).or_insert(0) += s.device_count;
        }
        let period = stages.iter().map(|s| s.t_stage).fold(0.0, f64::max);
        let mut out = PipelineSchedule {
            mnemonic: mnemonic(&stages),
            latency: stages.iter().map(|s| s.t_stage).sum(),
            stages,
            period,
            devices_used: used,
            energy_per_period: 0.0,
        };
        out.energy_per_period = crate::energy::f_eng(&out, period, &sys).unwrap();
        out
    }

    #[test]
    fn single_stage_latency_is_period() {
        let s = schedule(vec![stage(0..1, "GPU", 3.0, 1.0, 0.5)]);
        let r = simulate(&s, &system(), &SimOptions::default()).unwrap();
        assert_relative_eq!(r.steady_period, 4.5, max_relative = 1e-12);
        assert_relative_eq!(r.latency, 4.5, max_relative = 1e-12);
        assert_relative_eq!(r.energy_per_iteration(), s.energy_per_period, max_relative = 1e-9);
    }

    #[test]
    fn bottleneck_sets_the_period() {
        let s = schedule(vec![
            stage(0..1, "FPGA", 2.0, 1.0, 0.5),
            stage(1..2, "GPU", 1.0, 0.5, 0.25),
        ]);
        let r = simulate(&s, &system(), &SimOptions::default()).unwrap();
        assert_relative_eq!(r.steady_period, 3.5, max_relative = 1e-12);
        assert_relative_eq!(r.energy_per_iteration(), s.energy_per_period, max_relative = 1e-9);
    }

    #[test]
    fn trace_counts_for_two_stages() {
        let s = schedule(vec![
            stage(0..1, "FPGA", 2.0, 1.0, 0.5),
            stage(1..2, "GPU", 1.0, 0.5, 0.25),
        ]);
        let opts = SimOptions {
            iterations: 6,
            warmup: Some(4),
            trace: true,
        };
        let r = simulate(&s, &system(), &opts).unwrap();
        let trace = r.trace.unwrap();
        let count = |k| trace.iter().filter(|e| e.kind == k).count();
        assert_eq!(count(SimEventKind::Ingest), 8);
        assert_eq!(count(SimEventKind::StageStart), 16);
        assert_eq!(count(SimEventKind::StageEnd), 16);
        assert_eq!(count(SimEventKind::XferStart), 16);
        assert_eq!(count(SimEventKind::XferEnd), 16);
        assert!(trace.windows(2).all(|w| w[0].time <= w[1].time));
    }

    #[test]
    fn rejects_short_warmup() {
        let s = schedule(vec![stage(0..1, "GPU", 1.0, 0.0, 0.0), stage(1..2, "GPU", 1.0, 0.0, 0.0)]);
        let opts = SimOptions {
            iterations: 10,
            warmup: Some(3),
            trace: false,
        };
        assert!(matches!(simulate(&s, &system(), &opts), Err(Error::Simulation(_))));
    }

    #[test]
    fn empty_trace_is_header_only() {
        let mut buf = Vec::new();
        emit_trace(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{TRACE_CSV_HEADER}\n"));
    }
}
