//! Energy per pipeline period.
//!
//! Every allocated device draws static power for the whole period, plus
//! kind-specific dynamic power while executing and transfer power while
//! moving data. Devices outside the schedule are powered down.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::{DeviceType, KindTimes, ParetoPoint, PipelineSchedule, SystemSpec};

/// Dynamic energy of one stage's execution on `count` devices. Intra-stage
/// gather time is charged at transfer power.
pub fn exec_energy(dtype: &DeviceType, count: u32, kernel_seconds: &KindTimes, t_gather: f64) -> f64 {
    use crate::model::KernelKind::*;
    let per_device = dtype.dynamic_power(SpMM) * kernel_seconds.spmm
        + dtype.dynamic_power(Gemm) * kernel_seconds.gemm
        + dtype.dynamic_power(WindowAttention) * kernel_seconds.window_attention
        + dtype.p_transfer_dynamic * t_gather;
    count as f64 * per_device
}

pub fn transfer_energy(dtype: &DeviceType, count: u32, seconds: f64) -> f64 {
    count as f64 * (dtype.p_transfer_dynamic * seconds)
}

/// Static watts of an allocation, summed over device types in system order.
pub fn static_power(sys: &SystemSpec, used: impl Fn(usize) -> u32) -> f64 {
    sys.device_types
        .iter()
        .enumerate()
        .fold(0.0, |acc, (i, d)| acc + used(i) as f64 * d.p_static)
}

pub fn static_power_of(sys: &SystemSpec, devices_used: &BTreeMap<String, u32>) -> f64 {
    static_power(sys, |i| {
        devices_used.get(&sys.device_types[i].name).copied().unwrap_or(0)
    })
}

pub fn energy_from_parts(period: f64, static_watts: f64, dynamic: f64) -> f64 {
    period * static_watts + dynamic
}

/// Joules drawn by `schedule` over one period of length `period`.
pub fn f_eng(schedule: &PipelineSchedule, period: f64, sys: &SystemSpec) -> Result<f64> {
    let longest = schedule.stages.iter().map(|s| s.t_stage).fold(0.0, f64::max);
    if period < longest {
        return Err(Error::PeriodTooShort { period, longest });
    }
    let mut dynamic = 0.0;
    for s in &schedule.stages {
        let d = sys
            .device(&s.device_type)
            .ok_or_else(|| Error::Config(format!("unknown device type `{}`", s.device_type)))?;
        dynamic += exec_energy(d, s.device_count, &s.kernel_seconds, s.t_gather);
        dynamic += transfer_energy(d, s.device_count, s.t_comm_in);
        dynamic += transfer_energy(d, s.device_count, s.t_comm_out);
    }
    Ok(energy_from_parts(period, static_power_of(sys, &schedule.devices_used), dynamic))
}

pub fn energy_per_inference(p: &ParetoPoint) -> f64 {
    p.energy_per_inference
}
