use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{ParetoPoint, PipelineSchedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub kernel_start: usize,
    pub kernel_end: usize,
    pub device_type: String,
    pub device_count: u32,
    pub t_exec_s: f64,
    pub t_gather_s: f64,
    pub t_comm_in_s: f64,
    pub t_comm_out_s: f64,
    pub t_stage_s: f64,
}

/// Schedule JSON as written by the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub mnemonic: String,
    pub stages: Vec<StageReport>,
    pub period_s: f64,
    pub throughput_per_s: f64,
    #[serde(rename = "energy_J")]
    pub energy_j: f64,
    pub inferences_per_joule: f64,
    pub latency_s: f64,
    pub devices_used: BTreeMap<String, u32>,
}

impl From<&PipelineSchedule> for ScheduleReport {
    fn from(s: &PipelineSchedule) -> Self {
        ScheduleReport {
            mnemonic: s.mnemonic.clone(),
            stages: s
                .stages
                .iter()
                .map(|st| StageReport {
                    kernel_start: st.kernel_range.start,
                    kernel_end: st.kernel_range.end,
                    device_type: st.device_type.clone(),
                    device_count: st.device_count,
                    t_exec_s: st.t_exec,
                    t_gather_s: st.t_gather,
                    t_comm_in_s: st.t_comm_in,
                    t_comm_out_s: st.t_comm_out,
                    t_stage_s: st.t_stage,
                })
                .collect(),
            period_s: s.period,
            throughput_per_s: s.throughput(),
            energy_j: s.energy_per_period,
            inferences_per_joule: 1.0 / s.energy_per_period,
            latency_s: s.latency,
            devices_used: s.devices_used.clone(),
        }
    }
}

fn used_of(p: &ParetoPoint, name: &str) -> u32 {
    p.schedule
        .devices_used
        .iter()
        .filter(|(k, _)| k.eq_ignore_ascii_case(name))
        .map(|(_, v)| *v)
        .sum()
}

pub const PARETO_CSV_HEADER: &str = "throughput,energy_per_inference,mnemonic,f_used,g_used";

/// `throughput,energy_per_inference,mnemonic,f_used,g_used`, one row per point.
pub fn write_pareto_csv<W: Write>(writer: W, points: &[ParetoPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(PARETO_CSV_HEADER.split(','))?;
    for p in points {
        w.write_record([
            p.throughput.to_string(),
            p.energy_per_inference.to_string(),
            p.schedule.mnemonic.clone(),
            used_of(p, "FPGA").to_string(),
            used_of(p, "GPU").to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
