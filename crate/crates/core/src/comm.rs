//! Inter-stage transfer occupancy.

use crate::error::{Error, Result};
use crate::model::{DeviceType, InterconnectSpec, PipelineSchedule, SystemSpec};

/// One end of a transfer: a group of same-type devices, or the host.
#[derive(Debug, Clone, Copy)]
pub enum Endpoint<'a> {
    Host,
    Devices { dtype: &'a DeviceType, count: u32 },
}

impl<'a> Endpoint<'a> {
    pub fn devices(dtype: &'a DeviceType, count: u32) -> Self {
        Endpoint::Devices { dtype, count }
    }

    /// Aggregate bandwidth after interconnect scaling.
    fn bandwidth(&self, sys: &SystemSpec) -> f64 {
        let scale = sys.interconnect.scale();
        match self {
            Endpoint::Host => sys.host_bandwidth() * scale,
            Endpoint::Devices { dtype, count } => *count as f64 * dtype.link_bandwidth * scale,
        }
    }

    fn is_host(&self) -> bool {
        matches!(self, Endpoint::Host)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Source,
    Destination,
}

#[derive(Debug, Clone, Copy)]
pub struct TransferQuery<'a> {
    pub bytes: u64,
    pub src: Endpoint<'a>,
    pub dst: Endpoint<'a>,
    pub side: Side,
}

/// Occupancy of a transfer given the two aggregate bandwidths.
///
/// Host transfers are plain DMA: never CPU-routed, always the P2P latency.
pub fn transfer_time(bytes: u64, bw_src: f64, bw_dst: f64, host_involved: bool, ic: &InterconnectSpec) -> f64 {
    let wall = bytes as f64 / bw_src.min(bw_dst);
    if host_involved || ic.p2p_enabled {
        wall + ic.p2p_fixed_latency
    } else {
        wall * ic.cpu_route_factor + ic.cpu_fixed_latency
    }
}

/// Seconds the queried side is busy with the transfer. Both sides see the
/// same value; `side` is kept so an asymmetric model stays a local change.
pub fn f_comm(q: &TransferQuery<'_>, sys: &SystemSpec) -> Result<f64> {
    for end in [&q.src, &q.dst] {
        if let Endpoint::Devices { dtype, count } = end {
            if *count == 0 {
                return Err(Error::Config(format!("transfer endpoint `{}` has no devices", dtype.name)));
            }
        }
    }
    let (bs, bd) = (q.src.bandwidth(sys), q.dst.bandwidth(sys));
    if !(bs > 0.0 && bd > 0.0 && bs.is_finite() && bd.is_finite()) {
        return Err(Error::Config("transfer endpoint with zero or undefined bandwidth".into()));
    }
    let _ = q.side;
    Ok(transfer_time(
        q.bytes,
        bs,
        bd,
        q.src.is_host() || q.dst.is_host(),
        &sys.interconnect,
    ))
}

/// Host-ingest delay applied after the first iteration: the stage-0 ingest
/// time for pipelines of two or more stages, zero otherwise.
pub fn stagger_offset(schedule: &PipelineSchedule) -> f64 {
    if schedule.stages.len() >= 2 {
        schedule.stages[0].t_comm_in
    } else {
        0.0
    }
}
