//! Ground-truth total-response-time model (round-trip transfer plus
//! processing) and the simulated sharing-experience generator that
//! produces regression training data.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Device, DeviceType, Mobility, Mode, TaskRequest};
use crate::rng::stream_rng;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("task requester {task} does not match device {device}")]
    MismatchedRequest { task: u32, device: u32 },
    #[error("need at least one available edge device and one other device")]
    InsufficientDevices,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommTech {
    D2d,
    Cellular,
}

impl std::fmt::Display for CommTech {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CommTech::D2d => "d2d",
            CommTech::Cellular => "cellular",
        })
    }
}

/// Radio-model constants. Defaults give second-scale response times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleParams {
    pub d2d_latency_s: f64,
    pub cellular_latency_s: f64,
    pub d2d_bandwidth_mbps: f64,
    pub cellular_bandwidth_mbps: f64,
    pub d2d_radius_m: f64,
}

impl Default for OracleParams {
    fn default() -> Self {
        OracleParams {
            d2d_latency_s: 0.005,
            cellular_latency_s: 0.025,
            d2d_bandwidth_mbps: 50.0,
            cellular_bandwidth_mbps: 10.0,
            d2d_radius_m: 100.0,
        }
    }
}

impl OracleParams {
    pub fn latency_s(&self, tech: CommTech) -> f64 {
        match tech {
            CommTech::D2d => self.d2d_latency_s,
            CommTech::Cellular => self.cellular_latency_s,
        }
    }

    pub fn bandwidth_mbps(&self, tech: CommTech) -> f64 {
        match tech {
            CommTech::D2d => self.d2d_bandwidth_mbps,
            CommTech::Cellular => self.cellular_bandwidth_mbps,
        }
    }
}

/// Finite seconds, or unavailable (a 0%-availability edge never answers).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseTime {
    Finite(f64),
    Unavailable,
}

impl ResponseTime {
    pub fn seconds(self) -> Option<f64> {
        match self {
            ResponseTime::Finite(s) => Some(s),
            ResponseTime::Unavailable => None,
        }
    }

    pub fn is_available(self) -> bool {
        matches!(self, ResponseTime::Finite(_))
    }
}

/// Haversine great-circle distance in meters.
pub fn geo_distance(lat_a: f64, lon_a: f64, lat_b: f64, lon_b: f64) -> f64 {
    const EARTH_RADIUS_M: f64 = 6_371_000.0;
    let (phi_a, phi_b) = (lat_a.to_radians(), lat_b.to_radians());
    let d_phi = (lat_b - lat_a).to_radians();
    let d_lambda = (lon_b - lon_a).to_radians();
    let h = (d_phi / 2.0).sin().powi(2) + phi_a.cos() * phi_b.cos() * (d_lambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// D2D below the radius, cellular at or beyond it.
pub fn comm_technology(distance_m: f64, d2d_radius_m: f64) -> CommTech {
    if distance_m < d2d_radius_m {
        CommTech::D2d
    } else {
        CommTech::Cellular
    }
}

fn rt_formula(
    tech: CommTech,
    message_size_mb: f64,
    instruction_count_mi: f64,
    cpi: f64,
    clock_rate_ghz: f64,
    availability_pct: f64,
    params: &OracleParams,
) -> ResponseTime {
    if availability_pct <= 0.0 {
        return ResponseTime::Unavailable;
    }
    let transfer = 2.0 * params.latency_s(tech) + 2.0 * message_size_mb / params.bandwidth_mbps(tech);
    let processing = instruction_count_mi * 1e6 * cpi
        / (clock_rate_ghz * 1e9 * (availability_pct / 100.0));
    ResponseTime::Finite(transfer + processing)
}

/// Total response time: two one-way latencies, the message transferred
/// both ways, and processing at the edge's availability-scaled clock.
pub fn response_time(
    requester: &Device,
    task: &TaskRequest,
    edge: &Device,
    params: &OracleParams,
) -> Result<ResponseTime, OracleError> {
    if task.requester_id != requester.id {
        return Err(OracleError::MismatchedRequest {
            task: task.requester_id,
            device: requester.id,
        });
    }
    let distance =
        geo_distance(requester.latitude, requester.longitude, edge.latitude, edge.longitude);
    let tech = comm_technology(distance, params.d2d_radius_m);
    Ok(rt_formula(
        tech,
        task.message_size_mb,
        task.instruction_count_mi,
        edge.cpi,
        edge.clock_rate_ghz,
        edge.availability_pct,
        params,
    ))
}

/// One simulated sharing experience: a self-contained feature snapshot
/// of the (requester, edge, task) triple plus the observed outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharingExperience {
    pub requester_id: u32,
    pub edge_id: u32,
    pub req_type: DeviceType,
    pub req_latitude: f64,
    pub req_longitude: f64,
    pub instruction_count_mi: f64,
    pub message_size_mb: f64,
    pub edge_type: DeviceType,
    pub edge_mode: Mode,
    pub edge_mobility: Mobility,
    pub edge_latitude: f64,
    pub edge_longitude: f64,
    pub cpi: f64,
    pub clock_rate_ghz: f64,
    pub ram_gb: f64,
    pub cores: u32,
    pub availability_pct: f64,
    pub tech: CommTech,
    pub observed_rt: ResponseTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperienceMode {
    /// Message size fixed per requester, availability fixed per edge.
    Static,
    /// Message size and availability resampled per experience.
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperienceParams {
    pub n: usize,
    pub mode: ExperienceMode,
    pub ic_range_mi: (f64, f64),
    pub m_range_mb: (f64, f64),
    /// Static mode draws message sizes from this step grid.
    pub m_catalog_step_mb: f64,
    /// Dynamic mode resamples availability in this range for computing
    /// edges; 0%-availability devices stay unavailable.
    pub dynamic_avail_range_pct: (f64, f64),
    pub oracle: OracleParams,
}

impl Default for ExperienceParams {
    fn default() -> Self {
        ExperienceParams {
            n: 10_000,
            mode: ExperienceMode::Dynamic,
            ic_range_mi: (10.0, 200.0),
            m_range_mb: (0.5, 5.0),
            m_catalog_step_mb: 0.5,
            dynamic_avail_range_pct: (50.0, 100.0),
            oracle: OracleParams::default(),
        }
    }
}

/// Simulates `params.n` sharing experiences over uniformly sampled
/// (requester, edge) pairs. Unavailable outcomes are kept and flagged.
/// Each experience index draws from its own `(seed, index)` substream,
/// so the output is order-independent and deterministic.
pub fn generate_experiences(
    devices: &[Device],
    params: &ExperienceParams,
    seed: u64,
) -> Result<Vec<SharingExperience>, OracleError> {
    if params.n < 1 {
        return Err(OracleError::InvalidParams("n must be >= 1".into()));
    }
    if devices.len() < 2 || !devices.iter().any(|d| d.availability_pct > 0.0) {
        return Err(OracleError::InsufficientDevices);
    }
    if params.ic_range_mi.0 <= 0.0 || params.ic_range_mi.0 >= params.ic_range_mi.1 {
        return Err(OracleError::InvalidParams("bad instruction-count range".into()));
    }
    if params.m_range_mb.0 <= 0.0 || params.m_range_mb.0 >= params.m_range_mb.1 {
        return Err(OracleError::InvalidParams("bad message-size range".into()));
    }

    // Per-device static message sizes, on a half-megabit style grid.
    let m_catalog: Vec<f64> = {
        let mut grid = Vec::new();
        let mut m = params.m_range_mb.0;
        while m <= params.m_range_mb.1 + 1e-9 {
            grid.push(m);
            m += params.m_catalog_step_mb;
        }
        grid
    };
    let mut static_rng = stream_rng(seed, 4);
    let static_m: Vec<f64> = devices
        .iter()
        .map(|_| m_catalog[static_rng.gen_range(0..m_catalog.len())])
        .collect();

    let mut out = Vec::with_capacity(params.n);
    for index in 0..params.n {
        let mut rng = stream_rng(seed, 1000 + index as u64);
        let req_i = rng.gen_range(0..devices.len());
        let mut edge_i = rng.gen_range(0..devices.len());
        while edge_i == req_i {
            edge_i = rng.gen_range(0..devices.len());
        }
        let requester = &devices[req_i];
        let edge = &devices[edge_i];

        let ic = rng.gen_range(params.ic_range_mi.0..params.ic_range_mi.1);
        let (m, avail) = match params.mode {
            ExperienceMode::Static => (static_m[req_i], edge.availability_pct),
            ExperienceMode::Dynamic => {
                let m = rng.gen_range(params.m_range_mb.0..params.m_range_mb.1);
                let avail = if edge.availability_pct > 0.0 {
                    rng.gen_range(
                        params.dynamic_avail_range_pct.0..params.dynamic_avail_range_pct.1,
                    )
                } else {
                    0.0
                };
                (m, avail)
            }
        };

        let distance = geo_distance(
            requester.latitude,
            requester.longitude,
            edge.latitude,
            edge.longitude,
        );
        let tech = comm_technology(distance, params.oracle.d2d_radius_m);
        let rt = rt_formula(tech, m, ic, edge.cpi, edge.clock_rate_ghz, avail, &params.oracle);

        out.push(SharingExperience {
            requester_id: requester.id,
            edge_id: edge.id,
            req_type: requester.device_type,
            req_latitude: requester.latitude,
            req_longitude: requester.longitude,
            instruction_count_mi: ic,
            message_size_mb: m,
            edge_type: edge.device_type,
            edge_mode: edge.mode,
            edge_mobility: edge.mobility,
            edge_latitude: edge.latitude,
            edge_longitude: edge.longitude,
            cpi: edge.cpi,
            clock_rate_ghz: edge.clock_rate_ghz,
            ram_gb: edge.ram_gb,
            cores: edge.cores,
            availability_pct: avail,
            tech,
            observed_rt: rt,
        });
    }
    Ok(out)
}

/// Experience export row: `observed_rt_s` is empty for unavailable
/// outcomes and `available` flags whether the edge answered.
#[derive(Debug, Serialize, Deserialize)]
struct ExperienceRow {
    requester_id: u32,
    edge_id: u32,
    req_type: DeviceType,
    req_latitude: f64,
    req_longitude: f64,
    instruction_count_mi: f64,
    message_size_mb: f64,
    edge_type: DeviceType,
    edge_mode: Mode,
    edge_mobility: Mobility,
    edge_latitude: f64,
    edge_longitude: f64,
    cpi: f64,
    clock_rate_ghz: f64,
    ram_gb: f64,
    cores: u32,
    availability_pct: f64,
    tech: CommTech,
    observed_rt_s: Option<f64>,
    available: bool,
}

pub fn save_experiences(
    path: impl AsRef<std::path::Path>,
    experiences: &[SharingExperience],
) -> Result<(), csv::Error> {
    let mut writer = csv::Writer::from_path(path.as_ref())?;
    for e in experiences {
        writer.serialize(ExperienceRow {
            requester_id: e.requester_id,
            edge_id: e.edge_id,
            req_type: e.req_type,
            req_latitude: e.req_latitude,
            req_longitude: e.req_longitude,
            instruction_count_mi: e.instruction_count_mi,
            message_size_mb: e.message_size_mb,
            edge_type: e.edge_type,
            edge_mode: e.edge_mode,
            edge_mobility: e.edge_mobility,
            edge_latitude: e.edge_latitude,
            edge_longitude: e.edge_longitude,
            cpi: e.cpi,
            clock_rate_ghz: e.clock_rate_ghz,
            ram_gb: e.ram_gb,
            cores: e.cores,
            availability_pct: e.availability_pct,
            tech: e.tech,
            observed_rt_s: e.observed_rt.seconds(),
            available: e.observed_rt.is_available(),
        })?;
    }
    writer.flush()?;
    Ok(())
}

pub fn load_experiences(
    path: impl AsRef<std::path::Path>,
) -> Result<Vec<SharingExperience>, csv::Error> {
    let mut reader = csv::Reader::from_path(path.as_ref())?;
    let mut out = Vec::new();
    for row in reader.deserialize::<ExperienceRow>() {
        let r = row?;
        out.push(SharingExperience {
            requester_id: r.requester_id,
            edge_id: r.edge_id,
            req_type: r.req_type,
            req_latitude: r.req_latitude,
            req_longitude: r.req_longitude,
            instruction_count_mi: r.instruction_count_mi,
            message_size_mb: r.message_size_mb,
            edge_type: r.edge_type,
            edge_mode: r.edge_mode,
            edge_mobility: r.edge_mobility,
            edge_latitude: r.edge_latitude,
            edge_longitude: r.edge_longitude,
            cpi: r.cpi,
            clock_rate_ghz: r.clock_rate_ghz,
            ram_gb: r.ram_gb,
            cores: r.cores,
            availability_pct: r.availability_pct,
            tech: r.tech,
            observed_rt: match r.observed_rt_s {
                Some(s) => ResponseTime::Finite(s),
                None => ResponseTime::Unavailable,
            },
        });
    }
    Ok(out)
}
