//! Device/owner/task data model, CSV ingestion, and synthetic dataset
//! generation (devices, owner social network, meeting logs).

mod io;
mod synth;

pub use io::{load_devices, load_meetings, save_devices, save_meetings};
pub use synth::{
    generate_meetings, generate_owner_network, generate_synthetic_devices, GeoBox,
};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("malformed row at line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate device id {0}")]
    DuplicateId(u32),
    #[error("field {field} out of range: {value}")]
    OutOfRange { field: &'static str, value: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unknown owner {0}")]
    UnknownOwner(u32),
    #[error("unknown device {0}")]
    UnknownDevice(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// The 13 device categories of the ingested device tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceType {
    Smartphone,
    Pc,
    Tablet,
    Smartwatch,
    Car,
    Transportation,
    HomeSensor,
    Printer,
    SmartFitness,
    Indicator,
    Alarm,
    StreetLight,
    Parking,
}

impl DeviceType {
    pub const ALL: [DeviceType; 13] = [
        DeviceType::Smartphone,
        DeviceType::Pc,
        DeviceType::Tablet,
        DeviceType::Smartwatch,
        DeviceType::Car,
        DeviceType::Transportation,
        DeviceType::HomeSensor,
        DeviceType::Printer,
        DeviceType::SmartFitness,
        DeviceType::Indicator,
        DeviceType::Alarm,
        DeviceType::StreetLight,
        DeviceType::Parking,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DeviceType::Smartphone => "smartphone",
            DeviceType::Pc => "pc",
            DeviceType::Tablet => "tablet",
            DeviceType::Smartwatch => "smartwatch",
            DeviceType::Car => "car",
            DeviceType::Transportation => "transportation",
            DeviceType::HomeSensor => "home_sensor",
            DeviceType::Printer => "printer",
            DeviceType::SmartFitness => "smart_fitness",
            DeviceType::Indicator => "indicator",
            DeviceType::Alarm => "alarm",
            DeviceType::StreetLight => "street_light",
            DeviceType::Parking => "parking",
        }
    }

    /// Types that can act as edge computers; the rest are pure requesters
    /// with 0% availability.
    pub fn is_computing(self) -> bool {
        matches!(
            self,
            DeviceType::Smartphone
                | DeviceType::Pc
                | DeviceType::Tablet
                | DeviceType::Smartwatch
                | DeviceType::Car
                | DeviceType::Transportation
        )
    }
}

impl std::fmt::Display for DeviceType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mobility {
    Static,
    Mobile,
}

impl std::fmt::Display for Mobility {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mobility::Static => "static",
            Mobility::Mobile => "mobile",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Private,
    Public,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Private => "private",
            Mode::Public => "public",
        })
    }
}

/// One IoT node. Field order matches the device CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub id: u32,
    pub owner_id: u32,
    pub device_type: DeviceType,
    pub latitude: f64,
    pub longitude: f64,
    pub mobility: Mobility,
    pub mode: Mode,
    pub brand: String,
    pub cpu_manufacturer: String,
    pub cores: u32,
    pub cpi: f64,
    pub clock_rate_ghz: f64,
    pub ram_gb: f64,
    pub availability_pct: f64,
}

impl Device {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let range = |field: &'static str, value: f64, lo: f64, hi: f64| {
            if value < lo || value > hi || !value.is_finite() {
                Err(DatasetError::OutOfRange { field, value })
            } else {
                Ok(())
            }
        };
        range("latitude", self.latitude, -90.0, 90.0)?;
        range("longitude", self.longitude, -180.0, 180.0)?;
        range("availability_pct", self.availability_pct, 0.0, 100.0)?;
        if !(self.cpi > 0.0) {
            return Err(DatasetError::OutOfRange { field: "cpi", value: self.cpi });
        }
        if !(self.clock_rate_ghz > 0.0) {
            return Err(DatasetError::OutOfRange {
                field: "clock_rate_ghz",
                value: self.clock_rate_ghz,
            });
        }
        if !(self.ram_gb > 0.0) {
            return Err(DatasetError::OutOfRange { field: "ram_gb", value: self.ram_gb });
        }
        if self.cores < 1 {
            return Err(DatasetError::OutOfRange { field: "cores", value: self.cores as f64 });
        }
        Ok(())
    }
}

/// A task submitted by a requester device: millions of instructions and
/// message size in megabits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskRequest {
    pub requester_id: u32,
    pub instruction_count_mi: f64,
    pub message_size_mb: f64,
}

impl TaskRequest {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if !(self.instruction_count_mi > 0.0) {
            return Err(DatasetError::OutOfRange {
                field: "instruction_count_mi",
                value: self.instruction_count_mi,
            });
        }
        if !(self.message_size_mb > 0.0) {
            return Err(DatasetError::OutOfRange {
                field: "message_size_mb",
                value: self.message_size_mb,
            });
        }
        Ok(())
    }
}

/// Undirected friendship network over owner ids 0..n_owners.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OwnerNetwork {
    pub n_owners: u32,
    edges: BTreeSet<(u32, u32)>,
}

impl OwnerNetwork {
    pub fn new(n_owners: u32) -> Self {
        OwnerNetwork { n_owners, edges: BTreeSet::new() }
    }

    /// Inserts an undirected edge; self-loops are rejected.
    pub fn add_edge(&mut self, a: u32, b: u32) -> bool {
        assert!(a != b, "owner network has no self-loops");
        assert!(a < self.n_owners && b < self.n_owners);
        self.edges.insert((a.min(b), a.max(b)))
    }

    pub fn remove_edge(&mut self, a: u32, b: u32) -> bool {
        self.edges.remove(&(a.min(b), a.max(b)))
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.edges.iter().copied()
    }

    pub fn contains_owner(&self, id: u32) -> bool {
        id < self.n_owners
    }

    pub fn neighbors(&self, id: u32) -> Vec<u32> {
        let mut out = Vec::new();
        for &(a, b) in &self.edges {
            if a == id {
                out.push(b);
            } else if b == id {
                out.push(a);
            }
        }
        out
    }

    /// Adjacency lists for all owners, cheaper than repeated `neighbors`.
    pub fn adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.n_owners as usize];
        for &(a, b) in &self.edges {
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        adj
    }
}

/// One interval during which two devices were within contact range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeetingEvent {
    pub device_a: u32,
    pub device_b: u32,
    pub start_time_s: f64,
    pub duration_min: f64,
}

/// Aggregate root for one experiment: devices, owner network, meeting log.
#[derive(Debug, Clone)]
pub struct DatasetBundle {
    pub devices: Vec<Device>,
    pub owner_network: OwnerNetwork,
    pub meetings: Vec<MeetingEvent>,
}

impl DatasetBundle {
    pub fn validate(&self) -> Result<(), DatasetError> {
        let mut ids = BTreeSet::new();
        for d in &self.devices {
            d.validate()?;
            if !ids.insert(d.id) {
                return Err(DatasetError::DuplicateId(d.id));
            }
            if !self.owner_network.contains_owner(d.owner_id) {
                return Err(DatasetError::UnknownOwner(d.owner_id));
            }
        }
        for m in &self.meetings {
            for id in [m.device_a, m.device_b] {
                if !ids.contains(&id) {
                    return Err(DatasetError::UnknownDevice(id));
                }
            }
            if m.device_a == m.device_b {
                return Err(DatasetError::InvalidParams(format!(
                    "meeting pairs device {} with itself",
                    m.device_a
                )));
            }
            if !(m.duration_min > 0.0) {
                return Err(DatasetError::OutOfRange {
                    field: "duration_min",
                    value: m.duration_min,
                });
            }
        }
        Ok(())
    }
}
