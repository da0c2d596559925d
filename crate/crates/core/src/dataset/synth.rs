//! Synthetic dataset generation: Watts-Strogatz owner network, device
//! tables with per-type hardware catalogs, and meeting logs from a
//! coarse hourly mobility simulation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::rng::stream_rng;

use super::{DatasetError, Device, DeviceType, MeetingEvent, Mobility, Mode, OwnerNetwork};

/// Latitude/longitude bounds for device placement.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GeoBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl Default for GeoBox {
    // Roughly the Santander urban area.
    fn default() -> Self {
        GeoBox { lat_min: 43.44, lat_max: 43.48, lon_min: -3.86, lon_max: -3.78 }
    }
}

impl GeoBox {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.lat_min >= self.lat_max || self.lon_min >= self.lon_max {
            return Err(DatasetError::InvalidParams("degenerate geo box".into()));
        }
        if self.lat_min < -90.0 || self.lat_max > 90.0 || self.lon_min < -180.0 || self.lon_max > 180.0 {
            return Err(DatasetError::InvalidParams("geo box outside valid coordinates".into()));
        }
        Ok(())
    }
}

/// Watts-Strogatz small-world graph: ring lattice of even degree `k`,
/// each lattice edge rewired with probability `beta`. Edge count is
/// always `n_owners * k / 2`.
pub fn generate_owner_network(
    n_owners: u32,
    k: u32,
    beta: f64,
    seed: u64,
) -> Result<OwnerNetwork, DatasetError> {
    if k < 2 || k % 2 != 0 || n_owners <= k {
        return Err(DatasetError::InvalidParams(format!(
            "watts-strogatz needs n > k >= 2 with k even, got n={n_owners} k={k}"
        )));
    }
    if !(0.0..=1.0).contains(&beta) {
        return Err(DatasetError::InvalidParams(format!("beta must be in [0,1], got {beta}")));
    }

    let n = n_owners;
    let mut network = OwnerNetwork::new(n);
    for i in 0..n {
        for j in 1..=(k / 2) {
            network.add_edge(i, (i + j) % n);
        }
    }

    let mut rng = stream_rng(seed, 0);
    for j in 1..=(k / 2) {
        for i in 0..n {
            if !rng.gen_bool(beta) {
                continue;
            }
            let old = (i + j) % n;
            // A node adjacent to everyone has nowhere to rewire to.
            let candidates: Vec<u32> =
                (0..n).filter(|&w| w != i && !network.has_edge(i, w)).collect();
            if candidates.is_empty() {
                continue;
            }
            let new = *candidates.choose(&mut rng).expect("non-empty");
            network.remove_edge(i, old);
            network.add_edge(i, new);
        }
    }
    debug_assert_eq!(network.edge_count(), (n as usize * k as usize) / 2);
    Ok(network)
}

struct TypeProfile {
    device_type: DeviceType,
    weight: f64,
    clock_catalog: &'static [f64],
    ram_range: (f64, f64),
    cpi: f64,
    cores: &'static [u32],
    mobility: Mobility,
}

// Per-type hardware catalogs. Clock rates and availabilities come from
// small discrete catalogs; RAM is drawn uniformly from the type's range.
const TYPE_PROFILES: [TypeProfile; 13] = [
    TypeProfile { device_type: DeviceType::Smartphone, weight: 0.25, clock_catalog: &[1.0, 1.4, 1.8, 2.2, 2.6], ram_range: (2.0, 8.0), cpi: 12.0, cores: &[4, 8], mobility: Mobility::Mobile },
    TypeProfile { device_type: DeviceType::Pc, weight: 0.14, clock_catalog: &[2.0, 2.4, 2.8, 3.2, 3.6, 4.0], ram_range: (8.0, 32.0), cpi: 8.0, cores: &[4, 6, 8], mobility: Mobility::Static },
    TypeProfile { device_type: DeviceType::Tablet, weight: 0.10, clock_catalog: &[1.0, 1.4, 1.8, 2.2, 2.6], ram_range: (2.0, 8.0), cpi: 12.0, cores: &[4, 8], mobility: Mobility::Mobile },
    TypeProfile { device_type: DeviceType::Smartwatch, weight: 0.06, clock_catalog: &[1.0, 1.2, 1.5], ram_range: (0.5, 2.0), cpi: 16.0, cores: &[1, 2], mobility: Mobility::Mobile },
    TypeProfile { device_type: DeviceType::Car, weight: 0.10, clock_catalog: &[1.0, 1.2, 1.4, 1.6], ram_range: (2.0, 4.0), cpi: 14.0, cores: &[2, 4], mobility: Mobility::Mobile },
    TypeProfile { device_type: DeviceType::Transportation, weight: 0.06, clock_catalog: &[1.0, 1.2, 1.4, 1.6], ram_range: (2.0, 4.0), cpi: 14.0, cores: &[2, 4], mobility: Mobility::Mobile },
    TypeProfile { device_type: DeviceType::HomeSensor, weight: 0.08, clock_catalog: &[0.1, 0.2, 0.3, 0.5], ram_range: (0.1, 0.5), cpi: 20.0, cores: &[1], mobility: Mobility::Static },
    TypeProfile { device_type: DeviceType::Printer, weight: 0.03, clock_catalog: &[0.1, 0.2, 0.3, 0.5], ram_range: (0.1, 0.5), cpi: 20.0, cores: &[1], mobility: Mobility::Static },
    TypeProfile { device_type: DeviceType::SmartFitness, weight: 0.03, clock_catalog: &[0.1, 0.2, 0.3, 0.5], ram_range: (0.1, 0.5), cpi: 20.0, cores: &[1], mobility: Mobility::Mobile },
    TypeProfile { device_type: DeviceType::Indicator, weight: 0.03, clock_catalog: &[0.1, 0.2, 0.3, 0.5], ram_range: (0.1, 0.5), cpi: 20.0, cores: &[1], mobility: Mobility::Static },
    TypeProfile { device_type: DeviceType::Alarm, weight: 0.03, clock_catalog: &[0.1, 0.2, 0.3, 0.5], ram_range: (0.1, 0.5), cpi: 20.0, cores: &[1], mobility: Mobility::Static },
    TypeProfile { device_type: DeviceType::StreetLight, weight: 0.04, clock_catalog: &[0.1, 0.2, 0.3, 0.5], ram_range: (0.1, 0.5), cpi: 20.0, cores: &[1], mobility: Mobility::Static },
    TypeProfile { device_type: DeviceType::Parking, weight: 0.05, clock_catalog: &[0.1, 0.2, 0.3, 0.5], ram_range: (0.1, 0.5), cpi: 20.0, cores: &[1], mobility: Mobility::Static },
];

const AVAILABILITY_CATALOG: [f64; 6] = [50.0, 60.0, 70.0, 80.0, 90.0, 100.0];
const BRANDS: [&str; 5] = ["acme", "globex", "initech", "vandelay", "wayne"];
const CPU_MANUFACTURERS: [&str; 4] = ["arm", "intel", "amd", "qualcomm"];

fn pick_type(rng: &mut impl Rng) -> &'static TypeProfile {
    let total: f64 = TYPE_PROFILES.iter().map(|p| p.weight).sum();
    let mut x = rng.gen_range(0.0..total);
    for profile in &TYPE_PROFILES {
        if x < profile.weight {
            return profile;
        }
        x -= profile.weight;
    }
    TYPE_PROFILES.last().unwrap()
}

/// Owner sizes drawn from a capped geometric distribution (p = 0.5,
/// at most 8 devices per owner), then nudged so they sum to `n`.
fn owner_sizes(n: usize, n_owners: usize, rng: &mut impl Rng) -> Vec<usize> {
    const CAP: usize = 8;
    let mut sizes: Vec<usize> = (0..n_owners)
        .map(|_| {
            let mut s = 1;
            while s < CAP && rng.gen_bool(0.5) {
                s += 1;
            }
            s
        })
        .collect();
    let mut total: usize = sizes.iter().sum();
    while total < n {
        let i = rng.gen_range(0..n_owners);
        if sizes[i] < CAP {
            sizes[i] += 1;
            total += 1;
        }
    }
    while total > n {
        let i = rng.gen_range(0..n_owners);
        if sizes[i] > 0 {
            sizes[i] -= 1;
            total -= 1;
        }
    }
    sizes
}

pub fn generate_synthetic_devices(
    n: usize,
    n_owners: usize,
    geo_box: GeoBox,
    seed: u64,
) -> Result<Vec<Device>, DatasetError> {
    if n == 0 || n_owners == 0 {
        return Err(DatasetError::InvalidParams(
            "need at least one device and one owner".into(),
        ));
    }
    if n > n_owners * 8 {
        return Err(DatasetError::InvalidParams(format!(
            "{n_owners} owners cannot hold {n} devices at 8 devices/owner"
        )));
    }
    geo_box.validate()?;

    let mut rng = stream_rng(seed, 1);
    let sizes = owner_sizes(n, n_owners, &mut rng);
    let mut owner_of = Vec::with_capacity(n);
    for (owner, &size) in sizes.iter().enumerate() {
        for _ in 0..size {
            owner_of.push(owner as u32);
        }
    }

    let mut devices = Vec::with_capacity(n);
    for (i, &owner_id) in owner_of.iter().enumerate() {
        let profile = pick_type(&mut rng);
        let computing = profile.device_type.is_computing();
        devices.push(Device {
            id: i as u32,
            owner_id,
            device_type: profile.device_type,
            latitude: rng.gen_range(geo_box.lat_min..geo_box.lat_max),
            longitude: rng.gen_range(geo_box.lon_min..geo_box.lon_max),
            mobility: profile.mobility,
            mode: if rng.gen_bool(0.5) { Mode::Public } else { Mode::Private },
            brand: BRANDS.choose(&mut rng).unwrap().to_string(),
            cpu_manufacturer: CPU_MANUFACTURERS.choose(&mut rng).unwrap().to_string(),
            cores: *profile.cores.choose(&mut rng).unwrap(),
            cpi: profile.cpi,
            clock_rate_ghz: *profile.clock_catalog.choose(&mut rng).unwrap(),
            ram_gb: rng.gen_range(profile.ram_range.0..profile.ram_range.1),
            availability_pct: if computing {
                *AVAILABILITY_CATALOG.choose(&mut rng).unwrap()
            } else {
                0.0
            },
        });
    }
    Ok(devices)
}

const STEP_S: f64 = 3600.0;
const STEP_MIN: f64 = 60.0;
const CONTACT_RADIUS_M: f64 = 100.0;
const WALK_SPEED_M_S: f64 = 1.4;

fn step_distance_m(a: (f64, f64), b: (f64, f64)) -> f64 {
    crate::oracle::geo_distance(a.0, a.1, b.0, b.1)
}

/// Hourly mobility simulation over `days`. Static devices stay put; mobile
/// devices follow a random waypoint walk inside the devices' bounding box.
/// Static-static pairs in range emit one meeting per sampled hour; pairs
/// involving a mobile device emit one meeting per contiguous in-range run.
pub fn generate_meetings(
    devices: &[Device],
    days: u32,
    seed: u64,
) -> Result<Vec<MeetingEvent>, DatasetError> {
    if days < 1 {
        return Err(DatasetError::InvalidParams("days must be >= 1".into()));
    }
    if devices.len() < 2 {
        return Ok(Vec::new());
    }

    let lat_min = devices.iter().map(|d| d.latitude).fold(f64::INFINITY, f64::min);
    let lat_max = devices.iter().map(|d| d.latitude).fold(f64::NEG_INFINITY, f64::max);
    let lon_min = devices.iter().map(|d| d.longitude).fold(f64::INFINITY, f64::min);
    let lon_max = devices.iter().map(|d| d.longitude).fold(f64::NEG_INFINITY, f64::max);

    let mut rng = stream_rng(seed, 2);
    let mut pos: Vec<(f64, f64)> = devices.iter().map(|d| (d.latitude, d.longitude)).collect();
    let mut waypoint: Vec<(f64, f64)> = pos.clone();

    let steps = days as usize * 24;
    let id_index: BTreeMap<u32, usize> =
        devices.iter().enumerate().map(|(i, d)| (d.id, i)).collect();
    let mut meetings = Vec::new();
    // (a, b) -> start step of the current in-range run, mobile pairs only.
    let mut open_runs: BTreeMap<(u32, u32), usize> = BTreeMap::new();

    // Grid cell size of one contact radius in degrees.
    let mid_lat = (lat_min + lat_max) / 2.0;
    let cell_lat = CONTACT_RADIUS_M / 111_320.0;
    let cell_lon = CONTACT_RADIUS_M / (111_320.0 * mid_lat.to_radians().cos().max(1e-6));

    for step in 0..steps {
        // Move mobile devices toward their waypoints.
        for (i, d) in devices.iter().enumerate() {
            if d.mobility != Mobility::Mobile {
                continue;
            }
            let dist = step_distance_m(pos[i], waypoint[i]);
            let reach = WALK_SPEED_M_S * STEP_S;
            if dist <= reach {
                pos[i] = waypoint[i];
                waypoint[i] = (
                    rng.gen_range(lat_min..=lat_max),
                    rng.gen_range(lon_min..=lon_max),
                );
            } else {
                let frac = reach / dist;
                pos[i] = (
                    pos[i].0 + (waypoint[i].0 - pos[i].0) * frac,
                    pos[i].1 + (waypoint[i].1 - pos[i].1) * frac,
                );
            }
        }

        // Spatial hash so only nearby pairs are tested.
        let mut grid: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
        for (i, p) in pos.iter().enumerate() {
            let key = ((p.0 / cell_lat).floor() as i64, (p.1 / cell_lon).floor() as i64);
            grid.entry(key).or_default().push(i);
        }

        let mut in_range: Vec<(u32, u32)> = Vec::new();
        for (&(cx, cy), members) in &grid {
            for dx in 0..=1i64 {
                for dy in -1..=1i64 {
                    if dx == 0 && dy < 0 {
                        continue;
                    }
                    let other = match grid.get(&(cx + dx, cy + dy)) {
                        Some(v) => v,
                        None => continue,
                    };
                    for &i in members {
                        for &j in other {
                            if (dx == 0 && dy == 0 && j <= i) || i == j {
                                continue;
                            }
                            if step_distance_m(pos[i], pos[j]) < CONTACT_RADIUS_M {
                                let (a, b) = (devices[i].id.min(devices[j].id), devices[i].id.max(devices[j].id));
                                in_range.push((a, b));
                            }
                        }
                    }
                }
            }
        }
        in_range.sort_unstable();
        in_range.dedup();

        let mut still_open: BTreeMap<(u32, u32), usize> = BTreeMap::new();
        for (a, b) in in_range {
            let both_static = devices[id_index[&a]].mobility == Mobility::Static
                && devices[id_index[&b]].mobility == Mobility::Static;
            if both_static {
                meetings.push(MeetingEvent {
                    device_a: a,
                    device_b: b,
                    start_time_s: step as f64 * STEP_S,
                    duration_min: STEP_MIN,
                });
            } else {
                let start = open_runs.remove(&(a, b)).unwrap_or(step);
                still_open.insert((a, b), start);
            }
        }
        // Runs that did not continue this step are closed and emitted.
        for ((a, b), start) in std::mem::take(&mut open_runs) {
            meetings.push(MeetingEvent {
                device_a: a,
                device_b: b,
                start_time_s: start as f64 * STEP_S,
                duration_min: (step - start) as f64 * STEP_MIN,
            });
        }
        open_runs = still_open;
    }
    for ((a, b), start) in open_runs {
        meetings.push(MeetingEvent {
            device_a: a,
            device_b: b,
            start_time_s: start as f64 * STEP_S,
            duration_min: (steps - start) as f64 * STEP_MIN,
        });
    }
    meetings.sort_by(|x, y| {
        (x.start_time_s, x.device_a, x.device_b)
            .partial_cmp(&(y.start_time_s, y.device_a, y.device_b))
            .unwrap()
    });
    Ok(meetings)
}
