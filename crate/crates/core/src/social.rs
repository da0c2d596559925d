//! The three undirected weighted relation graphs over devices:
//! co-location (CLOR), friendship/ownership (SFOR), and repeated
//! co-presence (SOR). All weights lie in (0, 1] and no graph carries
//! self-loops.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Device, MeetingEvent, OwnerNetwork};
use crate::oracle::geo_distance;

#[derive(Debug, Error)]
pub enum SocialError {
    #[error("unknown owner {0}")]
    UnknownOwner(u32),
    #[error("unknown device {0} in meeting log")]
    UnknownDevice(u32),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationKind {
    Clor,
    Sfor,
    Sor,
}

impl std::fmt::Display for RelationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RelationKind::Clor => "CLOR",
            RelationKind::Sfor => "SFOR",
            RelationKind::Sor => "SOR",
        })
    }
}

/// Undirected weighted graph for one relation kind. Edges are stored
/// once under the ordered id pair, so symmetry holds by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocialGraph {
    pub kind: RelationKind,
    nodes: BTreeSet<u32>,
    edges: BTreeMap<(u32, u32), f64>,
}

impl SocialGraph {
    pub fn new(kind: RelationKind) -> Self {
        SocialGraph { kind, nodes: BTreeSet::new(), edges: BTreeMap::new() }
    }

    pub fn add_node(&mut self, id: u32) {
        self.nodes.insert(id);
    }

    /// Inserts an edge; panics on self-loops or weights outside (0, 1].
    pub fn add_edge(&mut self, a: u32, b: u32, weight: f64) {
        assert!(a != b, "social graphs have no self-loops");
        assert!(weight > 0.0 && weight <= 1.0, "edge weight must be in (0,1]");
        self.nodes.insert(a);
        self.nodes.insert(b);
        self.edges.insert((a.min(b), a.max(b)), weight);
    }

    pub fn weight(&self, a: u32, b: u32) -> Option<f64> {
        self.edges.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn nodes(&self) -> impl Iterator<Item = u32> + '_ {
        self.nodes.iter().copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.edges.iter().map(|(&(a, b), &w)| (a, b, w))
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.values().sum()
    }

    pub fn adjacency(&self) -> BTreeMap<u32, Vec<(u32, f64)>> {
        let mut adj: BTreeMap<u32, Vec<(u32, f64)>> =
            self.nodes.iter().map(|&n| (n, Vec::new())).collect();
        for (&(a, b), &w) in &self.edges {
            adj.get_mut(&a).unwrap().push((b, w));
            adj.get_mut(&b).unwrap().push((a, w));
        }
        adj
    }

    /// Edge-list export: `device_a,device_b,weight` per row.
    pub fn write_edge_csv(&self, path: impl AsRef<Path>) -> Result<(), SocialError> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(file, "device_a,device_b,weight")?;
        for (a, b, w) in self.edges() {
            writeln!(file, "{a},{b},{w}")?;
        }
        file.flush()?;
        Ok(())
    }
}

/// Co-location relation: edge where geo-distance is under `threshold_m`,
/// weight decaying linearly to zero at the threshold.
pub fn build_clor(devices: &[Device], threshold_m: f64) -> Result<SocialGraph, SocialError> {
    if !(threshold_m > 0.0) {
        return Err(SocialError::InvalidParams("threshold_m must be positive".into()));
    }
    let mut graph = SocialGraph::new(RelationKind::Clor);
    for d in devices {
        graph.add_node(d.id);
    }
    for (i, a) in devices.iter().enumerate() {
        for b in &devices[i + 1..] {
            let d = geo_distance(a.latitude, a.longitude, b.latitude, b.longitude);
            if d < threshold_m {
                let w = 1.0 - d / threshold_m;
                if w > 0.0 {
                    graph.add_edge(a.id, b.id, w.min(1.0));
                }
            }
        }
    }
    Ok(graph)
}

/// Friendship/ownership relation: same-owner pairs weigh 1.0; otherwise
/// owners at hop distance `h <= max_hops` give weight `0.5 / h`.
pub fn build_sfor(
    devices: &[Device],
    owners: &OwnerNetwork,
    max_hops: u32,
) -> Result<SocialGraph, SocialError> {
    if max_hops < 1 {
        return Err(SocialError::InvalidParams("max_hops must be >= 1".into()));
    }
    let mut graph = SocialGraph::new(RelationKind::Sfor);
    let mut by_owner: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for d in devices {
        if !owners.contains_owner(d.owner_id) {
            return Err(SocialError::UnknownOwner(d.owner_id));
        }
        by_owner.entry(d.owner_id).or_default().push(d.id);
        graph.add_node(d.id);
    }

    for ids in by_owner.values() {
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                graph.add_edge(a, b, 1.0);
            }
        }
    }

    let adj = owners.adjacency();
    for (&owner, ids) in &by_owner {
        // BFS out to max_hops; only pairs with populated owners matter.
        let mut dist: BTreeMap<u32, u32> = BTreeMap::new();
        dist.insert(owner, 0);
        let mut queue = VecDeque::from([owner]);
        while let Some(o) = queue.pop_front() {
            let h = dist[&o];
            if h == max_hops {
                continue;
            }
            for &next in &adj[o as usize] {
                dist.entry(next).or_insert_with(|| {
                    queue.push_back(next);
                    h + 1
                });
            }
        }
        for (&other, &h) in &dist {
            if other <= owner || h == 0 {
                continue;
            }
            let weight = 0.5 / h as f64;
            if let Some(other_ids) = by_owner.get(&other) {
                for &a in ids {
                    for &b in other_ids {
                        graph.add_edge(a, b, weight);
                    }
                }
            }
        }
    }
    Ok(graph)
}

/// Co-presence relation: an edge once a pair has at least `min_meetings`
/// meetings of `min_duration_min` or longer, weight `min(1, count / (2 *
/// min_meetings))` so the minimum qualifying pair starts at 0.5.
pub fn build_sor(
    devices: &[Device],
    meetings: &[MeetingEvent],
    min_meetings: u32,
    min_duration_min: f64,
) -> Result<SocialGraph, SocialError> {
    if min_meetings < 1 {
        return Err(SocialError::InvalidParams("min_meetings must be >= 1".into()));
    }
    if !(min_duration_min > 0.0) {
        return Err(SocialError::InvalidParams("min_duration_min must be positive".into()));
    }
    let ids: BTreeSet<u32> = devices.iter().map(|d| d.id).collect();
    let mut graph = SocialGraph::new(RelationKind::Sor);
    for &id in &ids {
        graph.add_node(id);
    }
    let mut counts: BTreeMap<(u32, u32), u32> = BTreeMap::new();
    for m in meetings {
        for id in [m.device_a, m.device_b] {
            if !ids.contains(&id) {
                return Err(SocialError::UnknownDevice(id));
            }
        }
        if m.duration_min >= min_duration_min {
            let key = (m.device_a.min(m.device_b), m.device_a.max(m.device_b));
            *counts.entry(key).or_insert(0) += 1;
        }
    }
    for ((a, b), count) in counts {
        if count >= min_meetings {
            let w = (count as f64 / (2.0 * min_meetings as f64)).min(1.0);
            graph.add_edge(a, b, w);
        }
    }
    Ok(graph)
}

/// Shortest hop count between two owners; `None` when disconnected.
pub fn owner_hop_distance(
    owners: &OwnerNetwork,
    a: u32,
    b: u32,
) -> Result<Option<u32>, SocialError> {
    for id in [a, b] {
        if !owners.contains_owner(id) {
            return Err(SocialError::UnknownOwner(id));
        }
    }
    if a == b {
        return Ok(Some(0));
    }
    let adj = owners.adjacency();
    let mut dist: BTreeMap<u32, u32> = BTreeMap::new();
    dist.insert(a, 0);
    let mut queue = VecDeque::from([a]);
    while let Some(o) = queue.pop_front() {
        let h = dist[&o];
        for &next in &adj[o as usize] {
            if next == b {
                return Ok(Some(h + 1));
            }
            dist.entry(next).or_insert_with(|| {
                queue.push_back(next);
                h + 1
            });
        }
    }
    Ok(None)
}
