//! Louvain modularity maximization over relation graphs and the
//! candidate-set computation that shrinks the edge-computer search
//! space to the requester's communities.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::stream_rng;
use crate::social::{RelationKind, SocialGraph};

/// Minimum modularity gain to keep iterating.
pub const MODULARITY_TOL: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum CommunityError {
    #[error("graph has no edges")]
    EmptyGraph,
    #[error("labels do not cover node {0}")]
    MissingLabel(u32),
    #[error("requester {0} has no candidates")]
    NoCandidates(u32),
    #[error("no community assignments supplied")]
    NoAssignments,
}

/// Partition of device ids into community labels for one relation graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityAssignment {
    pub kind: RelationKind,
    pub labels: BTreeMap<u32, u32>,
    pub modularity: f64,
}

impl CommunityAssignment {
    /// Devices sharing the given device's community, including itself.
    pub fn community_of(&self, device: u32) -> Option<BTreeSet<u32>> {
        let label = *self.labels.get(&device)?;
        Some(
            self.labels
                .iter()
                .filter(|(_, &l)| l == label)
                .map(|(&id, _)| id)
                .collect(),
        )
    }

    pub fn community_sizes(&self) -> BTreeMap<u32, usize> {
        let mut sizes = BTreeMap::new();
        for &label in self.labels.values() {
            *sizes.entry(label).or_insert(0) += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateMode {
    Intersection,
    Union,
}

/// The requester's trusted search space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub requester_id: u32,
    pub members: BTreeSet<u32>,
    pub mode: CandidateMode,
}

/// Weighted modularity Q of a partition:
/// Q = sum_c [ S_in(c)/m2 - (S_tot(c)/m2)^2 ] with m2 twice the total
/// edge weight, S_in(c) twice the internal weight, S_tot(c) the summed
/// degree of community c.
pub fn modularity(
    graph: &SocialGraph,
    labels: &BTreeMap<u32, u32>,
) -> Result<f64, CommunityError> {
    let m = graph.total_weight();
    if m <= 0.0 {
        return Err(CommunityError::EmptyGraph);
    }
    for node in graph.nodes() {
        if !labels.contains_key(&node) {
            return Err(CommunityError::MissingLabel(node));
        }
    }
    let m2 = 2.0 * m;
    let mut internal: BTreeMap<u32, f64> = BTreeMap::new();
    let mut degree: BTreeMap<u32, f64> = BTreeMap::new();
    for (a, b, w) in graph.edges() {
        *degree.entry(labels[&a]).or_insert(0.0) += w;
        *degree.entry(labels[&b]).or_insert(0.0) += w;
        if labels[&a] == labels[&b] {
            *internal.entry(labels[&a]).or_insert(0.0) += 2.0 * w;
        }
    }
    let mut q = 0.0;
    for (label, &tot) in &degree {
        let inside = internal.get(label).copied().unwrap_or(0.0);
        q += inside / m2 - (tot / m2) * (tot / m2);
    }
    Ok(q)
}

// Working graph for the aggregation levels: index-based adjacency with
// self-loops carrying the collapsed internal weight.
struct LevelGraph {
    adj: Vec<Vec<(usize, f64)>>,
    self_loop: Vec<f64>,
    total_weight: f64,
}

impl LevelGraph {
    fn degree(&self, i: usize) -> f64 {
        self.adj[i].iter().map(|&(_, w)| w).sum::<f64>() + 2.0 * self.self_loop[i]
    }
}

fn one_level(
    graph: &LevelGraph,
    order: &[usize],
) -> (Vec<usize>, bool) {
    let n = graph.adj.len();
    let m = graph.total_weight;
    let mut community: Vec<usize> = (0..n).collect();
    let degrees: Vec<f64> = (0..n).map(|i| graph.degree(i)).collect();
    let mut sigma_tot: Vec<f64> = degrees.clone();
    let mut moved_any = false;

    loop {
        let mut moved = false;
        for &i in order {
            let current = community[i];
            sigma_tot[current] -= degrees[i];

            // Weight from i into each neighboring community.
            let mut k_in: BTreeMap<usize, f64> = BTreeMap::new();
            k_in.insert(current, 0.0);
            for &(j, w) in &graph.adj[i] {
                if j != i {
                    *k_in.entry(community[j]).or_insert(0.0) += w;
                }
            }

            let gain = |c: usize, k: f64| k - sigma_tot[c] * degrees[i] / (2.0 * m);
            let mut best_c = current;
            let mut best_gain = gain(current, k_in[&current]);
            for (&c, &k) in &k_in {
                if c == current {
                    continue;
                }
                let g = gain(c, k);
                if g > best_gain + 1e-12 {
                    best_c = c;
                    best_gain = g;
                } else if (g - best_gain).abs() <= 1e-12 && c < best_c {
                    best_c = c;
                }
            }

            sigma_tot[best_c] += degrees[i];
            community[i] = best_c;
            if best_c != current {
                moved = true;
                moved_any = true;
            }
        }
        if !moved {
            break;
        }
    }
    (community, moved_any)
}

fn aggregate(graph: &LevelGraph, community: &[usize]) -> (LevelGraph, Vec<usize>) {
    // Renumber communities compactly, ordered by smallest member index.
    let mut remap: BTreeMap<usize, usize> = BTreeMap::new();
    for &c in community {
        let next = remap.len();
        remap.entry(c).or_insert(next);
    }
    let k = remap.len();
    let mut self_loop = vec![0.0; k];
    let mut edge_acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (i, neighbors) in graph.adj.iter().enumerate() {
        let ci = remap[&community[i]];
        self_loop[ci] += graph.self_loop[i];
        for &(j, w) in neighbors {
            if j < i {
                continue;
            }
            let cj = remap[&community[j]];
            if ci == cj {
                self_loop[ci] += w;
            } else {
                *edge_acc.entry((ci.min(cj), ci.max(cj))).or_insert(0.0) += w;
            }
        }
    }
    let mut adj = vec![Vec::new(); k];
    let mut total = self_loop.iter().sum::<f64>();
    for ((a, b), w) in edge_acc {
        adj[a].push((b, w));
        adj[b].push((a, w));
        total += w;
    }
    let mapping = community.iter().map(|c| remap[c]).collect();
    (LevelGraph { adj, self_loop, total_weight: total }, mapping)
}

/// Louvain with the per-pass modularity trace (used by property tests).
pub fn louvain_with_passes(
    graph: &SocialGraph,
    seed: u64,
) -> Result<(CommunityAssignment, Vec<f64>), CommunityError> {
    if graph.total_weight() <= 0.0 {
        return Err(CommunityError::EmptyGraph);
    }
    let ids: Vec<u32> = graph.nodes().collect();
    let index: BTreeMap<u32, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut adj = vec![Vec::new(); ids.len()];
    for (a, b, w) in graph.edges() {
        adj[index[&a]].push((index[&b], w));
        adj[index[&b]].push((index[&a], w));
    }
    let mut level = LevelGraph {
        adj,
        self_loop: vec![0.0; ids.len()],
        total_weight: graph.total_weight(),
    };

    // Each original node's community at the current level.
    let mut membership: Vec<usize> = (0..ids.len()).collect();
    let mut passes = Vec::new();
    let mut rng = stream_rng(seed, 3);
    let mut prev_q = f64::NEG_INFINITY;

    loop {
        // Visit order: ascending ids, perturbed by the seed.
        let mut order: Vec<usize> = (0..level.adj.len()).collect();
        order.shuffle(&mut rng);

        let (community, moved) = one_level(&level, &order);
        let (next, mapping) = aggregate(&level, &community);
        for slot in membership.iter_mut() {
            *slot = mapping[*slot];
        }
        let labels: BTreeMap<u32, u32> = ids
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, membership[i] as u32))
            .collect();
        let q = modularity(graph, &labels)?;
        passes.push(q);
        level = next;
        if !moved || q - prev_q < MODULARITY_TOL {
            break;
        }
        prev_q = q;
    }

    // Relabel compactly by smallest member id for a stable public labeling.
    let mut final_labels: BTreeMap<u32, u32> = BTreeMap::new();
    let mut relabel: BTreeMap<usize, u32> = BTreeMap::new();
    for (i, &id) in ids.iter().enumerate() {
        let next = relabel.len() as u32;
        let label = *relabel.entry(membership[i]).or_insert(next);
        final_labels.insert(id, label);
    }
    let q = modularity(graph, &final_labels)?;
    Ok((
        CommunityAssignment { kind: graph.kind, labels: final_labels, modularity: q },
        passes,
    ))
}

/// Louvain community detection; deterministic for a fixed seed.
pub fn louvain(graph: &SocialGraph, seed: u64) -> Result<CommunityAssignment, CommunityError> {
    louvain_with_passes(graph, seed).map(|(assignment, _)| assignment)
}

/// Intersection or union of the requester's per-relation communities,
/// excluding the requester itself. A relation the requester is absent
/// from contributes the empty set (intersection) or nothing (union).
pub fn candidate_set(
    requester: u32,
    assignments: &[&CommunityAssignment],
    mode: CandidateMode,
) -> Result<CandidateSet, CommunityError> {
    if assignments.is_empty() {
        return Err(CommunityError::NoAssignments);
    }
    let mut members: Option<BTreeSet<u32>> = None;
    for assignment in assignments {
        let community = assignment.community_of(requester).unwrap_or_default();
        members = Some(match (members, mode) {
            (None, _) => community,
            (Some(acc), CandidateMode::Intersection) => {
                acc.intersection(&community).copied().collect()
            }
            (Some(acc), CandidateMode::Union) => acc.union(&community).copied().collect(),
        });
    }
    let mut members = members.unwrap_or_default();
    members.remove(&requester);
    if members.is_empty() {
        return Err(CommunityError::NoCandidates(requester));
    }
    Ok(CandidateSet { requester_id: requester, members, mode })
}

/// Community sizes with everything under `min_size` folded into an
/// "others" bucket, for frequency reporting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommunitySizeSummary {
    pub kind: RelationKind,
    /// (label, size) for communities of at least `min_size` devices.
    pub communities: Vec<(u32, usize)>,
    pub others_communities: usize,
    pub others_devices: usize,
    pub min_size: usize,
}

pub fn size_summary(assignment: &CommunityAssignment, min_size: usize) -> CommunitySizeSummary {
    let mut communities = Vec::new();
    let mut others_communities = 0;
    let mut others_devices = 0;
    for (label, size) in assignment.community_sizes() {
        if size >= min_size {
            communities.push((label, size));
        } else {
            others_communities += 1;
            others_devices += size;
        }
    }
    communities.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    CommunitySizeSummary {
        kind: assignment.kind,
        communities,
        others_communities,
        others_devices,
        min_size,
    }
}
