//! Matching phase: take the requester's trusted candidate set, drop
//! unavailable devices, predict every remaining candidate's response
//! time, and pick the argmin (ties to the lowest device id).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::community::{candidate_set, CandidateMode, CommunityAssignment, CommunityError};
use crate::dataset::{DatasetBundle, Device, TaskRequest};
use crate::learner::{FeatureInput, LearnerError, TrainedModel};
use crate::oracle::{comm_technology, geo_distance, response_time, OracleError, OracleParams};
use crate::social::{RelationKind, SocialGraph};

#[derive(Debug, Error)]
pub enum AllocatorError {
    #[error("requester {0} not in the device set")]
    UnknownRequester(u32),
    #[error("no candidates for requester {0}")]
    NoCandidates(u32),
    #[error("no available candidates for requester {0} (all at 0% availability)")]
    NoAvailableCandidates(u32),
    #[error(transparent)]
    Community(#[from] CommunityError),
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Anything that can score a (requester, task, edge) triple in seconds.
pub trait RtPredictor {
    fn predict_rt_s(
        &self,
        requester: &Device,
        task: &TaskRequest,
        edge: &Device,
    ) -> Result<f64, AllocatorError>;
}

/// The ground-truth formula itself; Unavailable maps to +inf so it can
/// never win the argmin.
pub struct OraclePredictor {
    pub params: OracleParams,
}

impl RtPredictor for OraclePredictor {
    fn predict_rt_s(
        &self,
        requester: &Device,
        task: &TaskRequest,
        edge: &Device,
    ) -> Result<f64, AllocatorError> {
        let rt = response_time(requester, task, edge, &self.params)?;
        Ok(rt.seconds().unwrap_or(f64::INFINITY))
    }
}

/// A trained regression model plus the oracle parameters it needs to
/// derive the communication-technology feature.
pub struct ModelPredictor<'a> {
    pub model: &'a TrainedModel,
    pub oracle: OracleParams,
}

/// Allocation-time feature row, mirroring the training snapshot.
pub fn feature_input(
    requester: &Device,
    task: &TaskRequest,
    edge: &Device,
    params: &OracleParams,
) -> FeatureInput {
    let distance =
        geo_distance(requester.latitude, requester.longitude, edge.latitude, edge.longitude);
    let tech = comm_technology(distance, params.d2d_radius_m);
    FeatureInput {
        numerics: [
            requester.latitude,
            requester.longitude,
            task.instruction_count_mi,
            task.message_size_mb,
            edge.latitude,
            edge.longitude,
            edge.cpi,
            edge.clock_rate_ghz,
            edge.ram_gb,
            edge.cores as f64,
            edge.availability_pct,
        ],
        categoricals: [
            requester.device_type.as_str().to_string(),
            edge.device_type.as_str().to_string(),
            edge.mode.to_string(),
            edge.mobility.to_string(),
            tech.to_string(),
        ],
    }
}

impl RtPredictor for ModelPredictor<'_> {
    fn predict_rt_s(
        &self,
        requester: &Device,
        task: &TaskRequest,
        edge: &Device,
    ) -> Result<f64, AllocatorError> {
        let input = feature_input(requester, task, edge, &self.oracle);
        let row = self.model.schema.encode(&input)?;
        Ok(self.model.predict_seconds(&row))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationPolicy {
    pub mode: CandidateMode,
    pub fallback_to_union: bool,
}

impl Default for AllocationPolicy {
    fn default() -> Self {
        AllocationPolicy { mode: CandidateMode::Intersection, fallback_to_union: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    pub edge_id: u32,
    pub predicted_rt_s: f64,
    /// Candidate-set size before the availability filter.
    pub candidate_count: usize,
    pub filtered_count: usize,
    /// Social weights linking requester and chosen edge, per relation
    /// graph that actually has the edge.
    pub relation_weights: BTreeMap<RelationKind, f64>,
    pub mode_used: CandidateMode,
}

impl AllocationResult {
    /// Fixed-width single-line rendering for human logs.
    pub fn table_row(&self) -> String {
        let sfor = self
            .relation_weights
            .get(&RelationKind::Sfor)
            .map_or("-".to_string(), |w| format!("{w:.2}"));
        let sor = self
            .relation_weights
            .get(&RelationKind::Sor)
            .map_or("-".to_string(), |w| format!("{w:.2}"));
        format!(
            "{:>8} {:>12.4} {:>10} {:>10} {:>6} {:>6}",
            self.edge_id, self.predicted_rt_s, self.candidate_count, self.filtered_count, sfor, sor
        )
    }
}

/// Ascending (device id, predicted RT) over the available candidates;
/// ties ordered by id. The first element is the allocation choice.
pub fn rank_candidates(
    request: &TaskRequest,
    devices: &[Device],
    candidates: &BTreeSet<u32>,
    predictor: &dyn RtPredictor,
) -> Result<Vec<(u32, f64)>, AllocatorError> {
    let by_id: BTreeMap<u32, &Device> = devices.iter().map(|d| (d.id, d)).collect();
    let requester =
        *by_id.get(&request.requester_id).ok_or(AllocatorError::UnknownRequester(request.requester_id))?;
    let mut ranked = Vec::new();
    for id in candidates {
        let edge = match by_id.get(id) {
            Some(d) if d.availability_pct > 0.0 => *d,
            _ => continue,
        };
        ranked.push((*id, predictor.predict_rt_s(requester, request, edge)?));
    }
    ranked.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite RT").then(a.0.cmp(&b.0)));
    Ok(ranked)
}

pub fn allocate(
    request: &TaskRequest,
    bundle: &DatasetBundle,
    assignments: &[&CommunityAssignment],
    graphs: &[&SocialGraph],
    predictor: &dyn RtPredictor,
    policy: AllocationPolicy,
) -> Result<AllocationResult, AllocatorError> {
    if !bundle.devices.iter().any(|d| d.id == request.requester_id) {
        return Err(AllocatorError::UnknownRequester(request.requester_id));
    }
    let candidates = match candidate_set(request.requester_id, assignments, policy.mode) {
        Ok(set) => set,
        Err(CommunityError::NoCandidates(_))
            if policy.fallback_to_union && policy.mode == CandidateMode::Intersection =>
        {
            match candidate_set(request.requester_id, assignments, CandidateMode::Union) {
                Ok(set) => set,
                Err(CommunityError::NoCandidates(id)) => {
                    return Err(AllocatorError::NoCandidates(id))
                }
                Err(e) => return Err(e.into()),
            }
        }
        Err(CommunityError::NoCandidates(id)) => return Err(AllocatorError::NoCandidates(id)),
        Err(e) => return Err(e.into()),
    };

    let ranked = rank_candidates(request, &bundle.devices, &candidates.members, predictor)?;
    let (edge_id, predicted_rt_s) = *ranked
        .first()
        .ok_or(AllocatorError::NoAvailableCandidates(request.requester_id))?;

    let mut relation_weights = BTreeMap::new();
    for graph in graphs {
        if let Some(w) = graph.weight(request.requester_id, edge_id) {
            relation_weights.insert(graph.kind, w);
        }
    }
    Ok(AllocationResult {
        edge_id,
        predicted_rt_s,
        candidate_count: candidates.members.len(),
        filtered_count: ranked.len(),
        relation_weights,
        mode_used: candidates.mode,
    })
}
