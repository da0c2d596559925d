//! Declarative run configuration (TOML) shared by every subcommand.
//! Every random stage reads a named seed, all derived from one master
//! seed unless pinned individually, so any stage replays on its own.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::community::CandidateMode;
use crate::dataset::GeoBox;
use crate::learner::{DtGrid, GbrGrid, RfGrid};
use crate::oracle::{ExperienceMode, ExperienceParams, OracleParams};
use crate::rng::fnv1a64;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse config {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Per-stage seeds. Absent fields derive from the master seed so one
/// number is enough, but any stage can be pinned independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct Seeds {
    pub master: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub owner_network: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub devices: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meetings: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub communities: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiences: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training: Option<u64>,
}

impl Seeds {
    pub fn from_master(master: u64) -> Self {
        Seeds { master, ..Seeds::default() }
    }

    fn derive(&self, pinned: Option<u64>, offset: u64) -> u64 {
        pinned.unwrap_or(self.master.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(offset))
    }

    pub fn owner_network(&self) -> u64 {
        self.derive(self.owner_network, 1)
    }
    pub fn devices(&self) -> u64 {
        self.derive(self.devices, 2)
    }
    pub fn meetings(&self) -> u64 {
        self.derive(self.meetings, 3)
    }
    pub fn communities(&self) -> u64 {
        self.derive(self.communities, 4)
    }
    pub fn experiences(&self) -> u64 {
        self.derive(self.experiences, 5)
    }
    pub fn split(&self) -> u64 {
        self.derive(self.split, 6)
    }
    pub fn training(&self) -> u64 {
        self.derive(self.training, 7)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub out_dir: PathBuf,
    /// Optional pre-existing device table; absent means synthesize.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub devices: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub meetings: Option<PathBuf>,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig { out_dir: PathBuf::from("out"), devices: None, meetings: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub n_devices: usize,
    pub n_owners: usize,
    pub ws_k: u32,
    pub ws_beta: f64,
    pub geo_box: GeoBox,
    pub days: u32,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_devices: 2568,
            n_owners: 900,
            ws_k: 6,
            ws_beta: 0.3,
            geo_box: GeoBox::default(),
            days: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphsConfig {
    /// CLOR is built only when enabled; the evaluated pipeline uses
    /// SFOR and SOR.
    pub use_clor: bool,
    pub clor_threshold_m: f64,
    pub sfor_max_hops: u32,
    pub sor_min_meetings: u32,
    pub sor_min_duration_min: f64,
}

impl Default for GraphsConfig {
    fn default() -> Self {
        GraphsConfig {
            use_clor: false,
            clor_threshold_m: 100.0,
            sfor_max_hops: 2,
            sor_min_meetings: 3,
            sor_min_duration_min: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperiencesConfig {
    pub n: usize,
    pub mode: ExperienceMode,
    pub ic_range_mi: (f64, f64),
    pub m_range_mb: (f64, f64),
    pub m_catalog_step_mb: f64,
    pub dynamic_avail_range_pct: (f64, f64),
}

impl Default for ExperiencesConfig {
    fn default() -> Self {
        let p = ExperienceParams::default();
        ExperiencesConfig {
            n: p.n,
            mode: p.mode,
            ic_range_mi: p.ic_range_mi,
            m_range_mb: p.m_range_mb,
            m_catalog_step_mb: p.m_catalog_step_mb,
            dynamic_avail_range_pct: p.dynamic_avail_range_pct,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub split_fraction: f64,
    pub k_folds: usize,
    pub dt: DtGrid,
    pub rf: RfGrid,
    pub gbr: GbrGrid,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            split_fraction: 0.75,
            k_folds: 3,
            dt: DtGrid::default(),
            rf: RfGrid::default(),
            gbr: GbrGrid::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AllocationConfig {
    pub mode: CandidateMode,
    pub fallback_to_union: bool,
}

impl Default for AllocationConfig {
    fn default() -> Self {
        AllocationConfig { mode: CandidateMode::Intersection, fallback_to_union: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub seeds: Seeds,
    pub dataset: DatasetConfig,
    pub graphs: GraphsConfig,
    pub oracle: OracleParams,
    pub experiences: ExperiencesConfig,
    pub learner: LearnerConfig,
    pub allocation: AllocationConfig,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|source| ConfigError::Parse { path: path.to_path_buf(), source })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        if self.dataset.n_devices == 0 || self.dataset.n_owners == 0 {
            return bad("dataset sizes must be positive");
        }
        if self.dataset.ws_k < 2
            || self.dataset.ws_k % 2 != 0
            || self.dataset.n_owners as u32 <= self.dataset.ws_k
        {
            return bad("watts-strogatz needs n_owners > ws_k >= 2 with ws_k even");
        }
        if !(0.0..=1.0).contains(&self.dataset.ws_beta) {
            return bad("ws_beta must be in [0,1]");
        }
        self.dataset
            .geo_box
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.dataset.days < 1 {
            return bad("days must be >= 1");
        }
        if !(self.graphs.clor_threshold_m > 0.0) {
            return bad("clor_threshold_m must be positive");
        }
        if self.graphs.sfor_max_hops < 1 {
            return bad("sfor_max_hops must be >= 1");
        }
        if self.graphs.sor_min_meetings < 1 || !(self.graphs.sor_min_duration_min > 0.0) {
            return bad("SOR thresholds must be positive");
        }
        if self.experiences.n < 1 {
            return bad("experience count must be >= 1");
        }
        if !(self.learner.split_fraction > 0.0 && self.learner.split_fraction < 1.0) {
            return bad("split_fraction must be in (0,1)");
        }
        if self.learner.k_folds < 2 {
            return bad("k_folds must be >= 2");
        }
        if let Some(path) = &self.paths.devices {
            if !path.exists() {
                return Err(ConfigError::Invalid(format!(
                    "devices file not found: {}",
                    path.display()
                )));
            }
        }
        if let Some(path) = &self.paths.meetings {
            if !path.exists() {
                return Err(ConfigError::Invalid(format!(
                    "meetings file not found: {}",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn experience_params(&self) -> ExperienceParams {
        ExperienceParams {
            n: self.experiences.n,
            mode: self.experiences.mode,
            ic_range_mi: self.experiences.ic_range_mi,
            m_range_mb: self.experiences.m_range_mb,
            m_catalog_step_mb: self.experiences.m_catalog_step_mb,
            dynamic_avail_range_pct: self.experiences.dynamic_avail_range_pct,
            oracle: self.oracle,
        }
    }

    /// Stable fingerprint over the canonical JSON form, stamped into
    /// every artifact manifest.
    pub fn fingerprint(&self) -> u64 {
        let json = serde_json::to_string(self).expect("config serializes");
        fnv1a64(json.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        RunConfig::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let config = RunConfig::default();
        let text = toml::to_string(&config).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let config: RunConfig = toml::from_str(
            "[seeds]\nmaster = 9\n\n[dataset]\nn_devices = 100\nn_owners = 40\n",
        )
        .unwrap();
        assert_eq!(config.seeds.master, 9);
        assert_eq!(config.dataset.n_devices, 100);
        assert_eq!(config.learner.k_folds, 3);
        assert_eq!(config.experiences.n, 10_000);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut config = RunConfig::default();
        config.dataset.ws_k = 3;
        assert!(config.validate().is_err());

        let mut config = RunConfig::default();
        config.learner.split_fraction = 1.0;
        assert!(config.validate().is_err());

        let mut config = RunConfig::default();
        config.paths.devices = Some(PathBuf::from("/definitely/not/here.csv"));
        assert!(config.validate().is_err());
    }

    #[test]
    fn seeds_derive_from_master_but_can_be_pinned() {
        let a = Seeds::from_master(1);
        let b = Seeds::from_master(2);
        assert_ne!(a.devices(), b.devices());
        assert_ne!(a.devices(), a.meetings());
        let pinned = Seeds { devices: Some(77), ..Seeds::from_master(1) };
        assert_eq!(pinned.devices(), 77);
        assert_eq!(pinned.meetings(), a.meetings());
    }

    #[test]
    fn fingerprint_tracks_config_changes() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seeds.master = 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
