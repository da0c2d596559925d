//! Edge-computer allocation for social IoT networks: build social
//! relation graphs over a device fleet, detect trusted communities,
//! simulate response-time observations, train tree-ensemble regressors
//! on them, and allocate tasks to the candidate with the lowest
//! predicted response time.

pub mod allocator;
pub mod community;
pub mod config;
pub mod dataset;
pub mod learner;
pub mod oracle;
pub mod pipeline;
pub mod rng;
pub mod social;
