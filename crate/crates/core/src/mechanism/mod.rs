//! Transcoder supports, latent captions, the static feature prior and
//! unit-conditioned dynamic mechanism graphs.

mod caption;
mod dynamic;
mod nnls;
mod prior;
mod support;

pub use caption::{
    caption_latent, CaptionMode, CaptionTerm, LatentCaption, NnlsFit, CAPTION_TERMS,
    DEFAULT_SUPPORT_CAP,
};
pub use dynamic::{
    build_dynamic_graph, DynamicConfig, DynamicMechanismGraph, GateMode, LatentEvidence, MechEdge,
    MechStores, DEFAULT_EDGE_CAP, DEFAULT_EPSILON,
};
pub use nnls::{nnls, NnlsOptions, NnlsSolution};
pub use prior::{compute_static_prior, PriorEntry, StaticPrior};
pub use support::{compute_support_matrices, SparseNonneg, SupportMatrices};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::client::ExternalClient;
use crate::error::{Error, Result};
use crate::ingest::{FeatureCatalog, SparseStack};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MechanismConfig {
    pub drop_tol: f64,
    pub prior_floor: f64,
    pub caption_mode: CaptionMode,
    pub support_cap: usize,
    pub max_in_flight: usize,
    pub dynamic: DynamicConfig,
}

impl Default for MechanismConfig {
    fn default() -> Self {
        Self {
            drop_tol: 0.0,
            prior_floor: 0.0,
            caption_mode: CaptionMode::TopFunctional,
            support_cap: DEFAULT_SUPPORT_CAP,
            max_in_flight: 4,
            dynamic: DynamicConfig::default(),
        }
    }
}

/// Everything about the transcoder that does not depend on a unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticMechanism {
    pub supports: SupportMatrices,
    pub captions: Vec<LatentCaption>,
    pub prior: StaticPrior,
}

impl StaticMechanism {
    /// Fills each edge's strongest-latent caption label.
    pub fn attach_captions(&self, graph: &mut DynamicMechanismGraph) {
        for e in &mut graph.edges {
            e.strongest_caption = self
                .captions
                .get(e.strongest_latent)
                .map(|c| c.label.clone());
        }
    }
}

pub fn build_static_mechanism(
    stack: &SparseStack,
    catalog: &FeatureCatalog,
    config: &MechanismConfig,
    client: &dyn ExternalClient,
) -> Result<StaticMechanism> {
    let supports = compute_support_matrices(stack, config.drop_tol);
    let prior = compute_static_prior(&supports, config.prior_floor);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.max_in_flight.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let captions = pool.install(|| {
        (0..supports.num_latents())
            .into_par_iter()
            .map(|k| {
                caption_latent(
                    k,
                    &supports,
                    stack,
                    catalog,
                    config.caption_mode,
                    config.support_cap,
                    client,
                )
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(StaticMechanism {
        supports,
        captions,
        prior,
    })
}
