//! Reduces the raw feature inventory to the retained concept universe:
//! activity gates, a recall-oriented shortlist, evidence packets, and
//! adjudication by an external client.

mod adjudicate;
mod packet;
mod shortlist;
mod stats;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use adjudicate::{
    adjudicate_feature, validate_reply, Adjudication, AdjudicationResult, Distinctiveness,
    Relevance, Visibility,
};
pub use packet::{
    build_evidence_packet, duplicate_hints, screen_description, EvidencePacket, EvidenceSentence,
    PacketContext, ScreenLabel, SurfaceScreen, UnitContext,
};
pub use shortlist::{shortlist, ShortlistEntry};
pub use stats::{compute_feature_stats, ContrastEvidence, FeatureStats, SiteEvidence};

use crate::client::ExternalClient;
use crate::error::{Error, Result};
use crate::ids::{FeatureId, Site};
use crate::ingest::Ingested;
use crate::presence::CalibrationConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShortlistConfig {
    pub min_support_rate: f64,
    pub min_activation_mass: f64,
    pub bottom_percent_drop: f64,
    pub shortlist_size: usize,
    pub enrichment_weight: f64,
    pub localization_weight: f64,
    pub synergy_weight: f64,
    pub enrichment_epsilon: f64,
    pub evidence_sentences: usize,
    pub surface_patterns: Vec<String>,
    pub duplicate_cosine: f64,
    pub calibration: CalibrationConfig,
    pub max_in_flight: usize,
    pub transport_retries: usize,
    /// Passed verbatim to the adjudicator.
    pub domain_profile: Value,
}

impl Default for ShortlistConfig {
    fn default() -> Self {
        Self {
            min_support_rate: 5e-4,
            min_activation_mass: 10.0,
            bottom_percent_drop: 0.20,
            shortlist_size: 30_000,
            enrichment_weight: 1.0,
            localization_weight: 1.0,
            synergy_weight: 0.25,
            enrichment_epsilon: 1e-6,
            evidence_sentences: 8,
            surface_patterns: vec![
                r"punctuation".into(),
                r"\bformatting\b".into(),
                r"whitespace".into(),
                r"^the (word|token)\b".into(),
                r"\bnewline".into(),
                r"capitali[sz]".into(),
            ],
            duplicate_cosine: 0.95,
            calibration: CalibrationConfig::default(),
            max_in_flight: 4,
            transport_retries: 1,
            domain_profile: Value::Null,
        }
    }
}

impl ShortlistConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.bottom_percent_drop) {
            return Err(Error::Config(format!(
                "bottom_percent_drop {} not in [0, 1)",
                self.bottom_percent_drop
            )));
        }
        if self.shortlist_size < 1 {
            return Err(Error::Config("shortlist_size must be at least 1".into()));
        }
        if self.max_in_flight < 1 {
            return Err(Error::Config("max_in_flight must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetainedRecord {
    pub packet: EvidencePacket,
    pub adjudication: Adjudication,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case")]
pub enum Rejection {
    ScreenedOut { label: ScreenLabel },
    NotVisible,
    DoesNotBelong,
    Indeterminate { reason: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Funnel {
    pub inventory: usize,
    pub shortlist: usize,
    pub candidates: usize,
    pub adjudicated: usize,
    pub retained: usize,
}

/// The retained universe V* with provenance for every member and the reason
/// every other shortlisted feature was dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetainedUniverse {
    pub features: Vec<FeatureId>,
    pub records: BTreeMap<FeatureId, RetainedRecord>,
    pub rejected: BTreeMap<FeatureId, Rejection>,
    pub shortlist: Vec<ShortlistEntry>,
    pub funnel: Funnel,
    pub config: ShortlistConfig,
}

impl RetainedUniverse {
    pub fn contains(&self, id: FeatureId) -> bool {
        self.features.binary_search(&id).is_ok()
    }

    pub fn site_features(&self, site: Site) -> Vec<FeatureId> {
        self.features
            .iter()
            .copied()
            .filter(|f| f.site == site)
            .collect()
    }

    /// A universe over explicit features, without filter provenance.
    pub fn from_features(mut features: Vec<FeatureId>) -> Self {
        features.sort();
        features.dedup();
        Self {
            funnel: Funnel {
                inventory: features.len(),
                retained: features.len(),
                ..Default::default()
            },
            features,
            records: BTreeMap::new(),
            rejected: BTreeMap::new(),
            shortlist: Vec::new(),
            config: ShortlistConfig::default(),
        }
    }
}

/// Per-site evidence built from the ingested corpora.
pub fn site_evidence(
    data: &Ingested,
    site: Site,
    config: &ShortlistConfig,
) -> Result<SiteEvidence> {
    let contrasts = data
        .contrasts
        .iter()
        .map(|c| Ok((c.name.as_str(), c.store(site)?, &c.corpus)))
        .collect::<Result<Vec<_>>>()?;
    SiteEvidence::build(
        (data.target.store(site)?, &data.target.corpus),
        &contrasts,
        config,
    )
}

/// Full filter run over both sites.
pub fn run_filter(
    data: &Ingested,
    config: &ShortlistConfig,
    client: &dyn ExternalClient,
) -> Result<RetainedUniverse> {
    config.validate()?;
    let mut evidence = BTreeMap::new();
    let mut all_stats = Vec::new();
    for site in Site::ALL {
        let ev = site_evidence(data, site, config)?;
        all_stats.extend(compute_feature_stats(&ev, &data.target.corpus, config)?);
        evidence.insert(site, ev);
    }
    let inventory = all_stats.len();
    let list = shortlist(&all_stats, config);
    let stats_by_id: BTreeMap<FeatureId, &FeatureStats> =
        all_stats.iter().map(|s| (s.id, s)).collect();
    let ids: Vec<FeatureId> = list.iter().map(|e| e.id).collect();
    let dups = duplicate_hints(&ids, &data.catalog, config.duplicate_cosine);
    let contrast_corpora: Vec<_> = data.contrasts.iter().map(|c| &c.corpus).collect();
    let screen = SurfaceScreen::new(config)?;

    let packets = list
        .iter()
        .map(|entry| {
            let ctx = PacketContext {
                evidence: &evidence[&entry.id.site],
                target_corpus: &data.target.corpus,
                contrast_corpora: contrast_corpora.clone(),
                catalog: &data.catalog,
                config,
                screen: &screen,
            };
            build_evidence_packet(
                entry.id,
                stats_by_id[&entry.id],
                &entry.reasons,
                dups.get(&entry.id).map(Vec::as_slice).unwrap_or(&[]),
                &ctx,
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rejected = BTreeMap::new();
    let (candidates, screened): (Vec<_>, Vec<_>) = packets
        .into_iter()
        .partition(|p| p.screen_label == ScreenLabel::Candidate);
    for p in &screened {
        rejected.insert(
            p.feature,
            Rejection::ScreenedOut {
                label: p.screen_label,
            },
        );
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.max_in_flight)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let outcomes: Vec<Result<Adjudication>> = pool.install(|| {
        candidates
            .par_iter()
            .map(|p| {
                let mut attempt = 0;
                loop {
                    match adjudicate_feature(p, client, &config.domain_profile) {
                        Err(Error::Adjudicator {
                            retryable: true,
                            message,
                        }) => {
                            if attempt >= config.transport_retries {
                                return Ok(Adjudication::Indeterminate {
                                    reason: format!("transport: {message}"),
                                    client: client.id().to_string(),
                                });
                            }
                            attempt += 1;
                        }
                        other => return other,
                    }
                }
            })
            .collect()
    });

    let mut records = BTreeMap::new();
    let mut adjudicated = 0;
    for (packet, outcome) in candidates.into_iter().zip(outcomes) {
        let outcome = outcome?;
        match &outcome {
            Adjudication::Decided { result, .. } => {
                adjudicated += 1;
                if !result.visibility.visible {
                    rejected.insert(packet.feature, Rejection::NotVisible);
                } else if !result.relevance.belongs_here {
                    rejected.insert(packet.feature, Rejection::DoesNotBelong);
                } else {
                    records.insert(
                        packet.feature,
                        RetainedRecord {
                            packet,
                            adjudication: outcome,
                        },
                    );
                }
            }
            Adjudication::Indeterminate { reason, .. } => {
                rejected.insert(
                    packet.feature,
                    Rejection::Indeterminate {
                        reason: reason.clone(),
                    },
                );
            }
        }
    }
    let features: Vec<FeatureId> = records.keys().copied().collect();
    let funnel = Funnel {
        inventory,
        shortlist: list.len(),
        candidates: list.len() - screened.len(),
        adjudicated,
        retained: features.len(),
    };
    log::info!(
        "filter funnel: {} inventory -> {} shortlist -> {} candidates -> {} adjudicated -> {} retained",
        funnel.inventory,
        funnel.shortlist,
        funnel.candidates,
        funnel.adjudicated,
        funnel.retained
    );
    Ok(RetainedUniverse {
        features,
        records,
        rejected,
        shortlist: list,
        funnel,
        config: config.clone(),
    })
}
