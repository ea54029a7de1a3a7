use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ShortlistConfig;
use crate::error::{Error, Result};
use crate::ids::{FeatureId, Granularity, Site};
use crate::ingest::{CorpusStructure, TokenActivationStore};
use crate::presence::{calibrate_from_scores, SentenceScores, ThresholdVector};

/// Sentence scores and presence for every feature of one site, over the target
/// corpus and each contrast corpus. Contrast presence uses the target thresholds.
#[derive(Debug, Clone)]
pub struct SiteEvidence {
    pub site: Site,
    pub thresholds: ThresholdVector,
    pub target_scores: SentenceScores,
    /// Sum of positive activations over non-special target tokens, per feature.
    pub target_mass: Vec<f64>,
    pub contrasts: Vec<ContrastEvidence>,
}

#[derive(Debug, Clone)]
pub struct ContrastEvidence {
    pub name: String,
    pub scores: SentenceScores,
}

impl SiteEvidence {
    pub fn build(
        target: (&TokenActivationStore, &CorpusStructure),
        contrasts: &[(&str, &TokenActivationStore, &CorpusStructure)],
        config: &ShortlistConfig,
    ) -> Result<Self> {
        let (store, corpus) = target;
        let site: Site = store.site_id().parse()?;
        let target_scores = SentenceScores::compute(store, corpus)?;
        let inventory: Vec<FeatureId> = (0..store.num_features() as u32)
            .map(|i| FeatureId::new(site, i))
            .collect();
        let thresholds = if inventory.is_empty() {
            ThresholdVector::default()
        } else {
            calibrate_from_scores(&target_scores, &inventory, &config.calibration)?
        };
        let mut target_mass = vec![0.0; store.num_features()];
        for e in store.entries() {
            if e.value > 0.0 && !store.is_special(e.token as usize) {
                target_mass[e.feature as usize] += f64::from(e.value);
            }
        }
        let contrasts = contrasts
            .iter()
            .map(|&(name, cstore, ccorpus)| {
                if cstore.num_features() != store.num_features() {
                    return Err(Error::Shape(format!(
                        "contrast `{name}` has {} {site} features, target has {}",
                        cstore.num_features(),
                        store.num_features()
                    )));
                }
                Ok(ContrastEvidence {
                    name: name.to_string(),
                    scores: SentenceScores::compute(cstore, ccorpus)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            site,
            thresholds,
            target_scores,
            target_mass,
            contrasts,
        })
    }

    pub fn theta(&self, feature: u32) -> f64 {
        self.thresholds
            .theta(FeatureId::new(self.site, feature))
            .unwrap_or(f64::INFINITY)
    }

    /// `(sentence, score)` for target sentences where the feature is present.
    pub fn supporting_sentences(&self, feature: u32) -> Vec<(usize, f64)> {
        let theta = self.theta(feature);
        self.target_scores
            .rows
            .iter()
            .enumerate()
            .filter_map(|(s, _)| {
                let m = self.target_scores.score(s, feature);
                (m > theta).then_some((s, m))
            })
            .collect()
    }

    fn support_rate(scores: &SentenceScores, theta: &[f64]) -> Vec<f64> {
        let mut counts = vec![0usize; scores.num_features];
        for row in &scores.rows {
            for &(f, m) in row {
                if m > theta[f as usize] {
                    counts[f as usize] += 1;
                }
            }
        }
        let n = scores.rows.len().max(1) as f64;
        counts.into_iter().map(|c| c as f64 / n).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureStats {
    pub id: FeatureId,
    pub support_rate: f64,
    pub supporting_sentences: usize,
    pub activation_mass: f64,
    pub max_contrast_support: f64,
    pub enrichment: f64,
    pub localization: f64,
    pub synergy: f64,
    pub combined_score: f64,
}

/// Min-max normalization; a constant column maps to zero.
fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - lo) / (hi - lo)).collect()
}

/// Per-feature support, mass, enrichment, localization, synergy and combined score
/// for one site. Localization is the score-weighted share of supporting sentences
/// that fall in the single best subchapter.
pub fn compute_feature_stats(
    evidence: &SiteEvidence,
    target_corpus: &CorpusStructure,
    config: &ShortlistConfig,
) -> Result<Vec<FeatureStats>> {
    if evidence.contrasts.is_empty() {
        return Err(Error::Config(
            "at least one contrast corpus is required for enrichment".into(),
        ));
    }
    let n = evidence.target_scores.num_features;
    let theta: Vec<f64> = (0..n as u32).map(|f| evidence.theta(f)).collect();
    let target_rate = SiteEvidence::support_rate(&evidence.target_scores, &theta);
    let mut max_contrast = vec![0.0f64; n];
    for c in &evidence.contrasts {
        for (slot, rate) in max_contrast
            .iter_mut()
            .zip(SiteEvidence::support_rate(&c.scores, &theta))
        {
            *slot = slot.max(rate);
        }
    }

    let mut sub_mass: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    let mut supporting = vec![0usize; n];
    for (s, row) in evidence.target_scores.rows.iter().enumerate() {
        let sub = target_corpus.sentence_unit(s, Granularity::Subchapter);
        for &(f, m) in row {
            if m > theta[f as usize] {
                *sub_mass[f as usize].entry(sub).or_default() += m;
                supporting[f as usize] += 1;
            }
        }
    }

    let eps = config.enrichment_epsilon;
    let mut rows: Vec<FeatureStats> = (0..n)
        .map(|f| {
            let total: f64 = sub_mass[f].values().sum();
            let best = sub_mass[f].values().copied().fold(0.0, f64::max);
            let localization = if total > 0.0 { best / total } else { 0.0 };
            let enrichment = ((target_rate[f] + eps) / (max_contrast[f] + eps)).ln();
            FeatureStats {
                id: FeatureId::new(evidence.site, f as u32),
                support_rate: target_rate[f],
                supporting_sentences: supporting[f],
                activation_mass: evidence.target_mass[f],
                max_contrast_support: max_contrast[f],
                enrichment,
                localization,
                synergy: enrichment * localization,
                combined_score: 0.0,
            }
        })
        .collect();

    let enrich_norm = min_max(&rows.iter().map(|r| r.enrichment).collect::<Vec<_>>());
    let synergy_norm = min_max(&rows.iter().map(|r| r.synergy).collect::<Vec<_>>());
    let loc_norm = min_max(&rows.iter().map(|r| r.localization).collect::<Vec<_>>());
    for (i, r) in rows.iter_mut().enumerate() {
        r.combined_score = config.enrichment_weight * enrich_norm[i]
            + config.localization_weight * loc_norm[i]
            + config.synergy_weight * synergy_norm[i];
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_max_of_constant_is_zero() {
        assert_eq!(min_max(&[2.0, 2.0]), vec![0.0, 0.0]);
        assert_eq!(min_max(&[1.0, 3.0, 2.0]), vec![0.0, 1.0, 0.5]);
    }
}
