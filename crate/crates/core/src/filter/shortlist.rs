use serde::{Deserialize, Serialize};

use super::{FeatureStats, ShortlistConfig};
use crate::ids::FeatureId;
use crate::ids::Site;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortlistEntry {
    pub id: FeatureId,
    pub rank: usize,
    pub combined_score: f64,
    pub reasons: Vec<String>,
}

/// Gates in order: minimum support rate, minimum activation mass, then the
/// bottom fraction by target support (per site, floor count, lower ids
/// dropped first among ties). Survivors are ranked by combined score,
/// ties by ascending feature id, and cut at `shortlist_size`.
pub fn shortlist(stats: &[FeatureStats], config: &ShortlistConfig) -> Vec<ShortlistEntry> {
    let mut survivors: Vec<&FeatureStats> = Vec::new();
    for site in Site::ALL {
        let mut gated: Vec<&FeatureStats> = stats
            .iter()
            .filter(|s| s.id.site == site)
            .filter(|s| s.support_rate >= config.min_support_rate)
            .filter(|s| s.activation_mass >= config.min_activation_mass)
            .collect();
        gated.sort_by(|a, b| {
            a.support_rate
                .total_cmp(&b.support_rate)
                .then(a.id.cmp(&b.id))
        });
        let drop = (gated.len() as f64 * config.bottom_percent_drop).floor() as usize;
        survivors.extend(gated.into_iter().skip(drop));
    }
    if survivors.is_empty() {
        log::warn!("every feature was gated out; shortlist is empty");
    }
    survivors.sort_by(|a, b| {
        b.combined_score
            .total_cmp(&a.combined_score)
            .then(a.id.cmp(&b.id))
    });
    survivors
        .into_iter()
        .take(config.shortlist_size)
        .enumerate()
        .map(|(i, s)| {
            let mut reasons = vec![
                "support_gate".to_string(),
                "mass_gate".into(),
                "above_bottom_drop".into(),
            ];
            if s.enrichment > 0.0 {
                reasons.push("enriched_vs_contrast".into());
            }
            if s.localization >= 0.5 {
                reasons.push("localized".into());
            }
            reasons.push(format!("rank:{}", i + 1));
            ShortlistEntry {
                id: s.id,
                rank: i + 1,
                combined_score: s.combined_score,
                reasons,
            }
        })
        .collect()
}
