use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::support::SupportMatrices;
use crate::ids::FeatureId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorEntry {
    pub source: FeatureId,
    pub target: FeatureId,
    pub weight: f64,
}

/// Sparse M = A+ (G+)^T, entries sorted by (source, target).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticPrior {
    pub floor: f64,
    pub entries: Vec<PriorEntry>,
}

impl StaticPrior {
    pub fn get(&self, source: FeatureId, target: FeatureId) -> f64 {
        self.entries
            .binary_search_by(|e| (e.source, e.target).cmp(&(source, target)))
            .map(|i| self.entries[i].weight)
            .unwrap_or(0.0)
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }
}

/// Per source row, sums latents in ascending k order. Entries at or below `floor` are dropped.
pub fn compute_static_prior(supports: &SupportMatrices, floor: f64) -> StaticPrior {
    let a = &supports.a_pos;
    let g = &supports.g_pos;
    let entries = (0..a.rows)
        .into_par_iter()
        .flat_map_iter(|row| {
            let mut acc: BTreeMap<u32, f64> = BTreeMap::new();
            for &(k, av) in &a.by_row[row] {
                for &(b, gv) in &g.by_col[k as usize] {
                    *acc.entry(b).or_insert(0.0) += av * gv;
                }
            }
            acc.into_iter()
                .filter(move |&(_, w)| w > floor)
                .map(move |(b, weight)| PriorEntry {
                    source: FeatureId::src(row as u32),
                    target: FeatureId::tgt(b),
                    weight,
                })
        })
        .collect();
    StaticPrior { floor, entries }
}
