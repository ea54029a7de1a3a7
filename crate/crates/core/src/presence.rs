//! Sentence presence: strongest positive token activation against a calibrated
//! per-feature threshold, and its existential lift to coarser units.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{FeatureId, Granularity, Site};
use crate::ingest::{CorpusStructure, TokenActivationStore};

/// Per-sentence scores m_{s,v}: the largest positive activation over the
/// sentence's non-special tokens. Only strictly positive scores are stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceScores {
    pub site: Site,
    pub num_features: usize,
    /// Per sentence, `(feature index, score)` sorted by feature index.
    pub rows: Vec<Vec<(u32, f64)>>,
}

impl SentenceScores {
    pub fn compute(store: &TokenActivationStore, corpus: &CorpusStructure) -> Result<Self> {
        let site: Site = store.site_id().parse()?;
        let rows = (0..corpus.num_sentences())
            .into_par_iter()
            .map(|s| {
                let span = corpus.sentence_span(s);
                let mut best: BTreeMap<u32, f64> = BTreeMap::new();
                let mut any_token = false;
                for tok in span.clone() {
                    if store.is_special(tok) {
                        continue;
                    }
                    any_token = true;
                    for e in store.token(tok) {
                        let v = f64::from(e.value);
                        if v > 0.0 {
                            let slot = best.entry(e.feature).or_insert(0.0);
                            if v > *slot {
                                *slot = v;
                            }
                        }
                    }
                }
                if !any_token {
                    log::debug!(
                        "sentence {} has no tokens after masking",
                        corpus.sentence(s).id
                    );
                }
                best.into_iter().collect::<Vec<_>>()
            })
            .collect();
        Ok(Self {
            site,
            num_features: store.num_features(),
            rows,
        })
    }

    pub fn score(&self, sentence: usize, feature: u32) -> f64 {
        let row = &self.rows[sentence];
        row.binary_search_by_key(&feature, |&(f, _)| f)
            .map(|i| row[i].1)
            .unwrap_or(0.0)
    }

    /// Nonzero scores per feature, gathered column-wise: feature -> [(sentence, score)].
    pub fn by_feature(&self) -> Vec<Vec<(usize, f64)>> {
        let mut cols = vec![Vec::new(); self.num_features];
        for (s, row) in self.rows.iter().enumerate() {
            for &(f, m) in row {
                cols[f as usize].push((s, m));
            }
        }
        cols
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    Quantile,
    RareSafeguard,
    NeverActive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    /// `+inf` (serialized as `null`) for features that never fire.
    #[serde(with = "crate::util::inf_as_null")]
    pub theta: f64,
    pub rule: ThresholdRule,
    pub nonzero_sentences: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub quantile: f64,
    pub min_nonzero: usize,
    pub safeguard_fraction: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            quantile: 0.90,
            min_nonzero: 5,
            safeguard_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ThresholdVector {
    pub config: CalibrationConfig,
    pub thresholds: BTreeMap<FeatureId, Threshold>,
}

impl ThresholdVector {
    pub fn theta(&self, id: FeatureId) -> Option<f64> {
        self.thresholds.get(&id).map(|t| t.theta)
    }

    pub fn features(&self, site: Site) -> impl Iterator<Item = FeatureId> + '_ {
        self.thresholds
            .keys()
            .copied()
            .filter(move |f| f.site == site)
    }

    pub fn merge(&mut self, other: ThresholdVector) {
        self.thresholds.extend(other.thresholds);
    }
}

/// Nearest-rank quantile of an ascending slice: element at rank ceil(q * n).
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

fn threshold_from_scores(mut scores: Vec<f64>, config: &CalibrationConfig) -> Threshold {
    let n = scores.len();
    if n == 0 {
        return Threshold {
            theta: f64::INFINITY,
            rule: ThresholdRule::NeverActive,
            nonzero_sentences: 0,
        };
    }
    scores.sort_by(f64::total_cmp);
    if n < config.min_nonzero {
        Threshold {
            theta: config.safeguard_fraction * scores[n - 1],
            rule: ThresholdRule::RareSafeguard,
            nonzero_sentences: n,
        }
    } else {
        Threshold {
            theta: nearest_rank(&scores, config.quantile),
            rule: ThresholdRule::Quantile,
            nonzero_sentences: n,
        }
    }
}

/// Calibrates theta_v from each feature's nonzero sentence scores.
pub fn calibrate_from_scores(
    scores: &SentenceScores,
    universe: &[FeatureId],
    config: &CalibrationConfig,
) -> Result<ThresholdVector> {
    if universe.is_empty() {
        return Err(Error::Config(
            "cannot calibrate thresholds for an empty universe".into(),
        ));
    }
    if !(0.0..=1.0).contains(&config.quantile) {
        return Err(Error::Config(format!(
            "quantile {} outside [0, 1]",
            config.quantile
        )));
    }
    if let Some(bad) = universe
        .iter()
        .find(|f| f.site != scores.site || f.index as usize >= scores.num_features)
    {
        return Err(Error::Config(format!(
            "feature {bad} is not in the {} store",
            scores.site
        )));
    }
    let cols = scores.by_feature();
    let thresholds = universe
        .iter()
        .map(|&f| {
            let vals = cols[f.index as usize].iter().map(|&(_, m)| m).collect();
            (f, threshold_from_scores(vals, config))
        })
        .collect();
    Ok(ThresholdVector {
        config: *config,
        thresholds,
    })
}

pub fn calibrate_thresholds(
    store: &TokenActivationStore,
    corpus: &CorpusStructure,
    universe: &[FeatureId],
    quantile: f64,
) -> Result<ThresholdVector> {
    let scores = SentenceScores::compute(store, corpus)?;
    calibrate_from_scores(
        &scores,
        universe,
        &CalibrationConfig {
            quantile,
            ..Default::default()
        },
    )
}

/// Binary unit x feature matrix, stored as the sorted column indices present in each row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresenceMatrix {
    pub granularity: Granularity,
    pub features: Vec<FeatureId>,
    pub rows: Vec<Vec<u32>>,
}

impl PresenceMatrix {
    pub fn num_units(&self) -> usize {
        self.rows.len()
    }

    pub fn is_present(&self, unit: usize, column: usize) -> bool {
        self.rows[unit].binary_search(&(column as u32)).is_ok()
    }

    pub fn column_of(&self, id: FeatureId) -> Option<usize> {
        self.features.binary_search(&id).ok()
    }

    /// Units where the column is present.
    pub fn support(&self, column: usize) -> Vec<usize> {
        (0..self.rows.len())
            .filter(|&u| self.is_present(u, column))
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<bool>> {
        self.rows
            .iter()
            .map(|row| {
                let mut dense = vec![false; self.features.len()];
                for &c in row {
                    dense[c as usize] = true;
                }
                dense
            })
            .collect()
    }

    pub fn from_dense(
        granularity: Granularity,
        features: Vec<FeatureId>,
        dense: &[Vec<bool>],
    ) -> Self {
        let rows = dense
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, &p)| p)
                    .map(|(c, _)| c as u32)
                    .collect()
            })
            .collect();
        Self {
            granularity,
            features,
            rows,
        }
    }
}

/// X_{s,v} = 1 iff m_{s,v} > theta_v, over the thresholded features of the scores' site.
pub fn presence_from_scores(
    scores: &SentenceScores,
    thresholds: &ThresholdVector,
) -> PresenceMatrix {
    let features: Vec<FeatureId> = thresholds.features(scores.site).collect();
    let rows = scores
        .rows
        .par_iter()
        .map(|row| {
            features
                .iter()
                .enumerate()
                .filter_map(|(c, f)| {
                    let m = row
                        .binary_search_by_key(&f.index, |&(i, _)| i)
                        .map(|i| row[i].1)
                        .unwrap_or(0.0);
                    (m > thresholds.thresholds[f].theta).then_some(c as u32)
                })
                .collect()
        })
        .collect();
    PresenceMatrix {
        granularity: Granularity::Sentence,
        features,
        rows,
    }
}

pub fn sentence_presence(
    store: &TokenActivationStore,
    corpus: &CorpusStructure,
    thresholds: &ThresholdVector,
) -> Result<PresenceMatrix> {
    let scores = SentenceScores::compute(store, corpus)?;
    Ok(presence_from_scores(&scores, thresholds))
}

/// A unit is present iff any of its sentences is.
pub fn lift_presence(
    sentence: &PresenceMatrix,
    corpus: &CorpusStructure,
    g: Granularity,
) -> PresenceMatrix {
    if g == Granularity::Sentence {
        return sentence.clone();
    }
    let rows = (0..corpus.num_units(g))
        .map(|u| {
            let mut cols: Vec<u32> = corpus
                .unit_sentences(g, u)
                .into_iter()
                .flat_map(|s| sentence.rows[s].iter().copied())
                .collect();
            cols.sort_unstable();
            cols.dedup();
            cols
        })
        .collect();
    PresenceMatrix {
        granularity: g,
        features: sentence.features.clone(),
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{
        ActivationEntry, ChapterRecord, CorpusDocument, ParagraphRecord, SentenceRecord,
        SubchapterRecord,
    };

    fn corpus(spans: &[[usize; 2]]) -> CorpusStructure {
        CorpusStructure::from_document(CorpusDocument {
            title: String::new(),
            chapters: vec![ChapterRecord {
                id: "c".into(),
                title: String::new(),
            }],
            subchapters: vec![SubchapterRecord {
                id: "sc".into(),
                chapter_id: "c".into(),
                title: String::new(),
            }],
            paragraphs: vec![ParagraphRecord {
                id: "p".into(),
                subchapter_id: "sc".into(),
            }],
            sentences: spans
                .iter()
                .enumerate()
                .map(|(i, &span)| SentenceRecord {
                    id: format!("s{i}"),
                    token_span: span,
                    paragraph_id: "p".into(),
                    subchapter_id: "sc".into(),
                    chapter_id: "c".into(),
                    text: String::new(),
                })
                .collect(),
        })
        .unwrap()
    }

    #[test]
    fn nearest_rank_of_one_to_ten() {
        let scores: Vec<f64> = (1..=10).map(f64::from).collect();
        // ceil(0.9 * 10) = 9th smallest.
        assert_eq!(nearest_rank(&scores, 0.9), 9.0);
        let t = threshold_from_scores(scores, &CalibrationConfig::default());
        assert_eq!(t.theta, 9.0);
        assert_eq!(t.rule, ThresholdRule::Quantile);
    }

    #[test]
    fn rare_feature_uses_half_max() {
        let t = threshold_from_scores(vec![2.0, 8.0, 5.0], &CalibrationConfig::default());
        assert_eq!(t.theta, 4.0);
        assert_eq!(t.rule, ThresholdRule::RareSafeguard);
    }

    #[test]
    fn never_active_feature_is_never_present() {
        let c = corpus(&[[0, 2], [2, 4]]);
        let store = TokenActivationStore::new(
            "src",
            4,
            2,
            vec![ActivationEntry {
                token: 0,
                feature: 0,
                value: 1.0,
            }],
            vec![false; 4],
        )
        .unwrap();
        let universe = [FeatureId::src(0), FeatureId::src(1)];
        let th = calibrate_thresholds(&store, &c, &universe, 0.9).unwrap();
        assert!(th.theta(FeatureId::src(1)).unwrap().is_infinite());
        let x = sentence_presence(&store, &c, &th).unwrap();
        assert!(x.support(1).is_empty());
        let json = serde_json::to_string(&th).unwrap();
        let back: ThresholdVector = serde_json::from_str(&json).unwrap();
        assert_eq!(back, th);
    }

    #[test]
    fn negative_activations_never_count() {
        let c = corpus(&[[0, 3]]);
        let store = TokenActivationStore::new(
            "src",
            3,
            1,
            (0..3)
                .map(|t| ActivationEntry {
                    token: t,
                    feature: 0,
                    value: -2.0,
                })
                .collect(),
            vec![false; 3],
        )
        .unwrap();
        let scores = SentenceScores::compute(&store, &c).unwrap();
        assert_eq!(scores.score(0, 0), 0.0);
        let mut th = ThresholdVector::default();
        th.thresholds.insert(
            FeatureId::src(0),
            Threshold {
                theta: 0.0,
                rule: ThresholdRule::Quantile,
                nonzero_sentences: 0,
            },
        );
        assert!(presence_from_scores(&scores, &th).rows[0].is_empty());
    }

    #[test]
    fn threshold_is_strict() {
        let c = corpus(&[[0, 1]]);
        let store = TokenActivationStore::new(
            "src",
            1,
            1,
            vec![ActivationEntry {
                token: 0,
                feature: 0,
                value: 2.5,
            }],
            vec![false],
        )
        .unwrap();
        let mut th = ThresholdVector::default();
        th.thresholds.insert(
            FeatureId::src(0),
            Threshold {
                theta: 2.5,
                rule: ThresholdRule::Quantile,
                nonzero_sentences: 1,
            },
        );
        assert!(sentence_presence(&store, &c, &th).unwrap().rows[0].is_empty());
    }

    #[test]
    fn special_tokens_are_excluded() {
        let c = corpus(&[[0, 2]]);
        let store = TokenActivationStore::new(
            "src",
            2,
            1,
            vec![
                ActivationEntry {
                    token: 0,
                    feature: 0,
                    value: 9.0,
                },
                ActivationEntry {
                    token: 1,
                    feature: 0,
                    value: 1.0,
                },
            ],
            vec![true, false],
        )
        .unwrap();
        assert_eq!(
            SentenceScores::compute(&store, &c).unwrap().score(0, 0),
            1.0
        );
    }

    #[test]
    fn empty_universe_is_config_error() {
        let c = corpus(&[[0, 1]]);
        let store = TokenActivationStore::new("src", 1, 1, vec![], vec![false]).unwrap();
        assert!(matches!(
            calibrate_thresholds(&store, &c, &[], 0.9),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn lifting_nothing_gives_nothing() {
        let c = corpus(&[[0, 1], [1, 2]]);
        let x = PresenceMatrix {
            granularity: Granularity::Sentence,
            features: vec![FeatureId::src(0)],
            rows: vec![vec![], vec![]],
        };
        for g in [
            Granularity::Paragraph,
            Granularity::Subchapter,
            Granularity::Chapter,
        ] {
            assert!(lift_presence(&x, &c, g).rows.iter().all(Vec::is_empty));
        }
    }
}
