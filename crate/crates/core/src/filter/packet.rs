use std::collections::{BTreeMap, BTreeSet};

use regex::{RegexSet, RegexSetBuilder};
use serde::{Deserialize, Serialize};

use super::{FeatureStats, ShortlistConfig, SiteEvidence};
use crate::error::{Error, Result};
use crate::ids::{FeatureId, Granularity};
use crate::ingest::{CorpusStructure, FeatureCatalog};
use crate::util;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreenLabel {
    Candidate,
    SurfaceForm,
    Missing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSentence {
    pub corpus: String,
    pub sentence_id: String,
    pub text: String,
    pub activation: f64,
    pub present: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitContext {
    pub id: String,
    pub title: String,
    pub chapter_id: String,
    pub chapter_title: String,
    /// Sum of sentence scores of the feature inside the unit.
    pub strength: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidencePacket {
    pub feature: FeatureId,
    pub description: String,
    pub screen_label: ScreenLabel,
    /// Rejected before any client call (non-candidate screen label).
    pub local_reject: bool,
    pub target_evidence: Vec<EvidenceSentence>,
    pub contrast_evidence: Vec<EvidenceSentence>,
    pub activated_units: Vec<UnitContext>,
    pub comparator_units: Vec<UnitContext>,
    pub chapters: Vec<(String, String)>,
    pub reasons: Vec<String>,
    /// Features whose description embeddings have cosine >= the configured cutoff.
    pub duplicate_hints: Vec<FeatureId>,
    pub stats: FeatureStats,
}

impl EvidencePacket {
    pub fn evidence_ids(&self) -> BTreeSet<&str> {
        self.target_evidence
            .iter()
            .chain(&self.contrast_evidence)
            .map(|s| s.sentence_id.as_str())
            .collect()
    }
}

/// Surface-form patterns compiled once, matched case-insensitively.
#[derive(Debug, Clone)]
pub struct SurfaceScreen(RegexSet);

impl SurfaceScreen {
    pub fn new(config: &ShortlistConfig) -> Result<Self> {
        RegexSetBuilder::new(&config.surface_patterns)
            .case_insensitive(true)
            .build()
            .map(Self)
            .map_err(|e| Error::Config(format!("bad surface pattern: {e}")))
    }

    pub fn label(&self, description: &str) -> ScreenLabel {
        if description.trim().is_empty() {
            ScreenLabel::Missing
        } else if self.0.is_match(description) {
            ScreenLabel::SurfaceForm
        } else {
            ScreenLabel::Candidate
        }
    }
}

pub fn screen_description(description: &str, config: &ShortlistConfig) -> Result<ScreenLabel> {
    Ok(SurfaceScreen::new(config)?.label(description))
}

/// Pairs of features whose description embeddings are near-duplicates.
pub fn duplicate_hints(
    ids: &[FeatureId],
    catalog: &FeatureCatalog,
    cutoff: f64,
) -> BTreeMap<FeatureId, Vec<FeatureId>> {
    let mut hints: BTreeMap<FeatureId, Vec<FeatureId>> = BTreeMap::new();
    let embedded: Vec<(FeatureId, &[f64])> = ids
        .iter()
        .filter_map(|&id| catalog.embedding(id).map(|e| (id, e)))
        .collect();
    for (i, &(a, ea)) in embedded.iter().enumerate() {
        for &(b, eb) in &embedded[i + 1..] {
            if ea.len() == eb.len() && util::cosine(ea, eb) >= cutoff {
                hints.entry(a).or_default().push(b);
                hints.entry(b).or_default().push(a);
            }
        }
    }
    for v in hints.values_mut() {
        v.sort();
    }
    hints
}

pub struct PacketContext<'a> {
    pub evidence: &'a SiteEvidence,
    pub target_corpus: &'a CorpusStructure,
    /// Contrast corpora in the same order as `evidence.contrasts`.
    pub contrast_corpora: Vec<&'a CorpusStructure>,
    pub catalog: &'a FeatureCatalog,
    pub config: &'a ShortlistConfig,
    pub screen: &'a SurfaceScreen,
}

fn top_sentences(
    scored: impl Iterator<Item = (usize, f64)>,
    theta: f64,
    corpus: &CorpusStructure,
    corpus_name: &str,
    n: usize,
) -> Vec<EvidenceSentence> {
    let mut all: Vec<(usize, f64)> = scored.filter(|&(_, m)| m > 0.0).collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    all.into_iter()
        .take(n)
        .map(|(s, m)| EvidenceSentence {
            corpus: corpus_name.to_string(),
            sentence_id: corpus.sentence(s).id.clone(),
            text: corpus.sentence(s).text.clone(),
            activation: m,
            present: m > theta,
        })
        .collect()
}

fn unit_context(corpus: &CorpusStructure, sub: usize, strength: f64) -> UnitContext {
    let unit = &corpus.units(Granularity::Subchapter)[sub];
    let chapter = &corpus.units(Granularity::Chapter)[unit.parent.expect("subchapter parent")];
    UnitContext {
        id: unit.id.clone(),
        title: unit.title.clone(),
        chapter_id: chapter.id.clone(),
        chapter_title: chapter.title.clone(),
        strength,
    }
}

/// Auditable record for one shortlisted feature.
pub fn build_evidence_packet(
    feature: FeatureId,
    stats: &FeatureStats,
    reasons: &[String],
    duplicates: &[FeatureId],
    ctx: &PacketContext<'_>,
) -> Result<EvidencePacket> {
    let ev = ctx.evidence;
    if feature.site != ev.site || feature.index as usize >= ev.target_scores.num_features {
        return Err(Error::NotFound(format!(
            "feature {feature} is not in the {} inventory",
            ev.site
        )));
    }
    let f = feature.index;
    let theta = ev.theta(f);
    let n = ctx.config.evidence_sentences;
    let corpus = ctx.target_corpus;

    let target_evidence = top_sentences(
        (0..corpus.num_sentences()).map(|s| (s, ev.target_scores.score(s, f))),
        theta,
        corpus,
        crate::ingest::TARGET_CORPUS,
        n,
    );
    let mut contrast_evidence: Vec<EvidenceSentence> = ev
        .contrasts
        .iter()
        .zip(&ctx.contrast_corpora)
        .flat_map(|(c, cc)| {
            top_sentences(
                (0..cc.num_sentences()).map(|s| (s, c.scores.score(s, f))),
                theta,
                cc,
                &c.name,
                n,
            )
        })
        .collect();
    contrast_evidence.sort_by(|a, b| {
        b.activation
            .total_cmp(&a.activation)
            .then_with(|| (&a.corpus, &a.sentence_id).cmp(&(&b.corpus, &b.sentence_id)))
    });
    contrast_evidence.truncate(n);

    let mut strength: BTreeMap<usize, f64> = BTreeMap::new();
    let mut activated: BTreeSet<usize> = BTreeSet::new();
    for s in 0..corpus.num_sentences() {
        let m = ev.target_scores.score(s, f);
        if m > 0.0 {
            let sub = corpus.sentence_unit(s, Granularity::Subchapter);
            *strength.entry(sub).or_default() += m;
            if m > theta {
                activated.insert(sub);
            }
        }
    }
    let activated_units: Vec<UnitContext> = activated
        .iter()
        .map(|&u| unit_context(corpus, u, strength.get(&u).copied().unwrap_or(0.0)))
        .collect();
    let mut others: Vec<(usize, f64)> = (0..corpus.num_units(Granularity::Subchapter))
        .filter(|u| !activated.contains(u))
        .map(|u| (u, strength.get(&u).copied().unwrap_or(0.0)))
        .collect();
    others.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let comparator_units = others
        .into_iter()
        .take(activated.len())
        .map(|(u, s)| unit_context(corpus, u, s))
        .collect();
    let chapters: BTreeSet<(String, String)> = activated_units
        .iter()
        .map(|u: &UnitContext| (u.chapter_id.clone(), u.chapter_title.clone()))
        .collect();

    let description = ctx.catalog.description(feature).to_string();
    let screen_label = ctx.screen.label(&description);
    Ok(EvidencePacket {
        feature,
        local_reject: screen_label != ScreenLabel::Candidate,
        screen_label,
        description,
        target_evidence,
        contrast_evidence,
        activated_units,
        comparator_units,
        chapters: chapters.into_iter().collect(),
        reasons: reasons.to_vec(),
        duplicate_hints: duplicates.to_vec(),
        stats: stats.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn screen_labels() {
        let config = ShortlistConfig::default();
        assert_eq!(
            screen_description("  ", &config).unwrap(),
            ScreenLabel::Missing
        );
        assert_eq!(
            screen_description("Punctuation marks", &config).unwrap(),
            ScreenLabel::SurfaceForm
        );
        assert_eq!(
            screen_description("the word 'the'", &config).unwrap(),
            ScreenLabel::SurfaceForm
        );
        assert_eq!(
            screen_description("cell membrane transport", &config).unwrap(),
            ScreenLabel::Candidate
        );
    }
}
