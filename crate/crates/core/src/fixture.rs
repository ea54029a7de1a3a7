//! Deterministic synthetic book, contrast corpus, dictionaries and transcoder
//! with planted concepts. Used by tests, benches and `forge` demos.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::ids::{FeatureId, Site};
use crate::ingest::{
    save_activation_store, ActivationEntry, CatalogEntry, ChapterRecord, CorpusData,
    CorpusDocument, CorpusStructure, FeatureCatalog, IngestInputs, Ingested, ParagraphRecord,
    SentenceRecord, SparseStack, SubchapterRecord, TokenActivationStore, LATENT_SITE,
    TARGET_CORPUS,
};

pub const CONTRAST_CORPUS: &str = "travel";

/// Keywords per (chapter, subchapter).
const TOPICS: [[&[&str]; 3]; 3] = [
    [
        &["glacier", "moraine", "erosion", "canyon", "boulder"],
        &["volcano", "magma", "basalt", "caldera"],
        &["fossil", "sediment", "limestone", "quartz"],
    ],
    [
        &["enzyme", "protein", "ribosome", "membrane", "nucleus"],
        &["pollen", "orchid", "seedling", "fern"],
        &["heron", "salmon", "beetle", "lizard"],
    ],
    [
        &["comet", "asteroid", "meteor", "crater", "orbit"],
        &["galaxy", "nebula", "quasar", "pulsar"],
        &["telescope", "spectrum", "lens", "mirror", "observatory"],
    ],
];

const CHAPTER_TITLES: [&str; 3] = ["Rocks and landforms", "Living things", "The night sky"];
const FILLER: &[&str] = &[
    "the", "a", "of", "near", "small", "large", "old", "new", "many", "some", "each", "other",
    "region", "study", "notes", "shows", "found", "seen", "and", "in",
];
const TRAVEL: &[&str] = &[
    "hotel", "ticket", "museum", "market", "harbor", "train", "bakery", "plaza",
];
/// Planted keywords that also dominate the contrast corpus.
const OFF_DOMAIN: &[&str] = &["canyon", "telescope"];
const SURFACE: &[&str] = &[
    "punctuation marks",
    "the token 'and'",
    "capitalized words",
    "newline characters",
];

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureConfig {
    pub seed: u64,
    pub paragraphs_per_subchapter: usize,
    pub sentences_per_paragraph: usize,
    pub features: usize,
    pub d_model: usize,
    pub latents: usize,
    pub embed_dim: usize,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            paragraphs_per_subchapter: 4,
            sentences_per_paragraph: 5,
            features: 200,
            d_model: 64,
            latents: 32,
            embed_dim: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConcept {
    pub keyword: String,
    pub chapter: usize,
    pub subchapter: usize,
    pub src: FeatureId,
    pub tgt: FeatureId,
    pub off_domain: bool,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub config: FixtureConfig,
    pub target: CorpusDocument,
    pub contrast: CorpusDocument,
    /// src, tgt, latent.
    pub target_stores: Vec<TokenActivationStore>,
    /// src, tgt.
    pub contrast_stores: Vec<TokenActivationStore>,
    pub stack: SparseStack,
    pub catalog: FeatureCatalog,
    pub planted: Vec<PlantedConcept>,
    /// Sentence and paragraph ids with planted content, for mechanism views.
    pub units: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct FixturePaths {
    pub dir: PathBuf,
    pub inputs: IngestInputs,
    pub units: Vec<String>,
}

#[derive(Clone, Copy, PartialEq)]
enum Noise {
    Dead,
    Sparse,
    Medium,
    Broad,
    Bos,
}

struct Sentence {
    words: Vec<String>,
    chapter: usize,
}

fn planted_index(j: usize) -> u32 {
    (j * 5) as u32
}

fn noise_kind(i: usize) -> Noise {
    match i % 16 {
        1 if i == 1 => Noise::Bos,
        0..=1 => Noise::Dead,
        2..=6 => Noise::Sparse,
        7..=14 => Noise::Medium,
        _ => Noise::Broad,
    }
}

fn unit_vec(rng: &mut ChaCha8Rng, d: usize) -> DVector<f64> {
    let v = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let n = v.norm();
    v / n
}

fn book(rng: &mut ChaCha8Rng, config: &FixtureConfig) -> Vec<Sentence> {
    let mut out = Vec::new();
    for (c, subs) in TOPICS.iter().enumerate() {
        for (s, kws) in subs.iter().enumerate() {
            for _ in 0..config.paragraphs_per_subchapter * config.sentences_per_paragraph {
                let mut words: Vec<String> =
                    kws.choose_multiple(rng, 2).map(|w| w.to_string()).collect();
                if rng.random_bool(0.2) {
                    let other = (s + rng.random_range(1..3)) % 3;
                    words.push(subs[other].choose(rng).unwrap().to_string());
                }
                for _ in 0..rng.random_range(4..7) {
                    words.push(FILLER.choose(rng).unwrap().to_string());
                }
                words.shuffle(rng);
                out.push(Sentence { words, chapter: c });
            }
        }
    }
    out
}

fn travel_guide(rng: &mut ChaCha8Rng, config: &FixtureConfig) -> Vec<Sentence> {
    let mut out = Vec::new();
    for _ in 0..2 {
        for _ in 0..3 * config.sentences_per_paragraph {
            let mut words: Vec<String> = TRAVEL
                .choose_multiple(rng, 2)
                .map(|w| w.to_string())
                .collect();
            for kw in OFF_DOMAIN {
                if rng.random_bool(0.6) {
                    words.push(kw.to_string());
                }
            }
            for _ in 0..rng.random_range(4..7) {
                words.push(FILLER.choose(rng).unwrap().to_string());
            }
            words.shuffle(rng);
            out.push(Sentence { words, chapter: 0 });
        }
    }
    out
}

fn document(
    title: &str,
    prefix: &str,
    sentences: &[Sentence],
    chapters: usize,
    subs: usize,
    paras: usize,
    per_para: usize,
) -> CorpusDocument {
    let mut doc = CorpusDocument {
        title: title.into(),
        chapters: vec![],
        subchapters: vec![],
        paragraphs: vec![],
        sentences: vec![],
    };
    let mut token = 0;
    let mut si = 0;
    for c in 0..chapters {
        let ch_id = format!("{prefix}ch{}", c + 1);
        let title = if prefix.is_empty() {
            CHAPTER_TITLES[c].to_string()
        } else {
            format!("{title} part {}", c + 1)
        };
        doc.chapters.push(ChapterRecord {
            id: ch_id.clone(),
            title,
        });
        for s in 0..subs {
            let sc_id = format!("{prefix}sc{}", c * subs + s + 1);
            doc.subchapters.push(SubchapterRecord {
                id: sc_id.clone(),
                chapter_id: ch_id.clone(),
                title: format!("Section {}.{}", c + 1, s + 1),
            });
            for p in 0..paras {
                let p_id = format!("{prefix}p{}", (c * subs + s) * paras + p + 1);
                doc.paragraphs.push(ParagraphRecord {
                    id: p_id.clone(),
                    subchapter_id: sc_id.clone(),
                });
                for _ in 0..per_para {
                    let sent = &sentences[si];
                    let len = sent.words.len() + 1;
                    let mut text = sent.words.join(" ");
                    if let Some(first) = text.get(..1) {
                        text = first.to_uppercase() + &text[1..];
                    }
                    text.push('.');
                    doc.sentences.push(SentenceRecord {
                        id: format!("{prefix}s{}", si + 1),
                        token_span: [token, token + len],
                        paragraph_id: p_id.clone(),
                        subchapter_id: sc_id.clone(),
                        chapter_id: ch_id.clone(),
                        text,
                    });
                    token += len;
                    si += 1;
                }
            }
        }
    }
    doc
}

struct Activations {
    src: Vec<ActivationEntry>,
    tgt: Vec<ActivationEntry>,
    latent: Vec<ActivationEntry>,
    mask: Vec<bool>,
}

/// Token activations: token 0 of each sentence is a special token.
fn activate(
    rng: &mut ChaCha8Rng,
    sentences: &[Sentence],
    planted: &[PlantedConcept],
    config: &FixtureConfig,
    latent_reads: &[Vec<usize>],
    diffuse: bool,
) -> Activations {
    let mut acts = Activations {
        src: vec![],
        tgt: vec![],
        latent: vec![],
        mask: vec![],
    };
    let mut token = 0u32;
    for sent in sentences {
        let tokens: Vec<Option<&str>> = std::iter::once(None)
            .chain(sent.words.iter().map(|w| Some(w.as_str())))
            .collect();
        for word in tokens {
            acts.mask.push(word.is_none());
            let mut src_row = vec![0.0f32; config.features];
            let mut tgt_row = vec![0.0f32; config.features];
            for p in planted {
                let same_chapter = diffuse && p.chapter == sent.chapter;
                for (row, f) in [(&mut src_row, p.src), (&mut tgt_row, p.tgt)] {
                    if word == Some(p.keyword.as_str()) {
                        row[f.index as usize] = rng.random_range(2.0..4.0);
                    } else if same_chapter && word.is_some() && rng.random_bool(0.1) {
                        row[f.index as usize] = rng.random_range(0.05..0.4);
                    }
                }
            }
            for i in 0..config.features {
                for row in [&mut src_row, &mut tgt_row] {
                    if row[i] != 0.0 || planted.iter().any(|p| p.src.index as usize == i) {
                        continue;
                    }
                    let v = match (noise_kind(i), word) {
                        (Noise::Bos, None) => 8.0,
                        (Noise::Sparse, Some(_)) if rng.random_bool(0.004) => {
                            rng.random_range(0.1..1.5)
                        }
                        (Noise::Medium, Some(_)) if rng.random_bool(0.02) => {
                            rng.random_range(0.1..1.5)
                        }
                        (Noise::Broad, Some(_)) if rng.random_bool(0.1) => {
                            rng.random_range(0.1..1.5)
                        }
                        _ => 0.0,
                    };
                    row[i] = v;
                }
            }
            for (i, &v) in src_row.iter().enumerate() {
                if v != 0.0 {
                    acts.src.push(ActivationEntry {
                        token,
                        feature: i as u32,
                        value: v,
                    });
                }
            }
            for (i, &v) in tgt_row.iter().enumerate() {
                if v != 0.0 {
                    acts.tgt.push(ActivationEntry {
                        token,
                        feature: i as u32,
                        value: v,
                    });
                }
            }
            for (k, reads) in latent_reads.iter().enumerate() {
                let mut t: f32 = reads
                    .iter()
                    .map(|&j| src_row[planted[j].src.index as usize])
                    .sum();
                if t == 0.0 && word.is_some() && rng.random_bool(0.01) {
                    t = -rng.random_range(0.1f32..0.5);
                }
                if t != 0.0 {
                    acts.latent.push(ActivationEntry {
                        token,
                        feature: k as u32,
                        value: t,
                    });
                }
            }
            token += 1;
        }
    }
    acts
}

pub fn generate_fixture(config: &FixtureConfig) -> Result<Fixture> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let planted_count: usize = TOPICS.iter().flatten().map(|s| s.len()).sum();
    if config.features < planted_count * 5 {
        return Err(Error::Config(format!(
            "fixture needs at least {} features per site",
            planted_count * 5
        )));
    }
    let mut planted = Vec::new();
    for (c, subs) in TOPICS.iter().enumerate() {
        for (s, kws) in subs.iter().enumerate() {
            for kw in kws.iter() {
                let j = planted.len();
                planted.push(PlantedConcept {
                    keyword: kw.to_string(),
                    chapter: c,
                    subchapter: s,
                    src: FeatureId::src(planted_index(j)),
                    tgt: FeatureId::tgt(planted_index(j)),
                    off_domain: OFF_DOMAIN.contains(kw),
                });
            }
        }
    }

    // Latent k reads planted sources {k, k + K} and writes to the targets of
    // those concepts plus the next concept in the same subchapter.
    let k_count = config.latents;
    let reads: Vec<Vec<usize>> = (0..k_count)
        .map(|k| (k..planted.len()).step_by(k_count).collect())
        .collect();
    let writes: Vec<Vec<usize>> = reads
        .iter()
        .map(|r| {
            let mut w = r.clone();
            for &j in r {
                if let Some(next) = (j + 1..planted.len()).find(|&n| {
                    planted[n].subchapter == planted[j].subchapter
                        && planted[n].chapter == planted[j].chapter
                }) {
                    w.push(next);
                }
            }
            w.sort_unstable();
            w.dedup();
            w
        })
        .collect();

    let (d, f) = (config.d_model, config.features);
    let d_src = DMatrix::from_columns(&(0..f).map(|_| unit_vec(&mut rng, d)).collect::<Vec<_>>());
    let d_tgt = DMatrix::from_columns(&(0..f).map(|_| unit_vec(&mut rng, d)).collect::<Vec<_>>());
    let mut read = DMatrix::zeros(k_count, d);
    let mut write = DMatrix::zeros(d, k_count);
    for k in 0..k_count {
        for &j in &reads[k] {
            let col = d_src.column(planted[j].src.index as usize);
            for x in 0..d {
                read[(k, x)] += col[x];
            }
        }
        for &j in &writes[k] {
            let col = d_tgt.column(planted[j].tgt.index as usize);
            for x in 0..d {
                write[(x, k)] += col[x];
            }
        }
    }
    let stack = SparseStack::new(
        d_src.transpose(),
        d_src,
        d_tgt.transpose(),
        d_tgt,
        read,
        write,
    )?;

    let centers: Vec<DVector<f64>> = (0..3)
        .map(|_| unit_vec(&mut rng, config.embed_dim) * 10.0)
        .collect();
    let sub_offsets: Vec<DVector<f64>> = (0..9)
        .map(|_| unit_vec(&mut rng, config.embed_dim) * 3.0)
        .collect();
    let site_offsets: Vec<DVector<f64>> = (0..2)
        .map(|_| unit_vec(&mut rng, config.embed_dim) * 6.0)
        .collect();
    let mut entries = Vec::new();
    for (s, site) in Site::ALL.into_iter().enumerate() {
        for i in 0..f as u32 {
            let id = FeatureId::new(site, i);
            let noise = DVector::from_fn(config.embed_dim, |_, _| {
                0.5 * rng.sample::<f64, _>(StandardNormal)
            });
            let (description, embedding) = match planted.iter().find(|p| p.src.index == i) {
                Some(p) => {
                    let at = &centers[p.chapter]
                        + &sub_offsets[p.chapter * 3 + p.subchapter]
                        + &site_offsets[s];
                    (format!("{} use", p.keyword), at + noise)
                }
                None => {
                    let desc = match i % 4 {
                        0 => String::new(),
                        1 => SURFACE[(i as usize / 4) % SURFACE.len()].to_string(),
                        _ => format!("vague pattern {i}"),
                    };
                    (desc, noise * 8.0)
                }
            };
            entries.push(CatalogEntry {
                id,
                description,
                embedding: Some(embedding.iter().copied().collect()),
                source: "fixture".into(),
            });
        }
    }
    let catalog = FeatureCatalog::new(entries)?;

    let sentences = book(&mut rng, config);
    let per_sub = config.paragraphs_per_subchapter;
    let target = document(
        "A field guide to everything",
        "",
        &sentences,
        3,
        3,
        per_sub,
        config.sentences_per_paragraph,
    );
    let contrast_sentences = travel_guide(&mut rng, config);
    let contrast = document(
        "City travel guide",
        "x-",
        &contrast_sentences,
        1,
        2,
        3,
        config.sentences_per_paragraph,
    );

    let t = activate(&mut rng, &sentences, &planted, config, &reads, true);
    let c = activate(
        &mut rng,
        &contrast_sentences,
        &planted,
        config,
        &reads,
        false,
    );
    let n_t = t.mask.len();
    let n_c = c.mask.len();
    let target_stores = vec![
        TokenActivationStore::new("src", n_t, f, t.src, t.mask.clone())?,
        TokenActivationStore::new("tgt", n_t, f, t.tgt, t.mask.clone())?,
        TokenActivationStore::new(LATENT_SITE, n_t, k_count, t.latent, t.mask)?,
    ];
    let contrast_stores = vec![
        TokenActivationStore::new("src", n_c, f, c.src, c.mask.clone())?,
        TokenActivationStore::new("tgt", n_c, f, c.tgt, c.mask)?,
    ];

    let mut units: Vec<String> = target
        .sentences
        .iter()
        .filter(|s| {
            planted
                .iter()
                .filter(|p| crate::util::contains_word(&s.text, &p.keyword))
                .count()
                >= 2
        })
        .step_by(40)
        .map(|s| s.id.clone())
        .collect();
    units.push(target.paragraphs[0].id.clone());

    Ok(Fixture {
        config: config.clone(),
        target,
        contrast,
        target_stores,
        contrast_stores,
        stack,
        catalog,
        planted,
        units,
    })
}

impl Fixture {
    pub fn ingested(&self) -> Result<Ingested> {
        let target = CorpusData::new(
            TARGET_CORPUS,
            CorpusStructure::from_document(self.target.clone())?,
            self.target_stores.clone(),
        )?;
        let contrast = CorpusData::new(
            CONTRAST_CORPUS,
            CorpusStructure::from_document(self.contrast.clone())?,
            self.contrast_stores.clone(),
        )?;
        Ingested::new(
            target,
            vec![contrast],
            self.stack.clone(),
            self.catalog.clone(),
        )
    }

    /// Writes the raw inputs in their on-disk formats.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<FixturePaths> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let mut inputs = IngestInputs {
            stack_dir: dir.join("stack"),
            catalog: dir.join("catalog.json"),
            ..Default::default()
        };
        for (name, doc, stores) in [
            (TARGET_CORPUS, &self.target, &self.target_stores),
            (CONTRAST_CORPUS, &self.contrast, &self.contrast_stores),
        ] {
            let path = dir.join(format!("{name}.corpus.json"));
            let text = serde_json::to_string_pretty(doc)?;
            std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            inputs.corpora.push((name.to_string(), path));
            for store in stores.iter() {
                let path = dir.join(format!("{name}.{}.act", store.site_id()));
                save_activation_store(store, &path)?;
                inputs
                    .activations
                    .push((name.to_string(), store.site_id().to_string(), path));
            }
        }
        self.stack.save(&inputs.stack_dir)?;
        std::fs::write(&inputs.catalog, self.catalog.to_json())
            .map_err(|e| Error::io(&inputs.catalog, e))?;
        Ok(FixturePaths {
            dir,
            inputs,
            units: self.units.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::StubClient;
    use crate::filter::RetainedUniverse;
    use crate::pipeline::{run_pipeline, PipelineConfig};
    use crate::workspace::{files, Workspace};

    #[test]
    fn deterministic_and_shaped() {
        let a = generate_fixture(&FixtureConfig::default()).unwrap();
        let b = generate_fixture(&FixtureConfig::default()).unwrap();
        assert_eq!(a.target, b.target);
        assert_eq!(a.target.sentences.len(), 180);
        assert_eq!(a.contrast.sentences.len(), 30);
        assert_eq!(a.planted.len(), 40);
        assert!(!a.units.is_empty());
        a.ingested().unwrap();
    }

    #[test]
    fn pipeline_recovers_planted_concepts() {
        let fx = generate_fixture(&FixtureConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let paths = fx.write(dir.path().join("raw")).unwrap();
        let ws = Workspace::create(dir.path().join("ws")).unwrap();
        run_pipeline(
            &ws,
            &paths.inputs,
            &paths.units,
            &PipelineConfig::default(),
            &StubClient,
        )
        .unwrap();
        let u: RetainedUniverse = ws.read_json(files::UNIVERSE).unwrap();
        let in_domain: Vec<_> = fx
            .planted
            .iter()
            .filter(|p| !p.off_domain)
            .flat_map(|p| [p.src, p.tgt])
            .collect();
        let hits = in_domain.iter().filter(|f| u.contains(**f)).count();
        assert!(
            hits * 10 >= in_domain.len() * 9,
            "{hits}/{}",
            in_domain.len()
        );
        for p in fx.planted.iter().filter(|p| p.off_domain) {
            assert!(!u.contains(p.src) && !u.contains(p.tgt), "{}", p.keyword);
        }
        let planted: std::collections::BTreeSet<_> =
            fx.planted.iter().flat_map(|p| [p.src, p.tgt]).collect();
        assert!(u.features.iter().all(|f| planted.contains(f)));
    }
}
