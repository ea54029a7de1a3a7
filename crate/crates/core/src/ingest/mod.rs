//! Loading and validating every external artifact.

mod activations;
mod catalog;
mod corpus;
mod matrix;
mod stack;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use activations::{
    load_activation_store, save_activation_store, ActivationEntry, TokenActivationStore,
    ACTIVATION_MAGIC,
};
pub use catalog::{load_feature_catalog, CatalogEntry, FeatureCatalog};
pub use corpus::{
    load_corpus_structure, ChapterRecord, CorpusDocument, CorpusStructure, ParagraphRecord,
    SentenceRecord, SubchapterRecord, Unit,
};
pub use matrix::{load_matrix, read_matrix, save_matrix, write_matrix, MATRIX_MAGIC};
pub use stack::{load_sparse_stack, ShapeReport, SparseStack, STACK_FILES};

use crate::error::{Error, Result};
use crate::ids::Site;

/// Name of the corpus every analysis runs on; all others are contrasts.
pub const TARGET_CORPUS: &str = "target";
/// Site id of the transcoder latent activations.
pub const LATENT_SITE: &str = "latent";

/// One corpus with the activation stores recorded over it, keyed by site id.
#[derive(Debug, Clone)]
pub struct CorpusData {
    pub name: String,
    pub corpus: CorpusStructure,
    pub stores: BTreeMap<String, TokenActivationStore>,
}

impl CorpusData {
    pub fn new(
        name: impl Into<String>,
        corpus: CorpusStructure,
        stores: Vec<TokenActivationStore>,
    ) -> Result<Self> {
        let name = name.into();
        let mut map = BTreeMap::new();
        let mut num_tokens = None;
        for store in stores {
            if *num_tokens.get_or_insert(store.num_tokens()) != store.num_tokens() {
                return Err(Error::Shape(format!(
                    "corpus `{name}`: store `{}` has {} tokens, others have {}",
                    store.site_id(),
                    store.num_tokens(),
                    num_tokens.unwrap()
                )));
            }
            corpus.check_token_range(store.num_tokens())?;
            if map.insert(store.site_id().to_string(), store).is_some() {
                return Err(Error::Config(format!(
                    "corpus `{name}` has two stores for one site"
                )));
            }
        }
        Ok(Self {
            name,
            corpus,
            stores: map,
        })
    }

    pub fn store(&self, site: Site) -> Result<&TokenActivationStore> {
        self.site(site.as_str())
    }

    pub fn site(&self, site_id: &str) -> Result<&TokenActivationStore> {
        self.stores.get(site_id).ok_or_else(|| {
            Error::NotFound(format!(
                "corpus `{}` has no `{site_id}` activations",
                self.name
            ))
        })
    }
}

/// Everything downstream stages read. Immutable once built.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub target: CorpusData,
    pub contrasts: Vec<CorpusData>,
    pub stack: SparseStack,
    pub catalog: FeatureCatalog,
}

impl Ingested {
    /// Cross-checks stores against the stack and the catalog.
    pub fn new(
        target: CorpusData,
        contrasts: Vec<CorpusData>,
        stack: SparseStack,
        catalog: FeatureCatalog,
    ) -> Result<Self> {
        let shape = stack.shape();
        for data in std::iter::once(&target).chain(&contrasts) {
            for (site_id, store) in &data.stores {
                let expected = match site_id.as_str() {
                    "src" => shape.f_src,
                    "tgt" => shape.f_tgt,
                    LATENT_SITE => shape.k,
                    other => {
                        return Err(Error::Config(format!(
                            "corpus `{}`: unknown site `{other}` (expected src, tgt or latent)",
                            data.name
                        )))
                    }
                };
                if store.num_features() != expected {
                    return Err(Error::Shape(format!(
                        "corpus `{}` site `{site_id}` has {} features, stack expects {expected}",
                        data.name,
                        store.num_features()
                    )));
                }
            }
        }
        for site in [Site::Src, Site::Tgt] {
            target.store(site)?;
        }
        target.site(LATENT_SITE)?;
        catalog.check_covers(Site::Src, shape.f_src)?;
        catalog.check_covers(Site::Tgt, shape.f_tgt)?;
        Ok(Self {
            target,
            contrasts,
            stack,
            catalog,
        })
    }

    pub fn num_features(&self, site: Site) -> usize {
        let s = self.stack.shape();
        match site {
            Site::Src => s.f_src,
            Site::Tgt => s.f_tgt,
        }
    }
}

/// Source locations for `forge ingest`.
#[derive(Debug, Clone, Default)]
pub struct IngestInputs {
    /// `(corpus name, site id, path)`.
    pub activations: Vec<(String, String, PathBuf)>,
    /// `(corpus name, path)`.
    pub corpora: Vec<(String, PathBuf)>,
    pub stack_dir: PathBuf,
    pub catalog: PathBuf,
}

pub fn ingest(inputs: &IngestInputs) -> Result<Ingested> {
    let mut target = None;
    let mut contrasts = Vec::new();
    for (name, corpus_path) in &inputs.corpora {
        let corpus = load_corpus_structure(corpus_path)?;
        let stores = inputs
            .activations
            .iter()
            .filter(|(c, _, _)| c == name)
            .map(|(_, site, path)| load_activation_store(path, site))
            .collect::<Result<Vec<_>>>()?;
        let data = CorpusData::new(name.clone(), corpus, stores)?;
        if name == TARGET_CORPUS {
            target = Some(data);
        } else {
            contrasts.push(data);
        }
    }
    if let Some((c, _, _)) = inputs
        .activations
        .iter()
        .find(|(c, _, _)| !inputs.corpora.iter().any(|(n, _)| n == c))
    {
        return Err(Error::Config(format!(
            "activations reference unknown corpus `{c}`"
        )));
    }
    let target =
        target.ok_or_else(|| Error::Config(format!("no `{TARGET_CORPUS}` corpus given")))?;
    let stack = load_sparse_stack(&inputs.stack_dir)?;
    let catalog = load_feature_catalog(&inputs.catalog)?;
    Ingested::new(target, contrasts, stack, catalog)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub name: String,
    pub corpus: String,
    pub num_tokens: usize,
    pub num_sentences: usize,
    pub stores: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestManifest {
    pub format_version: u32,
    pub corpora: Vec<CorpusManifest>,
    pub stack_dir: String,
    pub catalog: String,
    pub shape: ShapeReport,
    pub corpus_hash: String,
}

/// Writes canonical copies of all inputs under `data_dir` and returns the manifest.
pub fn write_ingested(data: &Ingested, data_dir: &Path) -> Result<IngestManifest> {
    std::fs::create_dir_all(data_dir).map_err(|e| Error::io(data_dir, e))?;
    let mut corpora = Vec::new();
    for cd in std::iter::once(&data.target).chain(&data.contrasts) {
        let corpus_file = format!("{}.corpus.json", cd.name);
        let path = data_dir.join(&corpus_file);
        std::fs::write(&path, cd.corpus.to_json()).map_err(|e| Error::io(&path, e))?;
        let mut stores = BTreeMap::new();
        let mut num_tokens = 0;
        for (site, store) in &cd.stores {
            let file = format!("{}.{site}.act", cd.name);
            save_activation_store(store, data_dir.join(&file))?;
            stores.insert(site.clone(), file);
            num_tokens = store.num_tokens();
        }
        corpora.push(CorpusManifest {
            name: cd.name.clone(),
            corpus: corpus_file,
            num_tokens,
            num_sentences: cd.corpus.num_sentences(),
            stores,
        });
    }
    data.stack.save(data_dir.join("stack"))?;
    let catalog_path = data_dir.join("catalog.json");
    std::fs::write(&catalog_path, data.catalog.to_json())
        .map_err(|e| Error::io(&catalog_path, e))?;
    Ok(IngestManifest {
        format_version: 1,
        corpora,
        stack_dir: "stack".into(),
        catalog: "catalog.json".into(),
        shape: data.stack.shape(),
        corpus_hash: crate::util::sha256_hex(data.target.corpus.to_json().as_bytes()),
    })
}

/// Reloads what [`write_ingested`] produced.
pub fn read_ingested(manifest: &IngestManifest, data_dir: &Path) -> Result<Ingested> {
    let mut target = None;
    let mut contrasts = Vec::new();
    for cm in &manifest.corpora {
        let corpus = load_corpus_structure(data_dir.join(&cm.corpus))?;
        let stores = cm
            .stores
            .iter()
            .map(|(site, file)| load_activation_store(data_dir.join(file), site))
            .collect::<Result<Vec<_>>>()?;
        let cd = CorpusData::new(cm.name.clone(), corpus, stores)?;
        if cm.name == TARGET_CORPUS {
            target = Some(cd);
        } else {
            contrasts.push(cd);
        }
    }
    let target = target.ok_or_else(|| Error::Config("workspace has no target corpus".into()))?;
    let stack = load_sparse_stack(data_dir.join(&manifest.stack_dir))?;
    let catalog = load_feature_catalog(data_dir.join(&manifest.catalog))?;
    Ingested::new(target, contrasts, stack, catalog)
}
