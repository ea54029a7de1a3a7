use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{FeatureId, Site};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub id: FeatureId,
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
    #[serde(default)]
    pub source: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CatalogFile", into = "CatalogFile")]
pub struct FeatureCatalog {
    features: Vec<CatalogEntry>,
    index: BTreeMap<FeatureId, usize>,
}

#[derive(Serialize, Deserialize)]
struct CatalogFile {
    features: Vec<CatalogEntry>,
}

impl TryFrom<CatalogFile> for FeatureCatalog {
    type Error = Error;

    fn try_from(file: CatalogFile) -> Result<Self> {
        FeatureCatalog::new(file.features)
    }
}

impl From<FeatureCatalog> for CatalogFile {
    fn from(catalog: FeatureCatalog) -> Self {
        CatalogFile {
            features: catalog.features,
        }
    }
}

impl FeatureCatalog {
    pub fn new(mut features: Vec<CatalogEntry>) -> Result<Self> {
        features.sort_by_key(|f| f.id);
        let mut index = BTreeMap::new();
        for (i, f) in features.iter().enumerate() {
            if index.insert(f.id, i).is_some() {
                return Err(Error::Schema(format!("duplicate catalog row for {}", f.id)));
            }
            if let Some(emb) = &f.embedding {
                if emb.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Value(format!("non-finite embedding for {}", f.id)));
                }
            }
        }
        Ok(Self { features, index })
    }

    pub fn get(&self, id: FeatureId) -> Option<&CatalogEntry> {
        self.index.get(&id).map(|&i| &self.features[i])
    }

    /// Description text, empty when the feature has none or no row.
    pub fn description(&self, id: FeatureId) -> &str {
        self.get(id).map(|f| f.description.as_str()).unwrap_or("")
    }

    pub fn embedding(&self, id: FeatureId) -> Option<&[f64]> {
        self.get(id).and_then(|f| f.embedding.as_deref())
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.features
    }

    /// Every feature below `num_features` at `site` must have a row.
    pub fn check_covers(&self, site: Site, num_features: usize) -> Result<()> {
        match (0..num_features as u32)
            .map(|i| FeatureId::new(site, i))
            .find(|id| !self.index.contains_key(id))
        {
            Some(missing) => Err(Error::Schema(format!("catalog has no row for {missing}"))),
            None => Ok(()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }
}

pub fn load_feature_catalog(path: impl AsRef<Path>) -> Result<FeatureCatalog> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: CatalogFile = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    FeatureCatalog::new(file.features)
}
