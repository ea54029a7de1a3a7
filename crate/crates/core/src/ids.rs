//! Identifiers shared across every stage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

/// Which SAE dictionary a feature belongs to: the source site read by the
/// transcoder or the target site it writes into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Site {
    Src,
    Tgt,
}

impl Site {
    pub const ALL: [Site; 2] = [Site::Src, Site::Tgt];

    pub fn as_str(self) -> &'static str {
        match self {
            Site::Src => "src",
            Site::Tgt => "tgt",
        }
    }
}

impl fmt::Display for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Site {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "src" => Ok(Site::Src),
            "tgt" => Ok(Site::Tgt),
            other => Err(Error::Value(format!("unknown site `{other}`"))),
        }
    }
}

/// A dictionary feature, addressed by site and index. Serialized as `"src:12"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FeatureId {
    pub site: Site,
    pub index: u32,
}

impl FeatureId {
    pub const fn new(site: Site, index: u32) -> Self {
        Self { site, index }
    }

    pub const fn src(index: u32) -> Self {
        Self::new(Site::Src, index)
    }

    pub const fn tgt(index: u32) -> Self {
        Self::new(Site::Tgt, index)
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.site, self.index)
    }
}

impl FromStr for FeatureId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (site, index) = s.split_once(':').ok_or_else(|| {
            Error::Value(format!("feature id `{s}` is not of the form site:index"))
        })?;
        let index = index
            .parse()
            .map_err(|_| Error::Value(format!("feature id `{s}` has a non-numeric index")))?;
        Ok(Self {
            site: site.parse()?,
            index,
        })
    }
}

impl Serialize for FeatureId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FeatureId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Textual unit sizes, finest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Sentence,
    Paragraph,
    Subchapter,
    Chapter,
}

impl Granularity {
    pub const ALL: [Granularity; 4] = [
        Granularity::Sentence,
        Granularity::Paragraph,
        Granularity::Subchapter,
        Granularity::Chapter,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Sentence => "sentence",
            Granularity::Paragraph => "paragraph",
            Granularity::Subchapter => "subchapter",
            Granularity::Chapter => "chapter",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Granularity::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| Error::Value(format!("unknown granularity `{s}`")))
    }
}
