use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ACTIVATION_MAGIC: &[u8; 7] = b"SAEACT1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationEntry {
    pub token: u32,
    pub feature: u32,
    pub value: f32,
}

/// Sparse token x feature activations for one site.
///
/// Entries are sorted by `(token, feature)`; `token_offsets` is a CSR row
/// index into `entries` so a token's activations are a contiguous slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStore", into = "RawStore")]
pub struct TokenActivationStore {
    site_id: String,
    num_tokens: usize,
    num_features: usize,
    entries: Vec<ActivationEntry>,
    special_token_mask: Vec<bool>,
    token_offsets: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawStore {
    site_id: String,
    num_tokens: usize,
    num_features: usize,
    entries: Vec<(u32, u32, f32)>,
    special_tokens: Vec<u32>,
}

impl TryFrom<RawStore> for TokenActivationStore {
    type Error = Error;

    fn try_from(raw: RawStore) -> Result<Self> {
        let mut mask = vec![false; raw.num_tokens];
        for t in raw.special_tokens {
            let slot = mask
                .get_mut(t as usize)
                .ok_or_else(|| Error::Bounds(format!("special token {t} >= {}", raw.num_tokens)))?;
            *slot = true;
        }
        let entries = raw
            .entries
            .into_iter()
            .map(|(token, feature, value)| ActivationEntry {
                token,
                feature,
                value,
            })
            .collect();
        TokenActivationStore::new(raw.site_id, raw.num_tokens, raw.num_features, entries, mask)
    }
}

impl From<TokenActivationStore> for RawStore {
    fn from(store: TokenActivationStore) -> Self {
        RawStore {
            special_tokens: store
                .special_token_mask
                .iter()
                .enumerate()
                .filter(|(_, &m)| m)
                .map(|(i, _)| i as u32)
                .collect(),
            entries: store
                .entries
                .iter()
                .map(|e| (e.token, e.feature, e.value))
                .collect(),
            site_id: store.site_id,
            num_tokens: store.num_tokens,
            num_features: store.num_features,
        }
    }
}

impl TokenActivationStore {
    /// Validates and sorts `entries`. Duplicate `(token, feature)` pairs and
    /// out-of-range indices are bounds errors; non-finite values are value errors.
    pub fn new(
        site_id: impl Into<String>,
        num_tokens: usize,
        num_features: usize,
        mut entries: Vec<ActivationEntry>,
        special_token_mask: Vec<bool>,
    ) -> Result<Self> {
        if special_token_mask.len() != num_tokens {
            return Err(Error::Format(format!(
                "special-token mask has {} entries for {num_tokens} tokens",
                special_token_mask.len()
            )));
        }
        if num_tokens > u32::MAX as usize || num_features > u32::MAX as usize {
            return Err(Error::Bounds(
                "token or feature count exceeds u32 range".into(),
            ));
        }
        for e in &entries {
            if e.token as usize >= num_tokens {
                return Err(Error::Bounds(format!(
                    "token {} >= num_tokens {num_tokens}",
                    e.token
                )));
            }
            if e.feature as usize >= num_features {
                return Err(Error::Bounds(format!(
                    "feature {} >= num_features {num_features}",
                    e.feature
                )));
            }
            if !e.value.is_finite() {
                return Err(Error::Value(format!(
                    "non-finite activation at token {} feature {}",
                    e.token, e.feature
                )));
            }
        }
        entries.sort_by_key(|e| (e.token, e.feature));
        if let Some(w) = entries
            .windows(2)
            .find(|w| (w[0].token, w[0].feature) == (w[1].token, w[1].feature))
        {
            return Err(Error::Bounds(format!(
                "duplicate entry for token {} feature {}",
                w[0].token, w[0].feature
            )));
        }

        let mut token_offsets = vec![0usize; num_tokens + 1];
        for e in &entries {
            token_offsets[e.token as usize + 1] += 1;
        }
        for i in 0..num_tokens {
            token_offsets[i + 1] += token_offsets[i];
        }

        Ok(Self {
            site_id: site_id.into(),
            num_tokens,
            num_features,
            entries,
            special_token_mask,
            token_offsets,
        })
    }

    pub fn site_id(&self) -> &str {
        &self.site_id
    }

    pub fn num_tokens(&self) -> usize {
        self.num_tokens
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn entries(&self) -> &[ActivationEntry] {
        &self.entries
    }

    pub fn special_token_mask(&self) -> &[bool] {
        &self.special_token_mask
    }

    pub fn is_special(&self, token: usize) -> bool {
        self.special_token_mask[token]
    }

    /// Activations on one token, sorted by feature.
    pub fn token(&self, token: usize) -> &[ActivationEntry] {
        &self.entries[self.token_offsets[token]..self.token_offsets[token + 1]]
    }

    /// Entries for all tokens in `range`, sorted by (token, feature).
    pub fn token_range(&self, range: Range<usize>) -> &[ActivationEntry] {
        let end = range.end.min(self.num_tokens);
        let start = range.start.min(end);
        &self.entries[self.token_offsets[start]..self.token_offsets[end]]
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.num_features]; self.num_tokens];
        for e in &self.entries {
            dense[e.token as usize][e.feature as usize] = f64::from(e.value);
        }
        dense
    }

    pub fn read_from(site_id: impl Into<String>, mut reader: impl Read) -> Result<Self> {
        let mut magic = [0u8; 7];
        read_exact(&mut reader, &mut magic, "magic")?;
        if &magic != ACTIVATION_MAGIC {
            return Err(Error::Format("bad activation magic".into()));
        }
        let num_tokens = read_u64(&mut reader, "num_tokens")?;
        let num_features = read_u64(&mut reader, "num_features")?;
        let nnz = read_u64(&mut reader, "nnz")?;
        let (num_tokens, num_features, nnz) = (
            to_usize(num_tokens)?,
            to_usize(num_features)?,
            to_usize(nnz)?,
        );

        let mut entries = Vec::with_capacity(nnz.min(1 << 24));
        let mut record = [0u8; 12];
        for _ in 0..nnz {
            read_exact(&mut reader, &mut record, "triplet record")?;
            entries.push(ActivationEntry {
                token: u32::from_le_bytes(record[0..4].try_into().unwrap()),
                feature: u32::from_le_bytes(record[4..8].try_into().unwrap()),
                value: f32::from_le_bytes(record[8..12].try_into().unwrap()),
            });
        }
        let mut mask_bytes = vec![0u8; num_tokens];
        read_exact(&mut reader, &mut mask_bytes, "special-token mask")?;
        let mask = mask_bytes
            .into_iter()
            .map(|b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::Format(format!("mask byte {other} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let mut trailing = [0u8; 1];
        if reader
            .read(&mut trailing)
            .map_err(|e| Error::Format(e.to_string()))?
            != 0
        {
            return Err(Error::Format(
                "trailing bytes after special-token mask".into(),
            ));
        }
        Self::new(site_id, num_tokens, num_features, entries, mask)
    }

    pub fn write_to(&self, mut writer: impl Write) -> std::io::Result<()> {
        writer.write_all(ACTIVATION_MAGIC)?;
        writer.write_all(&(self.num_tokens as u64).to_le_bytes())?;
        writer.write_all(&(self.num_features as u64).to_le_bytes())?;
        writer.write_all(&(self.entries.len() as u64).to_le_bytes())?;
        for e in &self.entries {
            writer.write_all(&e.token.to_le_bytes())?;
            writer.write_all(&e.feature.to_le_bytes())?;
            writer.write_all(&e.value.to_le_bytes())?;
        }
        let mask: Vec<u8> = self
            .special_token_mask
            .iter()
            .map(|&m| u8::from(m))
            .collect();
        writer.write_all(&mask)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(31 + 12 * self.entries.len() + self.num_tokens);
        self.write_to(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }
}

/// Reads a binary activation file.
pub fn load_activation_store(
    path: impl AsRef<Path>,
    site_id: &str,
) -> Result<TokenActivationStore> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    TokenActivationStore::read_from(site_id, std::io::BufReader::new(file))
}

pub fn save_activation_store(store: &TokenActivationStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, store.to_bytes()).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_exact(reader: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    reader
        .read_exact(buf)
        .map_err(|e| Error::Format(format!("truncated file while reading {what}: {e}")))
}

pub(crate) fn read_u64(reader: &mut impl Read, what: &str) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact(reader, &mut buf, what)?;
    Ok(u64::from_le_bytes(buf))
}

pub(crate) fn to_usize(v: u64) -> Result<usize> {
    usize::try_from(v)
        .map_err(|_| Error::Format(format!("header value {v} does not fit in memory")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(token: u32, feature: u32, value: f32) -> ActivationEntry {
        ActivationEntry {
            token,
            feature,
            value,
        }
    }

    #[test]
    fn empty_store_keeps_token_count() {
        let store = TokenActivationStore::new("src", 10, 3, vec![], vec![false; 10]).unwrap();
        let back = TokenActivationStore::read_from("src", store.to_bytes().as_slice()).unwrap();
        assert_eq!(back.num_tokens(), 10);
        assert!(back.entries().is_empty());
    }

    #[test]
    fn three_triplets_densify_to_hand_matrix() {
        let store = TokenActivationStore::new(
            "src",
            4,
            5,
            vec![entry(3, 4, -1.5), entry(0, 1, 2.0), entry(2, 0, 0.25)],
            vec![false; 4],
        )
        .unwrap();
        let bytes = store.to_bytes();
        let loaded = TokenActivationStore::read_from("src", bytes.as_slice()).unwrap();

        let mut expected = vec![vec![0.0f64; 5]; 4];
        expected[0][1] = 2.0;
        expected[2][0] = 0.25;
        expected[3][4] = -1.5;
        assert_eq!(loaded.to_dense(), expected);
        assert_eq!(loaded.entries()[0], entry(0, 1, 2.0));
    }

    #[test]
    fn duplicate_pair_is_a_bounds_error() {
        let err = TokenActivationStore::new(
            "src",
            2,
            2,
            vec![entry(1, 1, 1.0), entry(1, 1, 2.0)],
            vec![false; 2],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Bounds(_)));
    }

    #[test]
    fn out_of_range_and_non_finite_are_rejected() {
        let oob = TokenActivationStore::new("src", 2, 2, vec![entry(2, 0, 1.0)], vec![false; 2]);
        assert!(matches!(oob, Err(Error::Bounds(_))));
        let nan =
            TokenActivationStore::new("src", 2, 2, vec![entry(0, 0, f32::NAN)], vec![false; 2]);
        assert!(matches!(nan, Err(Error::Value(_))));
    }

    #[test]
    fn malformed_headers_are_format_errors() {
        assert!(matches!(
            TokenActivationStore::read_from("src", &b"SAEMAT1"[..]),
            Err(Error::Format(_))
        ));
        let store =
            TokenActivationStore::new("src", 3, 2, vec![entry(0, 0, 1.0)], vec![false; 3]).unwrap();
        let bytes = store.to_bytes();
        assert!(matches!(
            TokenActivationStore::read_from("src", &bytes[..bytes.len() - 1]),
            Err(Error::Format(_))
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(
            TokenActivationStore::read_from("src", extra.as_slice()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn token_slices_follow_offsets() {
        let store = TokenActivationStore::new(
            "src",
            3,
            4,
            vec![entry(2, 3, 1.0), entry(0, 0, 1.0), entry(2, 1, 1.0)],
            vec![false, true, false],
        )
        .unwrap();
        assert_eq!(store.token(0).len(), 1);
        assert!(store.token(1).is_empty());
        assert_eq!(
            store.token(2).iter().map(|e| e.feature).collect::<Vec<_>>(),
            vec![1, 3]
        );
        assert_eq!(store.token_range(1..3).len(), 2);
        assert!(store.is_special(1));
    }
}
