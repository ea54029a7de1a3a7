//! Sentence / paragraph / subchapter / chapter containment.
//!
//! On disk the corpus is a JSON document:
//!
//! ```json
//! {
//!   "title": "Book",
//!   "chapters":    [{"id": "ch1", "title": "Cells"}],
//!   "subchapters": [{"id": "ch1.1", "chapter_id": "ch1", "title": "Membranes"}],
//!   "paragraphs":  [{"id": "p1", "subchapter_id": "ch1.1"}],
//!   "sentences":   [{"id": "s1", "token_span": [0, 12], "paragraph_id": "p1",
//!                    "subchapter_id": "ch1.1", "chapter_id": "ch1", "text": "..."}]
//! }
//! ```
//!
//! Token spans are half-open `[start, end)` ranges into the activation stores.

use std::collections::HashMap;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::Granularity;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChapterRecord {
    pub id: String,
    #[serde(default)]
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubchapterRecord {
    pub id: String,
    pub chapter_id: String,
    #[serde(default)]
    pub title: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParagraphRecord {
    pub id: String,
    pub subchapter_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub id: String,
    pub token_span: [usize; 2],
    pub paragraph_id: String,
    pub subchapter_id: String,
    pub chapter_id: String,
    #[serde(default)]
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusDocument {
    #[serde(default)]
    pub title: String,
    pub chapters: Vec<ChapterRecord>,
    pub subchapters: Vec<SubchapterRecord>,
    pub paragraphs: Vec<ParagraphRecord>,
    pub sentences: Vec<SentenceRecord>,
}

/// One unit at some granularity, with its parent index at the next coarser level.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub id: String,
    pub title: String,
    pub parent: Option<usize>,
    pub sentences: Vec<usize>,
}

/// Validated corpus with containment indexed in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStructure {
    document: CorpusDocument,
    paragraphs: Vec<Unit>,
    subchapters: Vec<Unit>,
    chapters: Vec<Unit>,
    // sentence -> [paragraph, subchapter, chapter]
    sentence_units: Vec<[usize; 3]>,
    lookup: HashMap<String, (Granularity, usize)>,
}

impl CorpusStructure {
    pub fn from_document(document: CorpusDocument) -> Result<Self> {
        let mut lookup = HashMap::new();
        fn register(
            lookup: &mut HashMap<String, (Granularity, usize)>,
            id: &str,
            g: Granularity,
            idx: usize,
        ) -> Result<()> {
            if lookup.insert(id.to_string(), (g, idx)).is_some() {
                return Err(Error::Schema(format!("duplicate unit id `{id}`")));
            }
            Ok(())
        }

        let mut chapters = Vec::with_capacity(document.chapters.len());
        for (i, c) in document.chapters.iter().enumerate() {
            register(&mut lookup, &c.id, Granularity::Chapter, i)?;
            chapters.push(Unit {
                id: c.id.clone(),
                title: c.title.clone(),
                parent: None,
                sentences: vec![],
            });
        }
        let mut subchapters = Vec::with_capacity(document.subchapters.len());
        for (i, s) in document.subchapters.iter().enumerate() {
            register(&mut lookup, &s.id, Granularity::Subchapter, i)?;
            let parent = match lookup.get(&s.chapter_id) {
                Some(&(Granularity::Chapter, idx)) => idx,
                _ => {
                    return Err(Error::Schema(format!(
                        "subchapter `{}` names unknown chapter `{}`",
                        s.id, s.chapter_id
                    )))
                }
            };
            subchapters.push(Unit {
                id: s.id.clone(),
                title: s.title.clone(),
                parent: Some(parent),
                sentences: vec![],
            });
        }
        let mut paragraphs = Vec::with_capacity(document.paragraphs.len());
        for (i, p) in document.paragraphs.iter().enumerate() {
            register(&mut lookup, &p.id, Granularity::Paragraph, i)?;
            let parent = match lookup.get(&p.subchapter_id) {
                Some(&(Granularity::Subchapter, idx)) => idx,
                _ => {
                    return Err(Error::Schema(format!(
                        "paragraph `{}` names unknown subchapter `{}`",
                        p.id, p.subchapter_id
                    )))
                }
            };
            paragraphs.push(Unit {
                id: p.id.clone(),
                title: String::new(),
                parent: Some(parent),
                sentences: vec![],
            });
        }

        let mut sentence_units = Vec::with_capacity(document.sentences.len());
        let mut prev_end = 0usize;
        for (i, s) in document.sentences.iter().enumerate() {
            register(&mut lookup, &s.id, Granularity::Sentence, i)?;
            let [start, end] = s.token_span;
            if start > end {
                return Err(Error::Schema(format!(
                    "sentence `{}` has inverted span",
                    s.id
                )));
            }
            if start < prev_end {
                return Err(Error::Schema(format!(
                    "sentence `{}` span [{start}, {end}) overlaps or precedes the previous sentence",
                    s.id
                )));
            }
            prev_end = end;

            let para = match lookup.get(&s.paragraph_id) {
                Some(&(Granularity::Paragraph, idx)) => idx,
                _ => {
                    return Err(Error::Schema(format!(
                        "sentence `{}` has no paragraph `{}`",
                        s.id, s.paragraph_id
                    )))
                }
            };
            let sub = paragraphs[para].parent.expect("paragraphs have parents");
            let chap = subchapters[sub].parent.expect("subchapters have parents");
            if subchapters[sub].id != s.subchapter_id || chapters[chap].id != s.chapter_id {
                return Err(Error::Schema(format!(
                    "sentence `{}` lists subchapter `{}` / chapter `{}` but its paragraph `{}` sits in `{}` / `{}`",
                    s.id, s.subchapter_id, s.chapter_id, s.paragraph_id, subchapters[sub].id, chapters[chap].id
                )));
            }
            paragraphs[para].sentences.push(i);
            subchapters[sub].sentences.push(i);
            chapters[chap].sentences.push(i);
            sentence_units.push([para, sub, chap]);
        }

        Ok(Self {
            document,
            paragraphs,
            subchapters,
            chapters,
            sentence_units,
            lookup,
        })
    }

    pub fn document(&self) -> &CorpusDocument {
        &self.document
    }

    pub fn num_sentences(&self) -> usize {
        self.document.sentences.len()
    }

    pub fn sentences(&self) -> &[SentenceRecord] {
        &self.document.sentences
    }

    pub fn sentence(&self, idx: usize) -> &SentenceRecord {
        &self.document.sentences[idx]
    }

    pub fn sentence_span(&self, idx: usize) -> Range<usize> {
        let [start, end] = self.document.sentences[idx].token_span;
        start..end
    }

    /// One past the last token any sentence covers.
    pub fn token_extent(&self) -> usize {
        self.document
            .sentences
            .iter()
            .map(|s| s.token_span[1])
            .max()
            .unwrap_or(0)
    }

    /// Units at `g`. For [`Granularity::Sentence`] every sentence is its own unit.
    pub fn num_units(&self, g: Granularity) -> usize {
        match g {
            Granularity::Sentence => self.num_sentences(),
            _ => self.units(g).len(),
        }
    }

    /// Units at a coarser-than-sentence granularity.
    pub fn units(&self, g: Granularity) -> &[Unit] {
        match g {
            Granularity::Paragraph => &self.paragraphs,
            Granularity::Subchapter => &self.subchapters,
            Granularity::Chapter => &self.chapters,
            Granularity::Sentence => &[],
        }
    }

    pub fn unit_id(&self, g: Granularity, idx: usize) -> &str {
        match g {
            Granularity::Sentence => &self.document.sentences[idx].id,
            _ => &self.units(g)[idx].id,
        }
    }

    pub fn unit_sentences(&self, g: Granularity, idx: usize) -> Vec<usize> {
        match g {
            Granularity::Sentence => vec![idx],
            _ => self.units(g)[idx].sentences.clone(),
        }
    }

    /// Index of the unit at `g` containing `sentence`. Constant time.
    pub fn sentence_unit(&self, sentence: usize, g: Granularity) -> usize {
        match g {
            Granularity::Sentence => sentence,
            Granularity::Paragraph => self.sentence_units[sentence][0],
            Granularity::Subchapter => self.sentence_units[sentence][1],
            Granularity::Chapter => self.sentence_units[sentence][2],
        }
    }

    pub fn find_unit(&self, id: &str) -> Option<(Granularity, usize)> {
        self.lookup.get(id).copied()
    }

    /// Token positions covered by a unit, in order.
    pub fn unit_tokens(&self, g: Granularity, idx: usize) -> Vec<usize> {
        self.unit_sentences(g, idx)
            .into_iter()
            .flat_map(|s| self.sentence_span(s))
            .collect()
    }

    /// Rejects spans reaching past the activation store's token count.
    pub fn check_token_range(&self, num_tokens: usize) -> Result<()> {
        match self
            .document
            .sentences
            .iter()
            .find(|s| s.token_span[1] > num_tokens)
        {
            Some(s) => Err(Error::Schema(format!(
                "sentence `{}` span ends at {} beyond {num_tokens} activation tokens",
                s.id, s.token_span[1]
            ))),
            None => Ok(()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.document).expect("corpus serializes")
    }
}

pub fn load_corpus_structure(path: impl AsRef<Path>) -> Result<CorpusStructure> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let document: CorpusDocument = serde_json::from_str(&text)
        .map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
    CorpusStructure::from_document(document)
}
