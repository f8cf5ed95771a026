//! Canonical article records, JSON Lines ingestion and validation.
//!
//! A [`Corpus`] is immutable once built. Besides the articles themselves it
//! keeps dense integer indices for journals and fields, and a flat array of
//! reference-slot journal ids (article-major) that the counting and
//! shuffling code works on directly.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::ops::{Range, RangeInclusive};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::GeoTables;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate article id \"{0}\"")]
    DuplicateId(String),
    #[error("article \"{id}\": {message}")]
    Invalid { id: String, message: String },
}

/// One cited reference: the cited journal and its publication year.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSlot {
    pub journal: String,
    pub year: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Article {
    pub id: String,
    pub year: i32,
    pub journal: String,
    pub field: String,
    pub countries: Vec<String>,
    pub n_authors: u32,
    pub refs: Vec<ReferenceSlot>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub citations: Option<u64>,
}

impl Article {
    fn normalize(&mut self) {
        self.countries.sort();
        self.countries.dedup();
    }

    fn check(&self) -> Result<(), String> {
        if self.n_authors == 0 {
            return Err("n_authors must be at least 1".into());
        }
        if self.id.is_empty() {
            return Err("empty article id".into());
        }
        Ok(())
    }
}

/// Bijection between identifier strings and dense indices `0..len`.
#[derive(Debug, Clone, Default)]
pub struct Interner {
    names: Vec<String>,
    lookup: HashMap<String, u32>,
}

impl Interner {
    fn intern(&mut self, name: &str) -> u32 {
        if let Some(&id) = self.lookup.get(name) {
            return id;
        }
        let id = self.names.len() as u32;
        self.names.push(name.to_string());
        self.lookup.insert(name.to_string(), id);
        id
    }

    pub fn index(&self, name: &str) -> Option<u32> {
        self.lookup.get(name).copied()
    }

    pub fn name(&self, index: u32) -> &str {
        &self.names[index as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

#[derive(Debug, Clone)]
pub struct Corpus {
    articles: Vec<Article>,
    journals: Interner,
    fields: Interner,
    article_fields: Vec<u32>,
    slot_offsets: Vec<usize>,
    slot_journals: Vec<u32>,
}

impl Corpus {
    /// Builds the indices. Countries are deduplicated and sorted; ids must be unique.
    pub fn from_articles(mut articles: Vec<Article>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(articles.len());
        let mut journals = Interner::default();
        let mut fields = Interner::default();
        let mut article_fields = Vec::with_capacity(articles.len());
        let mut slot_offsets = Vec::with_capacity(articles.len() + 1);
        let total: usize = articles.iter().map(|a| a.refs.len()).sum();
        let mut slot_journals = Vec::with_capacity(total);
        slot_offsets.push(0);
        for article in &mut articles {
            article.normalize();
            article.check().map_err(|message| CorpusError::Invalid {
                id: article.id.clone(),
                message,
            })?;
            if !seen.insert(article.id.clone()) {
                return Err(CorpusError::DuplicateId(article.id.clone()));
            }
            article_fields.push(fields.intern(&article.field));
            journals.intern(&article.journal);
            for slot in &article.refs {
                slot_journals.push(journals.intern(&slot.journal));
            }
            slot_offsets.push(slot_journals.len());
        }
        Ok(Self {
            articles,
            journals,
            fields,
            article_fields,
            slot_offsets,
            slot_journals,
        })
    }

    pub fn articles(&self) -> &[Article] {
        &self.articles
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn journals(&self) -> &Interner {
        &self.journals
    }

    pub fn fields(&self) -> &Interner {
        &self.fields
    }

    pub fn field_index(&self, article: usize) -> u32 {
        self.article_fields[article]
    }

    /// Positions of the article's reference slots in the flat slot array.
    pub fn slot_range(&self, article: usize) -> Range<usize> {
        self.slot_offsets[article]..self.slot_offsets[article + 1]
    }

    /// Dense journal ids of the article's references, in slot order.
    pub fn ref_journals(&self, article: usize) -> &[u32] {
        &self.slot_journals[self.slot_range(article)]
    }

    /// All reference-slot journal ids, article-major.
    pub fn slot_journals(&self) -> &[u32] {
        &self.slot_journals
    }

    pub fn slot_offsets(&self) -> &[usize] {
        &self.slot_offsets
    }

    pub fn total_slots(&self) -> usize {
        self.slot_journals.len()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for article in &self.articles {
            serde_json::to_writer(&mut out, article)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub strict: bool,
    /// Citing years outside this range make the record malformed.
    pub years: Option<RangeInclusive<i32>>,
}

#[derive(Debug, Clone)]
pub struct ParsedCorpus {
    pub corpus: Corpus,
    /// Malformed lines skipped in non-strict mode, as (line number, reason).
    pub skipped: Vec<(usize, String)>,
}

impl ParsedCorpus {
    pub fn skipped_count(&self) -> usize {
        self.skipped.len()
    }
}

pub fn parse_corpus(path: &Path, strict: bool) -> Result<ParsedCorpus, CorpusError> {
    parse_corpus_with(
        path,
        &ParseOptions {
            strict,
            years: None,
        },
    )
}

pub fn parse_corpus_with(path: &Path, options: &ParseOptions) -> Result<ParsedCorpus, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_reader(BufReader::new(file), options).map_err(|e| match e {
        CorpusError::Io { source, .. } => CorpusError::Io {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}

/// Parses JSON Lines from any reader. Blank lines and lines starting with
/// `#` are ignored.
pub fn parse_reader<R: BufRead>(reader: R, options: &ParseOptions) -> Result<ParsedCorpus, CorpusError> {
    let mut articles = Vec::new();
    let mut skipped = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| CorpusError::Io {
            path: String::new(),
            source,
        })?;
        let trimmed = line.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parsed = serde_json::from_str::<Article>(&line)
            .map_err(|e| e.to_string())
            .and_then(|a| a.check().map(|_| a))
            .and_then(|a| match &options.years {
                Some(range) if !range.contains(&a.year) => Err(format!(
                    "year {} outside corpus range {}..={}",
                    a.year,
                    range.start(),
                    range.end()
                )),
                _ => Ok(a),
            });
        match parsed {
            Ok(article) => {
                if !ids.insert(article.id.clone()) {
                    return Err(CorpusError::DuplicateId(article.id));
                }
                articles.push(article);
            }
            Err(message) if options.strict => {
                return Err(CorpusError::Malformed {
                    line: line_no,
                    message,
                })
            }
            Err(message) => skipped.push((line_no, message)),
        }
    }
    Ok(ParsedCorpus {
        corpus: Corpus::from_articles(articles)?,
        skipped,
    })
}

/// Per-check counts over a parsed corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub articles: usize,
    /// Articles with fewer than two references.
    pub unpairable: usize,
    /// Reference slots whose cited year is later than the citing year.
    pub cited_after_citing: usize,
    /// Articles listing at least one country code missing from the geo tables.
    pub unknown_country: usize,
    pub empty_countries: usize,
}

impl ValidationReport {
    pub fn rows(&self) -> [(&'static str, usize); 5] {
        [
            ("articles", self.articles),
            ("unpairable", self.unpairable),
            ("cited_after_citing", self.cited_after_citing),
            ("unknown_country", self.unknown_country),
            ("empty_countries", self.empty_countries),
        ]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("check,count\n");
        for (check, count) in self.rows() {
            out.push_str(&format!("{check},{count}\n"));
        }
        out
    }
}

pub fn validate(corpus: &Corpus) -> ValidationReport {
    validate_with(corpus, GeoTables::bundled())
}

pub fn validate_with(corpus: &Corpus, geo: &GeoTables) -> ValidationReport {
    let mut report = ValidationReport {
        articles: corpus.len(),
        ..Default::default()
    };
    for article in corpus.articles() {
        if article.refs.len() < 2 {
            report.unpairable += 1;
        }
        report.cited_after_citing += article.refs.iter().filter(|r| r.year > article.year).count();
        if article.countries.is_empty() {
            report.empty_countries += 1;
        } else if article.countries.iter().any(|c| !geo.is_known(c)) {
            report.unknown_country += 1;
        }
    }
    report
}
