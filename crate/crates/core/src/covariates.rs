//! Article-level regression covariates and the joined analysis table.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::geo::GeoTables;
use crate::scores::ArticleScore;

#[derive(Debug, Error)]
pub enum CovariateError {
    #[error("duplicate id \"{id}\" among {side}")]
    DuplicateId { side: &'static str, id: String },
    #[error("analysis table: {0}")]
    Table(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateRow {
    pub id: String,
    pub year: i32,
    pub field: String,
    /// Distinct author countries; absent when the article lists none.
    pub countries: Option<u32>,
    pub authors: u32,
    pub references: u32,
    /// Absent when any listed country is missing from the geo tables.
    pub continents: Option<u32>,
    /// 1 when the member countries share no official language.
    pub languages: Option<u8>,
    pub log_countries: Option<f64>,
    pub log_authors: f64,
    pub citations: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct CovariateSet {
    pub rows: Vec<CovariateRow>,
    /// Articles with at least one country code unknown to the geo tables.
    pub unknown_geo: Vec<String>,
    pub empty_countries: Vec<String>,
}

/// Continent count and the no-common-language indicator for a country set,
/// or `None` when some code is unknown.
pub fn geography(countries: &[String], geo: &GeoTables) -> Option<(u32, u8)> {
    let mut continents = BTreeSet::new();
    let mut common: Option<BTreeSet<String>> = None;
    for c in countries {
        continents.insert(geo.continent(c)?);
        let langs = geo.languages(c)?;
        common = Some(match common {
            None => langs.clone(),
            Some(acc) => acc.intersection(langs).cloned().collect(),
        });
    }
    let common = common?;
    Some((continents.len() as u32, u8::from(common.is_empty())))
}

pub fn derive_covariates(corpus: &Corpus, geo: &GeoTables) -> CovariateSet {
    let mut set = CovariateSet::default();
    for article in corpus.articles() {
        let n_countries = article.countries.len() as u32;
        let geo_values = if article.countries.is_empty() {
            set.empty_countries.push(article.id.clone());
            None
        } else {
            let g = geography(&article.countries, geo);
            if g.is_none() {
                set.unknown_geo.push(article.id.clone());
            }
            g
        };
        let countries = (n_countries > 0).then_some(n_countries);
        set.rows.push(CovariateRow {
            id: article.id.clone(),
            year: article.year,
            field: article.field.clone(),
            countries,
            authors: article.n_authors,
            references: article.refs.len() as u32,
            continents: geo_values.map(|g| g.0),
            languages: geo_values.map(|g| g.1),
            log_countries: countries.map(|c| f64::from(c).ln()),
            log_authors: f64::from(article.n_authors).ln(),
            citations: article.citations,
        });
    }
    set
}

pub fn write_covariates<W: Write>(rows: &[CovariateRow], out: W) -> io::Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()
}

pub fn read_covariates<R: Read>(input: R) -> Result<Vec<CovariateRow>, csv::Error> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input)
        .deserialize()
        .collect()
}

/// Variables available in an [`AnalysisTable`].
pub mod var {
    pub const NOVELTY: &str = "novelty";
    pub const NOVELTY_BIN: &str = "novelty_bin";
    pub const CONVENTIONALITY: &str = "conventionality";
    pub const CONVENTIONALITY_BIN: &str = "conventionality_bin";
    pub const Z10: &str = "z10";
    pub const ZMED: &str = "zmed";
    pub const CATEGORY: &str = "category";
    pub const COUNTRIES: &str = "countries";
    pub const AUTHORS: &str = "authors";
    pub const REFERENCES: &str = "references";
    pub const CONTINENTS: &str = "continents";
    pub const LANGUAGES: &str = "languages";
    pub const LOG_COUNTRIES: &str = "log_countries";
    pub const LOG_AUTHORS: &str = "log_authors";
    pub const CITATIONS: &str = "citations";

    pub const ALL: [&str; 15] = [
        NOVELTY,
        NOVELTY_BIN,
        CONVENTIONALITY,
        CONVENTIONALITY_BIN,
        Z10,
        ZMED,
        CATEGORY,
        COUNTRIES,
        AUTHORS,
        REFERENCES,
        CONTINENTS,
        LANGUAGES,
        LOG_COUNTRIES,
        LOG_AUTHORS,
        CITATIONS,
    ];
}

/// Column-oriented rows ready for estimation. Missing values are NaN.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnalysisTable {
    pub ids: Vec<String>,
    pub fields: Vec<String>,
    pub years: Vec<i32>,
    columns: BTreeMap<String, Vec<f64>>,
}

impl AnalysisTable {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns.get(name).map(Vec::as_slice)
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.keys().map(String::as_str)
    }

    /// Adds or replaces a column; its length must match the table.
    pub fn set_column(&mut self, name: &str, values: Vec<f64>) -> Result<(), CovariateError> {
        if values.len() != self.len() {
            return Err(CovariateError::Table(format!(
                "column {name} has {} values for {} rows",
                values.len(),
                self.len()
            )));
        }
        self.columns.insert(name.to_string(), values);
        Ok(())
    }

    /// Builds a table from explicit columns.
    pub fn from_columns(
        ids: Vec<String>,
        fields: Vec<String>,
        years: Vec<i32>,
        columns: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self, CovariateError> {
        let n = ids.len();
        if fields.len() != n || years.len() != n {
            return Err(CovariateError::Table("id, field and year columns differ in length".into()));
        }
        let mut table = Self {
            ids,
            fields,
            years,
            columns: BTreeMap::new(),
        };
        for (name, values) in columns {
            table.set_column(&name, values)?;
        }
        Ok(table)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut writer = csv::Writer::from_writer(out);
        let mut header = vec!["id".to_string(), "field".into(), "year".into()];
        header.extend(self.columns.keys().cloned());
        writer.write_record(&header)?;
        for i in 0..self.len() {
            let mut record = vec![self.ids[i].clone(), self.fields[i].clone(), self.years[i].to_string()];
            for values in self.columns.values() {
                let v = values[i];
                record.push(if v.is_nan() { String::new() } else { v.to_string() });
            }
            writer.write_record(&record)?;
        }
        writer.flush()
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self, CovariateError> {
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
        let header = reader.headers()?.clone();
        if header.len() < 3 || &header[0] != "id" || &header[1] != "field" || &header[2] != "year" {
            return Err(CovariateError::Table("expected leading columns id,field,year".into()));
        }
        let names: Vec<String> = header.iter().skip(3).map(str::to_string).collect();
        let mut table = AnalysisTable::default();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
        for record in reader.records() {
            let record = record?;
            table.ids.push(record[0].to_string());
            table.fields.push(record[1].to_string());
            table.years.push(
                record[2]
                    .parse()
                    .map_err(|_| CovariateError::Table(format!("bad year \"{}\"", &record[2])))?,
            );
            for (k, cell) in record.iter().skip(3).enumerate() {
                let v = if cell.is_empty() {
                    f64::NAN
                } else {
                    cell.parse()
                        .map_err(|_| CovariateError::Table(format!("bad number \"{cell}\" in {}", names[k])))?
                };
                columns[k].push(v);
            }
        }
        table.columns = names.into_iter().zip(columns).collect();
        Ok(table)
    }
}

#[derive(Debug, Clone)]
pub struct Joined {
    pub table: AnalysisTable,
    /// Profiles without a covariate row.
    pub dropped_profiles: usize,
    /// Covariate rows without a profile.
    pub dropped_covariates: usize,
}

impl Joined {
    pub fn dropped(&self) -> usize {
        self.dropped_profiles + self.dropped_covariates
    }

    pub fn warning(&self) -> Option<String> {
        self.table
            .is_empty()
            .then(|| "profiles and covariates share no article id; the joined table is empty".to_string())
    }
}

fn unique_index<'a, T>(
    items: &'a [T],
    id: impl Fn(&T) -> &str,
    side: &'static str,
) -> Result<HashMap<&'a str, usize>, CovariateError>
where
    T: 'a,
{
    let mut map = HashMap::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let key: &'a str = id(item);
        if map.insert(key, i).is_some() {
            return Err(CovariateError::DuplicateId {
                side,
                id: key.to_string(),
            });
        }
    }
    Ok(map)
}

/// Inner join on article id; output rows are sorted by id.
pub fn join(profiles: &[ArticleScore], rows: &[CovariateRow]) -> Result<Joined, CovariateError> {
    let by_profile = unique_index(profiles, |p| p.id.as_str(), "profiles")?;
    let by_row = unique_index(rows, |r| r.id.as_str(), "covariate rows")?;
    let mut ids: Vec<&str> = by_profile.keys().filter(|id| by_row.contains_key(*id)).copied().collect();
    ids.sort_unstable();

    let opt = |v: Option<f64>| v.unwrap_or(f64::NAN);
    let mut columns: BTreeMap<String, Vec<f64>> = var::ALL.iter().map(|v| (v.to_string(), Vec::with_capacity(ids.len()))).collect();
    let mut push = |name: &str, v: f64| columns.get_mut(name).expect("known variable").push(v);
    let mut table = AnalysisTable::default();
    for id in &ids {
        let p = &profiles[by_profile[id]];
        let r = &rows[by_row[id]];
        let class = p.classification;
        push(var::NOVELTY, p.novelty);
        push(var::NOVELTY_BIN, opt(class.map(|c| f64::from(u8::from(c.novelty_bin)))));
        push(var::CONVENTIONALITY, p.conventionality);
        push(var::CONVENTIONALITY_BIN, opt(class.map(|c| f64::from(u8::from(c.conventionality_bin)))));
        push(var::Z10, p.z10);
        push(var::ZMED, p.zmed);
        push(var::CATEGORY, opt(class.map(|c| f64::from(c.category.number()))));
        push(var::COUNTRIES, opt(r.countries.map(f64::from)));
        push(var::AUTHORS, f64::from(r.authors));
        push(var::REFERENCES, f64::from(r.references));
        push(var::CONTINENTS, opt(r.continents.map(f64::from)));
        push(var::LANGUAGES, opt(r.languages.map(f64::from)));
        push(var::LOG_COUNTRIES, opt(r.log_countries));
        push(var::LOG_AUTHORS, r.log_authors);
        push(var::CITATIONS, opt(r.citations.map(|c| c as f64)));
        table.ids.push(id.to_string());
        table.fields.push(r.field.clone());
        table.years.push(r.year);
    }
    table.columns = columns;
    Ok(Joined {
        dropped_profiles: profiles.len() - ids.len(),
        dropped_covariates: rows.len() - ids.len(),
        table,
    })
}
