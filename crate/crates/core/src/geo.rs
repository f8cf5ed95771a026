//! Country-level lookup tables: continent membership and official languages.
//!
//! The bundled tables are a pinned snapshot shipped with the crate
//! (`data/continents.csv`, `data/languages.csv`). Both can be swapped for
//! user-supplied files with the same two-column layout.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use sha2::{Digest, Sha256};
use thiserror::Error;

/// Snapshot date of the bundled tables.
pub const BUNDLED_SNAPSHOT: &str = "2026-10-01";

const BUNDLED_CONTINENTS: &str = include_str!("../data/continents.csv");
const BUNDLED_LANGUAGES: &str = include_str!("../data/languages.csv");

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{table} row {row}: {message}")]
    Row {
        table: &'static str,
        row: usize,
        message: String,
    },
}

#[derive(Debug, Clone)]
pub struct GeoTables {
    continents: BTreeMap<String, String>,
    languages: BTreeMap<String, BTreeSet<String>>,
    version: String,
}

fn is_alpha2(code: &str) -> bool {
    code.len() == 2 && code.bytes().all(|b| b.is_ascii_uppercase())
}

fn read_pairs(table: &'static str, text: &str) -> Result<Vec<(String, String)>, GeoError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| GeoError::Row {
            table,
            row,
            message: e.to_string(),
        })?;
        if record.len() != 2 {
            return Err(GeoError::Row {
                table,
                row,
                message: format!("expected 2 columns, found {}", record.len()),
            });
        }
        let country = record[0].to_string();
        if !is_alpha2(&country) {
            return Err(GeoError::Row {
                table,
                row,
                message: format!("\"{country}\" is not an ISO 3166-1 alpha-2 code"),
            });
        }
        out.push((country, record[1].to_string()));
    }
    Ok(out)
}

impl GeoTables {
    /// The tables compiled into the crate.
    pub fn bundled() -> &'static GeoTables {
        static TABLES: OnceLock<GeoTables> = OnceLock::new();
        TABLES.get_or_init(|| {
            let mut tables = GeoTables::from_csv(BUNDLED_CONTINENTS, BUNDLED_LANGUAGES)
                .expect("bundled geo tables are well formed");
            tables.version = format!("bundled-{BUNDLED_SNAPSHOT}+{}", tables.version);
            tables
        })
    }

    /// Parses `country,continent` and `country,language` CSV text (with header rows).
    pub fn from_csv(continents: &str, languages: &str) -> Result<Self, GeoError> {
        let mut continent_map = BTreeMap::new();
        for (row, (country, continent)) in read_pairs("continents", continents)?.into_iter().enumerate() {
            if continent_map.insert(country.clone(), continent).is_some() {
                return Err(GeoError::Row {
                    table: "continents",
                    row: row + 2,
                    message: format!("country {country} listed twice"),
                });
            }
        }
        let mut language_map: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (country, language) in read_pairs("languages", languages)? {
            language_map.entry(country).or_default().insert(language);
        }
        let mut hasher = Sha256::new();
        hasher.update(continents.as_bytes());
        hasher.update([0u8]);
        hasher.update(languages.as_bytes());
        let digest = hex_prefix(&hasher.finalize());
        Ok(Self {
            continents: continent_map,
            languages: language_map,
            version: format!("sha256:{digest}"),
        })
    }

    pub fn load(continents: &Path, languages: &Path) -> Result<Self, GeoError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|source| GeoError::Io {
                path: p.display().to_string(),
                source,
            })
        };
        Self::from_csv(&read(continents)?, &read(languages)?)
    }

    pub fn continent(&self, country: &str) -> Option<&str> {
        self.continents.get(country).map(String::as_str)
    }

    pub fn languages(&self, country: &str) -> Option<&BTreeSet<String>> {
        self.languages.get(country)
    }

    /// A code is known when it has a continent entry.
    pub fn is_known(&self, country: &str) -> bool {
        self.continents.contains_key(country)
    }

    pub fn countries(&self) -> impl Iterator<Item = &str> {
        self.continents.keys().map(String::as_str)
    }

    pub fn version(&self) -> &str {
        &self.version
    }
}

fn hex_prefix(bytes: &[u8]) -> String {
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}
